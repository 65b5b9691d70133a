//! Seeded Monte Carlo of biased selection with and without the rule, plus the
//! discrete and bounded-support experiments.
//!
//! Trial `t` draws from a ChaCha8 stream keyed by `(seed, t)`, and trials are
//! aggregated in a fixed number of contiguous blocks, so every estimate is
//! identical whatever the thread count.

use crate::error::{domain, Error, Result};
use crate::powerlaw::{sample_from_exp, TailExponent};
use crate::rooney::{Bias, ModelParams};
use crate::select::TopK;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// `⌈ln(1/0.01)⌉ · 8` blocks: enough for a median-of-means bound at 99% confidence.
pub const BLOCKS: u64 = 40;

/// Fewest trials the estimators accept.
pub const MIN_TRIALS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub group: Group,
    /// Position of the draw within its group's pool.
    pub index: u64,
    pub potential: f64,
}

/// One draw of both pools and the two committees it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Biased top `k`, best first.
    pub finalists_unconstrained: Vec<Candidate>,
    /// The same set after the rule; forced X-candidates come last.
    pub finalists_ruled: Vec<Candidate>,
    pub utility_unconstrained: f64,
    pub utility_ruled: f64,
    /// Fewer than `ell` X-candidates made the biased top `k`, so the rule changed the set.
    pub rule_bound: bool,
}

/// The per-trial stream: ChaCha8 seeded from `seed`, stream number `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn validate(params: &ModelParams, ell: u64) -> Result<()> {
    if ell < 1 {
        return Err(domain("reserved slots ell must be at least 1"));
    }
    if params.k < ell {
        return Err(domain(format!("k={} is smaller than ell={ell}", params.k)));
    }
    if params.x_pool() < ell {
        return Err(domain(format!(
            "round(alpha n) = {} X-candidates cannot fill ell={ell} reserved slots",
            params.x_pool()
        )));
    }
    Ok(())
}

/// Reusable buffers for one trial. Candidates are ranked by their exponential
/// variate `e` (potential `exp(e/(1+δ))`); an X-candidate's biased key is
/// `e - (1+δ) ln β`, so no potential is formed until a finalist is known.
struct Kernel {
    n: u64,
    a: u64,
    k: usize,
    ell: usize,
    shift: f64,
    delta: TailExponent,
    y_top: TopK<u64>,
    x_top: TopK<u64>,
}

/// Summary of one trial for the estimators.
#[derive(Debug, Clone, Copy)]
struct TrialStats {
    bound: bool,
    x_max: f64,
    y_kth: f64,
    utility_change: f64,
}

impl Kernel {
    fn new(params: &ModelParams, ell: u64) -> Self {
        let shift = match params.beta {
            Bias::Finite(b) => params.delta.exponent() * b.ln(),
            Bias::Infinite => f64::INFINITY,
        };
        Kernel {
            n: params.n,
            a: params.x_pool(),
            k: params.k as usize,
            ell: ell as usize,
            shift,
            delta: params.delta,
            y_top: TopK::new(params.k as usize),
            x_top: TopK::new(params.k as usize),
        }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R) {
        self.y_top.clear();
        self.x_top.clear();
        for i in 0..self.n {
            self.y_top.push(rng.sample(Exp1), i);
        }
        for i in 0..self.a {
            self.x_top.push(rng.sample(Exp1), i);
        }
    }

    /// Walks the two sorted lists in biased order and returns, per slot of the
    /// top `k`, whether it goes to an X-candidate. Ties go to Y.
    fn merge_into(&mut self, is_x: &mut Vec<bool>) -> usize {
        let shift = self.shift;
        let ys = self.y_top.finish();
        let xs = self.x_top.finish();
        is_x.clear();
        let (mut i, mut j) = (0, 0);
        while i + j < self.k {
            let take_x = j < xs.len() && (i >= ys.len() || xs[j].0 - shift > ys[i].0);
            if take_x {
                j += 1;
            } else {
                i += 1;
            }
            is_x.push(take_x);
        }
        j
    }

    /// Number of X-candidates in the biased top `k`.
    fn x_in_top(&mut self) -> usize {
        let shift = self.shift;
        let ys = self.y_top.finish();
        let xs = self.x_top.finish();
        let (mut i, mut j) = (0, 0);
        while i + j < self.k {
            if j < xs.len() && (i >= ys.len() || xs[j].0 - shift > ys[i].0) {
                j += 1;
            } else {
                i += 1;
            }
        }
        j
    }

    fn stats(&mut self) -> TrialStats {
        let m = self.x_in_top();
        let (k, ell, delta) = (self.k, self.ell, self.delta);
        let pot = |e: f64| sample_from_exp(delta, e);
        let ys = self.y_top.finish();
        let y_kth = pot(ys[k - 1].0);
        let bound = m < ell;
        let mut utility_change = 0.0;
        if bound {
            // The Y-finalists are ys[..k - m]; the rule drops the last ell - m.
            let y_count = k - m;
            let removed: f64 = ys[y_count - (ell - m)..y_count].iter().map(|y| pot(y.0)).sum();
            let xs = self.x_top.finish();
            let forced: f64 = xs[m..ell].iter().map(|x| pot(x.0)).sum();
            utility_change = forced - removed;
        }
        let x_max = pot(self.x_top.finish()[0].0);
        TrialStats {
            bound,
            x_max,
            y_kth,
            utility_change,
        }
    }

    fn outcome(&mut self) -> TrialOutcome {
        let mut is_x = Vec::with_capacity(self.k);
        let m = self.merge_into(&mut is_x);
        let ys: Vec<(f64, u64)> = self.y_top.finish().to_vec();
        let xs: Vec<(f64, u64)> = self.x_top.finish().to_vec();
        let delta = self.delta;
        let candidate = |group, (e, index): (f64, u64)| Candidate {
            group,
            index,
            potential: sample_from_exp(delta, e),
        };
        let (mut i, mut j) = (0, 0);
        let mut unconstrained = Vec::with_capacity(self.k);
        for &x in &is_x {
            if x {
                unconstrained.push(candidate(Group::X, xs[j]));
                j += 1;
            } else {
                unconstrained.push(candidate(Group::Y, ys[i]));
                i += 1;
            }
        }
        let bound = m < self.ell;
        let mut ruled = unconstrained.clone();
        if bound {
            let mut drop = self.ell - m;
            while drop > 0 {
                let last_y = ruled
                    .iter()
                    .rposition(|c| c.group == Group::Y)
                    .expect("k >= ell leaves a Y-finalist to drop");
                ruled.remove(last_y);
                drop -= 1;
            }
            ruled.extend((m..self.ell).map(|idx| candidate(Group::X, xs[idx])));
        }
        let utility = |set: &[Candidate]| set.iter().map(|c| c.potential).sum::<f64>();
        TrialOutcome {
            utility_unconstrained: utility(&unconstrained),
            utility_ruled: utility(&ruled),
            finalists_unconstrained: unconstrained,
            finalists_ruled: ruled,
            rule_bound: bound,
        }
    }
}

/// Draws `n` Y-potentials and `round(αn)` X-potentials, ranks them by
/// `{Y_j} ∪ {X_i / β}` and forms both committees. When fewer than `ell`
/// X-candidates made the top `k`, the lowest-ranked Y-finalists are replaced by
/// the best excluded X-candidates.
pub fn run_trial<R: Rng>(params: &ModelParams, ell: u64, rng: &mut R) -> Result<TrialOutcome> {
    validate(params, ell)?;
    let mut kernel = Kernel::new(params, ell);
    kernel.draw(rng);
    Ok(kernel.outcome())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mean,
    MedianOfMeans,
}

impl EstimatorKind {
    /// Median-of-means when the maximum has infinite variance (`δ ≤ 1`).
    pub fn default_for(delta: TailExponent) -> Self {
        if delta.delta() <= 1.0 {
            EstimatorKind::MedianOfMeans
        } else {
            EstimatorKind::Mean
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Mean => "mean",
            EstimatorKind::MedianOfMeans => "median-of-means",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub point_estimate: f64,
    pub std_error: f64,
    pub trials: u64,
    /// Trials in the conditioning event (all trials for unconditional estimates).
    pub events: u64,
    pub estimator_kind: EstimatorKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BlockStats {
    trials: u64,
    binds: u64,
    positives: u64,
    sum_x: f64,
    sum_y: f64,
    sum_xx: f64,
    sum_yy: f64,
    sum_xy: f64,
    sum_change: f64,
    sum_change2: f64,
}

impl BlockStats {
    fn add(&mut self, t: TrialStats) {
        self.trials += 1;
        if t.bound {
            self.binds += 1;
            if t.utility_change > 0.0 {
                self.positives += 1;
            }
            self.sum_x += t.x_max;
            self.sum_y += t.y_kth;
            self.sum_xx += t.x_max * t.x_max;
            self.sum_yy += t.y_kth * t.y_kth;
            self.sum_xy += t.x_max * t.y_kth;
            self.sum_change += t.utility_change;
            self.sum_change2 += t.utility_change * t.utility_change;
        }
    }

    fn merge(&mut self, o: &BlockStats) {
        self.trials += o.trials;
        self.binds += o.binds;
        self.positives += o.positives;
        self.sum_x += o.sum_x;
        self.sum_y += o.sum_y;
        self.sum_xx += o.sum_xx;
        self.sum_yy += o.sum_yy;
        self.sum_xy += o.sum_xy;
        self.sum_change += o.sum_change;
        self.sum_change2 += o.sum_change2;
    }
}

/// Contiguous trial ranges, one per block.
fn block_ranges(trials: u64) -> Vec<(u64, u64)> {
    let blocks = BLOCKS.min(trials);
    (0..blocks)
        .map(|b| (b * trials / blocks, (b + 1) * trials / blocks))
        .collect()
}

/// A configured Monte Carlo run of the selection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub params: ModelParams,
    pub ell: u64,
    pub trials: u64,
    pub seed: u64,
}

impl Simulation {
    pub fn new(params: ModelParams, ell: u64, trials: u64, seed: u64) -> Result<Self> {
        validate(&params, ell)?;
        if trials < MIN_TRIALS {
            return Err(domain(format!("need at least {MIN_TRIALS} trials (got {trials})")));
        }
        Ok(Simulation {
            params,
            ell,
            trials,
            seed,
        })
    }

    pub fn run(&self) -> SimulationSummary {
        let base = ChaCha8Rng::seed_from_u64(self.seed);
        let blocks = block_ranges(self.trials)
            .into_par_iter()
            .map(|(lo, hi)| {
                let mut kernel = Kernel::new(&self.params, self.ell);
                let mut stats = BlockStats::default();
                for t in lo..hi {
                    let mut rng = base.clone();
                    rng.set_stream(t);
                    kernel.draw(&mut rng);
                    stats.add(kernel.stats());
                }
                stats
            })
            .collect();
        SimulationSummary {
            sim: *self,
            blocks,
        }
    }
}

/// Block-level sufficient statistics of a finished run.
#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub sim: Simulation,
    blocks: Vec<BlockStats>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard error of a median of `values`, from their spread: `√(π/2) · sd / √B`.
fn median_std_error(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (std::f64::consts::FRAC_PI_2 * var / b).sqrt()
}

impl SimulationSummary {
    fn total(&self) -> BlockStats {
        let mut t = BlockStats::default();
        for b in &self.blocks {
            t.merge(b);
        }
        t
    }

    fn require_events(&self, t: &BlockStats) -> Result<()> {
        if t.binds == 0 {
            Err(Error::InsufficientConditioningEvents { trials: t.trials })
        } else {
            Ok(())
        }
    }

    /// Fraction of trials in which the rule changed the committee.
    pub fn bind_rate(&self) -> EstimatorReport {
        let t = self.total();
        let p = t.binds as f64 / t.trials as f64;
        EstimatorReport {
            point_estimate: p,
            std_error: (p * (1.0 - p) / t.trials as f64).sqrt(),
            trials: t.trials,
            events: t.trials,
            estimator_kind: EstimatorKind::Mean,
        }
    }

    /// `E[X_(a:a) 1{bind}] / E[Y_(n-k+1:n) 1{bind}]`.
    pub fn rk(&self, kind: EstimatorKind) -> Result<EstimatorReport> {
        let t = self.total();
        self.require_events(&t)?;
        let (point, se) = match kind {
            EstimatorKind::Mean => {
                let n = t.trials as f64;
                let (mx, my) = (t.sum_x / n, t.sum_y / n);
                let ratio = mx / my;
                let vx = t.sum_xx / n - mx * mx;
                let vy = t.sum_yy / n - my * my;
                let cxy = t.sum_xy / n - mx * my;
                let var = (vx - 2.0 * ratio * cxy + ratio * ratio * vy) / (n * my * my);
                (ratio, var.max(0.0).sqrt())
            }
            EstimatorKind::MedianOfMeans => {
                let mut ratios: Vec<f64> = self
                    .blocks
                    .iter()
                    .filter(|b| b.binds > 0)
                    .map(|b| b.sum_x / b.sum_y)
                    .collect();
                let se = median_std_error(&ratios);
                (median(&mut ratios), se)
            }
        };
        Ok(EstimatorReport {
            point_estimate: point,
            std_error: se,
            trials: t.trials,
            events: t.binds,
            estimator_kind: kind,
        })
    }

    /// Frequency of a utility gain among trials where the rule changed the committee.
    pub fn prob_positive(&self) -> Result<EstimatorReport> {
        let t = self.total();
        self.require_events(&t)?;
        let p = t.positives as f64 / t.binds as f64;
        Ok(EstimatorReport {
            point_estimate: p,
            std_error: (p * (1.0 - p) / t.binds as f64).sqrt(),
            trials: t.trials,
            events: t.binds,
            estimator_kind: EstimatorKind::Mean,
        })
    }

    /// Mean of `utility_ruled - utility_unconstrained` given that the rule bound.
    pub fn utility_change(&self, kind: EstimatorKind) -> Result<EstimatorReport> {
        let t = self.total();
        self.require_events(&t)?;
        let (point, se) = match kind {
            EstimatorKind::Mean => {
                let n = t.binds as f64;
                let mean = t.sum_change / n;
                let var = (t.sum_change2 / n - mean * mean).max(0.0);
                (mean, (var / n).sqrt())
            }
            EstimatorKind::MedianOfMeans => {
                let mut means: Vec<f64> = self
                    .blocks
                    .iter()
                    .filter(|b| b.binds > 0)
                    .map(|b| b.sum_change / b.binds as f64)
                    .collect();
                let se = median_std_error(&means);
                (median(&mut means), se)
            }
        };
        Ok(EstimatorReport {
            point_estimate: point,
            std_error: se,
            trials: t.trials,
            events: t.binds,
            estimator_kind: kind,
        })
    }
}

/// Monte Carlo estimate of the decision ratio `r_k` (rule with one reserved slot).
pub fn estimate_rk(params: &ModelParams, trials: u64, kind: EstimatorKind, seed: u64) -> Result<EstimatorReport> {
    Simulation::new(*params, 1, trials, seed)?.run().rk(kind)
}

/// Monte Carlo estimate of `Pr[utility gain | rule changed the committee]`.
pub fn estimate_prob_positive(params: &ModelParams, trials: u64, seed: u64) -> Result<EstimatorReport> {
    Simulation::new(*params, 1, trials, seed)?.run().prob_positive()
}

/// `E[X | X > βY]` for independent `X, Y` on a finite support, by enumeration.
pub fn cond_exp_filtered_discrete(support: &[f64], weights: &[f64], beta: f64) -> Result<f64> {
    if support.is_empty() {
        return Err(domain("support must be nonempty"));
    }
    if support.len() != weights.len() {
        return Err(domain("support and weights differ in length"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(domain("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(domain(format!("weights sum to {total}, not 1")));
    }
    let mut mass = 0.0;
    let mut moment = 0.0;
    for (&x, &wx) in support.iter().zip(weights) {
        for (&y, &wy) in support.iter().zip(weights) {
            if x > beta * y {
                mass += wx * wy;
                moment += wx * wy * x;
            }
        }
    }
    if mass == 0.0 {
        return Err(Error::EmptyConditioningEvent);
    }
    Ok(moment / mass)
}

/// A continuous distribution on `[0, 1]` whose support reaches 1.
pub trait UnitDistribution: fmt::Debug + Send + Sync {
    fn cdf(&self, x: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform;

impl UnitDistribution for Uniform {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        u
    }

    fn name(&self) -> String {
        "uniform".into()
    }
}

/// `F(x) = x^shape` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUnit {
    shape: f64,
}

impl PowerUnit {
    pub fn new(shape: f64) -> Result<Self> {
        if shape > 0.0 && shape.is_finite() {
            Ok(PowerUnit { shape })
        } else {
            Err(domain(format!("power distribution shape must be positive (got {shape})")))
        }
    }
}

impl UnitDistribution for PowerUnit {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0).powf(self.shape)
    }

    fn quantile(&self, u: f64) -> f64 {
        u.powf(1.0 / self.shape)
    }

    fn name(&self) -> String {
        format!("power:{}", self.shape)
    }
}

pub type BiasMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Candidate values on `[0, 1]` and a bias map capped strictly below 1.
#[derive(Clone)]
pub struct BoundedModel {
    distribution: Arc<dyn UnitDistribution>,
    bias: BiasMap,
    bias_cap: f64,
}

impl fmt::Debug for BoundedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedModel")
            .field("distribution", &self.distribution)
            .field("bias_cap", &self.bias_cap)
            .finish()
    }
}

impl BoundedModel {
    /// Checks `cdf(0) = 0`, `cdf(1) = 1`, `cap < 1`, and `0 ≤ b(x) ≤ cap` on a grid.
    pub fn new(distribution: Arc<dyn UnitDistribution>, bias: BiasMap, bias_cap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&bias_cap) {
            return Err(domain(format!("bias cap must lie in [0, 1) (got {bias_cap})")));
        }
        if distribution.cdf(0.0) != 0.0 || distribution.cdf(1.0) != 1.0 {
            return Err(domain("distribution must satisfy cdf(0) = 0 and cdf(1) = 1"));
        }
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let b = bias(x);
            if !(0.0..=bias_cap).contains(&b) {
                return Err(domain(format!("bias map gives b({x}) = {b}, outside [0, {bias_cap}]")));
            }
        }
        Ok(BoundedModel {
            distribution,
            bias,
            bias_cap,
        })
    }

    /// `b(x) = scale · x`, capped at `scale`.
    pub fn linear(distribution: Arc<dyn UnitDistribution>, scale: f64) -> Result<Self> {
        BoundedModel::new(distribution, Arc::new(move |x| scale * x), scale)
    }

    pub fn bias_cap(&self) -> f64 {
        self.bias_cap
    }

    pub fn distribution(&self) -> &dyn UnitDistribution {
        self.distribution.as_ref()
    }
}

/// Estimates `E[X_(n:n) - Y_(n-1:n) | b(X_(n:n)) < Y_(n-1:n)]` with both pools
/// of size `n`.
pub fn bounded_experiment(model: &BoundedModel, n: u64, trials: u64, seed: u64) -> Result<EstimatorReport> {
    if n < 2 {
        return Err(domain("bounded experiment needs n >= 2"));
    }
    if trials < MIN_TRIALS {
        return Err(domain(format!("need at least {MIN_TRIALS} trials (got {trials})")));
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let dist = model.distribution.as_ref();
    let blocks: Vec<(u64, f64, f64)> = block_ranges(trials)
        .into_par_iter()
        .map(|(lo, hi)| {
            let (mut events, mut sum, mut sum2) = (0u64, 0.0, 0.0);
            for t in lo..hi {
                let mut rng = base.clone();
                rng.set_stream(t);
                let mut x_max = 0.0f64;
                for _ in 0..n {
                    x_max = x_max.max(dist.quantile(rng.random()));
                }
                let (mut y1, mut y2) = (0.0f64, 0.0f64);
                for _ in 0..n {
                    let y = dist.quantile(rng.random());
                    if y > y1 {
                        y2 = y1;
                        y1 = y;
                    } else if y > y2 {
                        y2 = y;
                    }
                }
                if (model.bias)(x_max) < y2 {
                    let d = x_max - y2;
                    events += 1;
                    sum += d;
                    sum2 += d * d;
                }
            }
            (events, sum, sum2)
        })
        .collect();
    let (events, sum, sum2) = blocks
        .iter()
        .fold((0u64, 0.0, 0.0), |acc, b| (acc.0 + b.0, acc.1 + b.1, acc.2 + b.2));
    if events == 0 {
        return Err(Error::InsufficientConditioningEvents { trials });
    }
    let m = events as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0);
    Ok(EstimatorReport {
        point_estimate: mean,
        std_error: (var / m).sqrt(),
        trials,
        events,
        estimator_kind: EstimatorKind::Mean,
    })
}
