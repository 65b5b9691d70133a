//! Maximum-likelihood estimate of the bias from past single-hire decisions.
//!
//! Year `i` contributes a Bernoulli outcome with success probability
//! `cᵢ / (1 + cᵢ)`, `cᵢ = αᵢ β^{-(1+δ)}`: the large-pool probability that an
//! X-candidate wins a one-slot selection. Pool sizes are recorded but do not
//! enter the likelihood.

use crate::error::{domain, Error, Result};
use crate::powerlaw::TailExponent;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

/// One year of selection data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiringRecord {
    pub year: String,
    /// X-pool size over Y-pool size.
    pub alpha: f64,
    /// Y-pool size; informational only.
    pub n: u64,
    /// Whether the selected candidate came from group X.
    pub selected_x: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiringHistory {
    records: Vec<HiringRecord>,
    delta: TailExponent,
}

const HEADER: [&str; 4] = ["year", "alpha", "n", "selected"];

impl HiringHistory {
    pub fn new(records: Vec<HiringRecord>, delta: TailExponent) -> Result<Self> {
        if records.is_empty() {
            return Err(domain("hiring history is empty"));
        }
        if let Some(r) = records.iter().find(|r| !(r.alpha > 0.0 && r.alpha.is_finite())) {
            return Err(domain(format!("year {}: pool ratio must be positive (got {})", r.year, r.alpha)));
        }
        Ok(HiringHistory { records, delta })
    }

    /// Reads `year,alpha,n,selected` CSV (header required, `selected` is `X` or `Y`).
    pub fn from_csv<R: Read>(reader: R, delta: TailExponent) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        if header.iter().map(str::to_ascii_lowercase).ne(HEADER.iter().map(|s| s.to_string())) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{}`, found `{}`", HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| csv_error(e, 0))?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            let alpha: f64 = row[1]
                .parse()
                .map_err(|_| bad(format!("alpha {:?} is not a number", &row[1])))?;
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(bad(format!("alpha must be positive (got {alpha})")));
            }
            let n: u64 = row[2]
                .parse()
                .map_err(|_| bad(format!("pool size {:?} is not a nonnegative integer", &row[2])))?;
            let selected_x = match row[3].to_ascii_uppercase().as_str() {
                "X" => true,
                "Y" => false,
                "" => return Err(bad("selected group is missing".into())),
                other => return Err(bad(format!("selected group must be X or Y (got {other:?})"))),
            };
            records.push(HiringRecord {
                year: row[0].to_string(),
                alpha,
                n,
                selected_x,
            });
        }
        if records.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "no records after the header".into(),
            });
        }
        HiringHistory::new(records, delta)
    }

    pub fn from_path(path: &Path, delta: TailExponent) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
        HiringHistory::from_csv(file, delta)
    }

    pub fn records(&self) -> &[HiringRecord] {
        &self.records
    }

    pub fn delta(&self) -> TailExponent {
        self.delta
    }

    /// Number of years, `m`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of X-selections, `N`.
    pub fn x_selections(&self) -> usize {
        self.records.iter().filter(|r| r.selected_x).count()
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// `Σ_{Mᵢ=1} ln cᵢ - Σᵢ ln(1 + cᵢ)` with `cᵢ = αᵢ β^{-(1+δ)}`.
pub fn log_likelihood(history: &HiringHistory, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain(format!("beta must be positive (got {beta})")));
    }
    let shift = history.delta.exponent() * beta.ln();
    Ok(history
        .records
        .iter()
        .map(|r| {
            let ln_c = r.alpha.ln() - shift;
            let hit = if r.selected_x { ln_c } else { 0.0 };
            hit - log1p_exp(ln_c)
        })
        .fold(CompensatedSum::default(), CompensatedSum::add)
        .value())
}

/// Neumaier summation. Histories repeat the same few `α` values, so plain
/// summation accumulates rounding errors that all point the same way.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(self, x: f64) -> Self {
        let t = self.sum + x;
        let lost = if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        CompensatedSum {
            sum: t,
            carry: self.carry + lost,
        }
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// `ln(1 + e^x)` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `Σᵢ 1/(1 + αᵢ^{-1} β^{1+δ})` at `β = e^{ln_beta}`.
fn expected_x_selections(history: &HiringHistory, ln_beta: f64) -> f64 {
    let e = history.delta.exponent();
    history
        .records
        .iter()
        .map(|r| 1.0 / (1.0 + (e * ln_beta - r.alpha.ln()).exp()))
        .fold(CompensatedSum::default(), CompensatedSum::add)
        .value()
}

/// Left side minus right side of the stationarity equation
/// `Σᵢ 1/(1 + αᵢ^{-1} β^{1+δ}) = N`.
pub fn stationarity_residual(history: &HiringHistory, beta: f64) -> f64 {
    expected_x_selections(history, beta.ln()) - history.x_selections() as f64
}

/// Which way the likelihood runs off when it has no interior maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    /// No X-selections: the likelihood increases without bound in β.
    TowardInfinity,
    /// Only X-selections: the likelihood increases as β falls to 0.
    TowardZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MleOutcome {
    Estimate {
        beta_hat: f64,
        /// `β̂ < 1`, i.e. the data favour X-candidates, outside the model's β > 1.
        bias_toward_x: bool,
    },
    Degenerate { direction: Degeneracy },
}

const BISECTION_MAX_ITER: usize = 400;

/// Unique root of the stationarity equation, by bisection in `ln β`.
///
/// The bracket starts at the constant-α closed form `((m/N - 1) ᾱ)^{1/(1+δ)}`
/// with `ᾱ` the geometric mean of the `αᵢ`, and widens geometrically until the
/// residual changes sign. Bisection runs to floating-point resolution.
pub fn mle_beta(history: &HiringHistory) -> MleOutcome {
    let m = history.len() as f64;
    let big_n = history.x_selections();
    if big_n == 0 {
        return MleOutcome::Degenerate {
            direction: Degeneracy::TowardInfinity,
        };
    }
    if big_n == history.len() {
        return MleOutcome::Degenerate {
            direction: Degeneracy::TowardZero,
        };
    }
    let target = big_n as f64;
    let e = history.delta.exponent();
    let ln_alpha_bar = history.records.iter().map(|r| r.alpha.ln()).sum::<f64>() / m;
    let start = ((m / target - 1.0).ln() + ln_alpha_bar) / e;
    let g = |x: f64| expected_x_selections(history, x) - target;

    let mut step = 1.0;
    let mut lo = start - step;
    while g(lo) < 0.0 {
        lo -= step;
        step *= 2.0;
    }
    step = 1.0;
    let mut hi = start + step;
    while g(hi) > 0.0 {
        hi += step;
        step *= 2.0;
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Of the two final bracket ends, keep the one with the smaller residual.
    let x = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let beta_hat = x.exp();
    MleOutcome::Estimate {
        beta_hat,
        bias_toward_x: beta_hat < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(delta: f64) -> TailExponent {
        TailExponent::new(delta).unwrap()
    }

    fn constant(m: usize, big_n: usize, alpha: f64, delta: f64) -> HiringHistory {
        let records = (0..m)
            .map(|i| HiringRecord {
                year: format!("{}", 2000 + i),
                alpha,
                n: 100,
                selected_x: i < big_n,
            })
            .collect();
        HiringHistory::new(records, d(delta)).unwrap()
    }

    fn beta_hat(h: &HiringHistory) -> f64 {
        match mle_beta(h) {
            MleOutcome::Estimate { beta_hat, .. } => beta_hat,
            other => panic!("unexpected {other:?}"),
        }
    }

    fn synthetic(alphas: &[f64], beta: f64, delta: f64, m: usize, seed: u64) -> HiringHistory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..m)
            .map(|i| {
                let alpha = alphas[i % alphas.len()];
                let c = alpha * beta.powf(-(1.0 + delta));
                HiringRecord {
                    year: i.to_string(),
                    alpha,
                    n: 1000,
                    selected_x: rng.random::<f64>() < c / (1.0 + c),
                }
            })
            .collect();
        HiringHistory::new(records, d(delta)).unwrap()
    }

    #[test]
    fn log_likelihood_examples() {
        let h = constant(1, 1, 1.0, 1.0);
        assert_relative_eq!(log_likelihood(&h, 1.0).unwrap(), 0.5f64.ln(), max_relative = 1e-15);
        let none = constant(5, 0, 0.7, 1.0);
        let far = log_likelihood(&none, 1e6).unwrap();
        assert!(far < 0.0 && far > -1e-9);
        assert!(log_likelihood(&h, 0.0).is_err());
    }

    #[test]
    fn closed_form_cases() {
        assert_relative_eq!(beta_hat(&constant(10, 5, 1.0, 1.0)), 1.0, max_relative = 1e-9);
        assert_relative_eq!(beta_hat(&constant(10, 2, 1.0, 1.0)), 2.0, max_relative = 1e-9);
        let h = constant(10, 2, 1.0, 1.0);
        let b = beta_hat(&h);
        let grad = (log_likelihood(&h, b + 1e-6).unwrap() - log_likelihood(&h, b - 1e-6).unwrap()) / 2e-6;
        assert!(grad.abs() <= 1e-6, "{grad}");
        for (m, big_n, alpha, delta) in [(37, 3, 0.4, 0.5), (1000, 17, 0.05, 2.0), (9, 8, 2.0, 1.0)] {
            let want = ((m as f64 / big_n as f64 - 1.0) * alpha).powf(1.0 / (1.0 + delta));
            let got = beta_hat(&constant(m, big_n, alpha, delta));
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn degenerate_histories() {
        assert_eq!(
            mle_beta(&constant(4, 0, 0.5, 1.0)),
            MleOutcome::Degenerate { direction: Degeneracy::TowardInfinity }
        );
        assert_eq!(
            mle_beta(&constant(4, 4, 0.5, 1.0)),
            MleOutcome::Degenerate { direction: Degeneracy::TowardZero }
        );
        match mle_beta(&constant(10, 8, 1.0, 1.0)) {
            MleOutcome::Estimate { beta_hat, bias_toward_x } => {
                assert!(beta_hat < 1.0 && bias_toward_x);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plug_back_holds_for_repetitive_histories() {
        for (seed, alphas) in [[0.5, 1.0], [0.3, 0.3], [0.1, 0.9], [1.0, 1.0], [0.25, 0.75], [0.6, 0.2]]
            .into_iter()
            .enumerate()
        {
            let h = synthetic(&alphas, 2.0, 1.0, 100_000, seed as u64);
            let r = stationarity_residual(&h, beta_hat(&h));
            assert!(r.abs() <= 1e-8, "{alphas:?}: {r:e}");
        }
    }

    #[test]
    fn mixed_history_recovers_bias() {
        let h = synthetic(&[0.5, 1.0], 2.0, 1.0, 100_000, 42);
        let b = beta_hat(&h);
        assert!((b / 2.0 - 1.0).abs() < 0.05, "{b}");
        assert!(stationarity_residual(&h, b).abs() <= 1e-8);
        // Likelihood gradient vanishes at the estimate.
        let eps = 1e-6 * b;
        let grad = (log_likelihood(&h, b + eps).unwrap() - log_likelihood(&h, b - eps).unwrap()) / (2.0 * eps);
        assert!(grad.abs() / h.len() as f64 <= 1e-6, "{grad}");
        for i in -50..=50 {
            let other = b * 1.02f64.powi(i);
            assert!(log_likelihood(&h, b).unwrap() >= log_likelihood(&h, other).unwrap());
        }
    }

    #[test]
    fn unbiased_histories_give_unit_estimates() {
        let mut estimates: Vec<f64> = (0..100)
            .map(|seed| beta_hat(&synthetic(&[0.3, 0.8, 1.0], 1.0, 1.5, 10_000, seed)))
            .collect();
        estimates.sort_by(f64::total_cmp);
        let med = 0.5 * (estimates[49] + estimates[50]);
        assert!((0.9..=1.1).contains(&med), "{med}");
    }

    #[test]
    fn parses_csv() {
        let text = "year,alpha,n,selected\n2001,0.5,40,X\n2002, 1.0 ,30,y\n";
        let h = HiringHistory::from_csv(text.as_bytes(), d(1.0)).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.x_selections(), 1);
        assert_eq!(h.records()[1].alpha, 1.0);
        assert_eq!(h.records()[1].n, 30);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let cases = [
            ("year,alpha,n,selected\n2001,0.5,40,X\n2002,0.5,40,\n", 3),
            ("year,alpha,n,selected\n2001,abc,40,X\n", 2),
            ("year,alpha,n,selected\n2001,0.5,40,X\n2002,0.5,40,Z\n", 3),
            ("year,alpha,n,selected\n2001,0.5,40\n", 2),
            ("year,alpha,selected\n2001,0.5,X\n", 1),
            ("year,alpha,n,selected\n2001,-1,40,X\n", 2),
        ];
        for (text, want) in cases {
            match HiringHistory::from_csv(text.as_bytes(), d(1.0)) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
