//! Closed-form decision functions: when does forcing an X-candidate into the
//! finalist set raise expected utility?

use crate::error::{domain, Error, Result};
use crate::powerlaw::TailExponent;
use crate::special::shifted_binomial;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Multiplicative bias against X-candidates; `Infinite` ranks every X below every Y.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Bias {
    Finite(f64),
    Infinite,
}

impl Bias {
    /// Accepts any `β ≥ 1`; `β = 1` is the unbiased boundary.
    pub fn new(beta: f64) -> Result<Self> {
        if beta == f64::INFINITY {
            Ok(Bias::Infinite)
        } else if beta >= 1.0 && beta.is_finite() {
            Ok(Bias::Finite(beta))
        } else {
            Err(domain(format!("bias beta must be >= 1 or inf (got {beta})")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Bias::Finite(b) => b,
            Bias::Infinite => f64::INFINITY,
        }
    }

    /// `β^{-(1+δ)}`, zero for infinite bias.
    pub fn discount(self, delta: TailExponent) -> f64 {
        match self {
            Bias::Finite(b) => (-delta.exponent() * b.ln()).exp(),
            Bias::Infinite => 0.0,
        }
    }

    /// `c = α β^{-(1+δ)}`.
    pub fn c(self, alpha: f64, delta: TailExponent) -> f64 {
        alpha * self.discount(delta)
    }
}

impl fmt::Display for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bias::Finite(b) => write!(f, "{b}"),
            Bias::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Bias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if ["inf", "infinity", "+inf", "∞"].iter().any(|w| t.eq_ignore_ascii_case(w)) {
            return Ok(Bias::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| domain(format!("cannot parse bias {s:?}; expected a number >= 1 or inf")))?;
        Bias::new(v)
    }
}

impl Serialize for Bias {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bias::Finite(b) => ser.serialize_f64(*b),
            Bias::Infinite => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bias {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Bias::new(v),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// One selection instance: `n` Y-candidates, `round(αn)` X-candidates, `k` finalists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: Bias,
    pub delta: TailExponent,
    pub k: u64,
    pub n: u64,
}

impl ModelParams {
    /// Validates `0 < α ≤ 1`, `β ≥ 1` and `1 ≤ k ≤ n`.
    ///
    /// The decision functions [`phi_k`] and [`beta_star`] additionally need
    /// `k ≥ 2` and `β > 1`; probabilities and simulations accept `k = 1`.
    pub fn new(alpha: f64, beta: Bias, delta: TailExponent, k: u64, n: u64) -> Result<Self> {
        check_alpha(alpha)?;
        Bias::new(beta.value())?;
        if k < 1 {
            return Err(domain("finalist count k must be at least 1"));
        }
        if n < k {
            return Err(domain(format!("pool size n={n} is smaller than k={k}")));
        }
        Ok(ModelParams {
            alpha,
            beta,
            delta,
            k,
            n,
        })
    }

    pub fn c(&self) -> f64 {
        self.beta.c(self.alpha, self.delta)
    }

    /// Number of X-candidates, `round(αn)` but at least 1.
    pub fn x_pool(&self) -> u64 {
        x_pool_size(self.alpha, self.n)
    }
}

/// `round(αn)`, floored at one candidate.
pub fn x_pool_size(alpha: f64, n: u64) -> u64 {
    ((alpha * n as f64).round() as u64).max(1)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("pool ratio alpha must lie in (0, 1] (got {alpha})")))
    }
}

fn check_decision_inputs(alpha: f64, beta: Bias, k: u64) -> Result<()> {
    check_alpha(alpha)?;
    if k < 2 {
        return Err(domain(format!("phi needs k >= 2 finalists (got {k})")));
    }
    match beta {
        Bias::Finite(b) if !(b > 1.0 && b.is_finite()) => {
            Err(domain(format!("phi needs bias beta > 1 (got {b})")))
        }
        _ => Ok(()),
    }
}

/// Two-finalist decision function; the rule helps asymptotically iff this exceeds 1.
pub fn phi2(alpha: f64, beta: f64, delta: TailExponent) -> Result<f64> {
    let beta = if beta == f64::INFINITY {
        Bias::Infinite
    } else {
        Bias::Finite(beta)
    };
    check_decision_inputs(alpha, beta, 2)?;
    let Bias::Finite(_) = beta else {
        return Ok(phi_k_limit(alpha, delta, 2));
    };
    let (s, r) = (delta.s(), delta.r());
    let c = beta.c(alpha, delta);
    // α^s [1 - (1 + 1/c)^{-r} (1 + r/(1+c))] / [r (1+c)^{-1-r}]
    let inner = 1.0 - (1.0 + 1.0 / c).powf(-r) * (1.0 + r / (1.0 + c));
    Ok(alpha.powf(s) * inner / (r * (1.0 + c).powf(-1.0 - r)))
}

/// `lim_{β→∞} φ_k = α^{1/(1+δ)} / C(k - 1 - 1/(1+δ), k - 1)`.
pub fn phi_k_limit(alpha: f64, delta: TailExponent, k: u64) -> f64 {
    alpha.powf(delta.s()) / shifted_binomial(k - 1, delta.s())
}

/// Tail-series terms are summed only when the series needs at most about this
/// many terms; slower-converging cases use the finite bracket, which is free
/// of cancellation exactly when `c` is small.
const SERIES_MIN_C: f64 = 0.02;
const SERIES_MAX_TERMS: usize = 1_000_000;

/// `k`-finalist decision function `φ_k(α, β, δ)`. Infinite bias gives the limit.
pub fn phi_k(params: &ModelParams) -> Result<f64> {
    phi(params.alpha, params.beta, params.delta, params.k)
}

/// [`phi_k`] without building a full [`ModelParams`].
pub fn phi(alpha: f64, beta: Bias, delta: TailExponent, k: u64) -> Result<f64> {
    check_decision_inputs(alpha, beta, k)?;
    let c = beta.c(alpha, delta);
    if c == 0.0 {
        return Ok(phi_k_limit(alpha, delta, k));
    }
    if c >= SERIES_MIN_C {
        phi_k_series(alpha, c, delta, k)
    } else {
        Ok(phi_k_bracket_c(alpha, c, delta, k))
    }
}

/// Tail-series form: every term positive, ratio below `1/(1+c)`.
fn phi_k_series(alpha: f64, c: f64, delta: TailExponent, k: u64) -> Result<f64> {
    let (s, r) = (delta.s(), delta.r());
    let x = 1.0 / (1.0 + c);
    let kf = k as f64;
    let mut term = shifted_binomial(k, s);
    let mut sum = 0.0;
    for i in 0..SERIES_MAX_TERMS {
        sum += term;
        let j = kf + i as f64 + 1.0;
        term *= (j - s) / j * x;
        // Remaining tail is bounded by term / (1 - x) = term (1 + c) / c.
        if term * (1.0 + c) / c <= 1e-15 * sum {
            let pre = alpha.powf(s) * c.powf(r) / (1.0 + c) / shifted_binomial(k - 1, s);
            return Ok(pre * sum);
        }
    }
    Err(Error::Numeric(format!(
        "phi_k tail series did not converge in {SERIES_MAX_TERMS} terms (c = {c:e})"
    )))
}

/// Finite-sum form: `α^s (1+c)^{k-1} [(1+c)^r - c^r Σ_{j<k} C(j-s, j)(1+c)^{-j}] / C(k-1-s, k-1)`.
fn phi_k_bracket_c(alpha: f64, c: f64, delta: TailExponent, k: u64) -> f64 {
    let (s, r) = (delta.s(), delta.r());
    let x = 1.0 / (1.0 + c);
    let mut coeff = 1.0;
    let mut power = 1.0;
    let mut partial = 0.0;
    for j in 0..k {
        if j > 0 {
            coeff *= (j as f64 - s) / j as f64;
            power *= x;
        }
        partial += coeff * power;
    }
    let bracket = (1.0 + c).powf(r) - c.powf(r) * partial;
    alpha.powf(s) * (1.0 + c).powi((k - 1) as i32) * bracket / shifted_binomial(k - 1, s)
}

/// [`phi_k`] through the finite-sum bracket only. Loses precision to
/// cancellation for large `k` and large `c`; kept as a cross-check.
pub fn phi_k_bracket(params: &ModelParams) -> Result<f64> {
    check_decision_inputs(params.alpha, params.beta, params.k)?;
    let c = params.c();
    if c == 0.0 {
        return Ok(phi_k_limit(params.alpha, params.delta, params.k));
    }
    Ok(phi_k_bracket_c(params.alpha, c, params.delta, params.k))
}

/// Whether the rule helps under infinite bias: `α > (δ/(1+δ))^{1+δ}`.
pub fn infinite_bias_positive(alpha: f64, delta: TailExponent) -> bool {
    alpha > infinite_bias_boundary(delta)
}

/// `(δ/(1+δ))^{1+δ}`.
pub fn infinite_bias_boundary(delta: TailExponent) -> f64 {
    delta.r().powf(delta.exponent())
}

/// Outcome of the threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// The rule helps exactly for `β > beta_star`.
    Finite(f64),
    /// `φ_k ≤ 1` for every bias level.
    NoThreshold,
}

const BISECTION_MAX_ITER: usize = 200;
const PHI_TOL: f64 = 1e-9;
/// Points per doubling of `ln β` used for the monotonicity scan when `k > 2`.
const SCAN_PER_OCTAVE: usize = 16;

/// Smallest bias at which the rule starts to help: `φ_k(β*) = 1`.
///
/// Brackets by doubling `ln β`, then bisects in `ln β`. For `k > 2`, where
/// monotonicity in `β` is not known analytically, `φ_k` is first scanned on a
/// geometric grid over the bracket and any decrease yields
/// [`Error::MultiCrossing`].
pub fn beta_star(alpha: f64, delta: TailExponent, k: u64) -> Result<Threshold> {
    check_decision_inputs(alpha, Bias::Infinite, k)?;
    if phi_k_limit(alpha, delta, k) <= 1.0 {
        return Ok(Threshold::NoThreshold);
    }
    let eval = |ln_b: f64| {
        let c = alpha * (-delta.exponent() * ln_b).exp();
        if c == 0.0 {
            Ok(phi_k_limit(alpha, delta, k))
        } else if c >= SERIES_MIN_C {
            phi_k_series(alpha, c, delta, k)
        } else {
            Ok(phi_k_bracket_c(alpha, c, delta, k))
        }
    };
    if eval(0.0)? >= 1.0 {
        return Ok(Threshold::Finite(1.0));
    }
    let mut lo = 0.0;
    let mut hi = std::f64::consts::LN_2;
    while eval(hi)? <= 1.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::Numeric(format!(
                "no sign change of phi - 1 below beta = e^700 (alpha={alpha}, delta={delta}, k={k})"
            )));
        }
    }
    if k > 2 {
        let points = SCAN_PER_OCTAVE * (hi / std::f64::consts::LN_2).log2().ceil().max(1.0) as usize
            + SCAN_PER_OCTAVE;
        let mut prev = eval(0.0)?;
        for i in 1..=points {
            let v = eval(hi * i as f64 / points as f64)?;
            if v < prev {
                return Err(Error::MultiCrossing);
            }
            prev = v;
        }
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        if (v - 1.0).abs() <= PHI_TOL && hi - lo <= 1e-12 * mid.max(1.0) {
            return Ok(Threshold::Finite(mid.exp()));
        }
        if !(lo < mid && mid < hi) {
            break;
        }
        if v > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let v = eval(mid)?;
    if (v - 1.0).abs() <= PHI_TOL {
        Ok(Threshold::Finite(mid.exp()))
    } else {
        Err(Error::Numeric(format!(
            "bisection for beta* stalled at phi = {v} (alpha={alpha}, delta={delta}, k={k})"
        )))
    }
}

/// Asymptotic probability that the biased top `k` contains no X-candidate: `(1+c)^{-k}`.
pub fn prob_rule_binds(params: &ModelParams) -> f64 {
    (-(params.k as f64) * params.c().ln_1p()).exp()
}

/// Asymptotic probability that the forced swap raises utility, given that it
/// happens: `1 - ((1+c)/(1+α))^k`.
pub fn prob_positive_given_change(params: &ModelParams) -> f64 {
    let ratio = params.c().ln_1p() - params.alpha.ln_1p();
    -(params.k as f64 * ratio).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Positive,
    Negative,
    Boundary,
}

impl Verdict {
    /// Classifies `φ` against 1. Values within `tolerance` of 1 are `Boundary`;
    /// with zero tolerance only an exact 1 is.
    pub fn classify(phi: f64, tolerance: f64) -> Verdict {
        if phi > 1.0 + tolerance {
            Verdict::Positive
        } else if phi < 1.0 - tolerance {
            Verdict::Negative
        } else {
            Verdict::Boundary
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Verdict::Positive => "positive expected change",
            Verdict::Negative => "negative expected change",
            Verdict::Boundary => "no expected change (boundary)",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d(delta: f64) -> TailExponent {
        TailExponent::new(delta).unwrap()
    }

    fn params(alpha: f64, beta: f64, delta: f64, k: u64) -> ModelParams {
        ModelParams::new(alpha, Bias::new(beta).unwrap(), d(delta), k, 1000).unwrap()
    }

    #[test]
    fn bias_parsing() {
        assert_eq!("inf".parse::<Bias>().unwrap(), Bias::Infinite);
        assert_eq!("Infinity".parse::<Bias>().unwrap(), Bias::Infinite);
        assert_eq!("2.5".parse::<Bias>().unwrap(), Bias::Finite(2.5));
        assert!("0.5".parse::<Bias>().is_err());
        assert!("nan".parse::<Bias>().is_err());
        assert!("abc".parse::<Bias>().is_err());
        let json = serde_json::to_string(&Bias::Infinite).unwrap();
        assert_eq!(serde_json::from_str::<Bias>(&json).unwrap(), Bias::Infinite);
        assert_eq!(serde_json::from_str::<Bias>("3").unwrap(), Bias::Finite(3.0));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, Bias::Infinite, d(1.0), 2, 10).is_err());
        assert!(ModelParams::new(1.5, Bias::Infinite, d(1.0), 2, 10).is_err());
        assert!(ModelParams::new(0.5, Bias::Infinite, d(1.0), 11, 10).is_err());
        assert!(ModelParams::new(0.5, Bias::Infinite, d(1.0), 0, 10).is_err());
        assert_eq!(params(0.5, 2.0, 1.0, 2).x_pool(), 500);
        assert_eq!(x_pool_size(0.001, 10), 1);
    }

    #[test]
    fn phi2_sign_examples() {
        assert!(phi2(0.3, 10.0, d(1.0)).unwrap() > 1.0);
        assert!(phi2(0.3, 10.0, d(0.5)).unwrap() < 1.0);
        assert!(phi2(0.3, 1.0, d(1.0)).is_err());
        let near = phi2(0.25, 1e6, d(1.0)).unwrap();
        assert!(near < 1.0 && near > 1.0 - 1e-5, "{near}");
        assert_eq!(phi2(0.25, f64::INFINITY, d(1.0)).unwrap(), 1.0);
    }

    #[test]
    fn phi_k_specializes_to_phi2() {
        for alpha in [0.05, 0.3, 0.7, 1.0] {
            for beta in [1.01, 2.0, 10.0, 1e3] {
                for delta in [0.1, 1.0, 3.0] {
                    let a = phi_k(&params(alpha, beta, delta, 2)).unwrap();
                    let b = phi2(alpha, beta, d(delta)).unwrap();
                    assert!((a - b).abs() <= 1e-10, "{alpha} {beta} {delta}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn series_agrees_with_bracket_for_small_k() {
        for k in 2..=10 {
            for alpha in [0.1, 0.5, 1.0] {
                for beta in [1.05, 1.5, 3.0, 30.0] {
                    for delta in [0.2, 1.0, 2.5] {
                        let p = params(alpha, beta, delta, k);
                        let c = p.c();
                        if c < SERIES_MIN_C {
                            continue;
                        }
                        let a = phi_k_series(alpha, c, d(delta), k).unwrap();
                        let b = phi_k_bracket(&p).unwrap();
                        assert_relative_eq!(a, b, max_relative = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn phi_k_increases_with_k() {
        let p2 = phi_k(&params(0.3, 10.0, 1.0, 2)).unwrap();
        let p3 = phi_k(&params(0.3, 10.0, 1.0, 3)).unwrap();
        assert!(p3 > p2);
    }

    #[test]
    fn infinite_bias_examples() {
        assert!(infinite_bias_positive(0.3, d(1.0)));
        assert!(!infinite_bias_positive(0.25, d(1.0)));
        assert!(!infinite_bias_positive(0.3, d(3.0)));
        assert_eq!(infinite_bias_boundary(d(3.0)), 0.31640625);
    }

    #[test]
    fn limit_matches_large_beta() {
        for alpha in [0.1, 0.5, 1.0] {
            for delta in [0.75, 1.0, 2.0] {
                let lim = phi_k_limit(alpha, d(delta), 2);
                assert_relative_eq!(lim, alpha.powf(d(delta).s()) * (1.0 + delta) / delta, max_relative = 1e-15);
                let far = phi2(alpha, 1e8, d(delta)).unwrap();
                assert!((far / lim - 1.0).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn beta_star_examples() {
        assert_eq!(beta_star(0.25, d(1.0), 2).unwrap(), Threshold::NoThreshold);
        let Threshold::Finite(b) = beta_star(0.5, d(1.0), 2).unwrap() else {
            panic!("expected a finite threshold");
        };
        assert!((phi2(0.5, b, d(1.0)).unwrap() - 1.0).abs() <= 1e-9);
        let Threshold::Finite(b1) = beta_star(1.0, d(1.0), 2).unwrap() else {
            panic!("expected a finite threshold");
        };
        assert!(b1 >= 1.0);
        for i in 1..=50 {
            let beta = b1 * 1.2f64.powi(i);
            assert!(phi2(1.0, beta, d(1.0)).unwrap() > 1.0);
        }
        // φ below 1 on a grid below β*: the supremum claim for α = 0.25.
        for i in 0..=80 {
            let beta = 1.001 * 10f64.powf(i as f64 / 10.0);
            assert!(phi2(0.25, beta, d(1.0)).unwrap() < 1.0);
        }
    }

    #[test]
    fn beta_star_for_larger_k() {
        let Threshold::Finite(b) = beta_star(0.3, d(1.0), 5).unwrap() else {
            panic!("expected a finite threshold");
        };
        let p = ModelParams::new(0.3, Bias::Finite(b), d(1.0), 5, 100).unwrap();
        assert!((phi_k(&p).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn probability_examples() {
        let p = ModelParams::new(1.0, Bias::Finite(1.0), d(1.0), 1, 10).unwrap();
        assert_relative_eq!(prob_rule_binds(&p), 0.5, max_relative = 1e-15);
        assert_eq!(prob_positive_given_change(&p), 0.0);
        for k in 1..6 {
            let alpha = 2f64.powf(1.0 / k as f64) - 1.0;
            let p = ModelParams::new(alpha, Bias::Infinite, d(1.0), k, 100).unwrap();
            assert_eq!(prob_rule_binds(&p), 1.0);
            assert_relative_eq!(prob_positive_given_change(&p), 0.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(Verdict::classify(1.2, 0.0), Verdict::Positive);
        assert_eq!(Verdict::classify(0.8, 0.0), Verdict::Negative);
        assert_eq!(Verdict::classify(1.0, 0.0), Verdict::Boundary);
        assert_eq!(Verdict::classify(1.0 + 1e-12, 1e-9), Verdict::Boundary);
    }

    proptest! {
        #[test]
        fn probabilities_are_bounded_and_monotone(alpha in 0.01f64..1.0, delta in 0.05f64..5.0, k in 1u64..30, b1 in 1.0f64..100.0, scale in 1.0f64..10.0) {
            let lo = ModelParams::new(alpha, Bias::Finite(b1), d(delta), k, 100).unwrap();
            let hi = ModelParams::new(alpha, Bias::Finite(b1 * scale), d(delta), k, 100).unwrap();
            for p in [&lo, &hi] {
                prop_assert!((0.0..=1.0).contains(&prob_rule_binds(p)));
                prop_assert!((0.0..=1.0).contains(&prob_positive_given_change(p)));
            }
            prop_assert!(prob_positive_given_change(&hi) >= prob_positive_given_change(&lo));
        }

        #[test]
        fn infinite_bias_sign_consistency(alpha in 0.01f64..1.0, delta in 0.5f64..5.0) {
            let far = phi2(alpha, 1e8, d(delta)).unwrap();
            prop_assume!((far - 1.0).abs() > 1e-3);
            prop_assert_eq!(infinite_bias_positive(alpha, d(delta)), far > 1.0);
        }
    }
}
