//! Order statistics of the Pareto law `Pr{Z ≥ t} = t^{-(1+δ)}` on `[1, ∞)`.

use crate::error::{domain, Result};
use crate::special::{beta_reg_split, ln_choose, ln_gamma, ln_gamma_ratio, ln_gamma_signed};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Tail parameter `δ > 0`; the survival function decays like `t^{-(1+δ)}`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TailExponent(f64);

impl TailExponent {
    pub fn new(delta: f64) -> Result<Self> {
        if delta.is_finite() && delta > 0.0 {
            Ok(TailExponent(delta))
        } else {
            Err(domain(format!("tail exponent delta must be a positive finite number (got {delta})")))
        }
    }

    pub fn delta(self) -> f64 {
        self.0
    }

    /// `1 + δ`, the exponent of the survival function.
    pub fn exponent(self) -> f64 {
        1.0 + self.0
    }

    /// `1 / (1 + δ)`.
    pub fn s(self) -> f64 {
        1.0 / (1.0 + self.0)
    }

    /// `δ / (1 + δ)`.
    pub fn r(self) -> f64 {
        self.0 / (1.0 + self.0)
    }
}

impl TryFrom<f64> for TailExponent {
    type Error = crate::error::Error;

    fn try_from(delta: f64) -> Result<Self> {
        TailExponent::new(delta)
    }
}

impl From<TailExponent> for f64 {
    fn from(d: TailExponent) -> f64 {
        d.0
    }
}

impl fmt::Display for TailExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The `p`-th smallest of `m` draws (1-based, ascending).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderStatSpec {
    p: u64,
    m: u64,
}

impl OrderStatSpec {
    pub fn new(p: u64, m: u64) -> Result<Self> {
        if m >= 1 && (1..=m).contains(&p) {
            Ok(OrderStatSpec { p, m })
        } else {
            Err(domain(format!("order statistic needs 1 <= p <= m (got p={p}, m={m})")))
        }
    }

    /// The maximum of `m` draws.
    pub fn max(m: u64) -> Result<Self> {
        OrderStatSpec::new(m, m)
    }

    /// The `j`-th largest of `m` draws, `j = 1` being the maximum.
    pub fn from_top(j: u64, m: u64) -> Result<Self> {
        if j == 0 || j > m {
            return Err(domain(format!("rank {j} from the top is outside 1..={m}")));
        }
        OrderStatSpec::new(m - j + 1, m)
    }

    pub fn p(self) -> u64 {
        self.p
    }

    pub fn m(self) -> u64 {
        self.m
    }
}

/// Inverse-cdf draw: `(1 - u)^{-1/(1+δ)}`.
pub fn sample(delta: TailExponent, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("uniform variate must lie in (0, 1) (got {u})")));
    }
    Ok((-delta.s() * (-u).ln_1p()).exp())
}

/// Draw from a unit-rate exponential variate `e`: `exp(e / (1+δ))`.
///
/// Equivalent to [`sample`] with `u = 1 - exp(-e)`, but keeps full precision in
/// the far tail and lets callers rank candidates by `e` alone.
#[inline]
pub fn sample_from_exp(delta: TailExponent, e: f64) -> f64 {
    (e * delta.s()).exp()
}

fn check_support(x: f64) -> Result<()> {
    if x >= 1.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("x must be >= 1, the bottom of the support (got {x})")))
    }
}

/// Survival probability `x^{-(1+δ)}` and its complement, both at full precision.
fn tail_and_cdf(delta: TailExponent, x: f64) -> (f64, f64) {
    let ln_tail = -delta.exponent() * x.ln();
    (ln_tail.exp(), -ln_tail.exp_m1())
}

/// Density of the order statistic `Z_(p:m)` at `x`.
pub fn os_pdf(spec: OrderStatSpec, delta: TailExponent, x: f64) -> Result<f64> {
    check_support(x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let (p, m) = (spec.p, spec.m);
    let (tail, cdf) = tail_and_cdf(delta, x);
    if p > 1 && cdf == 0.0 {
        return Ok(0.0);
    }
    let lower = if p > 1 { (p - 1) as f64 * cdf.ln() } else { 0.0 };
    let ln_density = delta.exponent().ln() + ((m - p + 1) as f64).ln() + ln_choose(m, p - 1)
        + lower
        + (m - p + 1) as f64 * tail.ln()
        - x.ln();
    Ok(ln_density.exp())
}

/// Distribution function of `Z_(p:m)`: `I_F(p, m - p + 1)` with `F = 1 - x^{-(1+δ)}`.
pub fn os_cdf(spec: OrderStatSpec, delta: TailExponent, x: f64) -> Result<f64> {
    check_support(x)?;
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (tail, cdf) = tail_and_cdf(delta, x);
    beta_reg_split(spec.p as f64, (spec.m - spec.p + 1) as f64, cdf, tail)
}

/// Exact `E[Z_(m:m)] = Γ(m+1) Γ(1 - 1/(1+δ)) / Γ(m + δ/(1+δ))`.
pub fn expected_max(m: u64, delta: TailExponent) -> Result<f64> {
    if m < 1 {
        return Err(domain("expected maximum needs at least one draw"));
    }
    let r = delta.r();
    Ok((ln_gamma_ratio(m as f64, 1.0, r) + ln_gamma(r)).exp())
}

/// Exact `E[Z_(p:m)]`, stepping down from the maximum with
/// `E[Z_(m-j:m)] = (1 - 1/(j(1+δ))) E[Z_(m-j+1:m)]`.
pub fn expected_os(spec: OrderStatSpec, delta: TailExponent) -> f64 {
    let top = expected_max(spec.m, delta).expect("spec guarantees m >= 1");
    let steps = spec.m - spec.p;
    let inv = 1.0 / delta.exponent();
    (1..=steps).fold(top, |acc, j| acc * (1.0 - inv / j as f64))
}

/// Generalized binomial coefficient `C(a, j) = Γ(a+1) / (Γ(j+1) Γ(a-j+1))`.
pub fn gen_binomial(a: f64, j: u64) -> Result<f64> {
    let jf = j as f64;
    let (num, num_sign) = ln_gamma_signed(a + 1.0)
        .ok_or_else(|| domain(format!("C({a}, {j}): a + 1 is a pole of the gamma function")))?;
    let (den, den_sign) = ln_gamma_signed(a - jf + 1.0)
        .ok_or_else(|| domain(format!("C({a}, {j}): a - j + 1 is a pole of the gamma function")))?;
    Ok(num_sign * den_sign * (num - den - ln_gamma(jf + 1.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(delta: f64) -> TailExponent {
        TailExponent::new(delta).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TailExponent::new(0.0).is_err());
        assert!(TailExponent::new(f64::NAN).is_err());
        assert!(OrderStatSpec::new(0, 3).is_err());
        assert!(OrderStatSpec::new(4, 3).is_err());
        assert!(sample(d(1.0), 0.0).is_err());
        assert!(sample(d(1.0), 1.0).is_err());
        assert!(os_pdf(OrderStatSpec::max(2).unwrap(), d(1.0), 0.5).is_err());
        assert!(os_cdf(OrderStatSpec::max(2).unwrap(), d(1.0), 0.99).is_err());
        assert!(expected_max(0, d(1.0)).is_err());
    }

    #[test]
    fn sampler_fixed_points() {
        assert_relative_eq!(sample(d(1.0), 1e-300).unwrap(), 1.0);
        assert_relative_eq!(sample(d(1.0), 0.75).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(sample(d(2.0), 0.875).unwrap(), 2.0, max_relative = 1e-15);
        let e = -(0.25f64).ln();
        assert_relative_eq!(sample_from_exp(d(1.0), e), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn sampler_passes_kolmogorov_smirnov() {
        let delta = d(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break sample(delta, u).unwrap();
                }
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let spec = OrderStatSpec::max(1).unwrap();
        let mut ks: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = os_cdf(spec, delta, x).unwrap();
            ks = ks.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // Asymptotic 1% critical value.
        assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn pdf_examples() {
        let one = OrderStatSpec::max(1).unwrap();
        assert_relative_eq!(os_pdf(one, d(1.0), 2.0).unwrap(), 0.25, max_relative = 1e-14);
        let top = OrderStatSpec::max(10).unwrap();
        assert_eq!(os_pdf(top, d(1.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let spec = OrderStatSpec::new(2, 3).unwrap();
        let h = 1e-5;
        let fd = (os_cdf(spec, d(1.0), 2.0 + h).unwrap() - os_cdf(spec, d(1.0), 2.0 - h).unwrap()) / (2.0 * h);
        assert!((os_pdf(spec, d(1.0), 2.0).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn cdf_examples() {
        let one = OrderStatSpec::max(1).unwrap();
        assert_relative_eq!(os_cdf(one, d(1.0), 2.0).unwrap(), 0.75, max_relative = 1e-15);
        for (p, m) in [(1, 1), (2, 4), (7, 7), (1, 50)] {
            assert_eq!(os_cdf(OrderStatSpec::new(p, m).unwrap(), d(0.7), 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn cdf_matches_simulated_order_statistics() {
        let (delta, spec, x) = (d(2.0), OrderStatSpec::new(2, 4).unwrap(), 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 1_000_000;
        let mut hits = 0u64;
        let mut draws = [0.0f64; 4];
        for _ in 0..trials {
            for v in draws.iter_mut() {
                *v = sample_from_exp(delta, rng.sample(rand_distr::Exp1));
            }
            draws.sort_by(f64::total_cmp);
            if draws[1] <= x {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / trials as f64;
        let exact = os_cdf(spec, delta, x).unwrap();
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((p_hat - exact).abs() < 3.0 * se, "{p_hat} vs {exact} (se {se})");
    }

    /// `∫_1^∞ g(x) dx` after the change of variable `u = x^{-(1+δ)}`.
    fn integrate_support(delta: TailExponent, g: impl Fn(f64) -> f64) -> f64 {
        let s = delta.s();
        let f = |u: f64| {
            let x = u.powf(-s);
            g(x) * s * x / u
        };
        integrate(f, &[0.0, 1e-3, 0.1, 1.0], QuadOptions::default()).unwrap().value
    }

    #[test]
    fn pdf_integrates_to_one() {
        for delta in [0.3, 1.0, 4.0] {
            for (p, m) in [(1, 1), (1, 7), (3, 5), (49, 50), (50, 50), (25, 50)] {
                let spec = OrderStatSpec::new(p, m).unwrap();
                let mass = integrate_support(d(delta), |x| os_pdf(spec, d(delta), x).unwrap());
                assert!((mass - 1.0).abs() < 1e-8, "p={p} m={m} delta={delta}: {mass}");
            }
        }
    }

    #[test]
    fn expected_max_examples() {
        assert_relative_eq!(expected_max(1, d(1.0)).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(expected_max(1, d(2.0)).unwrap(), 1.5, max_relative = 1e-14);
        let big = expected_max(10_000, d(1.0)).unwrap();
        let asymptotic = 100.0 * std::f64::consts::PI.sqrt();
        assert!((big / asymptotic - 1.0).abs() < 1e-3);
    }

    #[test]
    fn expected_max_dominates_asymptotic_form() {
        for delta in [0.2, 1.0, 3.0] {
            let r = d(delta).r();
            let g = ln_gamma(r).exp();
            for m in 1..=1000u64 {
                let lower = g * (m as f64).powf(d(delta).s());
                assert!(expected_max(m, d(delta)).unwrap() >= lower, "m={m} delta={delta}");
            }
        }
    }

    #[test]
    fn expected_os_matches_quadrature() {
        let delta = d(1.0);
        let spec = OrderStatSpec::new(3, 5).unwrap();
        let q = integrate_support(delta, |x| x * os_pdf(spec, delta, x).unwrap());
        assert!((expected_os(spec, delta) - q).abs() < 1e-8);
        // Maximum has a u^{-1/2} singularity after the substitution.
        let top = OrderStatSpec::max(4).unwrap();
        let q = integrate_support(delta, |x| x * os_pdf(top, delta, x).unwrap());
        assert_relative_eq!(expected_os(top, delta), q, max_relative = 1e-8);
    }

    #[test]
    fn expected_second_largest() {
        for delta in [0.5, 2.0] {
            let m = 9;
            let second = expected_os(OrderStatSpec::new(m - 1, m).unwrap(), d(delta));
            let top = expected_max(m, d(delta)).unwrap();
            assert_relative_eq!(second, d(delta).r() * top, max_relative = 1e-15);
            assert_eq!(expected_os(OrderStatSpec::max(m).unwrap(), d(delta)), top);
        }
    }

    #[test]
    fn gen_binomial_examples() {
        assert_relative_eq!(gen_binomial(5.0, 2).unwrap(), 10.0, max_relative = 1e-13);
        assert_relative_eq!(gen_binomial(-0.5, 1).unwrap(), -0.5, max_relative = 1e-13);
        assert_relative_eq!(gen_binomial(0.5, 3).unwrap(), 0.0625, max_relative = 1e-13);
        assert!(gen_binomial(-1.0, 2).is_err());
        assert!(gen_binomial(2.0, 4).is_err());
    }

    #[test]
    fn negative_binomial_series() {
        for delta in [0.5, 1.0, 3.0] {
            let s = d(delta).s();
            for x in [0.1f64, 0.5, 0.9] {
                let target = (1.0 - x).powf(-d(delta).r());
                let mut sum = 0.0;
                let mut j = 0u64;
                loop {
                    let term = gen_binomial(j as f64 - s, j).unwrap() * x.powi(j as i32);
                    sum += term;
                    j += 1;
                    let next = gen_binomial(j as f64 - s, j).unwrap() * x.powi(j as i32);
                    if next / (1.0 - x) < 1e-13 {
                        break;
                    }
                }
                assert!((sum - target).abs() < 1e-10, "delta={delta} x={x}: {sum} vs {target}");
            }
        }
    }

    proptest! {
        #[test]
        fn cdf_is_a_nondecreasing_probability(delta in 0.05f64..5.0, m in 1u64..400, frac in 0.0f64..1.0, scale in 0.0f64..3.0) {
            let p = 1 + ((m - 1) as f64 * frac) as u64;
            let spec = OrderStatSpec::new(p, m).unwrap();
            let mut prev = 0.0;
            for i in 0..100 {
                let x = 10f64.powf(scale * i as f64 / 99.0);
                let f = os_cdf(spec, d(delta), x).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f >= prev - 1e-15, "x={} f={} prev={}", x, f, prev);
                prev = f;
            }
        }

        #[test]
        fn recurrence_ratio_is_exact(delta in 0.05f64..5.0, m in 2u64..200, j in 1u64..199) {
            prop_assume!(j < m);
            let upper = expected_os(OrderStatSpec::new(m - j + 1, m).unwrap(), d(delta));
            let lower = expected_os(OrderStatSpec::new(m - j, m).unwrap(), d(delta));
            let ratio = 1.0 - 1.0 / (j as f64 * (1.0 + delta));
            prop_assert!((lower / upper - ratio).abs() <= 4.0 * f64::EPSILON);
        }
    }
}
