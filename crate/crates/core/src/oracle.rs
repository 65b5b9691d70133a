//! Exact finite-n expectations behind the decision ratio, by adaptive quadrature.
//!
//! With `Y = Y_(n-k+1:n)`, `X = X_(a:a)` and `a = round(αn)`, every quantity is
//! an integral over the tail probability `u = y^{-(1+δ)}`. In that variable `Y`
//! corresponds to a `Beta(k, n-k+1)` draw and the cdf of `X` at `βy` is
//! `(1 - bu)^a` with `b = β^{-(1+δ)}`. A second substitution `u = v^{(1+δ)/δ}`
//! cancels the `u^{-1/(1+δ)}` singularity of the first moment at zero.

use crate::error::{domain, Error, Result};
use crate::powerlaw::{expected_max, expected_os, OrderStatSpec};
use crate::quad::{integrate, Integral, QuadOptions};
use crate::rooney::ModelParams;
use crate::special::{binomial_cdf_le, ln_beta, shifted_binomial};
use serde::{Deserialize, Serialize};

/// An expectation together with the quadrature error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoment {
    pub value: f64,
    pub estimated_abs_error: f64,
}

impl From<Integral> for ConditionalMoment {
    fn from(i: Integral) -> Self {
        ConditionalMoment {
            value: i.value,
            estimated_abs_error: i.abs_error,
        }
    }
}

fn options() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-300,
        max_intervals: 4000,
    }
}

struct Setup {
    n: u64,
    k: u64,
    a: u64,
    /// `β^{-(1+δ)}`
    b: f64,
    s: f64,
    /// `(1+δ)/δ`
    q: f64,
}

impl Setup {
    fn new(p: &ModelParams) -> Result<Self> {
        if p.k > p.n {
            return Err(domain(format!("need n >= k (got n={}, k={})", p.n, p.k)));
        }
        Ok(Setup {
            n: p.n,
            k: p.k,
            a: p.x_pool(),
            b: p.beta.discount(p.delta),
            s: p.delta.s(),
            q: 1.0 / p.delta.r(),
        })
    }

    /// Partition of `v ∈ [0, 1]` that brackets the bulk of `Beta(k, n-k+1)` and
    /// the knee of `(1 - bu)^a`.
    fn partition(&self) -> Vec<f64> {
        let centre = self.k as f64 / self.n as f64;
        let mut us: Vec<f64> = [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
            .iter()
            .map(|f| f * centre)
            .collect();
        if self.b > 0.0 {
            let knee = 1.0 / (self.a as f64 * self.b);
            us.extend([0.1, 1.0, 10.0].iter().map(|f| f * knee));
        }
        let r = 1.0 / self.q;
        let mut vs: Vec<f64> = us
            .into_iter()
            .filter(|&u| u > 0.0 && u < 1.0)
            .map(|u| u.powf(r))
            .filter(|&v| v > 0.0 && v < 1.0)
            .collect();
        vs.push(0.0);
        vs.push(1.0);
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        vs
    }

    /// `∫_0^1 [u^{-s}] Beta(u; k, n-k+1) (1 - bu)^a du`, the bracketed factor
    /// present when `moment` is set.
    fn y_integral(&self, moment: bool) -> Result<Integral> {
        let (n, k, a, b, s, q) = (self.n, self.k, self.a as f64, self.b, self.s, self.q);
        let ln_norm = -ln_beta(k as f64, (n - k + 1) as f64) + q.ln();
        let u_power = (k as f64 - 1.0) - if moment { s } else { 0.0 };
        let f = move |v: f64| {
            let ln_v = v.ln();
            let ln_u = q * ln_v;
            let u = ln_u.exp();
            let one_minus_u = -ln_u.exp_m1();
            if one_minus_u <= 0.0 && n > k {
                return 0.0;
            }
            let upper = if n > k {
                (n - k) as f64 * one_minus_u.ln()
            } else {
                0.0
            };
            let x_cdf = if b > 0.0 { a * (-b * u).ln_1p() } else { 0.0 };
            (ln_norm + u_power * ln_u + upper + x_cdf + (q - 1.0) * ln_v).exp()
        };
        integrate(f, &self.partition(), options())
    }

    /// `E[X · 1{X ≥ βY}] = b^{1-s} ∫_0^1 t^{-s} a (1 - bt)^{a-1} Pr[Bin(n, t) ≤ k-1] dt`.
    fn x_complement(&self) -> Result<Integral> {
        if self.b == 0.0 {
            return Ok(Integral {
                value: 0.0,
                abs_error: 0.0,
                intervals: 0,
            });
        }
        let (n, k, a, b, s, q) = (self.n, self.k, self.a, self.b, self.s, self.q);
        let scale = b.powf(1.0 - s) * a as f64 * q;
        // After t = v^q the factor t^{-s} dt becomes q dv exactly.
        let f = move |v: f64| {
            let ln_t = q * v.ln();
            let t = ln_t.exp();
            let one_minus_t = -ln_t.exp_m1();
            let x_part = if a > 1 {
                ((a - 1) as f64 * (-b * t).ln_1p()).exp()
            } else {
                1.0
            };
            x_part * binomial_cdf_le(n, k - 1, t, one_minus_t)
        };
        let i = integrate(f, &self.partition(), options())?;
        Ok(Integral {
            value: scale * i.value,
            abs_error: scale * i.abs_error,
            intervals: i.intervals,
        })
    }
}

/// `E[Y_(n-k+1:n) · 1{X_(a:a) < β Y_(n-k+1:n)}]`.
pub fn exact_expect_y_indicator(params: &ModelParams) -> Result<ConditionalMoment> {
    Ok(Setup::new(params)?.y_integral(true)?.into())
}

/// `E[X_(a:a) · 1{X_(a:a) ≥ β Y_(n-k+1:n)}]`, the part of `E[X_(a:a)]` removed
/// by the indicator.
pub fn exact_expect_x_complement(params: &ModelParams) -> Result<ConditionalMoment> {
    Ok(Setup::new(params)?.x_complement()?.into())
}

/// `E[X_(a:a) · 1{X_(a:a) < β Y_(n-k+1:n)}]`, as `E[X_(a:a)]` minus the complement.
pub fn exact_expect_x_indicator(params: &ModelParams) -> Result<ConditionalMoment> {
    let setup = Setup::new(params)?;
    let total = expected_max(setup.a, params.delta)?;
    let comp = setup.x_complement()?;
    Ok(ConditionalMoment {
        value: total - comp.value,
        estimated_abs_error: comp.abs_error + 4.0 * f64::EPSILON * total,
    })
}

/// Exact finite-n decision ratio `r_k`: X-indicator moment over Y-indicator moment.
pub fn exact_rk(params: &ModelParams) -> Result<f64> {
    let y = exact_expect_y_indicator(params)?;
    if y.value.abs() < 1e-300 {
        return Err(Error::Numeric(format!(
            "Y-indicator moment {:e} is too small to divide by",
            y.value
        )));
    }
    Ok(exact_expect_x_indicator(params)?.value / y.value)
}

/// `Pr[X_(a:a) < β Y_(n-k+1:n)]`: the biased top `k` holds no X-candidate.
pub fn exact_prob_binds(params: &ModelParams) -> Result<f64> {
    let setup = Setup::new(params)?;
    if setup.b == 0.0 {
        return Ok(1.0);
    }
    Ok(setup.y_integral(false)?.value.clamp(0.0, 1.0))
}

/// Large-n approximation of [`exact_expect_y_indicator`]:
/// `(1+c)^{-(k - 1/(1+δ))} E[Y_(n-k+1:n)]`.
pub fn asymptotic_y_indicator(params: &ModelParams) -> Result<f64> {
    let spec = OrderStatSpec::from_top(params.k, params.n)?;
    let s = params.delta.s();
    let shrink = (-(params.k as f64 - s) * params.c().ln_1p()).exp();
    Ok(shrink * expected_os(spec, params.delta))
}

/// Large-n approximation of [`exact_expect_x_indicator`]:
/// `E[X_(a:a)] [1 - (1 + 1/c)^{-δ/(1+δ)} Σ_{j<k} C(j - 1/(1+δ), j) (1+c)^{-j}]`.
pub fn asymptotic_x_indicator(params: &ModelParams) -> Result<f64> {
    let total = expected_max(params.x_pool(), params.delta)?;
    let c = params.c();
    if c == 0.0 {
        return Ok(total);
    }
    let (s, r) = (params.delta.s(), params.delta.r());
    let partial: f64 = (0..params.k)
        .map(|j| shifted_binomial(j, s) * (1.0 + c).powi(-(j as i32)))
        .sum();
    // (1 + 1/c)^{-r} = (c / (1 + c))^r
    let lead = (r * (c.ln() - c.ln_1p())).exp();
    Ok(total * (1.0 - lead * partial))
}
