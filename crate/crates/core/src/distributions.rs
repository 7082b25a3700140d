//! Parameter types, densities, expectations and samplers.
//!
//! Gamma distributions are parameterized by shape and **rate** throughout.
//! The Bessel K-form density `BKF(p, c)` is the law of `w` in
//! `tau ~ Gamma(shape p, scale c)`, `w | tau ~ Normal(0, tau)`; its variance
//! is `p * c` and its excess kurtosis `3 / p`.

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::special::{bessel_k_ratio, ln_bessel_k};

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2: f64 = std::f64::consts::LN_2;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BkfParams {
    pub p: f64,
    pub c: f64,
}

impl BkfParams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        positive("BKF shape p", p)?;
        positive("BKF scale c", c)?;
        Ok(BkfParams { p, c })
    }

    pub fn variance(&self) -> f64 {
        self.p * self.c
    }

    pub fn excess_kurtosis(&self) -> f64 {
        3.0 / self.p
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        positive("Gamma shape", shape)?;
        positive("Gamma rate", rate)?;
        Ok(GammaParams { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Validated at construction, so the distribution always builds.
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaParams {
    pub e: f64,
    pub f: f64,
}

impl BetaParams {
    pub fn new(e: f64, f: f64) -> Result<Self> {
        positive("Beta e", e)?;
        positive("Beta f", f)?;
        Ok(BetaParams { e, f })
    }

    pub fn mean(&self) -> f64 {
        self.e / (self.e + self.f)
    }

    /// `(E[ln pi], E[ln(1 - pi)])`.
    pub fn expected_logs(&self) -> (f64, f64) {
        let total = statrs::function::gamma::digamma(self.e + self.f);
        (
            statrs::function::gamma::digamma(self.e) - total,
            statrs::function::gamma::digamma(self.f) - total,
        )
    }

    pub fn ln_beta(&self) -> f64 {
        ln_beta(self.e, self.f)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Beta::new(self.e, self.f)
            .expect("validated beta parameters")
            .sample(rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GigParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl GigParams {
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        positive("GIG a", a)?;
        if !(b >= 0.0) || !b.is_finite() {
            return Err(domain(format!("GIG b must be finite and >= 0, got {b}")));
        }
        if !p.is_finite() {
            return Err(domain(format!("GIG order must be finite, got {p}")));
        }
        if b == 0.0 && p <= 0.0 {
            return Err(domain(format!(
                "GIG with b = 0 needs p > 0 (Gamma limit), got p = {p}"
            )));
        }
        Ok(GigParams { a, b, p })
    }

    /// Log density `p(l) ∝ l^(p-1) exp(-(a l + b / l) / 2)`.
    pub fn ln_pdf(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let kernel = (self.p - 1.0) * lambda.ln() - 0.5 * (self.a * lambda + self.b / lambda);
        if self.b == 0.0 {
            let rate = 0.5 * self.a;
            return Ok(kernel + self.p * rate.ln() - ln_gamma(self.p));
        }
        let omega = (self.a * self.b).sqrt();
        let ln_norm = 0.5 * self.p * (self.a / self.b).ln() - LN_2 - ln_bessel_k(self.p, omega)?;
        Ok(kernel + ln_norm)
    }
}

/// `(E[lambda], E[1/lambda])` of a GIG law.
///
/// With `b = 0` the law is `Gamma(p, rate a/2)`; `E[1/lambda]` is then finite
/// only for `p > 1`, otherwise a domain error is returned.
pub fn gig_expectations(params: &GigParams) -> Result<(f64, f64)> {
    let GigParams { a, b, p } = *params;
    if b == 0.0 {
        if p <= 0.0 {
            return Err(domain(format!("GIG Gamma limit needs p > 0, got {p}")));
        }
        if p <= 1.0 {
            return Err(domain(format!(
                "GIG Gamma limit with p = {p} <= 1 has infinite E[1/lambda]"
            )));
        }
        return Ok((2.0 * p / a, a / (2.0 * (p - 1.0))));
    }
    let omega = (a * b).sqrt();
    let mean = (b / a).sqrt() * bessel_k_ratio(p, omega)?;
    let inverse_mean = (a / b).sqrt() / bessel_k_ratio(p - 1.0, omega)?;
    Ok((mean, inverse_mean))
}

/// Marginal law of `w` under `lambda ~ Gamma(shape a, rate b)`, `w ~ Normal(0, lambda)`.
pub fn bkf_from_gamma(g: &GammaParams) -> BkfParams {
    BkfParams {
        p: g.shape,
        c: 1.0 / g.rate,
    }
}

/// `ln f(x)`; `+inf` at `x = 0` when `p <= 1/2` (the density diverges there).
pub fn bkf_ln_pdf(x: f64, params: &BkfParams) -> f64 {
    let BkfParams { p, c } = *params;
    let nu = p - 0.5;
    let prefix = (0.5 - p) * LN_2 - 0.5 * LN_PI - ln_gamma(p) - (0.5 * p + 0.25) * (0.5 * c).ln();
    let ax = x.abs();
    if ax == 0.0 {
        if nu <= 0.0 {
            return f64::INFINITY;
        }
        // |x|^nu K_nu(s|x|) -> Gamma(nu) / 2 * (s/2)^-nu with s = sqrt(2/c)
        return prefix + ln_gamma(nu) - LN_2 + 0.5 * nu * (2.0 * c).ln();
    }
    let z = (2.0 / c).sqrt() * ax;
    match ln_bessel_k(nu, z) {
        Ok(lk) => prefix + nu * ax.ln() + lk,
        Err(_) => f64::NEG_INFINITY,
    }
}

pub fn bkf_pdf(x: f64, params: &BkfParams) -> f64 {
    bkf_ln_pdf(x, params).exp()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF via the Gaussian scale mixture, integrated over `s = ln tau` with the
/// trapezoid rule (the integrand is analytic and decays doubly exponentially
/// on the right, exponentially on the left).
pub fn bkf_cdf(x: f64, params: &BkfParams) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let BkfParams { p, c } = *params;
    let h = 0.05;
    let lo = c.ln() - 40.0 / p;
    let hi = c.ln() + 750f64.ln();
    let steps = ((hi - lo) / h).ceil() as usize;
    let ln_norm = -ln_gamma(p) - p * c.ln();
    let mut acc = 0.0;
    for i in 0..=steps {
        let s = lo + i as f64 * h;
        let weight = (ln_norm + p * s - s.exp() / c).exp();
        let v = std_normal_cdf(x * (-0.5 * s).exp()) * weight;
        acc += if i == 0 || i == steps { 0.5 * v } else { v };
    }
    (acc * h).clamp(0.0, 1.0)
}

/// One draw of `w` from the Gamma-Normal hierarchy.
pub fn sample_hierarchy<R: Rng + ?Sized>(g: &GammaParams, rng: &mut R) -> f64 {
    let tau = g.sample(rng);
    sample_normal(0.0, tau, rng)
}

/// Normal draw parameterized by variance.
pub fn sample_normal<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    let sd = variance.max(0.0).sqrt();
    mean + sd * NormalDist::new(0.0, 1.0).expect("unit normal").sample(rng)
}

pub fn sample_bernoulli<R: Rng + ?Sized>(pi: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(domain(format!("Bernoulli probability must be in [0,1], got {pi}")));
    }
    Ok(rng.random_bool(pi))
}

/// Tagged union over the supported sampling laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Law {
    Gamma(GammaParams),
    Beta(BetaParams),
    Bernoulli(f64),
    Normal { mean: f64, variance: f64 },
}

/// Draws one value; Bernoulli outcomes are returned as 0.0 / 1.0.
pub fn sample<R: Rng + ?Sized>(law: &Law, rng: &mut R) -> Result<f64> {
    match *law {
        Law::Gamma(g) => {
            GammaParams::new(g.shape, g.rate)?;
            Ok(g.sample(rng))
        }
        Law::Beta(b) => {
            BetaParams::new(b.e, b.f)?;
            Ok(b.sample(rng))
        }
        Law::Bernoulli(pi) => Ok(if sample_bernoulli(pi, rng)? { 1.0 } else { 0.0 }),
        Law::Normal { mean, variance } => {
            if !(variance >= 0.0) || !variance.is_finite() || !mean.is_finite() {
                return Err(domain(format!(
                    "Normal needs finite mean and variance >= 0, got ({mean}, {variance})"
                )));
            }
            Ok(sample_normal(mean, variance, rng))
        }
    }
}
