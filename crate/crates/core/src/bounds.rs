//! Closed-form error bounds and thresholds. Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CoefficientVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: usize,
    pub n: usize,
    pub s: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub eta: f64,
    /// Positive eigenvalue `φ²_pos`.
    pub nu: f64,
    /// Compatibility constant at `L = 4/ν`.
    pub phi: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 || self.s == 0 {
            return Err(Error::InvalidArgument("p, n and s must be positive".into()));
        }
        if self.s > self.p {
            return Err(Error::InvalidArgument(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.phi > 0.0) {
            return Err(Error::InvalidArgument(format!("phi must be positive, got {}", self.phi)));
        }
        check_eta(self.eta)
    }

    fn k(&self) -> Result<f64> {
        k_p_eta(self.p, self.eta)
    }

    fn root_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    if eta >= 1.0 / 3.0 {
        log::warn!("eta = {eta} is outside (0, 1/3); the probability guarantee does not apply");
    }
    Ok(())
}

/// `K²_{p,η} = 2·ln(√2·p / (√π·η))`, clamped at zero when the log is negative.
pub fn k_sq_p_eta(p: usize, eta: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    check_eta(eta)?;
    let arg = std::f64::consts::SQRT_2 * p as f64 / (std::f64::consts::PI.sqrt() * eta);
    Ok((2.0 * arg.ln()).max(0.0))
}

pub fn k_p_eta(p: usize, eta: f64) -> Result<f64> {
    k_sq_p_eta(p, eta).map(f64::sqrt)
}

/// `K·(5/ν + 4/√φ)·s·σ/√n`.
pub fn theorem1_l1_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    Ok(inp.k()? * (5.0 / inp.nu + 4.0 / inp.phi.sqrt()) * inp.s as f64 * inp.sigma / inp.root_n())
}

/// `K·σ/√(n·φ)`.
pub fn theorem1_betamin(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    Ok(inp.k()? * inp.sigma / (inp.n as f64 * inp.phi).sqrt())
}

/// Twice the ℓ1 bound: above this every true coefficient outranks every false one.
pub fn corollary1_betamin(inp: &BoundInputs) -> Result<f64> {
    Ok(2.0 * theorem1_l1_bound(inp)?)
}

/// `2·K²·σ²·(5/ν + 2/√φ)·s` bounding `‖X(β̂^oracle − β̂)‖₂²`.
pub fn theorem2_pred_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let k_sq = k_sq_p_eta(inp.p, inp.eta)?;
    Ok(2.0 * k_sq * inp.sigma * inp.sigma * (5.0 / inp.nu + 2.0 / inp.phi.sqrt()) * inp.s as f64)
}

/// `C·σ/√(n·φ)`: sup-norm deviation of the restricted OLS estimate.
pub fn lemma2_ols_threshold(c: f64, sigma: f64, n: usize, phi: f64) -> Result<f64> {
    if !(c >= 0.0) || !(sigma >= 0.0) || n == 0 || !(phi > 0.0) {
        return Err(Error::InvalidArgument("lemma2 threshold needs C, sigma >= 0, n, phi > 0".into()));
    }
    Ok(c * sigma / (n as f64 * phi).sqrt())
}

/// `C·σ·√n`: bound on `max_{k∈N} (Y − Xβ̂^oracle)ᵀX_k`.
pub fn lemma3_gradient_threshold(c: f64, sigma: f64, n: usize) -> Result<f64> {
    if !(c >= 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("lemma3 threshold needs C, sigma >= 0".into()));
    }
    Ok(c * sigma * (n as f64).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 − Φ(x)`, accurate in the far tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Bonferroni lower bound `1 − count·(1 − Φ(C))` on the probability that
/// `count` standard Gaussian events all stay below `C`.
pub fn bonferroni_probability(c: f64, count: usize) -> f64 {
    1.0 - count as f64 * normal_sf(c)
}

/// Indices of the `s` largest `|β̂_k|`, lower index first on ties, returned sorted.
pub fn top_s_support(beta_hat: &CoefficientVector, s: usize) -> Vec<usize> {
    let b = beta_hat.values();
    let mut idx: Vec<usize> = (0..b.len()).collect();
    idx.sort_by(|&i, &j| b[j].abs().total_cmp(&b[i].abs()).then(i.cmp(&j)));
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

/// Every bound for one set of inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K_sq")]
    pub k_sq: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub theorem1_l1_bound: f64,
    pub theorem1_betamin: f64,
    pub corollary1_betamin: f64,
    pub theorem2_pred_bound: f64,
    pub lemma3_gradient_threshold: f64,
    /// `1 − (p + s)(1 − Φ(K))`.
    pub success_probability_lower_bound: f64,
    pub eta_in_range: bool,
}

pub fn bounds_report(inp: &BoundInputs) -> Result<BoundsReport> {
    inp.validate()?;
    let k = inp.k()?;
    Ok(BoundsReport {
        inputs: *inp,
        k,
        k_sq: k_sq_p_eta(inp.p, inp.eta)?,
        l: 4.0 / inp.nu,
        theorem1_l1_bound: theorem1_l1_bound(inp)?,
        theorem1_betamin: theorem1_betamin(inp)?,
        corollary1_betamin: corollary1_betamin(inp)?,
        theorem2_pred_bound: theorem2_pred_bound(inp)?,
        lemma3_gradient_threshold: lemma3_gradient_threshold(k, inp.sigma, inp.n)?,
        success_probability_lower_bound: bonferroni_probability(k, inp.p + inp.s),
        eta_in_range: inp.eta < 1.0 / 3.0,
    })
}
