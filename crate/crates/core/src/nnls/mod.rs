//! Non-negative least squares and its variants.
//!
//! * [`solve_nnls`]: `min ‖Y − Xβ‖₂²` subject to `β ≥ 0`.
//! * [`solve_l1_constrained_nnls`]: the same with `‖β‖₁ ≤ λ` added.
//! * [`solve_oracle_nnls`] and [`solve_restricted_ols`]: fits restricted to a known support.
//! * [`brute_force_nnls`]: exhaustive active-set enumeration, used as a test oracle.
//!
//! Convergence is always declared on KKT residuals, reported in [`KktReport`].

mod active_set;
mod projected;
pub mod projection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, least_squares_columns, norm_inf, CoefficientVector, DesignMatrix, ResponseVector};

/// Default KKT tolerance, relative to `‖XᵀY‖_∞`.
pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-9;
/// Largest `p` accepted by [`brute_force_nnls`].
pub const BRUTE_FORCE_MAX_P: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    ActiveSet,
    ProjectedGradient,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active-set" => Ok(Self::ActiveSet),
            "pg" | "projected-gradient" => Ok(Self::ProjectedGradient),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// KKT tolerance relative to `‖XᵀY‖_∞` (1 when that is zero).
    pub kkt_tolerance: f64,
    /// `None` picks the per-algorithm default: `10·p` for active-set,
    /// `max(20000, 500·p)` for projected gradient.
    pub max_iterations: Option<usize>,
    pub algorithm: Algorithm,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kkt_tolerance: DEFAULT_KKT_TOLERANCE, max_iterations: None, algorithm: Algorithm::ActiveSet }
    }
}

impl SolverOptions {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Self::default() }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.kkt_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidArgument("kkt_tolerance must be positive".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn iteration_limit(&self, p: usize) -> usize {
        self.max_iterations.unwrap_or(match self.algorithm {
            Algorithm::ActiveSet => 10 * p.max(1),
            Algorithm::ProjectedGradient => (500 * p).max(20_000),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(0, −min_k g̃_k)` with `g̃ = g + μ·1`.
    pub stationarity: f64,
    /// `max_k |β_k·g̃_k|`.
    pub complementarity: f64,
    /// `max(0, −min_k β_k)`, plus any excess `‖β‖₁ − λ` for the ℓ1-constrained problem.
    pub feasibility: f64,
    /// Multiplier `μ` of the ℓ1 constraint (0 for plain NNLS).
    pub multiplier: f64,
    /// Absolute tolerance the report was judged against.
    pub tolerance: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsSolution {
    pub beta: CoefficientVector,
    /// Indices with `β_k > 0`.
    pub active_set: Vec<usize>,
    /// `‖Y − Xβ‖₂²`.
    pub objective: f64,
    /// `Xᵀ(Xβ − Y)`.
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub kkt: KktReport,
}

impl NnlsSolution {
    pub fn values(&self) -> &[f64] {
        self.beta.values()
    }
}

fn check_dims(x: &DesignMatrix, y: &ResponseVector) -> Result<()> {
    y.check_against(x)
}

fn absolute_tolerance(x: &DesignMatrix, y: &[f64], rel: f64) -> f64 {
    let scale = norm_inf(&x.tr_mul_vec(y));
    rel * if scale > 0.0 { scale } else { 1.0 }
}

fn gradient_at(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = x.mul_vec(beta).iter().zip(y).map(|(f, yi)| f - yi).collect();
    (x.tr_mul_vec(&r), dot(&r, &r))
}

fn kkt_from_gradient(beta: &[f64], g: &[f64], tol: f64, l1_bound: Option<f64>) -> KktReport {
    let l1: f64 = beta.iter().sum();
    // Multiplier of Σβ ≤ λ: zero unless the constraint is (numerically) active.
    let multiplier = match l1_bound {
        Some(lam) if l1 >= lam * (1.0 - 1e-9) => (-g.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0),
        _ => 0.0,
    };
    let shifted: Vec<f64> = g.iter().map(|v| v + multiplier).collect();
    let stationarity = (-shifted.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0);
    let complementarity = beta.iter().zip(&shifted).map(|(b, s)| (b * s).abs()).fold(0.0, f64::max);
    let mut feasibility = (-beta.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0);
    if let Some(lam) = l1_bound {
        feasibility = feasibility.max(l1 - lam);
    }
    let g_inf = norm_inf(&shifted);
    let satisfied = stationarity <= tol && feasibility <= tol && complementarity <= tol * (1.0 + g_inf);
    KktReport { stationarity, complementarity, feasibility, multiplier, tolerance: tol, satisfied }
}

/// KKT residuals of `β` for the NNLS problem, judged at absolute tolerance `tol`.
pub fn verify_kkt(x: &DesignMatrix, y: &ResponseVector, beta: &[f64], tol: f64) -> Result<KktReport> {
    check_dims(x, y)?;
    if beta.len() != x.p() {
        return Err(Error::Dimension(format!("beta has length {}, expected {}", beta.len(), x.p())));
    }
    let (g, _) = gradient_at(x, y.values(), beta);
    Ok(kkt_from_gradient(beta, &g, tol, None))
}

fn finalize(x: &DesignMatrix, y: &[f64], beta: Vec<f64>, iterations: usize, tol: f64) -> NnlsSolution {
    finalize_with_bound(x, y, beta, iterations, tol, None)
}

fn finalize_with_bound(
    x: &DesignMatrix,
    y: &[f64],
    beta: Vec<f64>,
    iterations: usize,
    tol: f64,
    l1_bound: Option<f64>,
) -> NnlsSolution {
    let (gradient, objective) = gradient_at(x, y, &beta);
    let kkt = kkt_from_gradient(&beta, &gradient, tol, l1_bound);
    let active_set = beta.iter().enumerate().filter(|(_, b)| **b > 0.0).map(|(i, _)| i).collect();
    NnlsSolution {
        beta: CoefficientVector::new(beta),
        active_set,
        objective,
        gradient,
        iterations,
        converged: kkt.satisfied,
        rank_deficient: false,
        kkt,
    }
}

/// Non-negative least squares.
pub fn solve_nnls(x: &DesignMatrix, y: &ResponseVector, opts: &SolverOptions) -> Result<NnlsSolution> {
    check_dims(x, y)?;
    opts.validate()?;
    let tol = absolute_tolerance(x, y.values(), opts.kkt_tolerance);
    let limit = opts.iteration_limit(x.p());
    Ok(match opts.algorithm {
        Algorithm::ActiveSet => active_set::solve(x, y.values(), tol, limit),
        Algorithm::ProjectedGradient => {
            let out = projected::minimize(
                x,
                y.values(),
                vec![0.0; x.p()],
                limit,
                |v| {
                    let mut w = v.to_vec();
                    projection::project_nonnegative(&mut w);
                    w
                },
                |b, grad| {
                    let g: Vec<f64> = grad.iter().map(|v| 0.5 * v).collect();
                    kkt_from_gradient(b, &g, tol, None).satisfied
                },
            );
            let mut sol = finalize(x, y.values(), out.beta, out.iterations, tol);
            sol.converged &= out.stopped_early;
            sol
        }
    })
}

/// NNLS with the extra constraint `‖β‖₁ ≤ λ`.
///
/// The unconstrained NNLS solution is computed first; when it already lies in
/// the ℓ1 ball it is optimal. Otherwise projected gradient runs over
/// `{β ≥ 0, Σβ ≤ λ}` from the projection of that solution.
pub fn solve_l1_constrained_nnls(
    x: &DesignMatrix,
    y: &ResponseVector,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<NnlsSolution> {
    check_dims(x, y)?;
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    let tol = absolute_tolerance(x, y.values(), opts.kkt_tolerance);
    if lambda == 0.0 {
        return Ok(finalize_with_bound(x, y.values(), vec![0.0; x.p()], 0, tol, Some(0.0)));
    }
    let unconstrained = solve_nnls(x, y, opts)?;
    if unconstrained.converged && lambda_max(&unconstrained) <= lambda {
        let mut sol = unconstrained;
        sol.kkt = kkt_from_gradient(sol.beta.values(), &sol.gradient, tol, Some(lambda));
        return Ok(sol);
    }
    let start = projection::project_capped_simplex(unconstrained.beta.values(), lambda);
    let mut sol = capped_pg(x, y.values(), lambda, start, tol, opts);
    sol.iterations += unconstrained.iterations;
    Ok(sol)
}

fn capped_pg(x: &DesignMatrix, y: &[f64], lambda: f64, start: Vec<f64>, tol: f64, opts: &SolverOptions) -> NnlsSolution {
    let limit = SolverOptions { algorithm: Algorithm::ProjectedGradient, ..*opts }.iteration_limit(x.p());
    let out = projected::minimize(
        x,
        y,
        start,
        limit,
        |v| projection::project_capped_simplex(v, lambda),
        |b, grad| {
            let g: Vec<f64> = grad.iter().map(|v| 0.5 * v).collect();
            kkt_from_gradient(b, &g, tol, Some(lambda)).satisfied
        },
    );
    let mut sol = finalize_with_bound(x, y, out.beta, out.iterations, tol, Some(lambda));
    sol.converged &= out.stopped_early;
    sol
}

/// Solves the ℓ1-constrained problem along `λ = frac·λ_max` for each entry of
/// `fracs` (each in `[0, 1]`), reusing the NNLS solution and warm-starting
/// from the previous grid point in order of decreasing `λ`.
pub fn solve_l1_path(
    x: &DesignMatrix,
    y: &ResponseVector,
    fracs: &[f64],
    opts: &SolverOptions,
) -> Result<(NnlsSolution, Vec<NnlsSolution>)> {
    check_dims(x, y)?;
    opts.validate()?;
    if let Some(bad) = fracs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("path fractions must lie in [0, 1], got {bad}")));
    }
    let tol = absolute_tolerance(x, y.values(), opts.kkt_tolerance);
    let nnls = solve_nnls(x, y, opts)?;
    let lam_max = lambda_max(&nnls);
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| fracs[b].total_cmp(&fracs[a]).then(a.cmp(&b)));

    let mut out: Vec<Option<NnlsSolution>> = vec![None; fracs.len()];
    let mut warm = nnls.beta.values().to_vec();
    for i in order {
        let lambda = fracs[i] * lam_max;
        let sol = if lambda == 0.0 {
            finalize_with_bound(x, y.values(), vec![0.0; x.p()], 0, tol, Some(0.0))
        } else if fracs[i] == 1.0 {
            let mut s = nnls.clone();
            s.kkt = kkt_from_gradient(s.beta.values(), &s.gradient, tol, Some(lambda));
            s
        } else {
            let start = projection::project_capped_simplex(&warm, lambda);
            capped_pg(x, y.values(), lambda, start, tol, opts)
        };
        warm = sol.beta.values().to_vec();
        out[i] = Some(sol);
    }
    Ok((nnls, out.into_iter().map(|s| s.expect("every fraction solved")).collect()))
}

pub fn lambda_max(sol: &NnlsSolution) -> f64 {
    sol.beta.values().iter().sum()
}

fn validate_support(p: usize, support: &[usize]) -> Result<Vec<usize>> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("support must be nonempty".into()));
    }
    let mut s = support.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != support.len() {
        return Err(Error::InvalidArgument("support contains duplicate indices".into()));
    }
    if let Some(&bad) = s.iter().find(|&&k| k >= p) {
        return Err(Error::InvalidArgument(format!("support index {bad} out of range for p = {p}")));
    }
    Ok(s)
}

/// Unconstrained least squares on the columns in `support`, zero elsewhere.
pub fn solve_restricted_ols(x: &DesignMatrix, y: &ResponseVector, support: &[usize]) -> Result<CoefficientVector> {
    check_dims(x, y)?;
    let s = validate_support(x.p(), support)?;
    let cols: Vec<Vec<f64>> = s.iter().map(|&k| x.column(k)).collect();
    let ls = least_squares_columns(&cols, y.values());
    if ls.rank < s.len() {
        return Err(Error::RankDeficient(format!(
            "columns {s:?} have numerical rank {} < {}",
            ls.rank,
            s.len()
        )));
    }
    let mut beta = vec![0.0; x.p()];
    for (&k, &c) in s.iter().zip(&ls.coef) {
        beta[k] = c;
    }
    Ok(CoefficientVector::new(beta))
}

/// NNLS with `β_k ≡ 0` off `support`.
///
/// KKT residuals are reported for the restricted problem, so coordinates off
/// the support do not count against convergence.
pub fn solve_oracle_nnls(
    x: &DesignMatrix,
    y: &ResponseVector,
    support: &[usize],
    opts: &SolverOptions,
) -> Result<NnlsSolution> {
    check_dims(x, y)?;
    let s = validate_support(x.p(), support)?;
    let sub = x.select_columns(&s)?;
    let inner = solve_nnls(&sub, y, opts)?;
    let mut beta = vec![0.0; x.p()];
    for (&k, &b) in s.iter().zip(inner.beta.values()) {
        beta[k] = b;
    }
    let (gradient, objective) = gradient_at(x, y.values(), &beta);
    Ok(NnlsSolution {
        active_set: s.iter().zip(inner.beta.values()).filter(|(_, b)| **b > 0.0).map(|(&k, _)| k).collect(),
        beta: CoefficientVector::new(beta),
        objective,
        gradient,
        iterations: inner.iterations,
        converged: inner.converged,
        rank_deficient: inner.rank_deficient,
        kkt: inner.kkt,
    })
}

/// Exhaustive NNLS: every subset `A` gets an unconstrained fit through the
/// normal equations; candidates that are non-negative on `A` with
/// non-negative gradient off `A` compete on objective.
pub fn brute_force_nnls(x: &DesignMatrix, y: &ResponseVector) -> Result<CoefficientVector> {
    check_dims(x, y)?;
    let p = x.p();
    if p > BRUTE_FORCE_MAX_P {
        return Err(Error::TooLarge(format!("brute force needs p <= {BRUTE_FORCE_MAX_P}, got {p}")));
    }
    let yv = y.values();
    let gram = x.gram();
    let xty = x.tr_mul_vec(yv);
    let tol = 1e-10 * norm_inf(&xty).max(1.0);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut fallback: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << p) {
        let set: Vec<usize> = (0..p).filter(|k| mask & (1 << k) != 0).collect();
        let mut beta = vec![0.0; p];
        if !set.is_empty() {
            let k = set.len();
            let g = DMatrix::from_fn(k, k, |i, j| gram[set[i] * p + set[j]]);
            let rhs = DVector::from_iterator(k, set.iter().map(|&i| xty[i]));
            let Some(sol) = g.lu().solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            for (&i, &v) in set.iter().zip(sol.iter()) {
                beta[i] = v;
            }
        }
        if set.iter().any(|&i| beta[i] < 0.0) {
            continue;
        }
        let (grad, obj) = gradient_at(x, yv, &beta);
        let dual_ok = (0..p).filter(|i| mask & (1 << i) == 0).all(|i| grad[i] >= -tol);
        let slot = if dual_ok { &mut best } else { &mut fallback };
        if slot.as_ref().is_none_or(|(o, _)| obj < *o) {
            *slot = Some((obj, beta));
        }
    }
    let (_, beta) = best.or(fallback).expect("the empty set is always a non-negative candidate");
    Ok(CoefficientVector::new(beta))
}
