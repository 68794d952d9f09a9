//! Design-condition checkers.
//!
//! Both restricted ℓ1-eigenvalues reduce to minimizing a quadratic form over a
//! simplex. For a PSD matrix `A = RᵀR` and generator vectors `g_1..g_m` of unit
//! ℓ1 mass, `min_{μ ∈ simplex} ‖R G μ‖²` is solved exactly by one NNLS:
//!
//! ```text
//! min_{μ ≥ 0} ‖[R G; 1ᵀ] μ − [0; 1]‖²
//! ```
//!
//! Along a ray `μ = t·b` with `b` on the simplex the objective is minimized at
//! `t = 1/(1 + q)` with value `q/(1 + q)`, `q = ‖RGb‖²`, which is increasing in
//! `q`. The NNLS minimizer therefore points at the simplex minimizer.
//!
//! Indefinite inputs fall back to a vertex/edge scan plus multistart projected
//! gradient and are reported as uncertified.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CoefficientVector, CovarianceMatrix, DesignMatrix, Factor, ResponseVector};
use crate::nnls::{projection::project_simplex, solve_nnls, SolverOptions};

/// Largest `p` for sign-pattern enumeration (2^(p−1) QPs).
pub const EXACT_MAX_P: usize = 16;

const LOCAL_SEARCH_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveEigenvalueResult {
    /// `φ²_pos(Σ)`.
    pub nu: f64,
    /// Minimizer on the unit simplex.
    pub minimizer: CoefficientVector,
    /// True when the input is PSD and the underlying NNLS is KKT-certified.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompatibilityMethod {
    ExactEnumeration,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityResult {
    /// `φ²_compatible(L, S, Σ)`, or a certified lower bound on it.
    pub phi_sq: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub support: Vec<usize>,
    pub method: CompatibilityMethod,
    /// Minimizer in the cone `R(L, S)` normalized to unit ℓ1 norm (exact method only).
    pub minimizer: Option<CoefficientVector>,
    pub certified: bool,
}

/// Simplex minimization of `(Gμ)ᵀA(Gμ)` returning `γ = Gμ` and a certificate flag.
struct SimplexQp<'a> {
    sigma: &'a CovarianceMatrix,
    factor: Option<&'a Factor>,
}

impl SimplexQp<'_> {
    fn minimize(&self, generators: &[Vec<f64>]) -> (Vec<f64>, bool) {
        match self.factor {
            Some(f) => nnls_simplex(f, generators),
            None => (local_search(self.sigma, generators), false),
        }
    }
}

fn nnls_simplex(factor: &Factor, generators: &[Vec<f64>]) -> (Vec<f64>, bool) {
    let m = generators.len();
    let p = factor.cols;
    let rows = factor.rows + 1;
    let mut values = vec![0.0; rows * m];
    for (c, g) in generators.iter().enumerate() {
        for r in 0..factor.rows {
            let frow = &factor.values[r * p..(r + 1) * p];
            values[r * m + c] = frow.iter().zip(g).filter(|(_, gk)| **gk != 0.0).map(|(f, gk)| f * gk).sum();
        }
        values[factor.rows * m + c] = 1.0;
    }
    let design = DesignMatrix::from_row_major(rows, m, values).expect("finite factor");
    let mut target = vec![0.0; rows];
    target[rows - 1] = 1.0;
    let y = ResponseVector::new(target).expect("finite");
    let sol = solve_nnls(&design, &y, &SolverOptions::default()).expect("dimensions agree");
    let mass: f64 = sol.values().iter().sum();
    let mu: Vec<f64> = if mass > 0.0 {
        sol.values().iter().map(|v| v / mass).collect()
    } else {
        let mut e = vec![0.0; m];
        e[0] = 1.0;
        e
    };
    (combine(generators, &mu, p), sol.converged)
}

fn combine(generators: &[Vec<f64>], mu: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (g, &w) in generators.iter().zip(mu) {
        if w != 0.0 {
            for (o, gk) in out.iter_mut().zip(g) {
                *o += w * gk;
            }
        }
    }
    out
}

/// Vertex and edge scan of the generator simplex, then projected gradient from
/// every vertex and the barycenter.
fn local_search(sigma: &CovarianceMatrix, generators: &[Vec<f64>]) -> Vec<f64> {
    let m = generators.len();
    let p = sigma.p();
    let ag: Vec<Vec<f64>> = generators.iter().map(|g| sigma.mul_vec(g)).collect();
    let mut q = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            q[i * m + j] = crate::linalg::dot(&generators[i], &ag[j]);
        }
    }
    let value = |mu: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..m {
            if mu[i] != 0.0 {
                v += mu[i] * crate::linalg::dot(&q[i * m..(i + 1) * m], mu);
            }
        }
        v
    };

    let mut best_mu = vec![0.0; m];
    best_mu[0] = 1.0;
    let mut best = value(&best_mu);
    let consider = |mu: Vec<f64>, best: &mut f64, best_mu: &mut Vec<f64>| {
        let v = value(&mu);
        if v < *best {
            *best = v;
            *best_mu = mu;
        }
    };
    for i in 0..m {
        for j in i..m {
            let (a, b, c) = (q[i * m + i], q[i * m + j], q[j * m + j]);
            let curv = a - 2.0 * b + c;
            let t = if curv > 0.0 { ((a - b) / curv).clamp(0.0, 1.0) } else if c < a { 1.0 } else { 0.0 };
            let mut mu = vec![0.0; m];
            mu[i] += 1.0 - t;
            mu[j] += t;
            consider(mu, &mut best, &mut best_mu);
        }
    }

    let lip = 2.0 * q.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut starts: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })
        .collect();
    starts.push(vec![1.0 / m as f64; m]);
    starts.push(best_mu.clone());
    for start in starts {
        let mut mu = start;
        let mut f = value(&mu);
        for _ in 0..LOCAL_SEARCH_ITERATIONS {
            let grad: Vec<f64> = (0..m).map(|i| 2.0 * crate::linalg::dot(&q[i * m..(i + 1) * m], &mu)).collect();
            let step: Vec<f64> = mu.iter().zip(&grad).map(|(x, g)| x - g / lip).collect();
            let next = project_simplex(&step, 1.0);
            let fn_ = value(&next);
            if fn_ >= f - 1e-15 * f.abs().max(1.0) {
                break;
            }
            mu = next;
            f = fn_;
        }
        consider(mu, &mut best, &mut best_mu);
    }
    combine(generators, &best_mu, p)
}

fn unit_vectors(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|i| {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            e
        })
        .collect()
}

/// `φ²_pos(Σ) = min {βᵀΣβ / ‖β‖₁² : β ≥ 0}`, attained on the unit simplex.
pub fn positive_eigenvalue(sigma: &CovarianceMatrix) -> PositiveEigenvalueResult {
    let factor = sigma.psd_factor();
    let qp = SimplexQp { sigma, factor: factor.as_ref() };
    let (beta, converged) = qp.minimize(&unit_vectors(sigma.p()));
    if factor.is_none() {
        log::warn!("positive_eigenvalue: input is not PSD, returning an uncertified local minimum");
    }
    PositiveEigenvalueResult {
        nu: sigma.quad_form(&beta),
        minimizer: CoefficientVector::new(beta),
        certified: factor.is_some() && converged,
    }
}

fn validate_support(p: usize, support: &[usize]) -> Result<Vec<usize>> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("support S must be nonempty".into()));
    }
    let mut s = support.to_vec();
    s.sort_unstable();
    s.dedup();
    if let Some(&bad) = s.iter().find(|&&k| k >= p) {
        return Err(Error::InvalidArgument(format!("support index {bad} out of range for p = {p}")));
    }
    Ok(s)
}

/// Extreme rays of `{γ ≥ 0 : Σ_N γ ≤ L·Σ_S γ}` scaled to unit ℓ1 mass:
/// `e_j` for `j ∈ S` and `(L·e_i + e_j)/(L + 1)` for `i ∈ N, j ∈ S`.
fn cone_generators(p: usize, support: &[usize], l: f64) -> Vec<Vec<f64>> {
    let in_s: Vec<bool> = (0..p).map(|k| support.contains(&k)).collect();
    let mut gens = Vec::new();
    for &j in support {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        gens.push(e);
    }
    for i in (0..p).filter(|&i| !in_s[i]) {
        for &j in support {
            let mut g = vec![0.0; p];
            g[i] = l / (l + 1.0);
            g[j] = 1.0 / (l + 1.0);
            gens.push(g);
        }
    }
    gens
}

/// Exact `φ²_compatible(L, S, Σ)` by enumerating sign patterns.
///
/// For a pattern `σ`, `β = diag(σ)γ` with `γ ≥ 0` in the cone, and the
/// per-pattern problem is a simplex QP over the cone generators. Patterns `σ`
/// and `−σ` give the same problem, so only `σ₀ = +1` is enumerated.
pub fn compatibility_constant_exact(sigma: &CovarianceMatrix, support: &[usize], l: f64) -> Result<CompatibilityResult> {
    let p = sigma.p();
    if p > EXACT_MAX_P {
        return Err(Error::TooLarge(format!(
            "exact compatibility enumerates 2^p sign patterns and is limited to p <= {EXACT_MAX_P} (got {p}); \
             use compatibility_lower_bound instead"
        )));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("L must be positive and finite, got {l}")));
    }
    let s = validate_support(p, support)?;
    let gens = cone_generators(p, &s, l);
    let factor = sigma.psd_factor();
    let s_count = s.len() as f64;

    let patterns = 1u32 << (p - 1);
    let best = (0..patterns)
        .into_par_iter()
        .map(|mask| {
            let signs: Vec<f64> = (0..p)
                .map(|k| if k > 0 && mask & (1 << (k - 1)) != 0 { -1.0 } else { 1.0 })
                .collect();
            let flipped_gens: Vec<Vec<f64>> =
                gens.iter().map(|g| g.iter().zip(&signs).map(|(a, b)| a * b).collect()).collect();
            let (beta, ok) = SimplexQp { sigma, factor: factor.as_ref() }.minimize(&flipped_gens);
            let l1: f64 = beta.iter().map(|v| v.abs()).sum();
            let value = s_count * sigma.quad_form(&beta) / (l1 * l1);
            (value, mask, beta, ok)
        })
        .reduce_with(|a, b| {
            let a_first = a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
            let ok = a.3 && b.3;
            let (v, m, beta, _) = if a_first { a } else { b };
            (v, m, beta, ok)
        })
        .expect("at least one pattern");

    if factor.is_none() {
        log::warn!("compatibility_constant_exact: input is not PSD, result is an uncertified local minimum");
    }
    Ok(CompatibilityResult {
        phi_sq: best.0,
        l,
        support: s,
        method: CompatibilityMethod::ExactEnumeration,
        minimizer: Some(CoefficientVector::new(best.2)),
        certified: factor.is_some() && best.3,
    })
}

/// Reference matrix with a known compatibility lower bound, for the
/// population-to-empirical transfer.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceBound<'a> {
    pub sigma: &'a CovarianceMatrix,
    pub phi_sq: f64,
}

/// Certified lower bound on `φ²_compatible(L, S, Σ)` for any `p`.
///
/// Takes the larger of the structure-free bound `s·λ_min(Σ)/p` (from
/// `‖β‖₂² ≥ ‖β‖₁²/p`; `s·λ_min` when `λ_min < 0`) and, when a reference is
/// given, `φ²_ref − max((L+1)√(δs), sδ)` with `δ = ‖Σ − Σ_ref‖_∞`.
pub fn compatibility_lower_bound(
    sigma: &CovarianceMatrix,
    support: &[usize],
    l: f64,
    reference: Option<ReferenceBound<'_>>,
) -> Result<CompatibilityResult> {
    let p = sigma.p();
    let s = validate_support(p, support)?;
    let sc = s.len() as f64;
    let lam_min = sigma.min_eigenvalue();
    let mut bound = if lam_min >= 0.0 { sc * lam_min / p as f64 } else { sc * lam_min };
    if let Some(r) = reference {
        if r.sigma.p() != p {
            return Err(Error::Dimension("reference covariance has a different size".into()));
        }
        let delta = sigma.max_abs_diff(r.sigma);
        let loss = ((l + 1.0) * (delta * sc).sqrt()).max(sc * delta);
        bound = bound.max(r.phi_sq - loss);
    }
    Ok(CompatibilityResult {
        phi_sq: bound,
        l,
        support: s,
        method: CompatibilityMethod::LowerBound,
        minimizer: None,
        certified: true,
    })
}

/// Example I: every entry of `Σ` at least `ν > 0`. Returns the minimal entry.
pub fn check_example1(sigma: &CovarianceMatrix) -> Option<f64> {
    let m = sigma.min_entry();
    (m > 0.0).then_some(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Result {
    /// Indices touched by a negative entry.
    pub a_set: Vec<usize>,
    pub nu: Option<f64>,
    /// `min {βᵀΣβ/‖β‖₁² : β supported on A}` (or its lower bound).
    pub restricted_value: Option<f64>,
    /// False when `|A| > 16` and the restricted value is only a lower bound.
    pub exact: bool,
}

/// Example II: negative entries confined to a small index set `A`.
///
/// `ν = min(min_{i,j ∉ A} Σ_ij, restricted eigenvalue on A) / 2`, absent
/// unless positive.
pub fn check_example2(sigma: &CovarianceMatrix) -> Example2Result {
    let p = sigma.p();
    let a_set: Vec<usize> = (0..p).filter(|&i| (0..p).any(|j| sigma.get(i, j) < 0.0)).collect();
    let complement: Vec<usize> = (0..p).filter(|i| !a_set.contains(i)).collect();

    let mut m1 = f64::INFINITY;
    for &i in &complement {
        for &j in &complement {
            m1 = m1.min(sigma.get(i, j));
        }
    }

    let (m2, exact) = if a_set.is_empty() {
        (f64::INFINITY, true)
    } else {
        let sub = sigma.submatrix(&a_set);
        let k = a_set.len();
        if k <= EXACT_MAX_P {
            let all: Vec<usize> = (0..k).collect();
            // With S = A the cone is everything; φ²_compatible = |A|·min ratio.
            let r = compatibility_constant_exact(&sub, &all, 1.0).expect("size checked");
            (r.phi_sq / k as f64, r.certified)
        } else {
            log::warn!("check_example2: |A| = {k} > {EXACT_MAX_P}, using eigenvalue lower bound");
            (sub.min_eigenvalue().max(0.0) / k as f64, false)
        }
    };

    let nu = 0.5 * m1.min(m2);
    Example2Result {
        a_set,
        nu: (nu > 0.0 && nu.is_finite()).then_some(nu),
        restricted_value: m2.is_finite().then_some(m2),
        exact,
    }
}

/// Example III: bounded negative entries and a block partition with large
/// per-block positive eigenvalues. Returns the largest admissible `ν ≥ 0`.
pub fn check_example3(sigma: &CovarianceMatrix, blocks: &[Vec<usize>], rho: f64) -> Result<Option<f64>> {
    let p = sigma.p();
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let mut seen = vec![false; p];
    for block in blocks {
        if block.is_empty() {
            return Err(Error::InvalidArgument("blocks must be nonempty".into()));
        }
        for &k in block {
            if k >= p || seen[k] {
                return Err(Error::InvalidArgument(format!("blocks do not partition 0..{p}: index {k}")));
            }
            seen[k] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument(format!("blocks do not cover 0..{p}")));
    }

    if sigma.min_entry() < -rho / (p * p) as f64 {
        return Ok(None);
    }
    let b = blocks.len() as f64;
    let mut min_block = f64::INFINITY;
    for block in blocks {
        let r = positive_eigenvalue(&sigma.submatrix(block));
        if !r.certified {
            return Ok(None);
        }
        min_block = min_block.min(r.nu);
    }
    let nu = min_block / b - rho;
    Ok((nu >= 0.0).then_some(nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// `φ − (L+1)√(δs)`.
    pub empirical_lower_bound: f64,
    /// `φ²/(4(L+1)²s)`.
    pub delta_threshold: f64,
    /// `δ ≤ threshold`, in which case the empirical constant is at least `φ/2`.
    pub halves_hold: bool,
}

/// Transfers a compatibility bound `φ` from a population covariance to an
/// empirical one at entrywise distance `δ`.
pub fn population_transfer(phi_population: f64, delta: f64, l: f64, s: usize) -> Result<TransferReport> {
    if !(phi_population > 0.0) || !(delta >= 0.0) || !(l > 0.0) || s == 0 {
        return Err(Error::InvalidArgument("population_transfer needs phi, L, s > 0 and delta >= 0".into()));
    }
    let sf = s as f64;
    let empirical_lower_bound = phi_population - (l + 1.0) * (delta * sf).sqrt();
    let delta_threshold = phi_population * phi_population / (4.0 * (l + 1.0).powi(2) * sf);
    Ok(TransferReport { empirical_lower_bound, delta_threshold, halves_hold: delta <= delta_threshold })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExamplesReport {
    pub example1: Option<f64>,
    pub example2: Example2Result,
    pub example3: Option<f64>,
}

/// Combined report emitted by the `check` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub phi_pos: PositiveEigenvalueResult,
    pub examples: ExamplesReport,
    pub compatibility: Option<CompatibilityResult>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(p: usize) -> CovarianceMatrix {
        CovarianceMatrix::new(p, vec![1.0; p * p]).unwrap()
    }

    fn random_psd(p: usize, rank: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DesignMatrix::from_row_major(rank, p, (0..rank * p).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        crate::linalg::covariance(&x)
    }

    #[test]
    fn identity_positive_eigenvalue() {
        let r = positive_eigenvalue(&CovarianceMatrix::identity(3));
        assert!(r.certified);
        assert_abs_diff_eq!(r.nu, 1.0 / 3.0, epsilon = 1e-12);
        assert!(r.minimizer.max_abs_diff(&[1.0 / 3.0; 3]) < 1e-9);
    }

    #[test]
    fn all_ones_positive_eigenvalue() {
        for p in [1, 2, 5, 9] {
            let r = positive_eigenvalue(&ones(p));
            assert_abs_diff_eq!(r.nu, 1.0, epsilon = 1e-12);
        }
    }

    /// `t² − t + 1` on the 1-simplex, evaluated on a grid of 10⁵ points.
    #[test]
    fn two_by_two_matches_grid() {
        let sigma = CovarianceMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let grid = (0..=100_000)
            .map(|i| {
                let t = i as f64 / 100_000.0;
                (1.0 - t).powi(2) + t * t + 2.0 * 0.5 * t * (1.0 - t)
            })
            .fold(f64::INFINITY, f64::min);
        let r = positive_eigenvalue(&sigma);
        assert_abs_diff_eq!(r.nu, grid, epsilon = 1e-9);
        assert_abs_diff_eq!(r.nu, 0.75, epsilon = 1e-12);
        assert!(r.minimizer.max_abs_diff(&[0.5, 0.5]) < 1e-8);
    }

    #[test]
    fn positive_eigenvalue_scales_linearly() {
        for seed in 0..10 {
            let s = random_psd(6, 8, seed);
            let a = positive_eigenvalue(&s).nu;
            let b = positive_eigenvalue(&s.scaled(3.5)).nu;
            assert_abs_diff_eq!(b, 3.5 * a, epsilon = 1e-9 * (1.0 + b));
        }
    }

    #[test]
    fn indefinite_input_is_uncertified() {
        let s = CovarianceMatrix::from_rows(&[vec![1.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        let r = positive_eigenvalue(&s);
        assert!(!r.certified);
        // On the simplex: 1 − 6t + 6t², minimized at t = 1/2 with value −1/2.
        assert_abs_diff_eq!(r.nu, -0.5, epsilon = 1e-9);
    }

    #[test]
    fn minimizer_invariants() {
        for seed in 0..20 {
            let s = random_psd(7, 4, 40 + seed);
            let r = positive_eigenvalue(&s);
            assert!(r.minimizer.values().iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(r.minimizer.values().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(s.quad_form(r.minimizer.values()), r.nu, epsilon = 1e-8);
        }
    }

    #[test]
    fn compatibility_identity_full_support() {
        for p in 1..=5 {
            let all: Vec<usize> = (0..p).collect();
            let r = compatibility_constant_exact(&CovarianceMatrix::identity(p), &all, 2.0).unwrap();
            assert_abs_diff_eq!(r.phi_sq, 1.0, epsilon = 1e-10);
        }
    }

    /// Grid over sign patterns and magnitudes of `(β₁, β₂)` in the cone
    /// `|β₂| ≤ |β₁|`, normalized to unit ℓ1 norm.
    #[test]
    fn compatibility_identity_two_by_two_grid() {
        let mut grid = f64::INFINITY;
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                for i in 0..=20_000 {
                    let a = i as f64 / 20_000.0;
                    let (b1, b2) = (s1 * a, s2 * (1.0 - a));
                    if b2.abs() <= b1.abs() {
                        grid = grid.min(b1 * b1 + b2 * b2);
                    }
                }
            }
        }
        let r = compatibility_constant_exact(&CovarianceMatrix::identity(2), &[0], 1.0).unwrap();
        assert_abs_diff_eq!(r.phi_sq, grid, epsilon = 1e-8);
        assert_abs_diff_eq!(r.phi_sq, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn compatibility_symmetrization_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 4;
        let base = random_psd(p, 6, 9);
        let mut skewed = base.values().to_vec();
        for i in 0..p {
            for j in 0..i {
                let e = rng.gen_range(-0.1..0.1);
                skewed[i * p + j] += e;
                skewed[j * p + i] -= e;
            }
        }
        let sym = CovarianceMatrix::symmetrized(p, skewed).unwrap();
        let a = compatibility_constant_exact(&base, &[0, 2], 1.5).unwrap();
        let b = compatibility_constant_exact(&sym, &[0, 2], 1.5).unwrap();
        assert_abs_diff_eq!(a.phi_sq, b.phi_sq, epsilon = 1e-12);
    }

    #[test]
    fn compatibility_minimizer_lies_in_cone() {
        for seed in 0..10 {
            let s = random_psd(6, 9, 70 + seed);
            let support = [1usize, 4];
            let l = 2.0;
            let r = compatibility_constant_exact(&s, &support, l).unwrap();
            let beta = r.minimizer.unwrap();
            let b = beta.values();
            let on_s: f64 = support.iter().map(|&k| b[k].abs()).sum();
            let off_s: f64 = (0..6).filter(|k| !support.contains(k)).map(|k| b[k].abs()).sum();
            assert!(off_s <= l * on_s + 1e-9);
            let l1 = beta.l1_norm();
            assert_abs_diff_eq!(2.0 * s.quad_form(b) / (l1 * l1), r.phi_sq, epsilon = 1e-6);
        }
    }

    #[test]
    fn compatibility_rejects_bad_input() {
        let s = CovarianceMatrix::identity(17);
        assert!(matches!(compatibility_constant_exact(&s, &[0], 1.0), Err(Error::TooLarge(_))));
        let s = CovarianceMatrix::identity(3);
        assert!(compatibility_constant_exact(&s, &[], 1.0).is_err());
        assert!(compatibility_constant_exact(&s, &[0], 0.0).is_err());
        assert!(compatibility_constant_exact(&s, &[3], 1.0).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let r = compatibility_lower_bound(&CovarianceMatrix::identity(8), &[0, 1, 2], 1.0, None).unwrap();
        assert_abs_diff_eq!(r.phi_sq, 3.0 / 8.0, epsilon = 1e-12);
        assert_eq!(r.method, CompatibilityMethod::LowerBound);

        let r = compatibility_lower_bound(&ones(4), &[0], 1.0, None).unwrap();
        assert_abs_diff_eq!(r.phi_sq, 0.0, epsilon = 1e-12);

        let sigma = random_psd(5, 40, 3);
        let exact = compatibility_constant_exact(&sigma, &[0, 1], 2.0).unwrap().phi_sq;
        let reference = ReferenceBound { sigma: &sigma, phi_sq: exact };
        let r = compatibility_lower_bound(&sigma, &[0, 1], 2.0, Some(reference)).unwrap();
        assert_abs_diff_eq!(r.phi_sq, exact, epsilon = 1e-12);
    }

    #[test]
    fn example1_cases() {
        assert_eq!(check_example1(&ones(3)), Some(1.0));
        assert_eq!(check_example1(&CovarianceMatrix::identity(3)), None);
    }

    #[test]
    fn example2_cases() {
        let pos = CovarianceMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let r = check_example2(&pos);
        assert!(r.a_set.is_empty());
        assert_abs_diff_eq!(r.nu.unwrap(), 0.2, epsilon = 1e-15);

        let one_neg = CovarianceMatrix::from_rows(&[
            vec![1.0, -0.2, 0.3],
            vec![-0.2, 1.0, 0.3],
            vec![0.3, 0.3, 1.0],
        ])
        .unwrap();
        assert_eq!(check_example2(&one_neg).a_set, vec![0, 1]);
    }

    #[test]
    fn example3_cases() {
        let r = check_example3(&ones(4), &[vec![0, 1, 2, 3]], 0.25).unwrap();
        assert_abs_diff_eq!(r.unwrap(), 0.75, epsilon = 1e-12);

        // Two all-ones blocks, zero cross entries: 1 ≥ (ν + ρ)·2.
        let mut v = vec![0.0; 16];
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            v[i * 4 + j] = 1.0;
        }
        let two = CovarianceMatrix::new(4, v).unwrap();
        let r = check_example3(&two, &[vec![0, 1], vec![2, 3]], 0.1).unwrap();
        assert_abs_diff_eq!(r.unwrap(), 0.4, epsilon = 1e-12);

        let neg = CovarianceMatrix::from_rows(&[vec![1.0, -0.1], vec![-0.1, 1.0]]).unwrap();
        assert_eq!(check_example3(&neg, &[vec![0, 1]], 0.2).unwrap(), None);

        assert!(check_example3(&ones(3), &[vec![0, 1]], 0.1).is_err());
        assert!(check_example3(&ones(3), &[vec![0, 1], vec![1, 2]], 0.1).is_err());
        assert!(check_example3(&ones(3), &[vec![0, 1, 2]], 0.0).is_err());
    }

    #[test]
    fn transfer_cases() {
        let r = population_transfer(0.8, 0.0, 2.0, 3).unwrap();
        assert_eq!(r.empirical_lower_bound, 0.8);
        assert!(r.halves_hold);

        let r = population_transfer(1.0, 1.0 / 64.0, 1.0, 4).unwrap();
        assert_eq!(r.delta_threshold, 1.0 / 64.0);
        assert!(r.halves_hold);
        assert_abs_diff_eq!(r.empirical_lower_bound, 0.5, epsilon = 1e-15);

        let r = population_transfer(1.0, 100.0, 1.0, 4).unwrap();
        assert!(r.empirical_lower_bound < 0.0);
        assert!(!r.halves_hold);
        assert!(population_transfer(0.0, 0.1, 1.0, 1).is_err());
    }
}
