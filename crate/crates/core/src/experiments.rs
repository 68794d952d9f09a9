//! Simulation study on random tomography networks and Monte Carlo checks of
//! the finite-sample guarantees.
//!
//! Every random stream is derived from a master seed and a counter path, so
//! results do not depend on how work is scheduled across threads.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, normal_sf, BoundInputs};
use crate::conditions::{check_example1, compatibility_constant_exact, positive_eigenvalue};
use crate::error::{Error, Result};
use crate::linalg::{covariance, standardize_columns, CoefficientVector, DesignMatrix, ResponseVector};
use crate::nnls::{solve_l1_path, solve_nnls, solve_oracle_nnls, solve_restricted_ols, SolverOptions};
use crate::tomography::{generate_network_with, simulate_observations_with, TomographyInstance};

/// Attempts per scenario slot before giving up on degenerate draws.
pub const MAX_SCENARIO_ATTEMPTS: usize = 100;

/// Largest `p` accepted by the Monte Carlo suites (exact compatibility constant).
pub const MONTE_CARLO_MAX_P: usize = 14;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream at `path` below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_at(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Parameter sets the scenario sampler draws from uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSets {
    pub n_nodes: Vec<usize>,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub nu_del: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub s: Vec<usize>,
}

impl Default for ScenarioSets {
    fn default() -> Self {
        Self {
            n_nodes: vec![25, 50, 100, 200, 400],
            k: vec![5, 10, 20],
            nu_del: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            sigma_sq: vec![0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0],
            s: vec![2, 5, 10],
        }
    }
}

impl ScenarioSets {
    fn validate(&self) -> Result<()> {
        if self.n_nodes.is_empty() || self.k.is_empty() || self.nu_del.is_empty() || self.sigma_sq.is_empty() || self.s.is_empty()
        {
            return Err(Error::InvalidArgument("every scenario parameter set must be nonempty".into()));
        }
        if self.sigma_sq.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("noise variances must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub nu_del: f64,
    pub sigma_sq: f64,
    pub s: usize,
    /// Seed for the topology, support and loss values.
    pub seed: u64,
}

fn pick<T: Copy, R: Rng + ?Sized>(rng: &mut R, set: &[T]) -> T {
    set[rng.gen_range(0..set.len())]
}

/// Independent uniform draws from each parameter set.
pub fn sample_scenario<R: Rng + ?Sized>(rng: &mut R, sets: &ScenarioSets) -> ScenarioConfig {
    ScenarioConfig {
        n_nodes: pick(rng, &sets.n_nodes),
        k: pick(rng, &sets.k),
        nu_del: pick(rng, &sets.nu_del),
        sigma_sq: pick(rng, &sets.sigma_sq),
        s: pick(rng, &sets.s),
        seed: rng.gen(),
    }
}

/// Network, support (uniform over design columns) and losses `|N(0, 1)|`.
/// Degenerate when the network has no internal nodes or leaves, or fewer
/// columns than `s`.
pub fn build_instance(cfg: &ScenarioConfig) -> Result<TomographyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topology = generate_network_with(cfg.n_nodes, cfg.k, cfg.nu_del, &mut rng)?;
    let design = crate::tomography::flow_design_matrix(&topology)?;
    let p = design.x.p();
    if p < cfg.s {
        return Err(Error::Degenerate(format!("{p} identifiable internal nodes, fewer than s = {}", cfg.s)));
    }
    let mut beta = vec![0.0; p];
    let mut support = sample(&mut rng, p, cfg.s).into_vec();
    support.sort_unstable();
    for k in support {
        let z: f64 = rng.sample(StandardNormal);
        // A zero draw would shrink the support; it has probability zero.
        beta[k] = z.abs().max(f64::MIN_POSITIVE);
    }
    TomographyInstance::new(topology, beta, cfg.sigma_sq.sqrt())
}

/// Number of estimates ranked strictly above the highest-valued false positive.
///
/// Ranking is by decreasing `β̂` with ties to the lower index; the first
/// index with `β*_k = 0` is the first false positive. With no true zeros all
/// entries count.
pub fn true_positives(beta_hat: &[f64], beta_star: &[f64]) -> Result<usize> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, truth has {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    let mut idx: Vec<usize> = (0..beta_hat.len()).collect();
    idx.sort_by(|&a, &b| beta_hat[b].total_cmp(&beta_hat[a]).then(a.cmp(&b)));
    let Some(&fp) = idx.iter().find(|&&k| beta_star[k] == 0.0) else {
        return Ok(beta_hat.len());
    };
    let threshold = beta_hat[fp];
    Ok(beta_hat.iter().filter(|&&v| v > threshold).count())
}

pub fn lambda_grid(grid: usize) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(Error::InvalidArgument(format!("the lambda grid needs at least 2 points, got {grid}")));
    }
    Ok((0..grid).map(|i| i as f64 / (grid - 1) as f64).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario_id: usize,
    pub scenario: ScenarioConfig,
    /// Columns (identifiable internal nodes) and rows (leaves) of the design.
    pub p: usize,
    pub n: usize,
    /// `λ/λ_max` per grid point, aligned across replicates.
    pub lambda_fracs: Vec<f64>,
    /// Mean true positives per grid point over converged replicates.
    pub mean_tp: Vec<f64>,
    pub reps: usize,
    /// Replicates excluded per grid point because the solver did not converge.
    pub non_converged: Vec<usize>,
    /// Degenerate draws discarded before this scenario.
    pub resampled: usize,
}

impl SweepResult {
    fn at_lambda_max(&self) -> f64 {
        *self.mean_tp.last().expect("grid is nonempty")
    }

    fn grid_max(&self) -> f64 {
        self.mean_tp.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the unpenalized estimate is within `tol·s` of the best grid point.
    pub fn lambda_max_near_best(&self, tol: f64) -> bool {
        let at = self.at_lambda_max();
        at.is_finite() && self.grid_max() - at <= tol * self.scenario.s as f64
    }
}

/// Replicated λ sweep on one scenario.
pub fn run_scenario(cfg: &ScenarioConfig, reps: usize, grid: usize, opts: &SolverOptions) -> Result<SweepResult> {
    let inst = build_instance(cfg)?;
    run_instance(0, cfg, &inst, reps, grid, opts)
}

fn run_instance(
    scenario_id: usize,
    cfg: &ScenarioConfig,
    inst: &TomographyInstance,
    reps: usize,
    grid: usize,
    opts: &SolverOptions,
) -> Result<SweepResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let fracs = lambda_grid(grid)?;
    let mut sums = vec![0.0; grid];
    let mut counts = vec![0usize; grid];
    let mut non_converged = vec![0usize; grid];
    for rep in 0..reps {
        let y = simulate_observations_with(inst, &mut rng_at(cfg.seed, &[1, rep as u64]));
        let (_, path) = solve_l1_path(inst.x(), &y, &fracs, opts)?;
        for (g, sol) in path.iter().enumerate() {
            if sol.converged {
                sums[g] += true_positives(sol.values(), inst.beta_star.values())? as f64;
                counts[g] += 1;
            } else {
                non_converged[g] += 1;
            }
        }
    }
    let mean_tp = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
    Ok(SweepResult {
        scenario_id,
        scenario: *cfg,
        p: inst.x().p(),
        n: inst.x().n(),
        lambda_fracs: fracs,
        mean_tp,
        reps,
        non_converged,
        resampled: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_scenarios: usize,
    pub reps: usize,
    pub grid: usize,
    pub seed: u64,
    pub sets: ScenarioSets,
    pub kkt_tolerance: f64,
    /// Slack, as a fraction of `s`, for the `λ_max`-near-best aggregate.
    pub near_best_tolerance: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 100,
            reps: 10,
            grid: 20,
            seed: 0,
            sets: ScenarioSets::default(),
            kkt_tolerance: crate::nnls::DEFAULT_KKT_TOLERANCE,
            near_best_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyAggregate {
    pub seed: u64,
    pub n_scenarios: usize,
    pub reps: usize,
    pub grid: usize,
    pub near_best_tolerance: f64,
    /// Scenarios whose `λ_max` mean is within tolerance of the grid maximum.
    pub near_best_count: usize,
    pub near_best_fraction: f64,
    /// Degenerate draws discarded across all scenarios.
    pub resampled: usize,
    pub non_converged_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub results: Vec<SweepResult>,
    pub aggregate: StudyAggregate,
}

fn scenario_slot(cfg: &StudyConfig, id: usize, opts: &SolverOptions) -> Result<SweepResult> {
    for attempt in 0..MAX_SCENARIO_ATTEMPTS {
        let mut rng = rng_at(cfg.seed, &[0, id as u64, attempt as u64]);
        let scenario = sample_scenario(&mut rng, &cfg.sets);
        match build_instance(&scenario) {
            Ok(inst) => {
                let mut r = run_instance(id, &scenario, &inst, cfg.reps, cfg.grid, opts)?;
                r.resampled = attempt;
                log::info!(
                    "scenario {id}: N={} K={} nu={} sigma2={} s={} p={} n={} resampled={attempt}",
                    scenario.n_nodes,
                    scenario.k,
                    scenario.nu_del,
                    scenario.sigma_sq,
                    scenario.s,
                    r.p,
                    r.n
                );
                return Ok(r);
            }
            Err(Error::Degenerate(why)) => {
                log::debug!("scenario {id}: attempt {attempt} degenerate ({why}), resampling");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!("scenario {id}: {MAX_SCENARIO_ATTEMPTS} consecutive degenerate draws")))
}

/// Runs independent scenarios in parallel; output order is by scenario id.
pub fn run_study(cfg: &StudyConfig) -> Result<Study> {
    cfg.sets.validate()?;
    lambda_grid(cfg.grid)?;
    if cfg.n_scenarios == 0 || cfg.reps == 0 {
        return Err(Error::InvalidArgument("scenarios and reps must be positive".into()));
    }
    let opts = SolverOptions::default().with_tolerance(cfg.kkt_tolerance);
    opts.validate()?;
    let results: Vec<SweepResult> =
        (0..cfg.n_scenarios).into_par_iter().map(|id| scenario_slot(cfg, id, &opts)).collect::<Result<_>>()?;
    let near_best_count = results.iter().filter(|r| r.lambda_max_near_best(cfg.near_best_tolerance)).count();
    let aggregate = StudyAggregate {
        seed: cfg.seed,
        n_scenarios: cfg.n_scenarios,
        reps: cfg.reps,
        grid: cfg.grid,
        near_best_tolerance: cfg.near_best_tolerance,
        near_best_count,
        near_best_fraction: near_best_count as f64 / results.len() as f64,
        resampled: results.iter().map(|r| r.resampled).sum(),
        non_converged_cells: results.iter().flat_map(|r| &r.non_converged).sum(),
    };
    Ok(Study { config: cfg.clone(), results, aggregate })
}

/// Long-format table `scenario_id,lambda_frac,mean_tp,seed`.
pub fn write_results_csv<W: Write>(results: &[SweepResult], seed: u64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario_id", "lambda_frac", "mean_tp", "seed"])?;
    for r in results {
        for (f, m) in r.lambda_fracs.iter().zip(&r.mean_tp) {
            w.write_record([r.scenario_id.to_string(), f.to_string(), m.to_string(), seed.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One scenario's curve: `λ/λ_max` against mean true positives.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub scenario_id: usize,
    pub lambda_fracs: Vec<f64>,
    pub mean_tp: Vec<f64>,
}

impl From<&SweepResult> for PlotSeries {
    fn from(r: &SweepResult) -> Self {
        Self { scenario_id: r.scenario_id, lambda_fracs: r.lambda_fracs.clone(), mean_tp: r.mean_tp.clone() }
    }
}

/// Reads the long-format table written by [`write_results_csv`], returning
/// the curves in scenario order and the seed column (if consistent).
pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<(Vec<PlotSeries>, Option<u64>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse(format!("missing column '{name}'")))
    };
    let (ci, cf, cm) = (col("scenario_id")?, col("lambda_frac")?, col("mean_tp")?);
    let cs = col("seed").ok();
    let mut series: Vec<PlotSeries> = Vec::new();
    let mut seeds = std::collections::BTreeSet::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let bad = |what: &str| Error::Parse(format!("row {}: invalid {what}", line + 2));
        let id: usize = field(ci).parse().map_err(|_| bad("scenario_id"))?;
        let f: f64 = field(cf).parse().map_err(|_| bad("lambda_frac"))?;
        let m: f64 = field(cm).parse().map_err(|_| bad("mean_tp"))?;
        if let Some(cs) = cs {
            seeds.insert(field(cs).parse::<u64>().map_err(|_| bad("seed"))?);
        }
        match series.iter_mut().find(|s| s.scenario_id == id) {
            Some(s) => {
                s.lambda_fracs.push(f);
                s.mean_tp.push(m);
            }
            None => series.push(PlotSeries { scenario_id: id, lambda_fracs: vec![f], mean_tp: vec![m] }),
        }
    }
    series.sort_by_key(|s| s.scenario_id);
    let seed = if seeds.len() == 1 { seeds.into_iter().next() } else { None };
    Ok((series, seed))
}

/// SVG line chart: one polyline per scenario, `λ/λ_max` against mean true positives.
pub fn emit_plot(results: &[SweepResult], seed: u64) -> Result<String> {
    let series: Vec<PlotSeries> = results.iter().map(PlotSeries::from).collect();
    emit_plot_series(&series, Some(seed))
}

pub fn emit_plot_series(results: &[PlotSeries], seed: Option<u64>) -> Result<String> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let y_max = results
        .iter()
        .flat_map(|r| r.mean_tp.iter().copied())
        .filter(|v| v.is_finite())
        .fold(1.0_f64, f64::max)
        .ceil();
    let sx = |x: f64| left + x * pw;
    let sy = |y: f64| top + ph - y / y_max * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    match seed {
        Some(seed) => {
            let _ = writeln!(svg, "<desc>seed={seed} scenarios={}</desc>", results.len());
        }
        None => {
            let _ = writeln!(svg, "<desc>scenarios={}</desc>", results.len());
        }
    }
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/></g>"#,
        l = left,
        r = left + pw,
        t = top,
        b = top + ph
    );
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
    for i in 0..=5 {
        let x = i as f64 / 5.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x:.1}</text>"#, sx(x), top + ph + 18.0);
    }
    let ticks = y_max as usize;
    let step = ticks.div_ceil(10).max(1);
    for t in (0..=ticks).step_by(step) {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"#, left - 8.0, sy(t as f64) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">λ / λ_max</text>"#, left + pw / 2.0, h - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">mean true positives</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g fill="none" stroke="steelblue" stroke-opacity="0.5" stroke-width="1">"#);
    for r in results {
        let pts: Vec<String> = r
            .lambda_fracs
            .iter()
            .zip(&r.mean_tp)
            .filter(|(_, m)| m.is_finite())
            .map(|(f, m)| format!("{:.2},{:.2}", sx(*f), sy(*m)))
            .collect();
        let _ = writeln!(svg, r#"<polyline data-scenario="{}" points="{}"/>"#, r.scenario_id, pts.join(" "));
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Fixed design for the Monte Carlo suites: rows i.i.d. `N(0, Σ_ρ)` with
/// equicorrelation `ρ`, columns standardized, `β* = β_min` on the first `s`
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub sigma: f64,
    pub eta: f64,
    /// Defaults to 1.1 times the support-recovery threshold.
    pub beta_min: Option<f64>,
    pub design_seed: u64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { n: 200, p: 10, s: 2, rho: 0.5, sigma: 1.0, eta: 0.1, beta_min: None, design_seed: 1 }
    }
}

/// Design, its conditions and the resulting bounds.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    pub spec: DesignSpec,
    pub x: DesignMatrix,
    pub support: Vec<usize>,
    pub beta_star: Vec<f64>,
    pub beta_min: f64,
    pub bounds: BoundInputs,
    pub l: f64,
    pub theorem1_l1_bound: f64,
    pub theorem1_betamin: f64,
    pub corollary1_betamin: f64,
    pub theorem2_pred_bound: f64,
}

pub fn prepare_design(spec: &DesignSpec) -> Result<PreparedDesign> {
    if spec.p > MONTE_CARLO_MAX_P {
        return Err(Error::TooLarge(format!("Monte Carlo suites need p <= {MONTE_CARLO_MAX_P}, got {}", spec.p)));
    }
    if spec.s == 0 || spec.s > spec.p || spec.n < 2 {
        return Err(Error::InvalidArgument("need 1 <= s <= p and n >= 2".into()));
    }
    if !(0.0..1.0).contains(&spec.rho) {
        return Err(Error::InvalidArgument(format!("rho must be in [0, 1), got {}", spec.rho)));
    }
    if !(spec.sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.design_seed);
    let (a, b) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
    let mut values = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        let common: f64 = rng.sample(StandardNormal);
        for _ in 0..spec.p {
            let own: f64 = rng.sample(StandardNormal);
            values.push(a * common + b * own);
        }
    }
    let x = standardize_columns(&DesignMatrix::from_row_major(spec.n, spec.p, values)?)?;
    let sigma_hat = covariance(&x);
    if check_example1(&sigma_hat).is_none() {
        return Err(Error::InvalidArgument("design violates the strictly positive covariance condition".into()));
    }
    let pos = positive_eigenvalue(&sigma_hat);
    if !pos.certified || !(pos.nu > 0.0) {
        return Err(Error::Degenerate("positive eigenvalue could not be certified".into()));
    }
    let support: Vec<usize> = (0..spec.s).collect();
    let l = 4.0 / pos.nu;
    let compat = compatibility_constant_exact(&sigma_hat, &support, l)?;
    if !compat.certified || !(compat.phi_sq > 0.0) {
        return Err(Error::Degenerate("compatibility constant is not certified positive".into()));
    }
    let inputs = BoundInputs {
        p: spec.p,
        n: spec.n,
        s: spec.s,
        sigma: spec.sigma,
        eta: spec.eta,
        nu: pos.nu,
        phi: compat.phi_sq,
    };
    let corollary1 = bounds::corollary1_betamin(&inputs)?;
    let theorem1_betamin = bounds::theorem1_betamin(&inputs)?;
    let beta_min = spec.beta_min.unwrap_or(1.1 * corollary1);
    if !(beta_min > theorem1_betamin) && spec.sigma > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "beta_min {beta_min} does not exceed the required minimum {theorem1_betamin}"
        )));
    }
    let mut beta_star = vec![0.0; spec.p];
    support.iter().for_each(|&k| beta_star[k] = beta_min);
    Ok(PreparedDesign {
        spec: *spec,
        x,
        support,
        beta_star,
        beta_min,
        bounds: inputs,
        l,
        theorem1_l1_bound: bounds::theorem1_l1_bound(&inputs)?,
        theorem1_betamin,
        corollary1_betamin: corollary1,
        theorem2_pred_bound: bounds::theorem2_pred_bound(&inputs)?,
    })
}

/// Empirical frequency of one event against its theoretical floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageLine {
    pub name: String,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    pub target: f64,
    /// Three binomial standard errors at the target.
    pub margin: f64,
    pub pass: bool,
}

impl CoverageLine {
    fn new(name: &str, trials: usize, successes: usize, target: f64) -> Self {
        let frequency = successes as f64 / trials as f64;
        let t = target.clamp(0.0, 1.0);
        let margin = 3.0 * (t * (1.0 - t) / trials as f64).sqrt();
        Self { name: name.into(), trials, successes, frequency, target, margin, pass: frequency >= target - margin }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub suite: String,
    pub seed: u64,
    pub spec: DesignSpec,
    pub nu: f64,
    pub phi: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub beta_min: f64,
    pub lines: Vec<CoverageLine>,
    pub pass: bool,
}

/// Numerical slack so that exact events (noiseless runs) are not lost to rounding.
fn slack(scale: f64) -> f64 {
    1e-9 * (1.0 + scale)
}

fn draw_response(d: &PreparedDesign, seed: u64, trial: usize) -> ResponseVector {
    let mut rng = rng_at(seed, &[trial as u64]);
    let mut y = d.x.mul_vec(&d.beta_star);
    if d.spec.sigma > 0.0 {
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += d.spec.sigma * e;
        }
    }
    ResponseVector::new(y).expect("finite")
}

fn count_parallel<F>(trials: usize, k: usize, f: F) -> Result<Vec<usize>>
where
    F: Fn(usize) -> Result<Vec<bool>> + Sync,
{
    let flags: Vec<Vec<bool>> = (0..trials).into_par_iter().map(&f).collect::<Result<_>>()?;
    Ok((0..k).map(|i| flags.iter().filter(|v| v[i]).count()).collect())
}

/// ℓ1 error bound, exact top-s support recovery and the prediction bound,
/// each against the floor `1 − η`.
pub fn monte_carlo_theorem1(spec: &DesignSpec, trials: usize, seed: u64) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let d = prepare_design(spec)?;
    let opts = SolverOptions::default();
    let counts = count_parallel(trials, 3, |t| {
        let y = draw_response(&d, seed, t);
        let sol = solve_nnls(&d.x, &y, &opts)?;
        let err: f64 = sol.values().iter().zip(&d.beta_star).map(|(a, b)| (a - b).abs()).sum();
        let l1_ok = err <= d.theorem1_l1_bound + slack(d.beta_min * d.spec.s as f64);
        let top = bounds::top_s_support(&sol.beta, d.spec.s);
        let support_ok = top == d.support;
        let oracle = solve_oracle_nnls(&d.x, &y, &d.support, &opts)?;
        let diff: Vec<f64> = oracle.values().iter().zip(sol.values()).map(|(a, b)| a - b).collect();
        let fit = d.x.mul_vec(&diff);
        let pred = crate::linalg::dot(&fit, &fit);
        let pred_ok = pred <= d.theorem2_pred_bound + slack(crate::linalg::dot(y.values(), y.values()));
        Ok(vec![l1_ok, support_ok, pred_ok])
    })?;
    let target = 1.0 - spec.eta;
    let lines = vec![
        CoverageLine::new("theorem1_l1_bound", trials, counts[0], target),
        CoverageLine::new("corollary1_support", trials, counts[1], target),
        CoverageLine::new("theorem2_prediction", trials, counts[2], target),
    ];
    Ok(report("theorem1", seed, &d, lines))
}

/// Restricted OLS coinciding with the oracle NNLS, and the off-support
/// gradient bound, against their Bonferroni floors at level `C`.
pub fn monte_carlo_lemmas(spec: &DesignSpec, trials: usize, c: f64, seed: u64) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let d = prepare_design(spec)?;
    let needed = bounds::lemma2_ols_threshold(c, spec.sigma, spec.n, d.bounds.phi)?;
    if d.beta_min < needed {
        return Err(Error::InvalidArgument(format!("beta_min {} is below C·σ/√(nφ) = {needed}", d.beta_min)));
    }
    let grad_threshold = bounds::lemma3_gradient_threshold(c, spec.sigma, spec.n)?;
    let off: Vec<usize> = (0..spec.p).filter(|k| !d.support.contains(k)).collect();
    let opts = SolverOptions::default();
    let counts = count_parallel(trials, 2, |t| {
        let y = draw_response(&d, seed, t);
        let ols = solve_restricted_ols(&d.x, &y, &d.support)?;
        let oracle = solve_oracle_nnls(&d.x, &y, &d.support, &opts)?;
        let scale = ols.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let coincide = crate::linalg::max_abs_diff(ols.values(), oracle.values()) <= 1e-8 * (1.0 + scale);
        let fit = d.x.mul_vec(oracle.values());
        let resid: Vec<f64> = y.values().iter().zip(&fit).map(|(a, b)| a - b).collect();
        let corr = d.x.tr_mul_vec(&resid);
        let max_off = off.iter().map(|&k| corr[k]).fold(f64::NEG_INFINITY, f64::max);
        let grad_ok = off.is_empty() || max_off <= grad_threshold + slack(crate::linalg::norm_inf(&corr));
        Ok(vec![coincide, grad_ok])
    })?;
    let lines = vec![
        CoverageLine::new("lemma2_ols_equals_oracle", trials, counts[0], 1.0 - spec.s as f64 * normal_sf(c)),
        CoverageLine::new("lemma3_gradient_bound", trials, counts[1], 1.0 - spec.p as f64 * normal_sf(c)),
    ];
    Ok(report("lemmas", seed, &d, lines))
}

fn report(suite: &str, seed: u64, d: &PreparedDesign, lines: Vec<CoverageLine>) -> CoverageReport {
    CoverageReport {
        suite: suite.into(),
        seed,
        spec: d.spec,
        nu: d.bounds.nu,
        phi: d.bounds.phi,
        l: d.l,
        beta_min: d.beta_min,
        pass: lines.iter().all(|l| l.pass),
        lines,
    }
}

/// Convenience for callers holding estimates as coefficient vectors.
pub fn true_positives_of(beta_hat: &CoefficientVector, beta_star: &CoefficientVector) -> Result<usize> {
    true_positives(beta_hat.values(), beta_star.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_positive_examples() {
        assert_eq!(true_positives(&[0.9, 0.8, 0.1, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 2);
        assert_eq!(true_positives(&[0.9, 0.1, 0.5, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1);
        assert_eq!(true_positives(&[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 2);
        assert_eq!(true_positives(&[0.0; 4], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0);
        assert_eq!(true_positives(&[0.3, 0.2], &[1.0, 1.0]).unwrap(), 2);
        assert!(true_positives(&[0.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(8, &[0]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn scenario_sampling_is_deterministic_and_in_sets() {
        let sets = ScenarioSets::default();
        let a = sample_scenario(&mut rng_at(3, &[0]), &sets);
        assert_eq!(a, sample_scenario(&mut rng_at(3, &[0]), &sets));
        assert!(sets.n_nodes.contains(&a.n_nodes));
        assert!(sets.k.contains(&a.k));
        assert!(sets.nu_del.contains(&a.nu_del));
        assert!(sets.sigma_sq.contains(&a.sigma_sq));
        assert!(sets.s.contains(&a.s));
    }

    /// Each value's count over 10⁴ draws lies within 5 binomial σ of uniform.
    #[test]
    fn scenario_frequencies_are_uniform() {
        let sets = ScenarioSets::default();
        let mut rng = rng_at(99, &[]);
        let draws: Vec<ScenarioConfig> = (0..10_000).map(|_| sample_scenario(&mut rng, &sets)).collect();
        fn check<T: PartialEq + Copy>(values: &[T], set: &[T]) {
            let n = values.len() as f64;
            let q = 1.0 / set.len() as f64;
            for v in set {
                let c = values.iter().filter(|x| *x == v).count() as f64;
                assert!((c - n * q).abs() <= 5.0 * (n * q * (1.0 - q)).sqrt());
            }
        }
        check(&draws.iter().map(|d| d.n_nodes).collect::<Vec<_>>(), &sets.n_nodes);
        check(&draws.iter().map(|d| d.k).collect::<Vec<_>>(), &sets.k);
        check(&draws.iter().map(|d| d.nu_del).collect::<Vec<_>>(), &sets.nu_del);
        check(&draws.iter().map(|d| d.sigma_sq).collect::<Vec<_>>(), &sets.sigma_sq);
        check(&draws.iter().map(|d| d.s).collect::<Vec<_>>(), &sets.s);
    }

    #[test]
    fn instance_losses_are_nonnegative_with_s_nonzeros() {
        let cfg = ScenarioConfig { n_nodes: 50, k: 5, nu_del: 0.2, sigma_sq: 0.5, s: 5, seed: 12 };
        let inst = build_instance(&cfg).unwrap();
        let b = inst.beta_star.values();
        assert!(b.iter().all(|&v| v >= 0.0));
        assert_eq!(b.iter().filter(|&&v| v > 0.0).count(), 5);
    }

    #[test]
    fn full_deletion_is_degenerate() {
        let cfg = ScenarioConfig { n_nodes: 25, k: 5, nu_del: 1.0, sigma_sq: 0.0, s: 2, seed: 1 };
        assert!(matches!(build_instance(&cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn small_scenario_sweep() {
        let cfg = ScenarioConfig { n_nodes: 25, k: 5, nu_del: 0.4, sigma_sq: 0.25, s: 2, seed: 5 };
        let r = run_scenario(&cfg, 4, 6, &SolverOptions::default()).unwrap();
        assert_eq!(r.lambda_fracs.len(), 6);
        assert_eq!(r.mean_tp[0], 0.0);
        assert!(r.mean_tp.iter().all(|&m| (0.0..=2.0).contains(&m)));
        assert!(r.mean_tp[5] >= r.mean_tp[0]);
        let again = run_scenario(&cfg, 4, 6, &SolverOptions::default()).unwrap();
        assert_eq!(r.mean_tp, again.mean_tp);
    }

    fn sweep(id: usize, tp: Vec<f64>) -> SweepResult {
        let grid = tp.len();
        SweepResult {
            scenario_id: id,
            scenario: ScenarioConfig { n_nodes: 25, k: 5, nu_del: 0.2, sigma_sq: 0.0, s: 2, seed: 0 },
            p: 3,
            n: 3,
            lambda_fracs: lambda_grid(grid).unwrap(),
            mean_tp: tp,
            reps: 1,
            non_converged: vec![0; grid],
            resampled: 0,
        }
    }

    #[test]
    fn plot_has_one_polyline_per_scenario() {
        let svg = emit_plot(&[sweep(0, vec![0.0, 1.0, 2.0])], 5).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].attribute("points").unwrap().split_whitespace().count(), 3);
        assert!(svg.contains("seed=5"));
        assert!(emit_plot(&[], 0).is_err());
    }

    #[test]
    fn results_csv_roundtrip() {
        let results = vec![sweep(0, vec![0.0, 1.5, 2.0]), sweep(1, vec![0.0, 0.25, 1.0])];
        let mut buf = Vec::new();
        write_results_csv(&results, 42, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 1 + 6);
        let (series, seed) = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(seed, Some(42));
        assert_eq!(series, results.iter().map(PlotSeries::from).collect::<Vec<_>>());
        assert!(read_results_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn lambda_grid_rejects_tiny() {
        assert!(lambda_grid(1).is_err());
        assert_eq!(lambda_grid(3).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn noiseless_suites_always_hold() {
        let spec = DesignSpec { sigma: 0.0, beta_min: Some(1.0), ..DesignSpec::default() };
        let r = monte_carlo_theorem1(&spec, 20, 3).unwrap();
        assert!(r.lines.iter().all(|l| l.successes == 20), "{r:?}");
        let r = monte_carlo_lemmas(&spec, 20, 2.5, 3).unwrap();
        assert!(r.lines.iter().all(|l| l.successes == 20), "{r:?}");
    }

    #[test]
    fn large_c_drives_lemma_frequencies_to_one() {
        let spec = DesignSpec::default();
        let r = monte_carlo_lemmas(&spec, 50, 8.0, 4).unwrap();
        assert!(r.lines.iter().all(|l| l.successes == 50));
    }

    #[test]
    fn design_preconditions_are_checked() {
        assert!(matches!(prepare_design(&DesignSpec { p: 15, ..DesignSpec::default() }), Err(Error::TooLarge(_))));
        assert!(prepare_design(&DesignSpec { s: 0, ..DesignSpec::default() }).is_err());
        assert!(prepare_design(&DesignSpec { beta_min: Some(1e-6), ..DesignSpec::default() }).is_err());
    }
}
