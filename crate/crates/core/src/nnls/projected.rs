//! Accelerated projected gradient with backtracking on the step size.
//!
//! Minimizes `f(β) = ‖y − Xβ‖₂²` over a convex set given by its Euclidean
//! projection. Momentum is reset whenever it points uphill.

use crate::linalg::{dot, DesignMatrix};

/// Applies `β ↦ XᵀXβ`, through the Gram matrix when that is cheaper.
pub(super) struct GramOperator<'a> {
    x: &'a DesignMatrix,
    gram: Option<Vec<f64>>,
}

impl<'a> GramOperator<'a> {
    pub fn new(x: &'a DesignMatrix) -> Self {
        let gram = (x.p() <= 2 * x.n()).then(|| x.gram());
        Self { x, gram }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.gram {
            Some(g) => g.chunks_exact(self.x.p()).map(|r| dot(r, v)).collect(),
            None => self.x.tr_mul_vec(&self.x.mul_vec(v)),
        }
    }

    /// Power iteration estimate of the largest eigenvalue of `XᵀX`.
    pub fn spectral_norm(&self) -> f64 {
        let p = self.x.p();
        let mut v: Vec<f64> = (0..p).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut lam = 0.0;
        for _ in 0..60 {
            let nrm = dot(&v, &v).sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|t| *t /= nrm);
            let w = self.apply(&v);
            lam = dot(&w, &v);
            v = w;
        }
        lam
    }
}

pub(super) struct PgOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub stopped_early: bool,
}

/// `project` maps a point to the feasible set; `done` is the convergence test
/// evaluated on the current iterate every few steps.
pub(super) fn minimize<P, D>(
    x: &DesignMatrix,
    y: &[f64],
    start: Vec<f64>,
    max_iterations: usize,
    project: P,
    mut done: D,
) -> PgOutcome
where
    P: Fn(&[f64]) -> Vec<f64>,
    D: FnMut(&[f64], &[f64]) -> bool,
{
    let op = GramOperator::new(x);
    let c = x.tr_mul_vec(y);
    let yty = dot(y, y);
    // f(β) = βᵀGβ − 2cᵀβ + yᵀy, given Gβ.
    let objective = |b: &[f64], gb: &[f64]| dot(b, gb) - 2.0 * dot(&c, b) + yty;
    let gradient = |gb: &[f64]| -> Vec<f64> { gb.iter().zip(&c).map(|(g, ci)| 2.0 * (g - ci)).collect() };

    let mut lipschitz = (2.0 * op.spectral_norm()).max(f64::MIN_POSITIVE);
    let mut cur = project(&start);
    let mut g_cur = op.apply(&cur);
    let mut f_cur = objective(&cur, &g_cur);
    let mut ext = cur.clone();
    let mut g_ext = g_cur.clone();
    let mut t = 1.0_f64;

    let mut iterations = 0;
    while iterations < max_iterations {
        if iterations % 5 == 0 && done(&cur, &gradient(&g_cur)) {
            return PgOutcome { beta: cur, iterations, stopped_early: true };
        }
        iterations += 1;

        let grad_ext = gradient(&g_ext);
        let f_ext = objective(&ext, &g_ext);
        let (next, g_next, f_next) = loop {
            let step: Vec<f64> = ext.iter().zip(&grad_ext).map(|(e, g)| e - g / lipschitz).collect();
            let cand = project(&step);
            let d: Vec<f64> = cand.iter().zip(&ext).map(|(a, b)| a - b).collect();
            let g_cand = op.apply(&cand);
            let f_cand = objective(&cand, &g_cand);
            let model = f_ext + dot(&grad_ext, &d) + 0.5 * lipschitz * dot(&d, &d);
            if f_cand <= model + 1e-12 * f_ext.abs().max(1.0) || lipschitz > 1e300 {
                break (cand, g_cand, f_cand);
            }
            lipschitz *= 2.0;
        };

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let diff: Vec<f64> = next.iter().zip(&cur).map(|(a, b)| a - b).collect();
        let uphill = f_next > f_cur
            || dot(&ext.iter().zip(&next).map(|(e, n)| e - n).collect::<Vec<_>>(), &diff) > 0.0;
        if uphill {
            t = 1.0;
            ext = next.clone();
            g_ext = g_next.clone();
        } else {
            let m = (t - 1.0) / t_next;
            ext = next.iter().zip(&diff).map(|(n, d)| n + m * d).collect();
            g_ext = g_next
                .iter()
                .zip(&g_cur)
                .map(|(gn, gc)| gn + m * (gn - gc))
                .collect();
            t = t_next;
        }
        cur = next;
        g_cur = g_next;
        f_cur = f_next;
    }
    let stopped = done(&cur, &gradient(&g_cur));
    PgOutcome { beta: cur, iterations, stopped_early: stopped }
}
