//! Lawson–Hanson active-set method.

use super::{finalize, NnlsSolution};
use crate::linalg::{least_squares_columns, DesignMatrix};

pub(super) fn solve(x: &DesignMatrix, y: &[f64], tol: f64, max_iterations: usize) -> NnlsSolution {
    let p = x.p();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let mut beta = vec![0.0; p];
    let mut passive = vec![false; p];
    let mut excluded = vec![false; p];
    let mut rank_deficient = false;
    let mut iterations = 0;

    let residual = |beta: &[f64]| -> Vec<f64> {
        let fit = x.mul_vec(beta);
        y.iter().zip(fit).map(|(yi, fi)| yi - fi).collect()
    };
    // w = Xᵀ(y − Xβ) is the negative gradient (up to the factor 2).
    let mut w = x.tr_mul_vec(&residual(&beta));

    while iterations < max_iterations {
        // Entering index: largest w_j among zero-set coordinates, lowest index on ties.
        let mut entering = None;
        let mut best = tol;
        for j in 0..p {
            if !passive[j] && !excluded[j] && w[j] > best {
                best = w[j];
                entering = Some(j);
            }
        }
        let Some(j) = entering else {
            break;
        };
        iterations += 1;
        passive[j] = true;

        let mut first_inner = true;
        loop {
            let idx: Vec<usize> = (0..p).filter(|&k| passive[k]).collect();
            let cols: Vec<Vec<f64>> = idx.iter().map(|&k| columns[k].clone()).collect();
            let ls = least_squares_columns(&cols, y);
            if ls.rank < idx.len() {
                rank_deficient = true;
            }
            let mut z = vec![0.0; p];
            for (&k, &c) in idx.iter().zip(&ls.coef) {
                z[k] = c;
            }

            if first_inner && z[j] <= 0.0 {
                // Numerically the entering column cannot move; skip it this round.
                passive[j] = false;
                excluded[j] = true;
                break;
            }
            first_inner = false;

            if idx.iter().all(|&k| z[k] > 0.0) {
                beta = z;
                excluded.iter_mut().for_each(|e| *e = false);
                break;
            }

            // Step from β toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = idx[0];
            for &k in &idx {
                if z[k] <= 0.0 {
                    let a = beta[k] / (beta[k] - z[k]);
                    if a < alpha {
                        alpha = a;
                        blocking = k;
                    }
                }
            }
            for &k in &idx {
                beta[k] += alpha * (z[k] - beta[k]);
            }
            beta[blocking] = 0.0;
            for &k in &idx {
                if beta[k] <= 0.0 {
                    beta[k] = 0.0;
                    passive[k] = false;
                }
            }
            excluded.iter_mut().for_each(|e| *e = false);
        }
        w = x.tr_mul_vec(&residual(&beta));
    }

    for b in beta.iter_mut() {
        if *b < 0.0 {
            *b = 0.0;
        }
    }
    let pending = (0..p).any(|j| !passive[j] && !excluded[j] && w[j] > tol);
    let mut sol = finalize(x, y, beta, iterations, tol);
    sol.rank_deficient = rank_deficient;
    sol.converged &= !pending;
    sol
}
