//! Euclidean projections onto the non-negative orthant and (capped) simplices.

/// Clips negative entries to zero.
pub fn project_nonnegative(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Projection onto `{β ≥ 0, Σβ = radius}` by the sorting threshold rule.
pub fn project_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    debug_assert!(radius >= 0.0);
    if radius == 0.0 || v.is_empty() {
        return vec![0.0; v.len()];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{β ≥ 0, Σβ ≤ radius}`.
pub fn project_capped_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    let mut clipped = v.to_vec();
    project_nonnegative(&mut clipped);
    if clipped.iter().sum::<f64>() <= radius {
        clipped
    } else {
        project_simplex(v, radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5], 1.0), vec![0.2, 0.3, 0.5]);
        let p = project_simplex(&[2.0, 0.0], 1.0);
        assert_eq!(p, vec![1.0, 0.0]);
        let p = project_simplex(&[1.0, 1.0], 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(project_capped_simplex(&[0.1, -3.0], 1.0), vec![0.1, 0.0]);
        assert_eq!(project_capped_simplex(&[5.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    proptest! {
        // The projection is the closest feasible point: no random feasible
        // point and no small feasible perturbation does better.
        #[test]
        fn capped_projection_is_closest(
            v in proptest::collection::vec(-3.0f64..3.0, 1..8),
            radius in 0.01f64..4.0,
            probes in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 8), 20),
        ) {
            let p = project_capped_simplex(&v, radius);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!(p.iter().sum::<f64>() <= radius * (1.0 + 1e-12));
            let best = sq_dist(&p, &v);
            for probe in probes {
                let mut q: Vec<f64> = probe[..v.len()].to_vec();
                let s: f64 = q.iter().sum();
                if s > radius {
                    q.iter_mut().for_each(|x| *x *= radius / s);
                }
                prop_assert!(sq_dist(&q, &v) >= best - 1e-12);
            }
        }
    }
}
