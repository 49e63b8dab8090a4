use super::{DesignMatrix, LocalModel};

/// Relative tolerance for declaring a column aliased.
const RANK_TOL: f64 = 1e-10;

/// Least squares by Householder QR with column pivoting.
///
/// The intercept is always the first pivot. Among the remaining columns the
/// one with the largest residual norm is taken next; once every residual
/// norm falls to `1e-10 * max column norm` the rest are declared aliased,
/// dropped, and given a zero coefficient.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> LocalModel {
    let n = x.n_rows();
    let k = x.n_cols();
    assert_eq!(y.len(), n, "target length must match design rows");

    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| x.column(j)).collect();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();

    let norm2 = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>();
    let max_norm = a.iter().map(|c| norm2(c).sqrt()).fold(0.0, f64::max);
    let tol = RANK_TOL * max_norm;

    let mut rank = 0;
    for j in 0..k.min(n) {
        let pivot = if j == 0 {
            0
        } else {
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..k {
                let nr = norm2(&a[c][j..]);
                if nr > best_norm {
                    best_norm = nr;
                    best = c;
                }
            }
            best
        };
        let pnorm = norm2(&a[pivot][j..]).sqrt();
        if pnorm <= tol {
            break;
        }
        a.swap(j, pivot);
        perm.swap(j, pivot);

        // Householder reflector zeroing a[j][j+1..]
        let alpha = if a[j][j] > 0.0 { -pnorm } else { pnorm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2 = norm2(&v);
        if vnorm2 > 0.0 {
            let apply = |col: &mut [f64]| {
                let s: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
                let f = 2.0 * s / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            };
            for c in a.iter_mut().skip(j + 1) {
                apply(&mut c[j..]);
            }
            apply(&mut qty[j..]);
        }
        a[j][j] = alpha;
        for t in a[j][j + 1..].iter_mut() {
            *t = 0.0;
        }
        rank = j + 1;
    }

    // back substitution on the leading rank x rank block
    let mut b = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for (c, bc) in b.iter().enumerate().skip(i + 1) {
            s -= a[c][i] * bc;
        }
        b[i] = s / a[i][i];
    }

    let mut theta = vec![0.0; k];
    for (i, &bi) in b.iter().enumerate() {
        theta[perm[i]] = bi;
    }
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();

    let sse = (0..n)
        .map(|i| {
            let r = y[i] - super::dot(&theta, x.row(i));
            r * r
        })
        .sum();

    LocalModel {
        theta,
        names: x.names().to_vec(),
        n_fit: n,
        sse,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::{predict, score_contributions, INTERCEPT};
    use rand::{Rng, SeedableRng};

    fn design(rows: Vec<Vec<f64>>) -> DesignMatrix {
        let k = rows[0].len();
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((1..k).map(|j| format!("z{j}")));
        DesignMatrix::from_rows(names, rows).unwrap()
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let y = [1.0, 2.0, 6.0];
        let x = design(vec![vec![1.0]; 3]);
        let m = fit_ols(&x, &y);
        assert!((m.theta[0] - 3.0).abs() < 1e-14);
        assert!((m.sse - 14.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_exact_linear_relation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let beta = [0.5, -2.0, 3.25];
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![1.0, rng.random::<f64>() * 10.0, rng.random::<f64>() - 0.5])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| crate::linmod::dot(&beta, r)).collect();
        let m = fit_ols(&design(rows), &y);
        for (t, b) in m.theta.iter().zip(beta) {
            assert!((t - b).abs() < 1e-10, "{t} vs {b}");
        }
        assert!(m.sse < 1e-12 * 40.0);
        assert!(m.dropped.is_empty());
    }

    #[test]
    fn duplicated_column_is_dropped_without_changing_predictions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let base: Vec<Vec<f64>> = (0..30).map(|_| vec![1.0, rng.random::<f64>()]).collect();
        let y: Vec<f64> = base.iter().map(|r| 2.0 * r[1] + rng.random::<f64>()).collect();
        let dup: Vec<Vec<f64>> = base.iter().map(|r| vec![1.0, r[1], r[1]]).collect();
        let single = fit_ols(&design(base.clone()), &y);
        let double = fit_ols(&design(dup.clone()), &y);
        assert_eq!(double.dropped.len(), 1);
        assert_eq!(double.theta[double.dropped[0]], 0.0);
        let p1 = predict(&single, &design(base)).unwrap();
        let p2 = predict(&double, &design(dup)).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_regressor_keeps_the_intercept() {
        // a regressor constant at 80 is aliased with the intercept
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 80.0]).collect();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let m = fit_ols(&design(rows), &y);
        assert_eq!(m.dropped, [1]);
        assert!((m.theta[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn zero_column_and_more_columns_than_rows() {
        let rows = vec![vec![1.0, 0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0, 1.0]];
        let m = fit_ols(&design(rows), &[1.0, 2.0]);
        assert!(m.dropped.contains(&1));
        assert!(m.sse < 1e-20);
        assert!(m.theta.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn scores_vanish_for_a_perfect_fit() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| 1.0 + 2.0 * i as f64).collect();
        let x = design(rows);
        let m = fit_ols(&x, &y);
        let s = score_contributions(&m, &x, &y).unwrap();
        assert!(s.data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn intercept_scores_are_centered_residuals() {
        let y = [1.0, 4.0, 7.0, 0.5];
        let x = design(vec![vec![1.0]; 4]);
        let m = fit_ols(&x, &y);
        let s = score_contributions(&m, &x, &y).unwrap();
        let mean = 12.5 / 4.0;
        for (i, yi) in y.iter().enumerate() {
            assert!((s.row(i)[0] - (yi - mean)).abs() < 1e-12);
        }
        assert!(s.column_sums()[0].abs() < 1e-12);
    }
}
