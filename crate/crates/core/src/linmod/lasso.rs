use super::{DesignMatrix, LocalModel};
use crate::error::{Error, Result};

/// Convergence threshold on the largest coefficient change per sweep
/// (standardized scale).
pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

struct Standardized {
    /// column-major, non-intercept columns only
    z: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn standardize(x: &DesignMatrix, y: &[f64]) -> Standardized {
    let n = x.n_rows() as f64;
    let mut z = Vec::with_capacity(x.n_cols().saturating_sub(1));
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for j in 1..x.n_cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let active = sd > 0.0 && sd > 1e-12 * scale;
        z.push(if active {
            col.iter().map(|v| (v - mean) / sd).collect()
        } else {
            vec![0.0; x.n_rows()]
        });
        means.push(mean);
        sds.push(if active { sd } else { 0.0 });
    }
    let y_mean = y.iter().sum::<f64>() / n;
    let yc = y.iter().map(|v| v - y_mean).collect();
    Standardized {
        z,
        means,
        sds,
        y_mean,
        yc,
    }
}

/// Smallest penalty at which every non-intercept coefficient is zero:
/// `max_j |z_j^T (y - ybar)| / n` over standardized columns.
pub fn lasso_lambda_max(x: &DesignMatrix, y: &[f64]) -> f64 {
    let s = standardize(x, y);
    let n = x.n_rows() as f64;
    s.z.iter()
        .map(|zj| (zj.iter().zip(&s.yc).map(|(a, b)| a * b).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

/// L1-penalized least squares by cyclic coordinate descent.
///
/// Minimizes `(1/2n) sum (y_i - theta^T x_i)^2 + lambda * sum_{j>=1} |theta_j|`
/// over standardized non-intercept columns with centered `y`, then maps the
/// coefficients back to the original scale. Constant columns get a zero
/// coefficient and are listed as dropped.
pub fn fit_lasso(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<LocalModel> {
    fit_lasso_traced(x, y, lambda).map(|(m, _)| m)
}

/// As [`fit_lasso`], also returning the penalized objective after each sweep.
pub fn fit_lasso_traced(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<(LocalModel, Vec<f64>)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    assert_eq!(y.len(), x.n_rows());
    let n = x.n_rows();
    let nf = n as f64;
    let s = standardize(x, y);
    let p = s.z.len();
    let active: Vec<bool> = s.sds.iter().map(|&sd| sd > 0.0).collect();

    let mut b = vec![0.0; p];
    let mut r = s.yc.clone();
    let objective = |r: &[f64], b: &[f64]| {
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut trace = vec![objective(&r, &b)];
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if !active[j] {
                continue;
            }
            let zj = &s.z[j];
            let rho = zj.iter().zip(&r).map(|(a, c)| a * c).sum::<f64>() / nf + b[j];
            let new = soft_threshold(rho, lambda);
            let delta = new - b[j];
            if delta != 0.0 {
                for (ri, zi) in r.iter_mut().zip(zj) {
                    *ri -= delta * zi;
                }
                b[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&r, &b));
        if max_change < LASSO_TOL {
            break;
        }
    }

    let mut theta = vec![0.0; x.n_cols()];
    let mut intercept = s.y_mean;
    let mut dropped = Vec::new();
    for j in 0..p {
        if active[j] {
            theta[j + 1] = b[j] / s.sds[j];
            intercept -= theta[j + 1] * s.means[j];
        } else {
            dropped.push(j + 1);
        }
    }
    theta[0] = intercept;
    let sse = (0..n)
        .map(|i| (y[i] - super::dot(&theta, x.row(i))).powi(2))
        .sum();
    Ok((
        LocalModel {
            theta,
            names: x.names().to_vec(),
            n_fit: n,
            sse,
            dropped,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::{fit_ols, INTERCEPT};
    use rand::{Rng, SeedableRng};

    fn random_design(seed: u64, n: usize, p: usize) -> (DesignMatrix, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((0..p).map(|_| rng.random::<f64>() * 4.0 - 1.0));
                r
            })
            .collect();
        let y = rows
            .iter()
            .map(|r| 0.7 + r[1..].iter().enumerate().map(|(j, v)| (j as f64 - 1.0) * v).sum::<f64>() + rng.random::<f64>())
            .collect();
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((1..=p).map(|j| format!("z{j}")));
        (DesignMatrix::from_rows(names, rows).unwrap(), y)
    }

    #[test]
    fn zero_penalty_is_ols() {
        let (x, y) = random_design(3, 60, 3);
        let ols = fit_ols(&x, &y);
        let lasso = fit_lasso(&x, &y, 0.0).unwrap();
        for (a, b) in ols.theta.iter().zip(&lasso.theta) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = random_design(4, 50, 4);
        let lmax = lasso_lambda_max(&x, &y);
        let m = fit_lasso(&x, &y, lmax).unwrap();
        assert!(m.theta[1..].iter().all(|&t| t == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.theta[0] - mean).abs() < 1e-12);
        // just below, something enters
        let m = fit_lasso(&x, &y, lmax * 0.99).unwrap();
        assert!(m.theta[1..].iter().any(|&t| t != 0.0));
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = random_design(5, 40, 5);
        let lmax = lasso_lambda_max(&x, &y);
        for frac in [0.0, 0.05, 0.3] {
            let (_, trace) = fit_lasso_traced(&x, &y, frac * lmax).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn negative_penalty_rejected() {
        let (x, y) = random_design(6, 10, 1);
        assert!(fit_lasso(&x, &y, -1.0).is_err());
    }
}
