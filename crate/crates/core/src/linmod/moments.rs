/// Cross-product accumulator `[X y]^T [X y]` for fast refits during split
/// search.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    k: usize,
    /// Packed `(k + 1) x (k + 1)` symmetric matrix, y in the last slot.
    m: Vec<f64>,
    pub n: usize,
}

impl Moments {
    pub fn new(k: usize) -> Self {
        Moments {
            k,
            m: vec![0.0; (k + 1) * (k + 1)],
            n: 0,
        }
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        let d = self.k + 1;
        for a in 0..d {
            let va = if a < self.k { x[a] } else { y };
            if va == 0.0 {
                continue;
            }
            for b in a..d {
                let vb = if b < self.k { x[b] } else { y };
                self.m[a * d + b] += va * vb;
            }
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Moments) {
        for (a, b) in self.m.iter_mut().zip(&other.m) {
            *a += b;
        }
        self.n += other.n;
    }

    pub fn minus(&self, other: &Moments) -> Moments {
        Moments {
            k: self.k,
            m: self.m.iter().zip(&other.m).map(|(a, b)| a - b).collect(),
            n: self.n - other.n,
        }
    }

    /// Residual sum of squares of the least-squares fit on the accumulated rows.
    pub fn sse(&self) -> f64 {
        let d = self.k + 1;
        let mut full = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                full[a * d + b] = self.m[a * d + b];
                full[b * d + a] = self.m[a * d + b];
            }
        }
        sweep_sse(&mut full, self.k)
    }
}

/// Sweeps the `k` regressor pivots of the augmented cross-product matrix
/// (size `(k+1)^2`, row-major) and returns the residual sum of squares left
/// in the corner. Pivots whose current diagonal has fallen below `1e-10` of
/// the original are skipped as aliased.
pub fn sweep_sse(m: &mut [f64], k: usize) -> f64 {
    let d = k + 1;
    let orig: Vec<f64> = (0..k).map(|j| m[j * d + j]).collect();
    for p in 0..k {
        let piv = m[p * d + p];
        if !(piv > 1e-10 * orig[p]) || piv <= 0.0 {
            continue;
        }
        // only rows/cols not yet swept need updating for the corner value
        for a in 0..d {
            if a == p {
                continue;
            }
            let f = m[a * d + p] / piv;
            if f == 0.0 {
                continue;
            }
            for b in 0..d {
                if b == p {
                    continue;
                }
                m[a * d + b] -= f * m[p * d + b];
            }
        }
        for b in 0..d {
            m[p * d + b] = 0.0;
            m[b * d + p] = 0.0;
        }
    }
    m[d * d - 1].max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::{fit_ols, DesignMatrix, INTERCEPT};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_qr_sse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..25)
                .map(|_| {
                    let a = rng.random::<f64>();
                    vec![1.0, a, 2.0 * a, rng.random::<f64>()]
                })
                .collect();
            let y: Vec<f64> = rows.iter().map(|r| r[1] - r[3] + rng.random::<f64>()).collect();
            let names = vec![INTERCEPT.into(), "a".into(), "b".into(), "c".into()];
            let x = DesignMatrix::from_rows(names, rows.clone()).unwrap();
            let qr = fit_ols(&x, &y).sse;
            let mut mo = Moments::new(4);
            for (r, &yi) in rows.iter().zip(&y) {
                mo.add(r, yi);
            }
            assert!((mo.sse() - qr).abs() < 1e-9 * (1.0 + qr), "{} vs {qr}", mo.sse());
        }
    }

    #[test]
    fn minus_undoes_merge() {
        let mut a = Moments::new(2);
        a.add(&[1.0, 2.0], 3.0);
        let mut b = Moments::new(2);
        b.add(&[1.0, 5.0], 1.0);
        let mut ab = a.clone();
        ab.merge(&b);
        assert_eq!(ab.minus(&b), a);
        assert_eq!(ab.n, 2);
    }
}
