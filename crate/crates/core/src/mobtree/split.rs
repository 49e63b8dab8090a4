use super::SplitRule;
use crate::data::{ColumnData, Dataset};
use crate::linmod::{DesignMatrix, LocalModel, Moments};

/// Node design rows shifted by their column means (intercept untouched),
/// which keeps the cross-product SSE numerically close to a direct refit.
fn centered(x: &DesignMatrix, y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.n_rows() as f64;
    let k = x.n_cols();
    let mut means = vec![0.0; k];
    for i in 0..x.n_rows() {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    means[0] = 0.0;
    let ym = y.iter().sum::<f64>() / n;
    let rows = (0..x.n_rows())
        .map(|i| x.row(i).iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    (rows, y.iter().map(|v| v - ym).collect())
}

/// Midpoint of two adjacent distinct values that still separates them.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Best feasible split of `rows` on column `var`, minimizing the summed SSE
/// of the two refitted child models. Both children need `min_node` rows.
/// Equal SSE keeps the first candidate (smallest threshold or shortest level
/// prefix).
#[allow(clippy::too_many_arguments)]
pub(crate) fn best_split(
    ds: &Dataset,
    rows: &[usize],
    var: usize,
    x: &DesignMatrix,
    y: &[f64],
    model: &LocalModel,
    min_node: usize,
    max_candidates: Option<usize>,
) -> Option<SplitRule> {
    let (xc, yc) = centered(x, y);
    let k = x.n_cols();
    let mut total = Moments::new(k);
    for (r, &v) in xc.iter().zip(&yc) {
        total.add(r, v);
    }
    match &ds.column(var).data {
        ColumnData::Numeric(values) => {
            let vals: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let n = rows.len();
            // cut positions t: left = order[..t]
            let cuts: Vec<usize> = (min_node..=n.saturating_sub(min_node))
                .filter(|&t| t > 0 && t < n && vals[order[t - 1]] < vals[order[t]])
                .collect();
            let cuts = thin(cuts, max_candidates);
            if cuts.is_empty() {
                return None;
            }
            let mut left = Moments::new(k);
            let mut added = 0;
            let mut best: Option<(f64, usize)> = None;
            for &t in &cuts {
                while added < t {
                    let i = order[added];
                    left.add(&xc[i], yc[i]);
                    added += 1;
                }
                let sse = left.sse() + total.minus(&left).sse();
                if best.is_none_or(|(b, _)| sse < b) {
                    best = Some((sse, t));
                }
            }
            let (_, t) = best?;
            Some(SplitRule::Threshold(midpoint(vals[order[t - 1]], vals[order[t]])))
        }
        ColumnData::Categorical { levels, codes } => {
            let l = levels.len();
            let mut per_level: Vec<Moments> = (0..l).map(|_| Moments::new(k)).collect();
            let mut resid_sum = vec![0.0; l];
            for (i, &r) in rows.iter().enumerate() {
                let c = codes[r] as usize;
                per_level[c].add(&xc[i], yc[i]);
                resid_sum[c] += y[i] - model.predict_row(x.row(i));
            }
            let mut present: Vec<usize> = (0..l).filter(|&c| per_level[c].n > 0).collect();
            if present.len() < 2 {
                return None;
            }
            let mean = |c: usize| resid_sum[c] / per_level[c].n as f64;
            present.sort_by(|&a, &b| mean(a).total_cmp(&mean(b)).then(a.cmp(&b)));
            let mut left = Moments::new(k);
            let mut best: Option<(f64, usize)> = None;
            for p in 1..present.len() {
                left.merge(&per_level[present[p - 1]]);
                let right_n = total.n - left.n;
                if left.n < min_node || right_n < min_node {
                    continue;
                }
                let sse = left.sse() + total.minus(&left).sse();
                if best.is_none_or(|(b, _)| sse < b) {
                    best = Some((sse, p));
                }
            }
            let (_, p) = best?;
            let mut chosen: Vec<usize> = present[..p].to_vec();
            chosen.sort_unstable();
            Some(SplitRule::Levels(chosen.into_iter().map(|c| levels[c].clone()).collect()))
        }
    }
}

/// Keeps at most `cap` evenly spaced entries.
fn thin(cuts: Vec<usize>, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(1) if !cuts.is_empty() => vec![cuts[cuts.len() / 2]],
        Some(c) if c > 1 && cuts.len() > c => (0..c).map(|i| cuts[i * (cuts.len() - 1) / (c - 1)]).collect(),
        _ => cuts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Role};
    use crate::linmod::{fit_ols, DesignSpec};

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }

    #[test]
    fn numeric_split_matches_brute_force() {
        let n = 40;
        let xv: Vec<f64> = (0..n).map(|i| ((i * 7) % n) as f64 / n as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 3) % 11) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| if xv[i] <= 0.3 { 1.0 + z[i] } else { 4.0 - 0.5 * z[i] } + ((i * 13) % 5) as f64 * 0.01)
            .collect();
        let ds = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, xv.clone()),
            Column::numeric("z", Role::Regression, z),
            Column::numeric("y", Role::Target, y.clone()),
        ])
        .unwrap();
        let rows = ds.all_rows();
        let spec = DesignSpec::regression(&ds);
        let x = spec.build(&ds, &rows).unwrap();
        let m = fit_ols(&x, &y);
        let Some(SplitRule::Threshold(t)) = best_split(&ds, &rows, 0, &x, &y, &m, 5, None) else {
            panic!("expected a threshold split");
        };
        let mut sorted = xv.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut best = (f64::INFINITY, 0.0);
        for w in sorted.windows(2) {
            let c = midpoint(w[0], w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| xv[i] <= c);
            if l.len() < 5 || r.len() < 5 {
                continue;
            }
            let sse = |rs: &[usize]| {
                let xm = spec.build(&ds, rs).unwrap();
                let ys: Vec<f64> = rs.iter().map(|&i| y[i]).collect();
                fit_ols(&xm, &ys).sse
            };
            let s = sse(&l) + sse(&r);
            if s < best.0 - 1e-9 {
                best = (s, c);
            }
        }
        assert_eq!(t, best.1);
    }

    #[test]
    fn thinning_keeps_ends() {
        let v: Vec<usize> = (0..100).collect();
        let t = thin(v, Some(5));
        assert_eq!(t.len(), 5);
        assert_eq!(t[0], 0);
        assert_eq!(*t.last().unwrap(), 99);
    }
}
