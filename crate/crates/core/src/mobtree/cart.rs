use super::split::midpoint;
use super::{SplitCondition, SplitRule, SplitVariable};
use crate::data::{ColumnData, Dataset, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CartConfig {
    /// `None` grows until the other limits stop it.
    pub max_depth: Option<usize>,
    /// Minimum number of rows in each child.
    pub min_node_size: usize,
    /// A split must reduce SSE by more than `cp` times the root SSE.
    pub cp: f64,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: None,
            min_node_size: 7,
            cp: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CartNode {
    Internal {
        condition: SplitCondition,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
    Leaf {
        leaf_id: usize,
        value: f64,
        n_rows: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub root: CartNode,
    pub target: String,
    pub inputs: Vec<SplitVariable>,
    pub n_leaves: usize,
}

struct Candidate {
    gain: f64,
    rule: SplitRule,
    var: usize,
}

fn sse_of(sum: f64, sum2: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum2 - sum * sum / n as f64).max(0.0)
    }
}

fn best_for_column(ds: &Dataset, col: usize, rows: &[usize], yc: &[f64], min_node: usize) -> Option<(f64, SplitRule)> {
    let n = rows.len();
    let tot: f64 = yc.iter().sum();
    let tot2: f64 = yc.iter().map(|v| v * v).sum();
    let parent = sse_of(tot, tot2, n);
    match &ds.column(col).data {
        ColumnData::Numeric(values) => {
            let vals: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let (mut s, mut s2) = (0.0, 0.0);
            let mut best: Option<(f64, usize)> = None;
            for t in 1..n {
                let i = order[t - 1];
                s += yc[i];
                s2 += yc[i] * yc[i];
                if t < min_node || n - t < min_node || vals[order[t - 1]] == vals[order[t]] {
                    continue;
                }
                let gain = parent - sse_of(s, s2, t) - sse_of(tot - s, tot2 - s2, n - t);
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, t));
                }
            }
            let (g, t) = best?;
            Some((g, SplitRule::Threshold(midpoint(vals[order[t - 1]], vals[order[t]]))))
        }
        ColumnData::Categorical { levels, codes } => {
            let l = levels.len();
            let mut cnt = vec![0usize; l];
            let mut s = vec![0.0; l];
            let mut s2 = vec![0.0; l];
            for (i, &r) in rows.iter().enumerate() {
                let c = codes[r] as usize;
                cnt[c] += 1;
                s[c] += yc[i];
                s2[c] += yc[i] * yc[i];
            }
            let mut present: Vec<usize> = (0..l).filter(|&c| cnt[c] > 0).collect();
            present.sort_by(|&a, &b| (s[a] / cnt[a] as f64).total_cmp(&(s[b] / cnt[b] as f64)).then(a.cmp(&b)));
            let (mut ln, mut ls, mut ls2) = (0usize, 0.0, 0.0);
            let mut best: Option<(f64, usize)> = None;
            for p in 1..present.len() {
                let c = present[p - 1];
                ln += cnt[c];
                ls += s[c];
                ls2 += s2[c];
                if ln < min_node || n - ln < min_node {
                    continue;
                }
                let gain = parent - sse_of(ls, ls2, ln) - sse_of(tot - ls, tot2 - ls2, n - ln);
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, p));
                }
            }
            let (g, p) = best?;
            let mut chosen = present[..p].to_vec();
            chosen.sort_unstable();
            Some((g, SplitRule::Levels(chosen.into_iter().map(|c| levels[c].clone()).collect())))
        }
    }
}

struct Builder<'a> {
    ds: &'a Dataset,
    cfg: &'a CartConfig,
    inputs: Vec<usize>,
    root_sse: f64,
}

impl Builder<'_> {
    fn node(&self, rows: &[usize], depth: usize) -> Result<CartNode> {
        let y = self.ds.target_values();
        let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let leaf = CartNode::Leaf {
            leaf_id: 0,
            value: mean,
            n_rows: rows.len(),
        };
        let at_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if at_limit || rows.len() < 2 * self.cfg.min_node_size || ys.iter().all(|&v| v == ys[0]) || self.root_sse <= 0.0 {
            return Ok(leaf);
        }
        let yc: Vec<f64> = ys.iter().map(|v| v - mean).collect();
        let mut best: Option<Candidate> = None;
        for &c in &self.inputs {
            if let Some((gain, rule)) = best_for_column(self.ds, c, rows, &yc, self.cfg.min_node_size) {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { gain, rule, var: c });
                }
            }
        }
        let Some(best) = best else { return Ok(leaf) };
        if best.gain / self.root_sse <= self.cfg.cp {
            return Ok(leaf);
        }
        let condition = SplitCondition {
            variable: self.ds.column(best.var).name.clone(),
            rule: best.rule,
        };
        let mask = condition.goes_left(self.ds, rows)?;
        let mut l = Vec::new();
        let mut r = Vec::new();
        for (&row, go) in rows.iter().zip(mask) {
            if go {
                l.push(row);
            } else {
                r.push(row);
            }
        }
        Ok(CartNode::Internal {
            condition,
            left: Box::new(self.node(&l, depth + 1)?),
            right: Box::new(self.node(&r, depth + 1)?),
        })
    }
}

fn number(node: &mut CartNode, next: &mut usize) {
    match node {
        CartNode::Leaf { leaf_id, .. } => {
            *next += 1;
            *leaf_id = *next;
        }
        CartNode::Internal { left, right, .. } => {
            number(left, next);
            number(right, next);
        }
    }
}

/// Grows a least-squares regression tree over every partitioning and
/// regression column.
///
/// The split with the largest SSE reduction is taken while that reduction
/// exceeds `cp` times the SSE of the root; leaves predict their mean.
pub fn grow_cart(ds: &Dataset, rows: &[usize], cfg: &CartConfig) -> Result<RegressionTree> {
    if cfg.min_node_size == 0 {
        return Err(Error::Config("min_node_size must be at least 1".into()));
    }
    if !(cfg.cp >= 0.0) {
        return Err(Error::Config(format!("cp {} must be >= 0", cfg.cp)));
    }
    if rows.len() < cfg.min_node_size || rows.is_empty() {
        return Err(Error::TooFewRows {
            needed: cfg.min_node_size.max(1),
            got: rows.len(),
        });
    }
    let inputs: Vec<usize> = (0..ds.columns().len())
        .filter(|&c| matches!(ds.column(c).role, Role::Partitioning | Role::Regression))
        .collect();
    let y = ds.target_values();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    let root_sse = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    let builder = Builder {
        ds,
        cfg,
        inputs: inputs.clone(),
        root_sse,
    };
    let mut root = builder.node(rows, 0)?;
    let mut n_leaves = 0;
    number(&mut root, &mut n_leaves);
    Ok(RegressionTree {
        root,
        target: ds.target().name.clone(),
        inputs: inputs
            .iter()
            .map(|&c| {
                let col = ds.column(c);
                SplitVariable {
                    name: col.name.clone(),
                    kind: col.kind(),
                    levels: col.levels().map(<[String]>::to_vec).unwrap_or_default(),
                }
            })
            .collect(),
        n_leaves,
    })
}

impl RegressionTree {
    pub fn leaf_ids(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let mut out = vec![0; ds.n_rows()];
        self.route(ds, |r, id, _| out[r] = id)?;
        Ok(out)
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let mut out = vec![0.0; ds.n_rows()];
        self.route(ds, |r, _, v| out[r] = v)?;
        Ok(out)
    }

    fn route(&self, ds: &Dataset, mut f: impl FnMut(usize, usize, f64)) -> Result<()> {
        let mut stack = vec![(&self.root, ds.all_rows())];
        while let Some((node, rows)) = stack.pop() {
            match node {
                CartNode::Leaf { leaf_id, value, .. } => rows.iter().for_each(|&r| f(r, *leaf_id, *value)),
                CartNode::Internal { condition, left, right } => {
                    let mask = condition.goes_left(ds, &rows)?;
                    let (l, r): (Vec<(usize, bool)>, Vec<(usize, bool)>) = rows.into_iter().zip(mask).partition(|p| p.1);
                    stack.push((left, l.into_iter().map(|p| p.0).collect()));
                    stack.push((right, r.into_iter().map(|p| p.0).collect()));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        super::serial::write_cart(self)
    }

    pub fn from_text(text: &str) -> Result<RegressionTree> {
        super::serial::read_cart(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn data(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        let n = x.len();
        Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, x),
            Column::numeric("z", Role::Regression, (0..n).map(|i| (i % 3) as f64).collect()),
            Column::numeric("y", Role::Target, y),
        ])
        .unwrap()
    }

    #[test]
    fn zero_cp_interpolates_distinct_inputs() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 17) % 50) as f64).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 31) % 7) as f64 + i as f64 * 0.1).collect();
        let ds = data(x, y.clone());
        let cfg = CartConfig {
            min_node_size: 1,
            ..Default::default()
        };
        let t = grow_cart(&ds, &ds.all_rows(), &cfg).unwrap();
        assert_eq!(t.predict(&ds).unwrap(), y);
    }

    #[test]
    fn cp_one_is_the_mean() {
        let ds = data((0..20).map(f64::from).collect(), (0..20).map(|i| (i * i) as f64).collect());
        let cfg = CartConfig {
            cp: 1.0,
            min_node_size: 1,
            ..Default::default()
        };
        let t = grow_cart(&ds, &ds.all_rows(), &cfg).unwrap();
        assert_eq!(t.n_leaves, 1);
        let mean = ds.target_values().iter().sum::<f64>() / 20.0;
        assert!(t.predict(&ds).unwrap().iter().all(|&p| (p - mean).abs() < 1e-12));
    }

    #[test]
    fn leaf_ids_depth_first() {
        let ds = data((0..40).map(f64::from).collect(), (0..40).map(|i| (i / 10) as f64).collect());
        let t = grow_cart(&ds, &ds.all_rows(), &CartConfig::default()).unwrap();
        let ids = t.leaf_ids(&ds).unwrap();
        assert_eq!(ids[0], 1);
        assert_eq!(ids[39], t.n_leaves);
        assert!(ids.windows(2).all(|w| w[0] <= w[1]));
    }
}
