//! Model-based recursive partitioning.
//!
//! Each node fits a linear model on the regression columns, tests its
//! parameters for instability along every candidate partitioning column, and
//! splits on the most unstable one at the point that minimizes the summed
//! child SSE. A plain regression tree is included as a baseline.

mod cart;
mod serial;
mod split;

pub use cart::{grow_cart, CartConfig, CartNode, RegressionTree};
pub(crate) use serial::{model_tokens, parse_model, read_cart_from, read_design, read_mob_from, write_cart_into, write_design, write_mob_into};

use crate::data::{ColumnData, Dataset, Kind};
use crate::error::{Error, Result};
use crate::linmod::{fit_ols, score_contributions, DesignSpec, LocalModel};
use crate::rules::{Atom, Relation};
use crate::seed::derive_seed;
use crate::stability::{select_split_variable, StabilityConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Rows with value `<=` the threshold go left.
    Threshold(f64),
    /// Rows whose level is in the set go left; every other level, including
    /// levels never seen in training, goes right.
    Levels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCondition {
    pub variable: String,
    pub rule: SplitRule,
}

impl SplitCondition {
    /// Atoms describing the left and right branches.
    pub fn atoms(&self) -> (Atom, Atom) {
        let v = &self.variable;
        match &self.rule {
            SplitRule::Threshold(t) => (Atom::le(v.clone(), *t), Atom::gt(v.clone(), *t)),
            SplitRule::Levels(s) => (
                Atom::new(v.clone(), Relation::In(s.clone())),
                Atom::new(v.clone(), Relation::NotIn(s.clone())),
            ),
        }
    }

    /// Per-row branch (`true` = left) over the given rows.
    pub(crate) fn goes_left(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<bool>> {
        let col = ds.column_by_name(&self.variable)?;
        match (&col.data, &self.rule) {
            (ColumnData::Numeric(v), SplitRule::Threshold(t)) => Ok(rows.iter().map(|&r| v[r] <= *t).collect()),
            (ColumnData::Categorical { levels, codes }, SplitRule::Levels(s)) => {
                let left: Vec<bool> = levels.iter().map(|l| s.contains(l)).collect();
                Ok(rows.iter().map(|&r| left[codes[r] as usize]).collect())
            }
            _ => Err(Error::ColumnMismatch(format!(
                "split variable `{}` has a different type in this dataset",
                self.variable
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobLeaf {
    pub leaf_id: usize,
    pub model: LocalModel,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobNode {
    Internal {
        condition: SplitCondition,
        left: Box<MobNode>,
        right: Box<MobNode>,
    },
    Leaf(MobLeaf),
}

/// A partitioning column the tree was allowed to split on.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitVariable {
    pub name: String,
    pub kind: Kind,
    /// Full level list for categorical columns.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobConfig {
    pub max_depth: usize,
    pub min_node_size: usize,
    pub stability: StabilityConfig,
    /// Cap on candidate thresholds per numeric variable; `None` scans every
    /// midpoint.
    pub max_split_candidates: Option<usize>,
}

impl Default for MobConfig {
    fn default() -> Self {
        MobConfig {
            max_depth: 5,
            min_node_size: 20,
            stability: StabilityConfig::default(),
            max_split_candidates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobTree {
    pub root: MobNode,
    pub design: DesignSpec,
    pub target: String,
    pub variables: Vec<SplitVariable>,
    pub n_leaves: usize,
}

/// Leaf path conjunction and model.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRule {
    pub leaf_id: usize,
    pub atoms: Vec<Atom>,
    pub model: LocalModel,
}

struct Grower<'a> {
    ds: &'a Dataset,
    cfg: &'a MobConfig,
    design: DesignSpec,
    candidates: Vec<usize>,
    y: &'a [f64],
}

impl Grower<'_> {
    fn node(&self, rows: &[usize], depth: usize, seed: u64) -> Result<MobNode> {
        let x = self.design.build(self.ds, rows)?;
        let y: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
        let model = fit_ols(&x, &y);
        let leaf = |model: LocalModel| {
            MobNode::Leaf(MobLeaf {
                leaf_id: 0,
                model,
                n_rows: rows.len(),
            })
        };
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_node_size || model.sse <= 1e-20 * yy {
            return Ok(leaf(model));
        }
        let scores = score_contributions(&model, &x, &y)?;
        let stability = StabilityConfig {
            seed,
            ..self.cfg.stability.clone()
        };
        let selection = select_split_variable(&scores, self.ds, rows, &self.candidates, &stability);
        for &var in &selection.significant {
            let found = split::best_split(
                self.ds,
                rows,
                var,
                &x,
                &y,
                &model,
                self.cfg.min_node_size,
                self.cfg.max_split_candidates,
            );
            if let Some(rule) = found {
                let condition = SplitCondition {
                    variable: self.ds.column(var).name.clone(),
                    rule,
                };
                let left_mask = condition.goes_left(self.ds, rows)?;
                let (l, r): (Vec<(usize, bool)>, Vec<(usize, bool)>) =
                    rows.iter().copied().zip(left_mask).partition(|&(_, b)| b);
                let l: Vec<usize> = l.into_iter().map(|(i, _)| i).collect();
                let r: Vec<usize> = r.into_iter().map(|(i, _)| i).collect();
                let left = self.node(&l, depth + 1, derive_seed(seed, &[1]))?;
                let right = self.node(&r, depth + 1, derive_seed(seed, &[2]))?;
                return Ok(MobNode::Internal {
                    condition,
                    left: Box::new(left),
                    right: Box::new(right),
                });
            }
        }
        Ok(leaf(model))
    }
}

fn number_leaves(node: &mut MobNode, next: &mut usize) {
    match node {
        MobNode::Leaf(l) => {
            *next += 1;
            l.leaf_id = *next;
        }
        MobNode::Internal { left, right, .. } => {
            number_leaves(left, next);
            number_leaves(right, next);
        }
    }
}

/// Grows a tree on `rows` using every partitioning column as a candidate.
pub fn grow(ds: &Dataset, rows: &[usize], cfg: &MobConfig) -> Result<MobTree> {
    grow_with(ds, rows, cfg, &ds.partitioning())
}

/// Grows a tree that may only split on the given columns.
pub fn grow_with(ds: &Dataset, rows: &[usize], cfg: &MobConfig, candidates: &[usize]) -> Result<MobTree> {
    cfg.stability.validate()?;
    let design = DesignSpec::regression(ds);
    if cfg.min_node_size < design.width() + 1 {
        return Err(Error::Config(format!(
            "min_node_size {} is below the {} needed for a {}-coefficient leaf model",
            cfg.min_node_size,
            design.width() + 1,
            design.width()
        )));
    }
    if rows.len() < cfg.min_node_size {
        return Err(Error::TooFewRows {
            needed: cfg.min_node_size,
            got: rows.len(),
        });
    }
    let variables = candidates
        .iter()
        .map(|&c| {
            let col = ds.column(c);
            SplitVariable {
                name: col.name.clone(),
                kind: col.kind(),
                levels: col.levels().map(<[String]>::to_vec).unwrap_or_default(),
            }
        })
        .collect();
    let grower = Grower {
        ds,
        cfg,
        design: design.clone(),
        candidates: candidates.to_vec(),
        y: ds.target_values(),
    };
    let mut root = grower.node(rows, 0, cfg.stability.seed)?;
    let mut n_leaves = 0;
    number_leaves(&mut root, &mut n_leaves);
    Ok(MobTree {
        root,
        design,
        target: ds.target().name.clone(),
        variables,
        n_leaves,
    })
}

impl MobTree {
    pub fn leaves(&self) -> Vec<&MobLeaf> {
        fn walk<'a>(n: &'a MobNode, out: &mut Vec<&'a MobLeaf>) {
            match n {
                MobNode::Leaf(l) => out.push(l),
                MobNode::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.n_leaves);
        walk(&self.root, &mut out);
        out
    }

    pub fn leaf(&self, leaf_id: usize) -> Option<&MobLeaf> {
        self.leaves().into_iter().find(|l| l.leaf_id == leaf_id)
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &MobNode) -> usize {
            match n {
                MobNode::Leaf(_) => 0,
                MobNode::Internal { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Variable used at the root split, if any.
    pub fn root_split(&self) -> Option<&SplitCondition> {
        match &self.root {
            MobNode::Internal { condition, .. } => Some(condition),
            MobNode::Leaf(_) => None,
        }
    }

    /// Leaf id of every row of `ds`.
    pub fn leaf_ids(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let mut out = vec![0; ds.n_rows()];
        route(&self.root, ds, &ds.all_rows(), &mut |rows, leaf| {
            for &r in rows {
                out[r] = leaf.leaf_id;
            }
        })?;
        Ok(out)
    }

    /// Leaf id of a single row.
    pub fn assign_leaf(&self, ds: &Dataset, row: usize) -> Result<usize> {
        let mut node = &self.root;
        loop {
            match node {
                MobNode::Leaf(l) => return Ok(l.leaf_id),
                MobNode::Internal { condition, left, right } => {
                    node = if condition.goes_left(ds, &[row])?[0] { left } else { right };
                }
            }
        }
    }

    /// Prediction of the assigned leaf's model for every row.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let mut out = vec![0.0; ds.n_rows()];
        let mut err = None;
        route(&self.root, ds, &ds.all_rows(), &mut |rows, leaf| {
            if err.is_some() {
                return;
            }
            match self.design.build(ds, rows) {
                Ok(x) => {
                    for (i, &r) in rows.iter().enumerate() {
                        out[r] = leaf.model.predict_row(x.row(i));
                    }
                }
                Err(e) => err = Some(e),
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Path conjunction of every leaf, in leaf order.
    pub fn extract_rules(&self) -> Vec<LeafRule> {
        fn walk(n: &MobNode, path: &mut Vec<Atom>, out: &mut Vec<LeafRule>) {
            match n {
                MobNode::Leaf(l) => out.push(LeafRule {
                    leaf_id: l.leaf_id,
                    atoms: path.clone(),
                    model: l.model.clone(),
                }),
                MobNode::Internal { condition, left, right } => {
                    let (la, ra) = condition.atoms();
                    path.push(la);
                    walk(left, path, out);
                    path.pop();
                    path.push(ra);
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn to_text(&self) -> String {
        serial::write_mob(self)
    }

    pub fn from_text(text: &str) -> Result<MobTree> {
        serial::read_mob(text)
    }
}

/// Predicts one row of `ds` with the leaf it falls in.
pub fn predict_mob(tree: &MobTree, ds: &Dataset, row: usize) -> Result<f64> {
    let id = tree.assign_leaf(ds, row)?;
    let leaf = tree
        .leaf(id)
        .ok_or_else(|| Error::Invariant(format!("leaf {id} missing")))?;
    let x = tree.design.build(ds, &[row])?;
    Ok(leaf.model.predict_row(x.row(0)))
}

fn route<'a>(
    node: &'a MobNode,
    ds: &Dataset,
    rows: &[usize],
    visit: &mut dyn FnMut(&[usize], &'a MobLeaf),
) -> Result<()> {
    match node {
        MobNode::Leaf(l) => {
            visit(rows, l);
            Ok(())
        }
        MobNode::Internal { condition, left, right } => {
            let mask = condition.goes_left(ds, rows)?;
            let mut l = Vec::new();
            let mut r = Vec::new();
            for (&row, go_left) in rows.iter().zip(mask) {
                if go_left {
                    l.push(row);
                } else {
                    r.push(row);
                }
            }
            route(left, ds, &l, visit)?;
            route(right, ds, &r, visit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_subgroups, Column, Role, SynthSpec};
    use crate::linmod::INTERCEPT;
    use crate::rules::Expr;

    fn two_region(seed: u64, n: usize, noise: f64) -> Dataset {
        synth_subgroups(&SynthSpec::preset("two", n, noise, seed).unwrap())
            .unwrap()
            .dataset
    }

    #[test]
    fn depth_zero_is_pooled_ols() {
        let ds = two_region(1, 200, 0.1);
        let cfg = MobConfig {
            max_depth: 0,
            ..Default::default()
        };
        let tree = grow(&ds, &ds.all_rows(), &cfg).unwrap();
        assert_eq!(tree.n_leaves, 1);
        let x = tree.design.build(&ds, &ds.all_rows()).unwrap();
        let pooled = fit_ols(&x, ds.target_values());
        assert_eq!(tree.leaves()[0].model, pooled);
    }

    #[test]
    fn recovers_planted_split_exactly_without_noise() {
        let ds = two_region(2, 300, 0.0);
        let tree = grow(&ds, &ds.all_rows(), &MobConfig::default()).unwrap();
        let root = tree.root_split().unwrap();
        assert_eq!(root.variable, "x1");
        let pred = tree.predict(&ds).unwrap();
        for (p, y) in pred.iter().zip(ds.target_values()) {
            assert!((p - y).abs() < 1e-9);
        }
    }

    #[test]
    fn leaf_ids_are_depth_first_and_rules_cohere() {
        let ds = two_region(3, 400, 0.1);
        let tree = grow(&ds, &ds.all_rows(), &MobConfig::default()).unwrap();
        let ids: Vec<usize> = tree.leaves().iter().map(|l| l.leaf_id).collect();
        assert_eq!(ids, (1..=tree.n_leaves).collect::<Vec<_>>());
        let assigned = tree.leaf_ids(&ds).unwrap();
        for rule in tree.extract_rules() {
            let mask = Expr::conjunction(rule.atoms.clone()).evaluate(&ds).unwrap();
            for (r, &m) in mask.iter().enumerate() {
                assert_eq!(m, assigned[r] == rule.leaf_id);
            }
        }
        for r in [0, 17, 399] {
            assert_eq!(tree.assign_leaf(&ds, r).unwrap(), assigned[r]);
            let p = predict_mob(&tree, &ds, r).unwrap();
            assert_eq!(p, tree.predict(&ds).unwrap()[r]);
        }
    }

    #[test]
    fn unseen_level_goes_right() {
        let y: Vec<f64> = (0..60).map(|i| if i < 30 { 0.0 } else { 5.0 } + (i % 7) as f64 * 0.01).collect();
        let labels: Vec<&str> = (0..60).map(|i| if i < 30 { "a" } else { "b" }).collect();
        let z: Vec<f64> = (0..60).map(|i| (i % 5) as f64).collect();
        let ds = Dataset::new(vec![
            Column::from_labels("g", Role::Partitioning, &labels),
            Column::numeric("z", Role::Regression, z.clone()),
            Column::numeric("y", Role::Target, y),
        ])
        .unwrap();
        let tree = grow(&ds, &ds.all_rows(), &MobConfig::default()).unwrap();
        assert_eq!(tree.n_leaves, 2);
        let other = Dataset::new(vec![
            Column::from_labels("g", Role::Partitioning, &["zzz"]),
            Column::numeric("z", Role::Regression, vec![1.0]),
            Column::numeric("y", Role::Target, vec![0.0]),
        ])
        .unwrap();
        let right_id = match &tree.root {
            MobNode::Internal { right, .. } => match right.as_ref() {
                MobNode::Leaf(l) => l.leaf_id,
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        assert_eq!(tree.assign_leaf(&other, 0).unwrap(), right_id);
    }

    #[test]
    fn min_node_size_floor() {
        let ds = two_region(4, 100, 0.1);
        let cfg = MobConfig {
            min_node_size: 2,
            ..Default::default()
        };
        assert!(matches!(grow(&ds, &ds.all_rows(), &cfg), Err(Error::Config(_))));
        assert!(matches!(
            grow(&ds, &[0, 1, 2], &MobConfig::default()),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn missing_condition_variable_errors() {
        let ds = two_region(5, 300, 0.0);
        let tree = grow(&ds, &ds.all_rows(), &MobConfig::default()).unwrap();
        let stripped = Dataset::new(vec![
            Column::numeric("x2", Role::Partitioning, vec![0.1]),
            Column::numeric("z1", Role::Regression, vec![0.1]),
            Column::numeric("y", Role::Target, vec![0.1]),
        ])
        .unwrap();
        assert!(matches!(tree.assign_leaf(&stripped, 0), Err(Error::MissingFeature(_))));
        assert_eq!(tree.design.names()[0], INTERCEPT);
    }
}
