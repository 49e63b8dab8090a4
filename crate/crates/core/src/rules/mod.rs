//! IF-THEN rules over raw and encoded features.
//!
//! A leaf of a tree trained on layer `l` is described by a conjunction over
//! that layer's encoded columns. Each `T = R_k` atom stands for the path of
//! leaf `k` of tree `T` one layer down, so the rule can be rewritten,
//! recursively, into an equivalent expression over the raw inputs.

mod expr;
mod simplify;
mod text;

use std::collections::HashMap;

pub use expr::{members, Atom, Expr, Relation};
pub use simplify::{simplify, simplify_conjunction};
pub use text::{parse_expr, parse_rule, render_atom, render_expr, render_name, render_outcome, render_rule};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{parse_encoded_name, parse_leaf_level, RuleForest};
use crate::linmod::LocalModel;
use crate::mobtree::MobTree;

/// Right-hand side of a rule: a linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub target: String,
    pub intercept: f64,
    pub terms: Vec<(f64, String)>,
}

impl Outcome {
    /// Intercept plus every coefficient that was not dropped as aliased.
    pub fn from_model(target: &str, m: &LocalModel) -> Self {
        Outcome {
            target: target.to_string(),
            intercept: m.theta[0],
            terms: (1..m.theta.len())
                .filter(|j| !m.dropped.contains(j))
                .map(|j| (m.theta[j], m.names[j].clone()))
                .collect(),
        }
    }

    pub fn constant(target: &str, value: f64) -> Self {
        Outcome {
            target: target.to_string(),
            intercept: value,
            terms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub condition: Expr,
    pub outcome: Outcome,
}

impl Rule {
    pub fn render(&self) -> String {
        render_rule(self)
    }
}

/// Rule of leaf `leaf_id` of a tree trained on layer `layer`.
///
/// At layers above 0 the tree's partitioning columns are encoded, and level
/// atoms are written as disjunctions of equalities over the tree's level
/// list (`T = R_1 OR T = R_3`).
pub fn leaf_to_layered_rule(tree: &MobTree, leaf_id: usize, layer: usize) -> Result<Rule> {
    let rule = tree
        .extract_rules()
        .into_iter()
        .find(|r| r.leaf_id == leaf_id)
        .ok_or_else(|| Error::Invalid(format!("tree has no leaf {leaf_id}")))?;
    let mut items = Vec::with_capacity(rule.atoms.len());
    for a in rule.atoms {
        let expr = match (&a.relation, layer) {
            (Relation::In(s), l) if l > 0 => equalities(&a.feature, s),
            (Relation::NotIn(s), l) if l > 0 => {
                let var = tree
                    .variables
                    .iter()
                    .find(|v| v.name == a.feature)
                    .ok_or_else(|| Error::Invariant(format!("split on unknown variable `{}`", a.feature)))?;
                let rest: Vec<String> = var.levels.iter().filter(|l| !s.contains(l)).cloned().collect();
                equalities(&a.feature, &rest)
            }
            _ => Expr::Atom(a),
        };
        items.push(expr);
    }
    Ok(Rule {
        condition: Expr::and(items),
        outcome: Outcome::from_model(&tree.target, &rule.model),
    })
}

fn equalities(feature: &str, levels: &[String]) -> Expr {
    Expr::or(levels.iter().map(|l| Expr::Atom(Atom::eq(feature, l.clone()))).collect())
}

/// Rewrites encoded-feature atoms into raw-feature logic using the stored
/// forests (`layers[l - 1]` produced the columns `T_l_*`).
pub struct Expander<'a> {
    layers: &'a [RuleForest],
    cache: HashMap<(usize, usize, usize), Expr>,
}

impl<'a> Expander<'a> {
    pub fn new(layers: &'a [RuleForest]) -> Self {
        Expander {
            layers,
            cache: HashMap::new(),
        }
    }

    fn tree(&self, feature: &str) -> Option<(usize, usize, &'a MobTree)> {
        let (l, t) = parse_encoded_name(feature)?;
        let forest = self.layers.get(l.checked_sub(1)?)?;
        Some((l, t, forest.trees.get(t - 1)?))
    }

    fn leaf(&mut self, layer: usize, t: usize, tree: &MobTree, level: &str) -> Result<Expr> {
        let k = parse_leaf_level(level)
            .filter(|&k| k <= tree.n_leaves)
            .ok_or_else(|| Error::Invalid(format!("dangling reference T_{layer}_{t} = {level}")))?;
        if let Some(e) = self.cache.get(&(layer, t, k)) {
            return Ok(e.clone());
        }
        let rule = tree
            .extract_rules()
            .into_iter()
            .find(|r| r.leaf_id == k)
            .ok_or_else(|| Error::Invariant(format!("leaf {k} missing from T_{layer}_{t}")))?;
        let path = Expr::conjunction(rule.atoms);
        let expanded = self.expand(&path)?;
        self.cache.insert((layer, t, k), expanded.clone());
        Ok(expanded)
    }

    fn atom(&mut self, a: &Atom) -> Result<Expr> {
        let Some((layer, t, tree)) = self.tree(&a.feature) else {
            if parse_encoded_name(&a.feature).is_some() {
                return Err(Error::Invalid(format!("dangling reference to `{}`", a.feature)));
            }
            return Ok(Expr::Atom(a.clone()));
        };
        let all: Vec<String> = (1..=tree.n_leaves).map(crate::forest::leaf_level).collect();
        let chosen: Vec<String> = match &a.relation {
            Relation::Eq(l) => vec![l.clone()],
            Relation::In(s) => s.clone(),
            Relation::NotIn(s) => all.iter().filter(|l| !s.contains(l)).cloned().collect(),
            Relation::Le(_) | Relation::Gt(_) => {
                return Err(Error::Invalid(format!("numeric atom on encoded feature `{}`", a.feature)))
            }
        };
        let parts = chosen
            .iter()
            .map(|l| self.leaf(layer, t, tree, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Expr::or(parts))
    }

    pub fn expand(&mut self, e: &Expr) -> Result<Expr> {
        Ok(match e {
            Expr::True | Expr::False => e.clone(),
            Expr::Atom(a) => self.atom(a)?,
            Expr::And(xs) => Expr::And(xs.iter().map(|x| self.expand(x)).collect::<Result<_>>()?),
            Expr::Or(xs) => Expr::Or(xs.iter().map(|x| self.expand(x)).collect::<Result<_>>()?),
        })
    }
}

/// Expression over raw features equivalent to `expr`.
pub fn expand_rule(expr: &Expr, layers: &[RuleForest]) -> Result<Expr> {
    Expander::new(layers).expand(expr)
}

/// Human-facing description of one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupReport {
    pub leaf_id: usize,
    pub layer: usize,
    pub layered: Rule,
    pub expanded: Rule,
    pub simplified: Option<Rule>,
    pub members: usize,
    pub fraction: f64,
}

impl SubgroupReport {
    pub fn render(&self, n_rows: usize) -> String {
        let mut s = format!(
            "leaf R_{}: {} of {} rows ({:.4})\n",
            self.leaf_id, self.members, n_rows, self.fraction
        );
        s.push_str(&format!("layered: {}\n", self.layered.render()));
        s.push_str(&format!("expanded: {}\n", self.expanded.render()));
        if let Some(r) = &self.simplified {
            s.push_str(&format!("simplified: {}\n", r.render()));
        }
        s
    }
}

/// Reports for every leaf of a final tree trained on layer `layer`.
///
/// `raw` is the reference data with the original columns and `repr` the same
/// rows transformed to `layer`. Both rule forms are evaluated and must select
/// the same rows; with `simplify` the simplified rule must too. A mismatch is
/// an internal error.
pub fn subgroup_reports(
    tree: &MobTree,
    layer: usize,
    layers: &[RuleForest],
    raw: &Dataset,
    repr: &Dataset,
    with_simplified: bool,
) -> Result<Vec<SubgroupReport>> {
    let mut ex = Expander::new(layers);
    let mut out = Vec::with_capacity(tree.n_leaves);
    for leaf in tree.leaves() {
        let layered = leaf_to_layered_rule(tree, leaf.leaf_id, layer)?;
        let expanded = Rule {
            condition: ex.expand(&layered.condition)?,
            outcome: layered.outcome.clone(),
        };
        let m_layered = layered.condition.evaluate(repr)?;
        let m_expanded = expanded.condition.evaluate(raw)?;
        if m_layered != m_expanded {
            return Err(Error::Invariant(format!(
                "expanded rule of leaf R_{} selects different rows",
                leaf.leaf_id
            )));
        }
        let simplified = if with_simplified {
            let r = Rule {
                condition: simplify(&expanded.condition),
                outcome: expanded.outcome.clone(),
            };
            if r.condition.evaluate(raw)? != m_expanded {
                return Err(Error::Invariant(format!(
                    "simplification changed the members of leaf R_{}",
                    leaf.leaf_id
                )));
            }
            Some(r)
        } else {
            None
        };
        let members = m_layered.iter().filter(|&&b| b).count();
        out.push(SubgroupReport {
            leaf_id: leaf.leaf_id,
            layer,
            layered,
            expanded,
            simplified,
            members,
            fraction: if raw.n_rows() == 0 { 0.0 } else { members as f64 / raw.n_rows() as f64 },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_subgroups, SynthSpec};
    use crate::forest::{compose_layer_input, encode, train_forest, PatchSpec};
    use crate::mobtree::{grow, MobConfig};

    #[test]
    fn single_leaf_tree_gives_true() {
        let ds = synth_subgroups(&SynthSpec::preset("one", 100, 0.1, 1).unwrap())
            .unwrap()
            .dataset;
        let tree = grow(
            &ds,
            &ds.all_rows(),
            &MobConfig {
                max_depth: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let r = leaf_to_layered_rule(&tree, 1, 0).unwrap();
        assert_eq!(r.condition, Expr::True);
        assert!(leaf_to_layered_rule(&tree, 2, 0).is_err());
    }

    #[test]
    fn two_layer_expansion_is_equivalent() {
        let ds = synth_subgroups(&SynthSpec::preset("xor2", 300, 0.1, 2).unwrap())
            .unwrap()
            .dataset;
        let cfg = MobConfig {
            max_depth: 3,
            ..Default::default()
        };
        let f = train_forest(&ds, &ds.all_rows(), 5, &cfg, &PatchSpec::default(), 1).unwrap();
        let l1 = compose_layer_input(&encode(&f, &ds).unwrap(), &ds).unwrap();
        let tree = grow(&l1, &l1.all_rows(), &cfg).unwrap();
        let layers = [f];
        let reports = subgroup_reports(&tree, 1, &layers, &ds, &l1, true).unwrap();
        assert_eq!(reports.iter().map(|r| r.members).sum::<usize>(), ds.n_rows());
        for r in &reports {
            for f in r.expanded.condition.features() {
                assert!(parse_encoded_name(f).is_none());
            }
        }
    }

    #[test]
    fn dangling_reference_errors() {
        let e = Expr::Atom(Atom::eq("T_4_1", "R_1"));
        assert!(expand_rule(&e, &[]).is_err());
        let raw = Expr::Atom(Atom::le("x1", 0.5));
        assert_eq!(expand_rule(&raw, &[]).unwrap(), raw);
    }
}
