//! Text serialization of trees.
//!
//! ```text
//! mobtree 1
//! target y
//! design 2
//! term intercept
//! term num z1
//! vars 1
//! var x1 num
//! leaves 2
//! split x1 le 5.0000000000000000e-1
//! leaf 1 250 250 1.2e0 2 1.0e0 2.0e0 0
//! leaf 2 ...
//! end
//! ```
//!
//! Nodes are written in preorder; a `split` line is followed by its left
//! and then its right subtree.

use super::{CartNode, MobLeaf, MobNode, MobTree, RegressionTree, SplitCondition, SplitRule, SplitVariable};
use crate::data::Kind;
use crate::error::Result;
use crate::linmod::{DesignSpec, LocalModel, Term};
use crate::textfmt::{fmt_f64, Line, TextReader, TextWriter};

const MOB_VERSION: &str = "1";
const CART_VERSION: &str = "1";

fn with_levels(mut toks: Vec<String>, levels: &[String]) -> Vec<String> {
    toks.push(levels.len().to_string());
    toks.extend(levels.iter().cloned());
    toks
}

fn read_levels(line: &mut Line) -> Result<Vec<String>> {
    let n = line.usize()?;
    line.strings(n)
}

fn write_vars(w: &mut TextWriter, vars: &[SplitVariable]) {
    w.line(["vars".to_string(), vars.len().to_string()]);
    for v in vars {
        let toks = vec!["var".to_string(), v.name.clone(), v.kind.as_str().to_string()];
        match v.kind {
            Kind::Numeric => w.line(toks),
            Kind::Categorical => w.line(with_levels(toks, &v.levels)),
        }
    }
}

fn read_vars(r: &mut TextReader) -> Result<Vec<SplitVariable>> {
    let mut head = r.expect("vars")?;
    let n = head.usize()?;
    head.finish()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = r.expect("var")?;
        let name = l.string()?;
        let kind_tok = l.string()?;
        let kind = Kind::parse(&kind_tok).ok_or_else(|| l.err(format!("unknown kind `{kind_tok}`")))?;
        let levels = match kind {
            Kind::Numeric => Vec::new(),
            Kind::Categorical => read_levels(&mut l)?,
        };
        l.finish()?;
        out.push(SplitVariable { name, kind, levels });
    }
    Ok(out)
}

fn split_tokens(c: &SplitCondition) -> Vec<String> {
    let toks = vec!["split".to_string(), c.variable.clone()];
    match &c.rule {
        SplitRule::Threshold(t) => {
            let mut toks = toks;
            toks.extend(["le".to_string(), fmt_f64(*t)]);
            toks
        }
        SplitRule::Levels(s) => {
            let mut toks = toks;
            toks.push("in".to_string());
            with_levels(toks, s)
        }
    }
}

fn parse_split(l: &mut Line) -> Result<SplitCondition> {
    let variable = l.string()?;
    let op = l.string()?;
    let rule = match op.as_str() {
        "le" => SplitRule::Threshold(l.f64()?),
        "in" => SplitRule::Levels(read_levels(l)?),
        _ => return Err(l.err(format!("unknown split operator `{op}`"))),
    };
    l.finish()?;
    Ok(SplitCondition { variable, rule })
}

pub(crate) fn write_design(w: &mut TextWriter, d: &DesignSpec) {
    w.line(["design".to_string(), d.terms().len().to_string()]);
    for t in d.terms() {
        match t {
            Term::Intercept => w.line(["term", "intercept"]),
            Term::Numeric(c) => w.line(["term", "num", c]),
            Term::Dummies { column, levels } => {
                w.line(with_levels(vec!["term".into(), "cat".into(), column.clone()], levels))
            }
        }
    }
}

pub(crate) fn read_design(r: &mut TextReader) -> Result<DesignSpec> {
    let mut head = r.expect("design")?;
    let n = head.usize()?;
    head.finish()?;
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = r.expect("term")?;
        let kind = l.string()?;
        terms.push(match kind.as_str() {
            "intercept" => Term::Intercept,
            "num" => Term::Numeric(l.string()?),
            "cat" => {
                let column = l.string()?;
                Term::Dummies {
                    column,
                    levels: read_levels(&mut l)?,
                }
            }
            _ => return Err(l.err(format!("unknown term `{kind}`"))),
        });
        l.finish()?;
    }
    Ok(DesignSpec::from_terms(terms))
}

pub(crate) fn model_tokens(m: &LocalModel) -> Vec<String> {
    let mut toks = vec![m.n_fit.to_string(), fmt_f64(m.sse), m.theta.len().to_string()];
    toks.extend(m.theta.iter().map(|&t| fmt_f64(t)));
    toks.push(m.dropped.len().to_string());
    toks.extend(m.dropped.iter().map(|d| d.to_string()));
    toks
}

pub(crate) fn parse_model(l: &mut Line, names: &[String]) -> Result<LocalModel> {
    let n_fit = l.usize()?;
    let sse = l.f64()?;
    let k = l.usize()?;
    if k != names.len() {
        return Err(l.err(format!("model has {k} coefficients, design has {}", names.len())));
    }
    let theta = (0..k).map(|_| l.f64()).collect::<Result<Vec<_>>>()?;
    let nd = l.usize()?;
    let dropped = (0..nd).map(|_| l.usize()).collect::<Result<Vec<_>>>()?;
    if dropped.iter().any(|&d| d >= k) {
        return Err(l.err("dropped column index out of range"));
    }
    Ok(LocalModel {
        theta,
        names: names.to_vec(),
        n_fit,
        sse,
        dropped,
    })
}

fn write_mob_node(w: &mut TextWriter, n: &MobNode) {
    match n {
        MobNode::Internal { condition, left, right } => {
            w.line(split_tokens(condition));
            write_mob_node(w, left);
            write_mob_node(w, right);
        }
        MobNode::Leaf(leaf) => {
            let mut toks = vec!["leaf".to_string(), leaf.leaf_id.to_string(), leaf.n_rows.to_string()];
            toks.extend(model_tokens(&leaf.model));
            w.line(toks);
        }
    }
}

fn read_mob_node(r: &mut TextReader, names: &[String]) -> Result<MobNode> {
    let mut l = r.next_line()?;
    match l.string()?.as_str() {
        "split" => {
            let condition = parse_split(&mut l)?;
            let left = read_mob_node(r, names)?;
            let right = read_mob_node(r, names)?;
            Ok(MobNode::Internal {
                condition,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        "leaf" => {
            let leaf_id = l.usize()?;
            let n_rows = l.usize()?;
            let model = parse_model(&mut l, names)?;
            l.finish()?;
            Ok(MobNode::Leaf(MobLeaf { leaf_id, model, n_rows }))
        }
        other => Err(l.err(format!("expected `split` or `leaf`, found `{other}`"))),
    }
}

pub(crate) fn write_mob_into(w: &mut TextWriter, t: &MobTree) {
    w.line(["mobtree", MOB_VERSION]);
    w.line(["target", &t.target]);
    write_design(w, &t.design);
    write_vars(w, &t.variables);
    w.line(["leaves".to_string(), t.n_leaves.to_string()]);
    write_mob_node(w, &t.root);
    w.line(["end"]);
}

pub(crate) fn read_mob_from(r: &mut TextReader) -> Result<MobTree> {
    let mut l = r.expect("mobtree")?;
    let v = l.string()?;
    if v != MOB_VERSION {
        return Err(l.err(format!("unsupported tree format version {v}")));
    }
    let mut l = r.expect("target")?;
    let target = l.string()?;
    l.finish()?;
    let design = read_design(r)?;
    let variables = read_vars(r)?;
    let mut l = r.expect("leaves")?;
    let n_leaves = l.usize()?;
    let root = read_mob_node(r, design.names())?;
    r.expect("end")?.finish()?;
    let tree = MobTree {
        root,
        design,
        target,
        variables,
        n_leaves,
    };
    let ids: Vec<usize> = tree.leaves().iter().map(|x| x.leaf_id).collect();
    if ids != (1..=n_leaves).collect::<Vec<_>>() {
        return Err(l.err("leaf ids are not 1..j in depth-first order"));
    }
    Ok(tree)
}

pub(crate) fn write_mob(t: &MobTree) -> String {
    let mut w = TextWriter::new();
    write_mob_into(&mut w, t);
    w.finish()
}

pub(crate) fn read_mob(text: &str) -> Result<MobTree> {
    let mut r = TextReader::new(text);
    let t = read_mob_from(&mut r)?;
    if !r.is_done() {
        return Err(r.peek()?.err("trailing content after tree"));
    }
    Ok(t)
}

fn write_cart_node(w: &mut TextWriter, n: &CartNode) {
    match n {
        CartNode::Internal { condition, left, right } => {
            w.line(split_tokens(condition));
            write_cart_node(w, left);
            write_cart_node(w, right);
        }
        CartNode::Leaf { leaf_id, value, n_rows } => {
            w.line(["leaf".to_string(), leaf_id.to_string(), n_rows.to_string(), fmt_f64(*value)])
        }
    }
}

fn read_cart_node(r: &mut TextReader) -> Result<CartNode> {
    let mut l = r.next_line()?;
    match l.string()?.as_str() {
        "split" => {
            let condition = parse_split(&mut l)?;
            let left = read_cart_node(r)?;
            let right = read_cart_node(r)?;
            Ok(CartNode::Internal {
                condition,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        "leaf" => {
            let leaf_id = l.usize()?;
            let n_rows = l.usize()?;
            let value = l.f64()?;
            l.finish()?;
            Ok(CartNode::Leaf { leaf_id, value, n_rows })
        }
        other => Err(l.err(format!("expected `split` or `leaf`, found `{other}`"))),
    }
}

pub(crate) fn write_cart_into(w: &mut TextWriter, t: &RegressionTree) {
    w.line(["cart", CART_VERSION]);
    w.line(["target", &t.target]);
    write_vars(w, &t.inputs);
    w.line(["leaves".to_string(), t.n_leaves.to_string()]);
    write_cart_node(w, &t.root);
    w.line(["end"]);
}

pub(crate) fn read_cart_from(r: &mut TextReader) -> Result<RegressionTree> {
    let mut l = r.expect("cart")?;
    let v = l.string()?;
    if v != CART_VERSION {
        return Err(l.err(format!("unsupported tree format version {v}")));
    }
    let mut l = r.expect("target")?;
    let target = l.string()?;
    l.finish()?;
    let inputs = read_vars(r)?;
    let mut l = r.expect("leaves")?;
    let n_leaves = l.usize()?;
    l.finish()?;
    let root = read_cart_node(r)?;
    r.expect("end")?.finish()?;
    Ok(RegressionTree {
        root,
        target,
        inputs,
        n_leaves,
    })
}

pub(crate) fn write_cart(t: &RegressionTree) -> String {
    let mut w = TextWriter::new();
    write_cart_into(&mut w, t);
    w.finish()
}

pub(crate) fn read_cart(text: &str) -> Result<RegressionTree> {
    let mut r = TextReader::new(text);
    let t = read_cart_from(&mut r)?;
    if !r.is_done() {
        return Err(r.peek()?.err("trailing content after tree"));
    }
    Ok(t)
}
