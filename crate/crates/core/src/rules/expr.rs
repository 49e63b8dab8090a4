use crate::data::{ColumnData, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Relation {
    Le(f64),
    Gt(f64),
    In(Vec<String>),
    NotIn(Vec<String>),
    Eq(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub feature: String,
    pub relation: Relation,
}

impl Atom {
    pub fn new(feature: impl Into<String>, relation: Relation) -> Self {
        Atom {
            feature: feature.into(),
            relation,
        }
    }

    pub fn le(feature: impl Into<String>, v: f64) -> Self {
        Atom::new(feature, Relation::Le(v))
    }

    pub fn gt(feature: impl Into<String>, v: f64) -> Self {
        Atom::new(feature, Relation::Gt(v))
    }

    pub fn eq(feature: impl Into<String>, level: impl Into<String>) -> Self {
        Atom::new(feature, Relation::Eq(level.into()))
    }

    fn is_numeric(&self) -> bool {
        matches!(self.relation, Relation::Le(_) | Relation::Gt(_))
    }

    /// Truth value on every row of `ds`.
    pub fn evaluate(&self, ds: &Dataset) -> Result<Vec<bool>> {
        let col = ds.column_by_name(&self.feature)?;
        match (&col.data, &self.relation) {
            (ColumnData::Numeric(v), Relation::Le(t)) => Ok(v.iter().map(|x| x <= t).collect()),
            (ColumnData::Numeric(v), Relation::Gt(t)) => Ok(v.iter().map(|x| x > t).collect()),
            (ColumnData::Categorical { levels, codes }, rel) if !self.is_numeric() => {
                let hit: Vec<bool> = levels
                    .iter()
                    .map(|l| match rel {
                        Relation::In(s) => s.contains(l),
                        Relation::NotIn(s) => !s.contains(l),
                        Relation::Eq(e) => e == l,
                        _ => unreachable!(),
                    })
                    .collect();
                Ok(codes.iter().map(|&c| hit[c as usize]).collect())
            }
            _ => Err(Error::ColumnMismatch(format!(
                "atom on `{}` does not match the column type",
                self.feature
            ))),
        }
    }
}

/// Boolean expression over atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    True,
    False,
    Atom(Atom),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    /// Conjunction, collapsing the empty and singleton cases.
    pub fn and(mut items: Vec<Expr>) -> Expr {
        match items.len() {
            0 => Expr::True,
            1 => items.pop().unwrap(),
            _ => Expr::And(items),
        }
    }

    /// Disjunction, collapsing the empty and singleton cases.
    pub fn or(mut items: Vec<Expr>) -> Expr {
        match items.len() {
            0 => Expr::False,
            1 => items.pop().unwrap(),
            _ => Expr::Or(items),
        }
    }

    pub fn conjunction(atoms: Vec<Atom>) -> Expr {
        Expr::and(atoms.into_iter().map(Expr::Atom).collect())
    }

    /// Row mask of the expression on `ds`.
    pub fn evaluate(&self, ds: &Dataset) -> Result<Vec<bool>> {
        let n = ds.n_rows();
        match self {
            Expr::True => Ok(vec![true; n]),
            Expr::False => Ok(vec![false; n]),
            Expr::Atom(a) => a.evaluate(ds),
            Expr::And(xs) => {
                let mut acc = vec![true; n];
                for x in xs {
                    for (a, b) in acc.iter_mut().zip(x.evaluate(ds)?) {
                        *a &= b;
                    }
                }
                Ok(acc)
            }
            Expr::Or(xs) => {
                let mut acc = vec![false; n];
                for x in xs {
                    for (a, b) in acc.iter_mut().zip(x.evaluate(ds)?) {
                        *a |= b;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Names of all features the expression mentions, first appearance order.
    pub fn features(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Atom(a) => {
                    if !out.contains(&a.feature.as_str()) {
                        out.push(&a.feature);
                    }
                }
                Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| walk(x, out)),
                Expr::True | Expr::False => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Indices of the rows on which `expr` holds.
pub fn members(expr: &Expr, ds: &Dataset) -> Result<Vec<usize>> {
    Ok(expr
        .evaluate(ds)?
        .into_iter()
        .enumerate()
        .filter_map(|(i, b)| b.then_some(i))
        .collect())
}
