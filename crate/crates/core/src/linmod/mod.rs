//! Local linear models.
//!
//! Leaf models are least-squares fits over a design built from the
//! regression columns: an intercept, numeric regressors as-is, and every
//! categorical regressor dummy-coded against its first level.

mod lasso;
mod moments;
mod ols;

pub use lasso::{fit_lasso, fit_lasso_traced, lasso_lambda_max, LASSO_MAX_SWEEPS, LASSO_TOL};
pub use moments::{Moments, sweep_sse};
pub use ols::fit_ols;

use std::collections::HashMap;

use crate::data::{ColumnData, Dataset};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Intercept,
    Numeric(String),
    /// All levels of the column; the first is the reference.
    Dummies { column: String, levels: Vec<String> },
}

/// Recipe for turning dataset rows into design rows.
///
/// Categorical levels are matched by name, so a spec learned on one dataset
/// applies to another whose level lists are ordered differently. A level the
/// spec has never seen encodes as the reference level (all dummies zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    terms: Vec<Term>,
    names: Vec<String>,
}

impl DesignSpec {
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut names = Vec::new();
        for t in &terms {
            match t {
                Term::Intercept => names.push(INTERCEPT.to_string()),
                Term::Numeric(c) => names.push(c.clone()),
                Term::Dummies { column, levels } => {
                    names.extend(levels.iter().skip(1).map(|l| dummy_name(column, l)))
                }
            }
        }
        DesignSpec { terms, names }
    }

    /// Intercept plus the given columns, in the given order.
    pub fn new(ds: &Dataset, columns: &[usize]) -> Self {
        let mut terms = vec![Term::Intercept];
        for &c in columns {
            let col = ds.column(c);
            terms.push(match &col.data {
                ColumnData::Numeric(_) => Term::Numeric(col.name.clone()),
                ColumnData::Categorical { levels, .. } => Term::Dummies {
                    column: col.name.clone(),
                    levels: levels.clone(),
                },
            });
        }
        DesignSpec::from_terms(terms)
    }

    /// Design over the regression columns of `ds`.
    pub fn regression(ds: &Dataset) -> Self {
        DesignSpec::new(ds, &ds.regression())
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Source column and level behind each design column (`None` for the
    /// intercept and numeric terms' level).
    pub fn sources(&self) -> Vec<(Option<&str>, Option<&str>)> {
        let mut out = Vec::with_capacity(self.width());
        for t in &self.terms {
            match t {
                Term::Intercept => out.push((None, None)),
                Term::Numeric(c) => out.push((Some(c.as_str()), None)),
                Term::Dummies { column, levels } => {
                    out.extend(levels.iter().skip(1).map(|l| (Some(column.as_str()), Some(l.as_str()))))
                }
            }
        }
        out
    }

    pub fn build(&self, ds: &Dataset, rows: &[usize]) -> Result<DesignMatrix> {
        if rows.is_empty() {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let bound = self.bind(ds)?;
        let k = self.width();
        let mut data = vec![0.0; rows.len() * k];
        for (i, &r) in rows.iter().enumerate() {
            bound.fill_row(r, &mut data[i * k..(i + 1) * k]);
        }
        Ok(DesignMatrix {
            names: self.names.clone(),
            n: rows.len(),
            k,
            data,
        })
    }

    fn bind<'a>(&'a self, ds: &'a Dataset) -> Result<BoundDesign<'a>> {
        let mut parts = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            parts.push(match t {
                Term::Intercept => BoundTerm::Intercept,
                Term::Numeric(name) => {
                    let col = ds.column_by_name(name)?;
                    BoundTerm::Numeric(col.as_numeric().ok_or_else(|| {
                        Error::ColumnMismatch(format!("`{name}` is expected to be numeric"))
                    })?)
                }
                Term::Dummies { column, levels } => {
                    let col = ds.column_by_name(column)?;
                    let (ds_levels, codes) = match &col.data {
                        ColumnData::Categorical { levels, codes } => (levels, codes),
                        _ => {
                            return Err(Error::ColumnMismatch(format!(
                                "`{column}` is expected to be categorical"
                            )))
                        }
                    };
                    let pos: HashMap<&str, usize> =
                        levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                    // dataset level code -> dummy offset (None for reference / unseen)
                    let map = ds_levels
                        .iter()
                        .map(|l| pos.get(l.as_str()).and_then(|&i| i.checked_sub(1)))
                        .collect();
                    BoundTerm::Dummies {
                        codes,
                        map,
                        width: levels.len().saturating_sub(1),
                    }
                }
            });
        }
        Ok(BoundDesign { parts })
    }
}

pub(crate) fn dummy_name(column: &str, level: &str) -> String {
    format!("{column}_{level}")
}

enum BoundTerm<'a> {
    Intercept,
    Numeric(&'a [f64]),
    Dummies {
        codes: &'a [u32],
        map: Vec<Option<usize>>,
        width: usize,
    },
}

struct BoundDesign<'a> {
    parts: Vec<BoundTerm<'a>>,
}

impl BoundDesign<'_> {
    fn fill_row(&self, r: usize, out: &mut [f64]) {
        let mut j = 0;
        for p in &self.parts {
            match p {
                BoundTerm::Intercept => {
                    out[j] = 1.0;
                    j += 1;
                }
                BoundTerm::Numeric(v) => {
                    out[j] = v[r];
                    j += 1;
                }
                BoundTerm::Dummies { codes, map, width } => {
                    out[j..j + width].fill(0.0);
                    if let Some(off) = map[codes[r] as usize] {
                        out[j + off] = 1.0;
                    }
                    j += width;
                }
            }
        }
    }
}

/// Dense row-major design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    /// Wraps row-major data; column 0 must be all ones.
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = names.len();
        let n = rows.len();
        if k == 0 || n == 0 {
            return Err(Error::Invalid("empty design".into()));
        }
        let mut data = Vec::with_capacity(n * k);
        for r in rows {
            if r.len() != k {
                return Err(Error::ColumnMismatch(format!("row of width {} for {k} names", r.len())));
            }
            if r[0] != 1.0 {
                return Err(Error::Invalid("first design column must be the intercept".into()));
            }
            data.extend(r);
        }
        Ok(DesignMatrix { names, n, k, data })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.k
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// A fitted linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub theta: Vec<f64>,
    pub names: Vec<String>,
    pub n_fit: usize,
    pub sse: f64,
    /// Columns removed as aliased; their coefficients are zero.
    pub dropped: Vec<usize>,
}

impl LocalModel {
    /// Intercept-only model predicting `value`.
    pub fn constant(value: f64, names: Vec<String>) -> Self {
        let mut theta = vec![0.0; names.len()];
        theta[0] = value;
        let dropped = (1..names.len()).collect();
        LocalModel {
            theta,
            names,
            n_fit: 0,
            sse: 0.0,
            dropped,
        }
    }

    pub fn dropped_names(&self) -> Vec<&str> {
        self.dropped.iter().map(|&j| self.names[j].as_str()).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        dot(&self.theta, x)
    }

    fn check(&self, x: &DesignMatrix) -> Result<()> {
        if self.names != x.names {
            return Err(Error::ColumnMismatch(format!(
                "model columns {:?} vs design columns {:?}",
                self.names, x.names
            )));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn predict(m: &LocalModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    m.check(x)?;
    Ok((0..x.n).map(|i| m.predict_row(x.row(i))).collect())
}

/// Per-observation score contributions, row-major `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub n: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for i in 0..self.n {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }
}

/// Row `i` is `(y_i - yhat_i) * x_i`, the negative half-gradient of the
/// squared loss at the fitted coefficients.
pub fn score_contributions(m: &LocalModel, x: &DesignMatrix, y: &[f64]) -> Result<ScoreMatrix> {
    m.check(x)?;
    if y.len() != x.n {
        return Err(Error::ColumnMismatch(format!("{} targets for {} rows", y.len(), x.n)));
    }
    let mut data = Vec::with_capacity(x.n * x.k);
    for (i, &yi) in y.iter().enumerate() {
        let row = x.row(i);
        let r = yi - m.predict_row(row);
        data.extend(row.iter().map(|v| r * v));
    }
    Ok(ScoreMatrix {
        n: x.n,
        k: x.k,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Role};

    fn ds_with_education() -> Dataset {
        let levels = [
            "illiteracy",
            "literacy",
            "elementary",
            "junior_high",
            "senior_high",
            "college",
        ];
        let labels: Vec<&str> = (0..12).map(|i| levels[i % 6]).collect();
        Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, (0..12).map(f64::from).collect()),
            Column::numeric("age", Role::Regression, (0..12).map(|i| 60.0 + i as f64).collect()),
            Column::from_labels("education", Role::Regression, &labels),
            Column::numeric("y", Role::Target, vec![1.0; 12]),
        ])
        .unwrap()
    }

    #[test]
    fn one_numeric_regressor() {
        let ds = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, vec![0.0, 1.0, 2.0]),
            Column::numeric("z", Role::Regression, vec![3.0, 4.0, 5.0]),
            Column::numeric("y", Role::Target, vec![0.0; 3]),
        ])
        .unwrap();
        let x = DesignSpec::regression(&ds).build(&ds, &[0, 1, 2]).unwrap();
        assert_eq!((x.n_rows(), x.n_cols()), (3, 2));
        assert_eq!(x.row(1), [1.0, 4.0]);
    }

    #[test]
    fn six_level_education_gives_six_coefficients() {
        let ds = ds_with_education();
        let spec = DesignSpec::new(&ds, &[ds.index_of("education").unwrap()]);
        assert_eq!(spec.width(), 6);
        assert_eq!(spec.names()[1], "education_literacy");
        let x = spec.build(&ds, &[0, 2]).unwrap();
        // reference level absorbed into the intercept
        assert_eq!(x.row(0), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(x.row(1), [1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn intercept_only_design() {
        let ds = ds_with_education();
        let x = DesignSpec::new(&ds, &[]).build(&ds, &[0, 1, 2, 3]).unwrap();
        assert_eq!(x.n_cols(), 1);
        assert!(DesignSpec::new(&ds, &[]).build(&ds, &[]).is_err());
    }

    #[test]
    fn levels_matched_by_name_on_other_datasets() {
        let ds = ds_with_education();
        let spec = DesignSpec::new(&ds, &[ds.index_of("education").unwrap()]);
        let other = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, vec![0.0, 0.0]),
            Column::numeric("age", Role::Regression, vec![0.0, 0.0]),
            Column::from_labels("education", Role::Regression, &["college", "unknown"]),
            Column::numeric("y", Role::Target, vec![0.0, 0.0]),
        ])
        .unwrap();
        let x = spec.build(&other, &[0, 1]).unwrap();
        assert_eq!(x.row(0), [1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(x.row(1), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn printed_leaf_model_prediction() {
        // Female, age 80, elementary school; all other dummies zero.
        let names: Vec<String> = [
            INTERCEPT,
            "Female",
            "Age",
            "Elementary_school",
            "Junior_high",
            "Senior_high",
            "College",
            "Literacy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let m = LocalModel {
            theta: vec![12.1694, -0.0726, -0.0417, 0.3273, 0.5994, 0.5934, 0.4786, -0.0293],
            names: names.clone(),
            n_fit: 0,
            sse: 0.0,
            dropped: vec![],
        };
        let x = DesignMatrix::from_rows(
            names.clone(),
            vec![
                vec![1.0, 1.0, 80.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let yhat = predict(&m, &x).unwrap();
        assert!((yhat[0] - 9.0881).abs() < 1e-12);
        assert_eq!(yhat[1], 12.1694);

        let wrong = DesignMatrix::from_rows(vec![INTERCEPT.into()], vec![vec![1.0]]).unwrap();
        assert!(matches!(predict(&m, &wrong), Err(Error::ColumnMismatch(_))));
    }

    #[test]
    fn constant_model_predicts_constant() {
        let m = LocalModel::constant(2.5, vec![INTERCEPT.into(), "z".into()]);
        let x = DesignMatrix::from_rows(
            m.names.clone(),
            vec![vec![1.0, 3.0], vec![1.0, -7.0]],
        )
        .unwrap();
        assert_eq!(predict(&m, &x).unwrap(), [2.5, 2.5]);
    }
}
