//! Columnar datasets with a feature-role schema.
//!
//! A [`Dataset`] is immutable once built. Every column carries a [`Role`]:
//! partitioning columns are candidates for tree splits, regression columns
//! enter the local linear models, and exactly one numeric target is fitted.

mod io;
mod synth;

pub use io::{load_csv, read_csv, write_csv, LoadReport, Schema, SchemaEntry};
pub use synth::{synth_subgroups, PartitionVar, PlantedRule, PlantedTree, SynthData, SynthSpec};

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Partitioning,
    Regression,
    Target,
    Ignored,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Partitioning => "partition",
            Role::Regression => "regress",
            Role::Target => "target",
            Role::Ignored => "ignore",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "partition" => Role::Partitioning,
            "regress" => Role::Regression,
            "target" => Role::Target,
            "ignore" => Role::Ignored,
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Numeric,
    Categorical,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Numeric => "num",
            Kind::Categorical => "cat",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        match s {
            "num" => Some(Kind::Numeric),
            "cat" => Some(Kind::Categorical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Level indices into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> Kind {
        match self {
            ColumnData::Numeric(_) => Kind::Numeric,
            ColumnData::Categorical { .. } => Kind::Categorical,
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: Role,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, role: Role, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            role,
            data: ColumnData::Numeric(values),
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        role: Role,
        levels: Vec<String>,
        codes: Vec<u32>,
    ) -> Self {
        Column {
            name: name.into(),
            role,
            data: ColumnData::Categorical { levels, codes },
        }
    }

    /// Builds a categorical column from raw labels, levels in order of first
    /// appearance.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, role: Role, labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                match levels.iter().position(|x| x == l) {
                    Some(i) => i as u32,
                    None => {
                        levels.push(l.to_string());
                        (levels.len() - 1) as u32
                    }
                }
            })
            .collect();
        Column::categorical(name, role, levels, codes)
    }

    pub fn kind(&self) -> Kind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { levels, .. } => Some(levels),
            _ => None,
        }
    }

    pub fn codes(&self) -> Option<&[u32]> {
        match &self.data {
            ColumnData::Categorical { codes, .. } => Some(codes),
            _ => None,
        }
    }

    /// Value of one row, levels resolved to their names.
    pub fn value(&self, row: usize) -> Value<'_> {
        match &self.data {
            ColumnData::Numeric(v) => Value::Num(v[row]),
            ColumnData::Categorical { levels, codes } => Value::Level(&levels[codes[row] as usize]),
        }
    }

    /// True when the column takes a single value over `rows`.
    pub fn is_constant_on(&self, rows: &[usize]) -> bool {
        let Some((&first, rest)) = rows.split_first() else {
            return true;
        };
        match &self.data {
            ColumnData::Numeric(v) => rest.iter().all(|&r| v[r] == v[first]),
            ColumnData::Categorical { codes, .. } => rest.iter().all(|&r| codes[r] == codes[first]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Level(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n: usize,
}

impl Dataset {
    /// Validates and wraps a set of columns.
    ///
    /// Requires unique names, equal lengths, exactly one numeric target, at
    /// least one partitioning and one regression column, in-range level
    /// codes and finite numeric values.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n = columns.first().map(Column::len).unwrap_or(0);
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
            if c.len() != n {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n}",
                    c.name,
                    c.len()
                )));
            }
            match &c.data {
                ColumnData::Numeric(v) => {
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Schema(format!(
                            "column `{}` row {i}: non-finite value",
                            c.name
                        )));
                    }
                }
                ColumnData::Categorical { levels, codes } => {
                    if let Some(i) = codes.iter().position(|&x| x as usize >= levels.len()) {
                        return Err(Error::Schema(format!(
                            "column `{}` row {i}: level code out of range",
                            c.name
                        )));
                    }
                }
            }
        }
        let count = |r: Role| columns.iter().filter(|c| c.role == r).count();
        let targets: Vec<&Column> = columns.iter().filter(|c| c.role == Role::Target).collect();
        if targets.len() != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one target column, found {}",
                targets.len()
            )));
        }
        if targets[0].kind() != Kind::Numeric {
            return Err(Error::Schema(format!(
                "target `{}` must be numeric",
                targets[0].name
            )));
        }
        if count(Role::Partitioning) == 0 {
            return Err(Error::Schema("no partitioning column".into()));
        }
        if count(Role::Regression) == 0 {
            return Err(Error::Schema("no regression column".into()));
        }
        Ok(Dataset { columns, n })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        self.index_of(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    }

    fn with_role(&self, role: Role) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].role == role)
            .collect()
    }

    /// Partitioning column indices in schema order.
    pub fn partitioning(&self) -> Vec<usize> {
        self.with_role(Role::Partitioning)
    }

    /// Regression column indices in schema order.
    pub fn regression(&self) -> Vec<usize> {
        self.with_role(Role::Regression)
    }

    pub fn target_index(&self) -> usize {
        self.with_role(Role::Target)[0]
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target_index()]
    }

    pub fn target_values(&self) -> &[f64] {
        self.target().as_numeric().expect("target is numeric")
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.columns
                .iter()
                .map(|c| SchemaEntry {
                    name: c.name.clone(),
                    role: c.role,
                    kind: c.kind(),
                })
                .collect(),
        )
    }

    /// Restricts to `rows` (in the given order), keeping every level list.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    role: c.role,
                    data: c.data.select(rows),
                })
                .collect(),
            n: rows.len(),
        }
    }
}

/// Shuffle-based train/test split.
///
/// The rows are shuffled with a seeded generator. The smaller side,
/// `round(min(f, 1 - f) * n)` rows, is always cut from the front of the
/// shuffled order, so splits with fractions `f` and `1 - f` under one seed
/// are exact complements. Both
/// halves keep the original row order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n_rows(), train_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let small = (train_fraction.min(1.0 - train_fraction) * n as f64).round() as usize;
    let (front, back) = order.split_at(small);
    let (mut train, mut test) = if train_fraction <= 0.5 {
        (front.to_vec(), back.to_vec())
    } else {
        (back.to_vec(), front.to_vec())
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> Dataset {
        Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, (0..10).map(f64::from).collect()),
            Column::numeric("z", Role::Regression, (0..10).map(|i| (i * i) as f64).collect()),
            Column::numeric("y", Role::Target, (0..10).map(|i| 2.0 * i as f64).collect()),
        ])
        .unwrap()
    }

    #[test]
    fn split_sizes() {
        let ds = toy();
        let (tr, te) = split(&ds, 0.7, 3).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (7, 3));
        let (tr2, _) = split(&ds, 0.7, 3).unwrap();
        assert_eq!(tr, tr2);
        assert!(split(&ds, 1.0, 3).is_err());
        assert!(split(&ds, 0.0, 3).is_err());
    }

    #[test]
    fn split_matches_reported_training_size() {
        let (train, test) = split_indices(2332, 0.7, 11).unwrap();
        assert_eq!(train.len(), 1632);
        assert_eq!(test.len(), 700);
    }

    #[test]
    fn complementary_fractions() {
        for seed in 0..20 {
            let (a_train, a_test) = split_indices(37, 0.3, seed).unwrap();
            let (b_train, b_test) = split_indices(37, 0.7, seed).unwrap();
            assert_eq!(a_train, b_test);
            assert_eq!(a_test, b_train);
        }
    }

    #[test]
    fn schema_invariants_enforced() {
        let no_target = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, vec![1.0]),
            Column::numeric("z", Role::Regression, vec![1.0]),
        ]);
        assert!(no_target.is_err());
        let cat_target = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, vec![1.0]),
            Column::numeric("z", Role::Regression, vec![1.0]),
            Column::from_labels("y", Role::Target, &["a"]),
        ]);
        assert!(cat_target.is_err());
        let nan = Dataset::new(vec![
            Column::numeric("x", Role::Partitioning, vec![f64::NAN]),
            Column::numeric("z", Role::Regression, vec![1.0]),
            Column::numeric("y", Role::Target, vec![1.0]),
        ]);
        assert!(nan.is_err());
    }

    #[test]
    fn first_appearance_levels() {
        let c = Column::from_labels("g", Role::Partitioning, &["b", "a", "b"]);
        assert_eq!(c.levels().unwrap(), ["b", "a"]);
        assert_eq!(c.codes().unwrap(), [0, 1, 0]);
    }
}
