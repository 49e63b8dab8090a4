//! Synthetic data with a planted piecewise-linear subgroup structure.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Column, Dataset, Role};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionVar {
    /// Uniform on [0, 1].
    Numeric,
    /// Uniform over `levels` labels `L1..Lk`.
    Categorical { levels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantedRule {
    /// Left when `x <= t`.
    Threshold(f64),
    /// Left when the level index is in the set.
    Levels(Vec<usize>),
}

/// Ground-truth partition of the partitioning space.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantedTree {
    Region(usize),
    Split {
        var: usize,
        rule: PlantedRule,
        left: Box<PlantedTree>,
        right: Box<PlantedTree>,
    },
}

impl PlantedTree {
    pub fn split(var: usize, rule: PlantedRule, left: PlantedTree, right: PlantedTree) -> Self {
        PlantedTree::Split {
            var,
            rule,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn region_of(&self, x: &[f64]) -> usize {
        match self {
            PlantedTree::Region(k) => *k,
            PlantedTree::Split {
                var,
                rule,
                left,
                right,
            } => {
                let go_left = match rule {
                    PlantedRule::Threshold(t) => x[*var] <= *t,
                    PlantedRule::Levels(set) => set.contains(&(x[*var] as usize)),
                };
                if go_left {
                    left.region_of(x)
                } else {
                    right.region_of(x)
                }
            }
        }
    }

    fn regions(&self, out: &mut Vec<usize>) {
        match self {
            PlantedTree::Region(k) => out.push(*k),
            PlantedTree::Split { left, right, .. } => {
                left.regions(out);
                right.regions(out);
            }
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            PlantedTree::Region(_) => None,
            PlantedTree::Split {
                var, left, right, ..
            } => [Some(*var), left.max_var(), right.max_var()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub partitioning: Vec<PartitionVar>,
    /// Number of standard-normal regressors.
    pub q: usize,
    pub planted: PlantedTree,
    /// One coefficient vector `(intercept, z1..zq)` per region index.
    pub betas: Vec<Vec<f64>>,
    pub noise_sd: f64,
    pub seed: u64,
}

/// A synthetic dataset with the planted region of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub regions: Vec<usize>,
}

impl SynthSpec {
    /// Named layouts used by the command-line tool and the test suite.
    ///
    /// * `one`: a single region, constant model `y = 1.5`.
    /// * `two`: `x1 <= 0.5` splits two regions whose slopes on `z1` differ.
    /// * `xor2`: `(x1 <= 0.5) xor (x2 <= 0.3)` selects between two models;
    ///   no single split expresses it. The unequal cut points leave a
    ///   marginal signal on `x1` so greedy trees can find the first split.
    pub fn preset(name: &str, n: usize, noise_sd: f64, seed: u64) -> Result<SynthSpec> {
        use PlantedRule::Threshold;
        use PlantedTree::Region;
        let numeric = |p| vec![PartitionVar::Numeric; p];
        let spec = match name {
            "one" => SynthSpec {
                n,
                partitioning: numeric(2),
                q: 1,
                planted: Region(0),
                betas: vec![vec![1.5, 0.0]],
                noise_sd,
                seed,
            },
            "two" => SynthSpec {
                n,
                partitioning: numeric(3),
                q: 1,
                planted: PlantedTree::split(0, Threshold(0.5), Region(0), Region(1)),
                betas: vec![vec![1.0, 2.0], vec![1.0, -1.0]],
                noise_sd,
                seed,
            },
            "xor2" => SynthSpec {
                n,
                partitioning: numeric(4),
                q: 1,
                planted: PlantedTree::split(
                    0,
                    Threshold(0.5),
                    PlantedTree::split(1, Threshold(0.3), Region(0), Region(1)),
                    PlantedTree::split(1, Threshold(0.3), Region(2), Region(3)),
                ),
                betas: vec![
                    vec![1.0, 1.0],
                    vec![-1.0, 1.0],
                    vec![-1.0, 1.0],
                    vec![1.0, 1.0],
                ],
                noise_sd,
                seed,
            },
            other => {
                return Err(Error::Invalid(format!(
                    "unknown region layout `{other}` (expected one, two, xor2)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.partitioning.is_empty() {
            return Err(Error::Config("need at least one partitioning variable".into()));
        }
        if self.q == 0 {
            return Err(Error::Config("need at least one regressor".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise sd must be finite and >= 0".into()));
        }
        if let Some(v) = self.planted.max_var() {
            if v >= self.partitioning.len() {
                return Err(Error::Config(format!("planted split on unknown variable {v}")));
            }
        }
        let mut regions = Vec::new();
        self.planted.regions(&mut regions);
        for &k in &regions {
            if k >= self.betas.len() {
                return Err(Error::Config(format!("region {k} has no coefficient vector")));
            }
        }
        for (k, b) in self.betas.iter().enumerate() {
            if b.len() != self.q + 1 {
                return Err(Error::Config(format!(
                    "coefficients of region {k} have length {}, expected {}",
                    b.len(),
                    self.q + 1
                )));
            }
        }
        Ok(())
    }
}

/// Draws a dataset from `spec`.
///
/// Columns are `x1..xp` (partitioning), `z1..zq` (regressors) and `y`.
/// Rows are generated one at a time from a single seeded stream.
pub fn synth_subgroups(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let p = spec.partitioning.len();
    let mut rng = seed::rng(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut xs = vec![Vec::with_capacity(spec.n); p];
    let mut zs = vec![Vec::with_capacity(spec.n); spec.q];
    let mut y = Vec::with_capacity(spec.n);
    let mut regions = Vec::with_capacity(spec.n);
    let mut xrow = vec![0.0; p];
    for _ in 0..spec.n {
        for (j, var) in spec.partitioning.iter().enumerate() {
            xrow[j] = match var {
                PartitionVar::Numeric => rng.random::<f64>(),
                PartitionVar::Categorical { levels } => rng.random_range(0..*levels) as f64,
            };
            xs[j].push(xrow[j]);
        }
        let k = spec.planted.region_of(&xrow);
        let beta = &spec.betas[k];
        let mut yi = beta[0];
        for (j, zcol) in zs.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            zcol.push(z);
            yi += beta[j + 1] * z;
        }
        if spec.noise_sd > 0.0 {
            yi += noise.sample(&mut rng);
        }
        y.push(yi);
        regions.push(k);
    }

    let mut columns = Vec::with_capacity(p + spec.q + 1);
    for (j, (var, values)) in spec.partitioning.iter().zip(xs).enumerate() {
        let name = format!("x{}", j + 1);
        columns.push(match var {
            PartitionVar::Numeric => Column::numeric(name, Role::Partitioning, values),
            PartitionVar::Categorical { levels } => Column::categorical(
                name,
                Role::Partitioning,
                (1..=*levels).map(|l| format!("L{l}")).collect(),
                values.into_iter().map(|v| v as u32).collect(),
            ),
        });
    }
    for (j, values) in zs.into_iter().enumerate() {
        columns.push(Column::numeric(format!("z{}", j + 1), Role::Regression, values));
    }
    columns.push(Column::numeric("y", Role::Target, y));
    Ok(SynthData {
        dataset: Dataset::new(columns)?,
        regions,
    })
}
