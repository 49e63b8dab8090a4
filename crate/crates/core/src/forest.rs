//! Randomly patched forests of MOB trees and the leaf-membership encoding.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Column, ColumnData, Dataset, Role};
use crate::error::{Error, Result};
use crate::mobtree::{grow_with, MobConfig, MobTree};
use crate::seed::{self, derive_seed};
use crate::textfmt::{TextReader, TextWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    pub row_fraction: f64,
    /// Fraction of partitioning columns offered to each tree (at least one).
    pub col_fraction: f64,
    pub seed: u64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            row_fraction: 0.632,
            col_fraction: 0.5,
            seed: 0,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("row_fraction", self.row_fraction), ("col_fraction", self.col_fraction)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} {v} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeMeta {
    /// 1-based index within the layer.
    pub tree_id: usize,
    pub seed: u64,
    pub max_depth: usize,
    /// Training rows of the patch, as indices into the training data.
    pub rows: Vec<usize>,
    /// Partitioning columns offered to the tree.
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleForest {
    pub layer: usize,
    pub trees: Vec<MobTree>,
    pub meta: Vec<TreeMeta>,
}

/// Name of the encoded column of tree `tree` (1-based) in `layer`.
pub fn encoded_name(layer: usize, tree: usize) -> String {
    format!("T_{layer}_{tree}")
}

pub fn leaf_level(leaf_id: usize) -> String {
    format!("R_{leaf_id}")
}

/// Inverse of [`leaf_level`].
pub fn parse_leaf_level(level: &str) -> Option<usize> {
    level.strip_prefix("R_")?.parse().ok().filter(|&k| k >= 1)
}

/// Inverse of [`encoded_name`].
pub fn parse_encoded_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("T_")?;
    let (l, t) = rest.split_once('_')?;
    Some((l.parse().ok()?, t.parse().ok().filter(|&t| t >= 1)?))
}

struct Patch {
    rows: Vec<usize>,
    columns: Vec<usize>,
    depth: usize,
    stability_seed: u64,
}

fn draw_patch(rows: &[usize], partitioning: &[usize], max_depth: usize, patch: &PatchSpec, tree_seed: u64) -> Patch {
    let n_rows = ((patch.row_fraction * rows.len() as f64).round() as usize).min(rows.len());
    let mut picked: Vec<usize> = sample(&mut seed::rng(derive_seed(tree_seed, &[1])), rows.len(), n_rows)
        .into_iter()
        .map(|i| rows[i])
        .collect();
    picked.sort_unstable();

    let p = partitioning.len();
    let n_cols = ((patch.col_fraction * p as f64).round() as usize).clamp(1, p);
    let mut cols: Vec<usize> = sample(&mut seed::rng(derive_seed(tree_seed, &[2])), p, n_cols)
        .into_iter()
        .map(|i| partitioning[i])
        .collect();
    cols.sort_unstable();

    let lo = max_depth.min(2);
    let depth = seed::rng(derive_seed(tree_seed, &[3])).random_range(lo..=max_depth);
    Patch {
        rows: picked,
        columns: cols,
        depth,
        stability_seed: derive_seed(tree_seed, &[4]),
    }
}

/// Trains `m` trees on random patches of `rows`.
///
/// Tree `t` sees `round(row_fraction * |rows|)` rows drawn without
/// replacement, `max(1, round(col_fraction * p))` of the partitioning
/// columns and every regression column. Its depth limit is drawn uniformly
/// from `2..=cfg.max_depth` (or fixed when `cfg.max_depth < 2`). All draws
/// come from streams keyed by `(patch.seed, t)`, so the forest does not
/// depend on the number of worker threads.
pub fn train_forest(
    ds: &Dataset,
    rows: &[usize],
    m: usize,
    cfg: &MobConfig,
    patch: &PatchSpec,
    layer: usize,
) -> Result<RuleForest> {
    if m == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    patch.validate()?;
    let partitioning = ds.partitioning();
    let n_rows = (patch.row_fraction * rows.len() as f64).round() as usize;
    if n_rows < cfg.min_node_size {
        return Err(Error::TooFewRows {
            needed: cfg.min_node_size,
            got: n_rows,
        });
    }
    let grown: Vec<(MobTree, TreeMeta)> = (0..m)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(patch.seed, &[t as u64]);
            let p = draw_patch(rows, &partitioning, cfg.max_depth, patch, tree_seed);
            let tree_cfg = MobConfig {
                max_depth: p.depth,
                stability: crate::stability::StabilityConfig {
                    seed: p.stability_seed,
                    ..cfg.stability.clone()
                },
                ..cfg.clone()
            };
            let tree = grow_with(ds, &p.rows, &tree_cfg, &p.columns)?;
            let meta = TreeMeta {
                tree_id: t + 1,
                seed: tree_seed,
                max_depth: p.depth,
                rows: p.rows,
                columns: p.columns.iter().map(|&c| ds.column(c).name.clone()).collect(),
            };
            Ok((tree, meta))
        })
        .collect::<Result<_>>()?;
    let (trees, meta) = grown.into_iter().unzip();
    Ok(RuleForest { layer, trees, meta })
}

/// Leaf-membership columns, one per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLayer {
    pub layer: usize,
    pub columns: Vec<Column>,
}

impl EncodedLayer {
    /// True when every encoded column takes a single value.
    pub fn is_degenerate(&self) -> bool {
        self.columns.iter().all(|c| c.is_constant_on(&(0..c.len()).collect::<Vec<_>>()))
    }
}

/// Assigns every row of `ds` to a leaf of every tree.
///
/// Column `t` is named `T_{layer}_{t}` with levels `R_1..R_j` in leaf order.
pub fn encode(forest: &RuleForest, ds: &Dataset) -> Result<EncodedLayer> {
    let columns = forest
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let ids = tree.leaf_ids(ds)?;
            let levels = (1..=tree.n_leaves).map(leaf_level).collect();
            let codes = ids.iter().map(|&id| (id - 1) as u32).collect();
            Ok(Column {
                name: encoded_name(forest.layer, t + 1),
                role: Role::Partitioning,
                data: ColumnData::Categorical { levels, codes },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedLayer {
        layer: forest.layer,
        columns,
    })
}

/// Replaces the partitioning columns of `ds` by the encoded ones; regression
/// and target columns pass through unchanged.
pub fn compose_layer_input(encoded: &EncodedLayer, ds: &Dataset) -> Result<Dataset> {
    let mut cols = encoded.columns.clone();
    cols.extend(
        ds.columns()
            .iter()
            .filter(|c| matches!(c.role, Role::Regression | Role::Target))
            .cloned(),
    );
    Dataset::new(cols)
}

impl RuleForest {
    pub(crate) fn write_into(&self, w: &mut TextWriter) {
        w.line(["forest".to_string(), self.layer.to_string(), self.trees.len().to_string()]);
        for (tree, m) in self.trees.iter().zip(&self.meta) {
            let mut toks = vec![
                "patch".to_string(),
                m.tree_id.to_string(),
                m.seed.to_string(),
                m.max_depth.to_string(),
                m.columns.len().to_string(),
            ];
            toks.extend(m.columns.iter().cloned());
            toks.push(m.rows.len().to_string());
            toks.extend(m.rows.iter().map(|r| r.to_string()));
            w.line(toks);
            crate::mobtree::write_mob_into(w, tree);
        }
        w.line(["end-forest"]);
    }

    pub(crate) fn read_from(r: &mut TextReader) -> Result<RuleForest> {
        let mut l = r.expect("forest")?;
        let layer = l.usize()?;
        let m = l.usize()?;
        l.finish()?;
        let mut trees = Vec::with_capacity(m);
        let mut meta = Vec::with_capacity(m);
        for _ in 0..m {
            let mut l = r.expect("patch")?;
            let tree_id = l.usize()?;
            let seed = l.u64()?;
            let max_depth = l.usize()?;
            let nc = l.usize()?;
            let columns = l.strings(nc)?;
            let nr = l.usize()?;
            let rows = (0..nr).map(|_| l.usize()).collect::<Result<Vec<_>>>()?;
            l.finish()?;
            meta.push(TreeMeta {
                tree_id,
                seed,
                max_depth,
                rows,
                columns,
            });
            trees.push(crate::mobtree::read_mob_from(r)?);
        }
        r.expect("end-forest")?.finish()?;
        Ok(RuleForest { layer, trees, meta })
    }

    pub fn to_text(&self) -> String {
        let mut w = TextWriter::new();
        self.write_into(&mut w);
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<RuleForest> {
        let mut r = TextReader::new(text);
        let f = RuleForest::read_from(&mut r)?;
        if !r.is_done() {
            return Err(r.peek()?.err("trailing content after forest"));
        }
        Ok(f)
    }
}
