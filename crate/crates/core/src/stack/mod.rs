//! The layerwise pipeline.
//!
//! Layer `l` trains a forest on the representation produced by layer
//! `l - 1` (layer 0 is the raw data), encodes it, and hands the encoded
//! columns on as the next representation. Final learners can be fitted on
//! any stored layer.

mod bundle;
mod config;
mod report;

pub use config::{CartSettings, EarlyStop, FinalMob, LassoSettings, LayerConfig, Learner, StackConfig, DEFAULT_SEED};
pub use report::{mae, rmse, EvalReport, EvalRow};

use rayon::prelude::*;

use crate::data::{split_indices, Dataset, Schema};
use crate::error::{Error, Result};
use crate::forest::{compose_layer_input, encode, parse_encoded_name, train_forest, PatchSpec, RuleForest};
use crate::linmod::{fit_lasso, lasso_lambda_max, DesignSpec, LocalModel};
use crate::mobtree::{grow, grow_cart, MobTree, RegressionTree};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub design: DesignSpec,
    pub model: LocalModel,
    pub lambda: f64,
    /// Chosen fraction of `lambda_max`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalModel {
    Mob(MobTree),
    Cart(RegressionTree),
    Lasso(LassoModel),
}

impl FinalModel {
    pub fn learner(&self) -> Learner {
        match self {
            FinalModel::Mob(_) => Learner::Mob,
            FinalModel::Cart(_) => Learner::Cart,
            FinalModel::Lasso(_) => Learner::Lasso,
        }
    }

    /// Predictions on data already transformed to the model's layer.
    pub fn predict(&self, repr: &Dataset) -> Result<Vec<f64>> {
        match self {
            FinalModel::Mob(t) => t.predict(repr),
            FinalModel::Cart(t) => t.predict(repr),
            FinalModel::Lasso(l) => {
                let x = l.design.build(repr, &repr.all_rows())?;
                crate::linmod::predict(&l.model, &x)
            }
        }
    }

    /// Leaf ids for tree learners.
    pub fn leaf_ids(&self, repr: &Dataset) -> Result<Option<Vec<usize>>> {
        match self {
            FinalModel::Mob(t) => t.leaf_ids(repr).map(Some),
            FinalModel::Cart(t) => t.leaf_ids(repr).map(Some),
            FinalModel::Lasso(_) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedFinal {
    pub learner: Learner,
    pub layer: usize,
    pub model: FinalModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobDrfModel {
    pub config: StackConfig,
    /// Schema of the raw training data.
    pub schema: Schema,
    pub layers: Vec<RuleForest>,
    pub finals: Vec<FittedFinal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerLog {
    pub layer: usize,
    pub trees: usize,
    pub mean_leaves: f64,
    pub validation_mae: Option<f64>,
    pub kept: bool,
    pub note: String,
}

impl LayerLog {
    pub fn render(&self) -> String {
        let mae = self
            .validation_mae
            .map_or_else(|| "-".to_string(), |m| format!("{m:.6}"));
        format!(
            "layer {} trees {} mean_leaves {:.2} validation_mae {} {} {}",
            self.layer,
            self.trees,
            self.mean_leaves,
            mae,
            if self.kept { "kept" } else { "dropped" },
            self.note
        )
        .trim_end()
        .to_string()
    }
}

pub struct StackFit {
    pub model: MobDrfModel,
    pub log: Vec<LayerLog>,
    /// Training data at layers `0..=L`.
    pub representations: Vec<Dataset>,
}

fn probe_mae(cfg: &StackConfig, repr: &Dataset, fit: &[usize], val: &[usize], layer: usize) -> Result<f64> {
    let mob = cfg.final_mob(derive_seed(cfg.seed, &[stream::PROBE, layer as u64]));
    let tree = grow(repr, fit, &mob)?;
    let pred = tree.predict(repr)?;
    let y = repr.target_values();
    Ok(val.iter().map(|&r| (y[r] - pred[r]).abs()).sum::<f64>() / val.len() as f64)
}

/// Trains the layer stack on `train`.
///
/// With early stopping the training rows are split once into a fitting part
/// and a validation part; forests are trained on the fitting part and a MOB
/// probe scores every new representation on the validation part. A layer
/// is kept only if it lowers the probe's validation MAE by at least
/// `delta`; the first layer that does not ends the stack. A layer whose
/// encoded columns are all constant also ends the stack.
pub fn fit_stack(train: &Dataset, cfg: &StackConfig) -> Result<StackFit> {
    cfg.validate()?;
    if let Some(c) = train.columns().iter().find(|c| parse_encoded_name(&c.name).is_some()) {
        return Err(Error::Schema(format!(
            "column `{}` collides with the encoded column naming scheme",
            c.name
        )));
    }
    let n = train.n_rows();
    let es = &cfg.early_stop;
    let (fit_rows, val_rows) = if es.enabled {
        split_indices(
            n,
            1.0 - es.validation_fraction,
            derive_seed(cfg.seed, &[stream::VALIDATION_SPLIT]),
        )?
    } else {
        (train.all_rows(), Vec::new())
    };
    let mut best = if es.enabled {
        Some(probe_mae(cfg, train, &fit_rows, &val_rows, 0)?)
    } else {
        None
    };
    let mut log = vec![LayerLog {
        layer: 0,
        trees: 0,
        mean_leaves: 0.0,
        validation_mae: best,
        kept: true,
        note: "raw".into(),
    }];
    let mut layers = Vec::new();
    let mut reprs = vec![train.clone()];
    for (i, lc) in cfg.layers.iter().enumerate() {
        let layer = i + 1;
        let current = reprs.last().unwrap();
        let patch = PatchSpec {
            row_fraction: cfg.row_fraction,
            col_fraction: cfg.col_fraction,
            seed: derive_seed(cfg.seed, &[stream::PATCH, layer as u64]),
        };
        let forest = train_forest(current, &fit_rows, lc.trees, &cfg.layer_mob(lc), &patch, layer)?;
        let mean_leaves = forest.trees.iter().map(|t| t.n_leaves as f64).sum::<f64>() / forest.trees.len() as f64;
        let enc = encode(&forest, current)?;
        let mut entry = LayerLog {
            layer,
            trees: lc.trees,
            mean_leaves,
            validation_mae: None,
            kept: false,
            note: String::new(),
        };
        if enc.is_degenerate() {
            entry.note = "warning: every encoded column is constant; stopping at the previous layer".into();
            log.push(entry);
            break;
        }
        let next = compose_layer_input(&enc, current)?;
        if let Some(b) = best {
            let m = probe_mae(cfg, &next, &fit_rows, &val_rows, layer)?;
            entry.validation_mae = Some(m);
            if m > b - es.delta {
                entry.note = format!("no improvement over {b:.6}; stopping");
                log.push(entry);
                break;
            }
            best = Some(m);
        }
        entry.kept = true;
        log.push(entry);
        layers.push(forest);
        reprs.push(next);
    }
    let mut learners = cfg.learners.clone();
    learners.sort();
    learners.dedup();
    let mut model = MobDrfModel {
        config: StackConfig {
            learners,
            ..cfg.clone()
        },
        schema: train.schema(),
        layers,
        finals: Vec::new(),
    };
    model.finals = fit_finals(&model, &reprs)?;
    Ok(StackFit {
        model,
        log,
        representations: reprs,
    })
}

/// Fits every configured learner on every stored layer.
pub fn fit_finals(model: &MobDrfModel, reprs: &[Dataset]) -> Result<Vec<FittedFinal>> {
    let cells: Vec<(Learner, usize)> = model
        .config
        .learners
        .iter()
        .flat_map(|&l| (0..=model.layers.len()).map(move |layer| (l, layer)))
        .collect();
    cells
        .par_iter()
        .map(|&(learner, layer)| {
            Ok(FittedFinal {
                learner,
                layer,
                model: fit_final(&model.config, &reprs[layer], learner, layer)?,
            })
        })
        .collect()
}

/// Fits one final learner on a training representation.
///
/// MOB and CART use the representation's partitioning columns as inputs;
/// LASSO gets the intercept, the partitioning columns (categorical ones as
/// dummies against their first level) and the regression columns, with the
/// penalty picked from `lasso.ratios` on a holdout.
pub fn fit_final(cfg: &StackConfig, repr: &Dataset, learner: Learner, layer: usize) -> Result<FinalModel> {
    let rows = repr.all_rows();
    match learner {
        Learner::Mob => {
            let mob = cfg.final_mob(derive_seed(cfg.seed, &[stream::FINAL_MOB, layer as u64]));
            Ok(FinalModel::Mob(grow(repr, &rows, &mob)?))
        }
        Learner::Cart => Ok(FinalModel::Cart(grow_cart(repr, &rows, &cfg.cart_config())?)),
        Learner::Lasso => {
            let seed = derive_seed(cfg.seed, &[stream::LASSO_HOLDOUT, layer as u64]);
            Ok(FinalModel::Lasso(fit_lasso_final(repr, &cfg.lasso, seed)?))
        }
    }
}

/// Design used by the LASSO final learner.
pub fn lasso_design(repr: &Dataset) -> DesignSpec {
    let mut cols = repr.partitioning();
    cols.extend(repr.regression());
    DesignSpec::new(repr, &cols)
}

fn fit_lasso_final(repr: &Dataset, settings: &LassoSettings, seed: u64) -> Result<LassoModel> {
    let design = lasso_design(repr);
    let y = repr.target_values();
    let x_all = design.build(repr, &repr.all_rows())?;
    let mut ratios = settings.ratios.clone();
    ratios.sort_by(|a, b| b.total_cmp(a));
    ratios.dedup();
    let mut ratio = ratios[0];
    if ratios.len() > 1 {
        let (fit, hold) = split_indices(repr.n_rows(), 1.0 - settings.holdout_fraction, seed)?;
        if !fit.is_empty() && !hold.is_empty() {
            let xf = design.build(repr, &fit)?;
            let yf: Vec<f64> = fit.iter().map(|&r| y[r]).collect();
            let xh = design.build(repr, &hold)?;
            let lmax = lasso_lambda_max(&xf, &yf);
            let mut best = f64::INFINITY;
            for &r in &ratios {
                let m = fit_lasso(&xf, &yf, r * lmax)?;
                let p = crate::linmod::predict(&m, &xh)?;
                let mse = hold.iter().zip(&p).map(|(&i, pi)| (y[i] - pi).powi(2)).sum::<f64>() / hold.len() as f64;
                if mse < best {
                    best = mse;
                    ratio = r;
                }
            }
        }
    }
    let lambda = ratio * lasso_lambda_max(&x_all, y);
    let model = fit_lasso(&x_all, y, lambda)?;
    Ok(LassoModel {
        design,
        model,
        lambda,
        ratio,
    })
}

/// Applies the stored encodings of layers `1..=layer` to raw data.
pub fn transform(model: &MobDrfModel, ds: &Dataset, layer: usize) -> Result<Dataset> {
    if layer > model.layers.len() {
        return Err(Error::Invalid(format!(
            "layer {layer} requested but the model has {} layers",
            model.layers.len()
        )));
    }
    let mut cur = ds.clone();
    for forest in &model.layers[..layer] {
        let enc = encode(forest, &cur)?;
        cur = compose_layer_input(&enc, &cur)?;
    }
    Ok(cur)
}

/// Every representation `0..=L` of `ds`.
pub fn transform_all(model: &MobDrfModel, ds: &Dataset) -> Result<Vec<Dataset>> {
    let mut out = vec![ds.clone()];
    for forest in &model.layers {
        let cur = out.last().unwrap();
        let enc = encode(forest, cur)?;
        out.push(compose_layer_input(&enc, cur)?);
    }
    Ok(out)
}

pub struct Prediction {
    pub values: Vec<f64>,
    pub leaf_ids: Option<Vec<usize>>,
}

impl MobDrfModel {
    pub fn final_model(&self, learner: Learner, layer: usize) -> Result<&FinalModel> {
        self.finals
            .iter()
            .find(|f| f.learner == learner && f.layer == layer)
            .map(|f| &f.model)
            .ok_or_else(|| Error::Invalid(format!("no {learner} model at layer {layer}")))
    }

    /// Predictions of `(learner, layer)` on raw data.
    pub fn predict(&self, ds: &Dataset, learner: Learner, layer: usize) -> Result<Prediction> {
        let fm = self.final_model(learner, layer)?;
        let repr = transform(self, ds, layer)?;
        Ok(Prediction {
            values: fm.predict(&repr)?,
            leaf_ids: fm.leaf_ids(&repr)?,
        })
    }

    /// Checks that `ds` has the columns, roles and kinds the model was
    /// trained on.
    pub fn check_schema(&self, ds: &Dataset) -> Result<()> {
        let got = ds.schema();
        if got.hash() != self.schema.hash() {
            return Err(Error::Schema(format!(
                "data schema does not match the model (expected:\n{}got:\n{})",
                self.schema.render(),
                got.render()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        bundle::write(self)
    }

    pub fn from_text(text: &str) -> Result<MobDrfModel> {
        bundle::read(text)
    }
}

/// MAE and RMSE of every fitted `(learner, layer)` cell on both splits.
pub fn evaluate(model: &MobDrfModel, train: &Dataset, test: &Dataset) -> Result<EvalReport> {
    let tr = transform_all(model, train)?;
    let te = transform_all(model, test)?;
    let mut finals: Vec<&FittedFinal> = model.finals.iter().collect();
    finals.sort_by_key(|f| (f.learner, f.layer));
    let rows = finals
        .par_iter()
        .map(|f| {
            let ptr = f.model.predict(&tr[f.layer])?;
            let pte = f.model.predict(&te[f.layer])?;
            Ok(EvalRow {
                learner: f.learner,
                layer: f.layer,
                train_mae: mae(train.target_values(), &ptr),
                train_rmse: rmse(train.target_values(), &ptr),
                test_mae: mae(test.target_values(), &pte),
                test_rmse: rmse(test.target_values(), &pte),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_subgroups, SynthSpec};

    fn small_cfg() -> StackConfig {
        StackConfig {
            layers: vec![
                LayerConfig {
                    trees: 4,
                    max_depth: 3,
                    alpha: 0.1,
                },
                LayerConfig {
                    trees: 4,
                    max_depth: 2,
                    alpha: 0.1,
                },
            ],
            early_stop: EarlyStop::off(),
            ..Default::default()
        }
    }

    fn data(seed: u64) -> Dataset {
        synth_subgroups(&SynthSpec::preset("xor2", 300, 0.1, seed).unwrap())
            .unwrap()
            .dataset
    }

    #[test]
    fn transform_replays_training_representations() {
        let ds = data(1);
        let fit = fit_stack(&ds, &small_cfg()).unwrap();
        assert_eq!(transform(&fit.model, &ds, 0).unwrap(), ds);
        for (l, r) in fit.representations.iter().enumerate() {
            assert_eq!(&transform(&fit.model, &ds, l).unwrap(), r);
            assert_eq!(r.target_values(), ds.target_values());
        }
        assert!(transform(&fit.model, &ds, 9).is_err());
    }

    #[test]
    fn degenerate_layer_stops_the_stack() {
        let ds = data(2);
        let cfg = StackConfig {
            layers: vec![LayerConfig {
                trees: 1,
                max_depth: 0,
                alpha: 0.1,
            }],
            ..small_cfg()
        };
        let fit = fit_stack(&ds, &cfg).unwrap();
        assert!(fit.model.layers.is_empty());
        assert!(fit.log.last().unwrap().note.contains("constant"));
        assert_eq!(fit.model.finals.len(), 3);
    }

    #[test]
    fn early_stop_never_exceeds_layer_count() {
        let ds = data(3);
        let cfg = StackConfig {
            early_stop: EarlyStop::default(),
            ..small_cfg()
        };
        let fit = fit_stack(&ds, &cfg).unwrap();
        assert!(fit.model.layers.len() <= 2);
        let maes: Vec<f64> = fit.log.iter().filter(|l| l.kept).filter_map(|l| l.validation_mae).collect();
        assert!(maes.last().unwrap() <= &(maes[0] + 1e-4));
    }

    #[test]
    fn lasso_at_lambda_max_predicts_the_mean() {
        let ds = data(4);
        let cfg = StackConfig {
            lasso: LassoSettings {
                ratios: vec![1.0],
                ..Default::default()
            },
            learners: vec![Learner::Lasso],
            ..small_cfg()
        };
        let fit = fit_stack(&ds, &cfg).unwrap();
        let FinalModel::Lasso(l) = fit.model.final_model(Learner::Lasso, 1).unwrap() else {
            panic!()
        };
        assert!(l.model.theta[1..].iter().all(|&t| t == 0.0));
        let mean = ds.target_values().iter().sum::<f64>() / ds.n_rows() as f64;
        assert!((l.model.theta[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let ds = data(5);
        let fit = fit_stack(&ds, &small_cfg()).unwrap();
        let text = fit.model.to_text();
        let back = MobDrfModel::from_text(&text).unwrap();
        assert_eq!(back, fit.model);
        assert_eq!(back.to_text(), text);
        for l in 0..=back.layers.len() {
            let a = fit.model.predict(&ds, Learner::Lasso, l).unwrap().values;
            let b = back.predict(&ds, Learner::Lasso, l).unwrap().values;
            assert_eq!(a, b);
        }
        let bad = text.replacen("mobdrf-model 1", "mobdrf-model 9", 1);
        assert!(MobDrfModel::from_text(&bad).is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = small_cfg();
        assert_eq!(StackConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(StackConfig::from_toml("").unwrap(), StackConfig::default());
        assert!(StackConfig::from_toml("bogus = 1").is_err());
    }
}
