//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for bad input or configuration and 2 when
//! an internal invariant fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_csv, synth_subgroups, write_csv, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::forest::parse_encoded_name;
use crate::rules::{expand_rule, render_rule, subgroup_reports, Atom, Expr, Outcome, Rule};
use crate::stack::{
    evaluate, fit_stack, transform, FinalModel, LassoModel, LayerConfig, Learner, MobDrfModel, StackConfig,
    DEFAULT_SEED,
};

#[derive(Parser, Debug)]
#[command(name = "mobdrf", version, about = "Layered model-based rule forests")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset, its region labels and a schema.
    Synth(SynthArgs),
    /// Train a stack and its final learners.
    Train(TrainArgs),
    /// MAE / RMSE table on training and test data.
    Evaluate(EvalArgs),
    /// Subgroup rules of a final model.
    Rules(RulesArgs),
    /// Write the layer-`l` representation of a dataset.
    Encode(EncodeArgs),
    /// Predictions of one final model.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Region layout: one, two or xor2.
    #[arg(long, default_value = "two")]
    pub regions: String,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Prefix of the three file names.
    #[arg(long, default_value = "synth")]
    pub prefix: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// TOML config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model bundle to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit log to write (it is always echoed to standard error).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Trees per layer, comma separated; one value applies to every layer.
    #[arg(long, value_delimiter = ',')]
    pub trees: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    /// Forest significance level(s).
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub row_fraction: Option<f64>,
    #[arg(long)]
    pub col_fraction: Option<f64>,
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long)]
    pub early_stop_delta: Option<f64>,
    /// Final learners, comma separated (lasso, cart, mob).
    #[arg(long, value_delimiter = ',')]
    pub learners: Option<Vec<String>>,
    #[arg(long)]
    pub final_depth: Option<usize>,
    #[arg(long)]
    pub final_alpha: Option<f64>,
    #[arg(long)]
    pub cart_cp: Option<f64>,
    #[arg(long)]
    pub cart_depth: Option<usize>,
    /// LASSO penalty grid as fractions of lambda_max.
    #[arg(long, value_delimiter = ',')]
    pub lambda_ratios: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Directory for `report.csv` and `report.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RulesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Reference data for member counts.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value = "mob")]
    pub learner: String,
    /// Defaults to the deepest stored layer.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub simplify: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value = "mob")]
    pub learner: String,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))?
    };
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Rules(a) => cmd_rules(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Predict(a) => cmd_predict(&a),
    })
}

fn need_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    Ok(())
}

fn need_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => Err(Error::io(
            d,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        )),
        _ => Ok(()),
    }
}

fn write_file(p: &Path, contents: &str) -> Result<()> {
    fs::write(p, contents).map_err(|e| Error::io(p, e))
}

fn load_model(p: &Path) -> Result<MobDrfModel> {
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    MobDrfModel::from_text(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Invalid(format!("{}:{line}: {msg}", p.display())),
        e => e,
    })
}

fn load_checked(model: &MobDrfModel, data: &Path, schema: &Path) -> Result<(Dataset, crate::data::LoadReport)> {
    let (ds, report) = load_csv(data, schema)?;
    model.check_schema(&ds)?;
    Ok((ds, report))
}

fn learner_arg(s: &str) -> Result<Learner> {
    Learner::parse(s).ok_or_else(|| Error::Config(format!("unknown learner `{s}` (expected lasso, cart, mob)")))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::preset(&a.regions, a.n, a.noise, a.seed)?;
    if !a.out.is_dir() {
        return Err(Error::io(
            &a.out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let data = synth_subgroups(&spec)?;
    let path = a.out.join(format!("{}.csv", a.prefix));
    let mut buf = Vec::new();
    write_csv(&data.dataset, &mut buf)?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    let mut regions = String::from("row,region\n");
    for (i, r) in data.regions.iter().enumerate() {
        regions.push_str(&format!("{i},{r}\n"));
    }
    write_file(&a.out.join(format!("{}_regions.csv", a.prefix)), &regions)?;
    write_file(&a.out.join(format!("{}_schema.txt", a.prefix)), &data.dataset.schema().render())
}

fn per_layer<T: Clone>(flag: &str, v: &[T], layers: usize) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); layers]),
        n if n == layers => Ok(v.to_vec()),
        n => Err(Error::Config(format!("--{flag} has {n} values for {layers} layers"))),
    }
}

/// Config from defaults, then the config file, then flags.
pub fn effective_config(a: &TrainArgs) -> Result<StackConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            StackConfig::from_toml(&text)?
        }
        None => StackConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let n_layers = a.layers.unwrap_or(cfg.layers.len());
    if n_layers == 0 {
        return Err(Error::Config("--layers must be at least 1".into()));
    }
    if n_layers != cfg.layers.len() {
        let last = cfg.layers.last().cloned().unwrap_or(LayerConfig {
            trees: 50,
            max_depth: 3,
            alpha: 0.1,
        });
        cfg.layers.resize(n_layers, last);
    }
    if let Some(t) = &a.trees {
        for (l, v) in cfg.layers.iter_mut().zip(per_layer("trees", t, n_layers)?) {
            l.trees = v;
        }
    }
    if let Some(d) = &a.depths {
        for (l, v) in cfg.layers.iter_mut().zip(per_layer("depths", d, n_layers)?) {
            l.max_depth = v;
        }
    }
    if let Some(al) = &a.alpha {
        for (l, v) in cfg.layers.iter_mut().zip(per_layer("alpha", al, n_layers)?) {
            l.alpha = v;
        }
    }
    if let Some(v) = a.min_node_size {
        cfg.min_node_size = v;
    }
    if let Some(v) = a.permutations {
        cfg.permutations = v;
    }
    if let Some(v) = a.row_fraction {
        cfg.row_fraction = v;
    }
    if let Some(v) = a.col_fraction {
        cfg.col_fraction = v;
    }
    if a.no_early_stop {
        cfg.early_stop.enabled = false;
    }
    if let Some(v) = a.early_stop_delta {
        cfg.early_stop.delta = v;
    }
    if let Some(ls) = &a.learners {
        cfg.learners = ls.iter().map(|s| learner_arg(s)).collect::<Result<_>>()?;
    }
    if let Some(v) = a.final_depth {
        cfg.mob.max_depth = v;
    }
    if let Some(v) = a.final_alpha {
        cfg.mob.alpha = v;
    }
    if let Some(v) = a.cart_cp {
        cfg.cart.cp = v;
    }
    if let Some(v) = a.cart_depth {
        cfg.cart.max_depth = Some(v);
    }
    if let Some(v) = &a.lambda_ratios {
        cfg.lasso.ratios = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    need_file(&a.data)?;
    need_file(&a.schema)?;
    need_parent(&a.out)?;
    if let Some(l) = &a.log {
        need_parent(l)?;
    }
    let cfg = effective_config(a)?;
    let (ds, load) = load_csv(&a.data, &a.schema)?;
    let fit = fit_stack(&ds, &cfg)?;
    let mut log = String::new();
    log.push_str(&format!("rows {} (dropped {})\n", ds.n_rows(), load.dropped));
    for entry in &fit.log {
        log.push_str(&entry.render());
        log.push('\n');
    }
    log.push_str(&format!("stored layers {}\n", fit.model.layers.len()));
    log.push_str("config\n");
    log.push_str(&cfg.to_toml());
    eprint!("{log}");
    write_file(&a.out, &fit.model.to_text())?;
    if let Some(p) = &a.log {
        write_file(p, &log)?;
    }
    Ok(())
}

fn cmd_evaluate(a: &EvalArgs) -> Result<()> {
    for p in [&a.model, &a.train, &a.test, &a.schema] {
        need_file(p)?;
    }
    if !a.out.is_dir() {
        return Err(Error::io(
            &a.out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let model = load_model(&a.model)?;
    let (train, _) = load_checked(&model, &a.train, &a.schema)?;
    let (test, _) = load_checked(&model, &a.test, &a.schema)?;
    let report = evaluate(&model, &train, &test)?;
    let text = report.to_text();
    print!("{text}");
    write_file(&a.out.join("report.txt"), &text)?;
    write_file(&a.out.join("report.csv"), &report.to_csv())
}

fn pick_layer(model: &MobDrfModel, layer: Option<usize>) -> Result<usize> {
    let l = layer.unwrap_or(model.layers.len());
    if l > model.layers.len() {
        return Err(Error::Config(format!(
            "--layer {l} but the model stores {} layers",
            model.layers.len()
        )));
    }
    Ok(l)
}

/// Nonzero LASSO coefficients as rules: one indicator rule per dummy and
/// one linear term per numeric column, all on top of the intercept rule.
pub fn lasso_rules(l: &LassoModel, target: &str) -> Vec<Rule> {
    let mut out = vec![Rule {
        condition: Expr::True,
        outcome: Outcome::constant(target, l.model.theta[0]),
    }];
    for (j, (col, level)) in l.design.sources().into_iter().enumerate().skip(1) {
        let w = l.model.theta[j];
        if w == 0.0 || l.model.dropped.contains(&j) {
            continue;
        }
        let (Some(col), level) = (col, level) else { continue };
        out.push(match level {
            Some(level) => Rule {
                condition: Expr::Atom(Atom::eq(col, level)),
                outcome: Outcome::constant(target, w),
            },
            None => Rule {
                condition: Expr::True,
                outcome: Outcome {
                    target: target.to_string(),
                    intercept: 0.0,
                    terms: vec![(w, col.to_string())],
                },
            },
        });
    }
    out
}

fn cmd_rules(a: &RulesArgs) -> Result<()> {
    for p in [&a.model, &a.data, &a.schema] {
        need_file(p)?;
    }
    need_parent(&a.out)?;
    let learner = learner_arg(&a.learner)?;
    let model = load_model(&a.model)?;
    let layer = pick_layer(&model, a.layer)?;
    let (raw, _) = load_checked(&model, &a.data, &a.schema)?;
    let repr = transform(&model, &raw, layer)?;
    let target = raw.target().name.clone();
    let mut out = format!("learner {} layer {} rows {}\n", learner.label(), layer, raw.n_rows());
    match model.final_model(learner, layer)? {
        FinalModel::Mob(tree) => {
            let reports = subgroup_reports(tree, layer, &model.layers, &raw, &repr, a.simplify)?;
            for r in &reports {
                out.push('\n');
                out.push_str(&r.render(raw.n_rows()));
            }
        }
        FinalModel::Lasso(l) => {
            for rule in lasso_rules(l, &target) {
                let members = rule.condition.evaluate(&repr)?.iter().filter(|&&b| b).count();
                out.push('\n');
                out.push_str(&format!("term: {} of {} rows\n", members, raw.n_rows()));
                out.push_str(&format!("layered: {}\n", render_rule(&rule)));
                let encoded = rule.condition.features().iter().any(|f| parse_encoded_name(f).is_some());
                if encoded {
                    let expanded = Rule {
                        condition: expand_rule(&rule.condition, &model.layers)?,
                        outcome: rule.outcome.clone(),
                    };
                    if expanded.condition.evaluate(&raw)? != rule.condition.evaluate(&repr)? {
                        return Err(Error::Invariant("expanded LASSO term selects different rows".into()));
                    }
                    out.push_str(&format!("expanded: {}\n", render_rule(&expanded)));
                }
            }
        }
        FinalModel::Cart(_) => {
            return Err(Error::Config("rules are exported for mob and lasso final models".into()));
        }
    }
    write_file(&a.out, &out)
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    for p in [&a.model, &a.data, &a.schema] {
        need_file(p)?;
    }
    need_parent(&a.out)?;
    let model = load_model(&a.model)?;
    let layer = pick_layer(&model, a.layer)?;
    let (raw, _) = load_checked(&model, &a.data, &a.schema)?;
    let repr = transform(&model, &raw, layer)?;
    let f = fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_csv(&repr, std::io::BufWriter::new(f))
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    for p in [&a.model, &a.data, &a.schema] {
        need_file(p)?;
    }
    need_parent(&a.out)?;
    let learner = learner_arg(&a.learner)?;
    let model = load_model(&a.model)?;
    let layer = pick_layer(&model, a.layer)?;
    let (ds, load) = load_checked(&model, &a.data, &a.schema)?;
    let pred = model.predict(&ds, learner, layer)?;
    let leaf_ids = if learner == Learner::Mob { pred.leaf_ids } else { None };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&a.data)
        .map_err(|e| Error::Csv(e.to_string()))?;
    let mut header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    header.push("prediction".into());
    if leaf_ids.is_some() {
        header.push("leaf_id".into());
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        let mut next = 0;
        for (rec_idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            if load.kept_records.get(next) != Some(&rec_idx) {
                continue;
            }
            let mut fields: Vec<String> = rec.iter().map(str::to_string).collect();
            fields.push(format!("{}", pred.values[next]));
            if let Some(ids) = &leaf_ids {
                fields.push(ids[next].to_string());
            }
            w.write_record(&fields).map_err(|e| Error::Csv(e.to_string()))?;
            next += 1;
        }
        w.flush().map_err(|e| Error::io(&a.out, e))?;
    }
    fs::write(&a.out, buf).map_err(|e| Error::io(&a.out, e))
}
