//! Text form of a trained stack.
//!
//! ```text
//! mobdrf-model 1
//! schema <sha256> <n>
//! col <name> <role> <kind>
//! config <n>
//! cfg "<toml line>"
//! layers <L>
//! forest ... end-forest
//! finals <m>
//! final mob 1
//! mobtree 1 ... end
//! final lasso 0
//! lasso <lambda> <ratio>
//! design ...
//! model <n_fit> <sse> <k> <theta..> <nd> <dropped..>
//! end
//! ```

use super::{FinalModel, FittedFinal, LassoModel, Learner, MobDrfModel, StackConfig};
use crate::data::{Kind, Role, Schema, SchemaEntry};
use crate::error::{Error, Result};
use crate::forest::RuleForest;
use crate::mobtree::{
    model_tokens, parse_model, read_cart_from, read_design, read_mob_from, write_cart_into, write_design,
    write_mob_into,
};
use crate::textfmt::{fmt_f64, TextReader, TextWriter};

const VERSION: &str = "1";

pub(super) fn write(m: &MobDrfModel) -> String {
    let mut w = TextWriter::new();
    w.line(["mobdrf-model", VERSION]);
    let entries = m.schema.entries();
    w.line(["schema".to_string(), m.schema.hash(), entries.len().to_string()]);
    for e in entries {
        w.line(["col", &e.name, e.role.as_str(), e.kind.as_str()]);
    }
    let toml = m.config.to_toml();
    let lines: Vec<&str> = toml.lines().collect();
    w.line(["config".to_string(), lines.len().to_string()]);
    for l in lines {
        w.line(["cfg", l]);
    }
    w.line(["layers".to_string(), m.layers.len().to_string()]);
    for f in &m.layers {
        f.write_into(&mut w);
    }
    w.line(["finals".to_string(), m.finals.len().to_string()]);
    for f in &m.finals {
        w.line(["final".to_string(), f.learner.to_string(), f.layer.to_string()]);
        match &f.model {
            FinalModel::Mob(t) => write_mob_into(&mut w, t),
            FinalModel::Cart(t) => write_cart_into(&mut w, t),
            FinalModel::Lasso(l) => {
                w.line(["lasso".to_string(), fmt_f64(l.lambda), fmt_f64(l.ratio)]);
                write_design(&mut w, &l.design);
                let mut toks = vec!["model".to_string()];
                toks.extend(model_tokens(&l.model));
                w.line(toks);
            }
        }
    }
    w.line(["end"]);
    w.finish()
}

pub(super) fn read(text: &str) -> Result<MobDrfModel> {
    let mut r = TextReader::new(text);
    let mut head = r.expect("mobdrf-model")?;
    let v = head.string()?;
    if v != VERSION {
        return Err(head.err(format!("unsupported model version `{v}`")));
    }
    head.finish()?;

    let mut l = r.expect("schema")?;
    let hash = l.string()?;
    let n = l.usize()?;
    l.finish()?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = r.expect("col")?;
        let name = l.string()?;
        let role = l.string()?;
        let kind = l.string()?;
        l.finish()?;
        entries.push(SchemaEntry {
            name,
            role: Role::parse(&role).ok_or_else(|| l.err(format!("unknown role `{role}`")))?,
            kind: Kind::parse(&kind).ok_or_else(|| l.err(format!("unknown kind `{kind}`")))?,
        });
    }
    let schema = Schema::new(entries);
    if schema.hash() != hash {
        return Err(Error::Schema("schema hash in the model file does not match its columns".into()));
    }

    let mut l = r.expect("config")?;
    let n = l.usize()?;
    l.finish()?;
    let mut toml = String::new();
    for _ in 0..n {
        let mut l = r.expect("cfg")?;
        toml.push_str(&l.string()?);
        toml.push('\n');
        l.finish()?;
    }
    let config = StackConfig::from_toml(&toml)?;

    let mut l = r.expect("layers")?;
    let n = l.usize()?;
    l.finish()?;
    let layers = (0..n).map(|_| RuleForest::read_from(&mut r)).collect::<Result<Vec<_>>>()?;

    let mut l = r.expect("finals")?;
    let n = l.usize()?;
    l.finish()?;
    let mut finals = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = r.expect("final")?;
        let name = l.string()?;
        let learner = Learner::parse(&name).ok_or_else(|| l.err(format!("unknown learner `{name}`")))?;
        let layer = l.usize()?;
        l.finish()?;
        if layer > layers.len() {
            return Err(l.err(format!("final model on layer {layer} of {}", layers.len())));
        }
        let model = match learner {
            Learner::Mob => FinalModel::Mob(read_mob_from(&mut r)?),
            Learner::Cart => FinalModel::Cart(read_cart_from(&mut r)?),
            Learner::Lasso => {
                let mut l = r.expect("lasso")?;
                let lambda = l.f64()?;
                let ratio = l.f64()?;
                l.finish()?;
                let design = read_design(&mut r)?;
                let mut l = r.expect("model")?;
                let model = parse_model(&mut l, design.names())?;
                l.finish()?;
                FinalModel::Lasso(LassoModel {
                    design,
                    model,
                    lambda,
                    ratio,
                })
            }
        };
        finals.push(FittedFinal { learner, layer, model });
    }
    r.expect("end")?.finish()?;
    if !r.is_done() {
        return Err(r.peek()?.err("trailing content after model"));
    }
    Ok(MobDrfModel {
        config,
        schema,
        layers,
        finals,
    })
}
