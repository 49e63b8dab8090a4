use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Column, ColumnData, Dataset, Kind, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaEntry {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

/// Role and kind assignment for every column of a CSV file.
///
/// On disk a schema is a list of `column_name = role[:kind]` lines with roles
/// `partition | regress | target | ignore` and kinds `num | cat` (default
/// `num`). Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    entries: Vec<SchemaEntry>,
}

impl Schema {
    pub fn new(entries: Vec<SchemaEntry>) -> Self {
        Schema { entries }
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&SchemaEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn parse(text: &str) -> Result<Schema> {
        let mut entries: Vec<SchemaEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, spec) = line
                .rsplit_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `name = role[:kind]`"))?;
            let name = name.trim();
            let spec = spec.trim();
            if name.is_empty() {
                return Err(Error::parse(i + 1, "empty column name"));
            }
            let (role, kind) = match spec.split_once(':') {
                Some((r, k)) => (r.trim(), Some(k.trim())),
                None => (spec, None),
            };
            let role = Role::parse(role)
                .ok_or_else(|| Error::parse(i + 1, format!("unknown role `{role}`")))?;
            let kind = match kind {
                None => Kind::Numeric,
                Some(k) => Kind::parse(k)
                    .ok_or_else(|| Error::parse(i + 1, format!("unknown kind `{k}`")))?,
            };
            if entries.iter().any(|e| e.name == name) {
                return Err(Error::parse(i + 1, format!("column `{name}` listed twice")));
            }
            entries.push(SchemaEntry {
                name: name.to_string(),
                role,
                kind,
            });
        }
        let schema = Schema { entries };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Schema(format!("{}:{line}: {msg}", path.display())),
            e => e,
        })
    }

    /// Role invariants: one numeric target, at least one partitioning and
    /// one regression column.
    pub fn validate(&self) -> Result<()> {
        let targets: Vec<_> = self.entries.iter().filter(|e| e.role == Role::Target).collect();
        if targets.len() != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one target, found {}",
                targets.len()
            )));
        }
        if targets[0].kind != Kind::Numeric {
            return Err(Error::Schema(format!("target `{}` must be numeric", targets[0].name)));
        }
        if !self.entries.iter().any(|e| e.role == Role::Partitioning) {
            return Err(Error::Schema("no partitioning column".into()));
        }
        if !self.entries.iter().any(|e| e.role == Role::Regression) {
            return Err(Error::Schema("no regression column".into()));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{} = {}:{}\n", e.name, e.role, e.kind.as_str()));
        }
        out
    }

    /// SHA-256 over the rendered schema, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows dropped for a missing value in a used column.
    pub dropped: usize,
    /// Zero-based data-record index of every kept row.
    pub kept_records: Vec<usize>,
}

pub fn load_csv(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<(Dataset, LoadReport)> {
    let schema = Schema::load(schema_path)?;
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &schema).map_err(|e| match e {
        Error::Csv(msg) => Error::Csv(format!("{}: {msg}", path.display())),
        e => e,
    })
}

/// Reads a CSV with a header row under `schema`.
///
/// Ignored columns are not materialized. Rows with an empty field in any
/// used column are dropped and counted.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if positions.insert(h.as_str(), i).is_some() {
            return Err(Error::Csv(format!("duplicate header `{h}`")));
        }
        if schema.get(h).is_none() {
            return Err(Error::Schema(format!("column `{h}` is not listed in the schema")));
        }
    }
    for e in schema.entries() {
        if !positions.contains_key(e.name.as_str()) {
            return Err(Error::Schema(format!("unknown column `{}` in schema", e.name)));
        }
    }
    let used: Vec<(&SchemaEntry, usize)> = schema
        .entries()
        .iter()
        .filter(|e| e.role != Role::Ignored)
        .map(|e| (e, positions[e.name.as_str()]))
        .collect();

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); used.len()];
    let mut report = LoadReport {
        dropped: 0,
        kept_records: Vec::new(),
    };
    for (rec_idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if used.iter().any(|&(_, pos)| rec.get(pos).map_or(true, str::is_empty)) {
            report.dropped += 1;
            continue;
        }
        for (j, &(_, pos)) in used.iter().enumerate() {
            raw[j].push(rec[pos].to_string());
        }
        report.kept_records.push(rec_idx);
    }
    if report.kept_records.is_empty() {
        return Err(Error::Csv("no usable rows".into()));
    }

    let mut columns = Vec::with_capacity(used.len());
    for ((entry, _), values) in used.iter().zip(raw) {
        let col = match entry.kind {
            Kind::Numeric => {
                let mut out = Vec::with_capacity(values.len());
                for (i, v) in values.iter().enumerate() {
                    let x: f64 = v.trim().parse().map_err(|_| {
                        Error::Csv(format!(
                            "record {}: column `{}`: `{v}` is not a number",
                            report.kept_records[i] + 1,
                            entry.name
                        ))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Csv(format!(
                            "record {}: column `{}`: non-finite value `{v}`",
                            report.kept_records[i] + 1,
                            entry.name
                        )));
                    }
                    out.push(x);
                }
                Column::numeric(entry.name.clone(), entry.role, out)
            }
            Kind::Categorical => Column::from_labels(entry.name.clone(), entry.role, &values),
        };
        columns.push(col);
    }
    Ok((Dataset::new(columns)?, report))
}

/// Writes a dataset as CSV: header row, shortest round-trip decimal reals,
/// level names for categorical columns.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.columns().iter().map(|c| c.name.as_str()))
        .map_err(|e| Error::Csv(e.to_string()))?;
    let mut rec: Vec<String> = Vec::with_capacity(ds.columns().len());
    for r in 0..ds.n_rows() {
        rec.clear();
        for c in ds.columns() {
            rec.push(match &c.data {
                ColumnData::Numeric(v) => format!("{}", v[r]),
                ColumnData::Categorical { levels, codes } => levels[codes[r] as usize].clone(),
            });
        }
        w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
