use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mobdrf::data::load_csv;
use mobdrf::mobtree::predict_mob;
use mobdrf::stack::{transform, FinalModel, Learner, MobDrfModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mobdrf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn p(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_string()
    }
}

fn trained(regions: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let f = Fixture { _dir: dir, root };
    let out = f.root.to_str().unwrap();
    ok(&["synth", "--n", "300", "--regions", regions, "--seed", "3", "--out", out, "--prefix", "d"]);
    ok(&[
        "train", "--data", &f.p("d.csv"), "--schema", &f.p("d_schema.txt"), "--out", &f.p("m.txt"), "--trees",
        "8", "--layers", "2", "--no-early-stop",
    ]);
    f
}

fn read_csv_rows(path: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn synth_is_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(&["synth", "--n", "500", "--regions", "xor2", "--noise", "0.1", "--seed", "7", "--out", d.to_str().unwrap()]);
    }
    for f in ["synth.csv", "synth_regions.csv", "synth_schema.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noiseless_single_region_is_constant() {
    let d = tempfile::tempdir().unwrap();
    ok(&["synth", "--n", "10", "--regions", "one", "--noise", "0", "--out", d.path().to_str().unwrap()]);
    let (ds, _) = load_csv(d.path().join("synth.csv"), d.path().join("synth_schema.txt")).unwrap();
    assert!(ds.target_values().iter().all(|&y| y == 1.5));
}

#[test]
fn degenerate_layer_is_reported_and_dropped() {
    let d = tempfile::tempdir().unwrap();
    let p = |f: &str| d.path().join(f).to_str().unwrap().to_string();
    ok(&["synth", "--n", "200", "--out", d.path().to_str().unwrap()]);
    let out = ok(&[
        "train", "--data", &p("synth.csv"), "--schema", &p("synth_schema.txt"), "--out", &p("m.txt"), "--layers",
        "1", "--trees", "1", "--depths", "0",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let m = MobDrfModel::from_text(&fs::read_to_string(p("m.txt")).unwrap()).unwrap();
    assert!(m.layers.is_empty());
}

#[test]
fn predictions_match_the_library() {
    let f = trained("xor2");
    ok(&[
        "predict", "--model", &f.p("m.txt"), "--data", &f.p("d.csv"), "--schema", &f.p("d_schema.txt"), "--layer",
        "1", "--out", &f.p("pred.csv"),
    ]);
    let (header, rows) = read_csv_rows(&f.p("pred.csv"));
    assert_eq!(header[header.len() - 2..], ["prediction", "leaf_id"]);

    let model = MobDrfModel::from_text(&fs::read_to_string(f.p("m.txt")).unwrap()).unwrap();
    let (raw, _) = load_csv(f.p("d.csv"), f.p("d_schema.txt")).unwrap();
    let repr = transform(&model, &raw, 1).unwrap();
    let FinalModel::Mob(tree) = model.final_model(Learner::Mob, 1).unwrap() else { panic!() };
    let fitted = tree.predict(&repr).unwrap();
    let (raw_header, raw_rows) = read_csv_rows(&f.p("d.csv"));
    assert_eq!(header[..header.len() - 2], raw_header[..]);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[..row.len() - 2], raw_rows[i][..]);
        let p: f64 = row[row.len() - 2].parse().unwrap();
        assert_eq!(p, predict_mob(tree, &repr, i).unwrap());
        assert_eq!(p, fitted[i]);
        assert_eq!(row[row.len() - 1], tree.assign_leaf(&repr, i).unwrap().to_string());
    }
}

#[test]
fn permuting_rows_permutes_predictions() {
    let f = trained("two");
    let text = fs::read_to_string(f.p("d.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let body = &mut lines[1..];
    body.reverse();
    fs::write(f.p("rev.csv"), lines.join("\n") + "\n").unwrap();
    for (data, out) in [("d.csv", "a.csv"), ("rev.csv", "b.csv")] {
        ok(&[
            "predict", "--model", &f.p("m.txt"), "--data", &f.p(data), "--schema", &f.p("d_schema.txt"), "--learner",
            "cart", "--out", &f.p(out),
        ]);
    }
    let (ha, mut a) = read_csv_rows(&f.p("a.csv"));
    let (_, b) = read_csv_rows(&f.p("b.csv"));
    assert_eq!(ha.last().unwrap(), "prediction");
    a.reverse();
    assert_eq!(a, b);
}

#[test]
fn rows_with_missing_values_are_skipped_in_predictions() {
    let f = trained("two");
    let text = fs::read_to_string(f.p("d.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let cells: Vec<&str> = lines[2].split(',').collect();
    lines[2] = format!(",{}", cells[1..].join(","));
    fs::write(f.p("gap.csv"), lines.join("\n") + "\n").unwrap();
    ok(&[
        "predict", "--model", &f.p("m.txt"), "--data", &f.p("gap.csv"), "--schema", &f.p("d_schema.txt"), "--learner",
        "lasso", "--layer", "0", "--out", &f.p("p.csv"),
    ]);
    let (_, rows) = read_csv_rows(&f.p("p.csv"));
    assert_eq!(rows.len(), 299);
    assert_eq!(rows[1][0], lines[3].split(',').next().unwrap());
}

#[test]
fn encode_writes_the_layer_representation() {
    let f = trained("xor2");
    ok(&[
        "encode", "--model", &f.p("m.txt"), "--data", &f.p("d.csv"), "--schema", &f.p("d_schema.txt"), "--layer", "2",
        "--out", &f.p("enc.csv"),
    ]);
    let (header, rows) = read_csv_rows(&f.p("enc.csv"));
    assert!(header.iter().take(8).all(|h| h.starts_with("T_2_")));
    assert_eq!(header[8..], ["z1", "y"]);
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r[0].starts_with("R_")));
}

#[test]
fn evaluate_writes_matching_text_and_csv() {
    let f = trained("xor2");
    ok(&[
        "evaluate", "--model", &f.p("m.txt"), "--train", &f.p("d.csv"), "--test", &f.p("d.csv"), "--schema",
        &f.p("d_schema.txt"), "--out", f.root.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(f.p("report.csv")).unwrap();
    let txt = fs::read_to_string(f.p("report.txt")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    for (c, t) in csv.lines().skip(1).zip(txt.lines().skip(1)) {
        let a: Vec<&str> = c.split(',').skip(2).collect();
        let b: Vec<&str> = t.split_whitespace().rev().take(4).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
    }
    assert!(txt.lines().nth(1).unwrap().starts_with("LASSO") && txt.contains(" - "));
}

#[test]
fn user_errors_exit_with_one() {
    let f = trained("two");
    // schema with a different role set
    let schema = fs::read_to_string(f.p("d_schema.txt")).unwrap().replace("x3 = partition", "x3 = regress");
    fs::write(f.p("other_schema.txt"), schema).unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["train".into(), "--data".into(), f.p("missing.csv"), "--schema".into(), f.p("d_schema.txt"), "--out".into(), f.p("x.txt")],
        vec![
            "predict".into(), "--model".into(), f.p("m.txt"), "--data".into(), f.p("d.csv"), "--schema".into(),
            f.p("other_schema.txt"), "--out".into(), f.p("p.csv"),
        ],
        vec![
            "predict".into(), "--model".into(), f.p("d.csv"), "--data".into(), f.p("d.csv"), "--schema".into(),
            f.p("d_schema.txt"), "--out".into(), f.p("p.csv"),
        ],
        vec![
            "rules".into(), "--model".into(), f.p("m.txt"), "--data".into(), f.p("d.csv"), "--schema".into(),
            f.p("d_schema.txt"), "--layer".into(), "9".into(), "--out".into(), f.p("r.txt"),
        ],
        vec!["synth".into(), "--regions".into(), "nope".into(), "--out".into(), f.root.to_str().unwrap().into()],
        vec!["train".into(), "--bogus".into()],
    ];
    for args in cases {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert!(!Path::new(&f.p("p.csv")).exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = trained("two");
    fs::write(
        f.p("cfg.toml"),
        "seed = 5\n[[layers]]\ntrees = 3\nmax_depth = 2\nalpha = 0.1\n[early_stop]\nenabled = false\n",
    )
    .unwrap();
    ok(&[
        "train", "--data", &f.p("d.csv"), "--schema", &f.p("d_schema.txt"), "--config", &f.p("cfg.toml"), "--seed", "6",
        "--out", &f.p("c.txt"), "--log", &f.p("c.log"),
    ]);
    let m = MobDrfModel::from_text(&fs::read_to_string(f.p("c.txt")).unwrap()).unwrap();
    assert_eq!(m.config.seed, 6);
    assert_eq!(m.layers.len(), 1);
    assert_eq!(m.layers[0].trees.len(), 3);
    assert!(fs::read_to_string(f.p("c.log")).unwrap().contains("seed = 6"));
}
