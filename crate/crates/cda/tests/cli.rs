use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cda::format::BasisDocument;
use cda::io::read_csv;
use cda_core::divergence::{mallows_value, ProjectedSamples};
use tempfile::TempDir;

fn cda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cda"))
        .args(args)
        .env_remove("CDA_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Writes X, Y and ground truth into `dir` with the given extra flags.
fn gen(dir: &Path, extra: &[&str]) -> (String, String, String) {
    let (x, y, gt) = (p(dir, "x.csv"), p(dir, "y.csv"), p(dir, "gt.json"));
    let mut args = vec!["gen", "--out-x", &x, "--out-y", &y, "--out-gt", &gt];
    args.extend_from_slice(extra);
    let o = cda(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    (x, y, gt)
}

#[test]
fn gen_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let args = ["--relation", "linear", "--n", "1000", "--k", "1000", "--m", "7", "--l", "5", "--seed", "1"];
    let (x, y, gt) = gen(dir.path(), &args);
    let xs = read_csv(Path::new(&x)).unwrap();
    assert_eq!((xs.n_rows(), xs.n_cols()), (1000, 7));
    assert_eq!(read_csv(Path::new(&y)).unwrap().n_cols(), 5);
    let truth = cda::format::GroundTruthDocument::load(Path::new(&gt)).unwrap();
    assert_eq!(truth.ground_truth().unwrap().r(), 5);

    let again = TempDir::new().unwrap();
    let o = cda(&[
        "gen", "--out-x", &p(again.path(), "x.csv"), "--out-y", &p(again.path(), "y.csv"),
        "--out-gt", &p(again.path(), "gt.json"), "--relation", "linear", "--n", "1000", "--k", "1000",
        "--m", "7", "--l", "5", "--seed", "1",
    ]);
    assert_eq!(stdout(&o).trim(), "seed 1");
    for f in ["x.csv", "y.csv", "gt.json"] {
        let same = fs::read(dir.path().join(f)).unwrap() == fs::read(again.path().join(f)).unwrap();
        assert!(same, "{f} differs");
    }
}

#[test]
fn gen_without_out_x_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = cda(&["gen", "--out-y", &p(dir.path(), "y.csv"), "--out-gt", &p(dir.path(), "g.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out-x"));
}

#[test]
fn seed_defaults_to_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cda"))
        .args(["gen", "--n", "50", "--out-x", &p(dir.path(), "x.csv"), "--out-y", &p(dir.path(), "y.csv"), "--out-gt", &p(dir.path(), "g.json")])
        .env("CDA_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(stdout(&o).trim(), "seed 77");
}

#[test]
fn fit_and_project_round_trip() {
    let dir = TempDir::new().unwrap();
    let (x, y, _) = gen(dir.path(), &["--n", "200", "--seed", "3"]);
    let basis = p(dir.path(), "basis.json");
    let o = cda(&["fit", "--x", &x, "--y", &y, "--method", "rcda", "--divergence", "mallows", "--restarts", "1", "--out", &basis]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = BasisDocument::load(Path::new(&basis)).unwrap();
    assert_eq!(doc.r(), 5);
    assert_eq!(doc.formulation, "rcda");
    assert_eq!(fs::read_to_string(&basis).unwrap(), doc.to_json());

    let zx = p(dir.path(), "zx.csv");
    let zy = p(dir.path(), "zy.csv");
    assert!(cda(&["project", "--basis", &basis, "--data", &x, "--side", "x", "--out", &zx]).status.success());
    assert!(cda(&["project", "--basis", &basis, "--data", &y, "--side", "y", "--out", &zy]).status.success());
    let (zx, zy) = (read_csv(Path::new(&zx)).unwrap(), read_csv(Path::new(&zy)).unwrap());
    assert_eq!((zx.n_cols(), zy.n_cols()), (5, 5));
    for i in 0..5 {
        let s = ProjectedSamples::new(
            zx.values().column(i).iter().copied().collect(),
            zy.values().column(i).iter().copied().collect(),
        )
        .unwrap();
        let v = mallows_value(&s, 2).unwrap();
        let stored = doc.objectives[i];
        assert!((v - stored).abs() <= 1e-9 * stored.abs().max(1.0), "pair {i}: {v} vs {stored}");
    }
}

#[test]
fn fit_is_deterministic_and_reads_config() {
    let dir = TempDir::new().unwrap();
    let (x, y, _) = gen(dir.path(), &["--n", "150", "--seed", "5"]);
    let cfg = p(dir.path(), "run.toml");
    fs::write(&cfg, format!("[solver]\nmethod = \"cda\"\nrestarts = 1\nmax_outer_iters = 30\nr_pairs = 2\n[fit]\nx = {x:?}\ny = {y:?}\n")).unwrap();
    let a = cda(&["fit", "--config", &cfg]);
    let b = cda(&["fit", "--config", &cfg]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a) == stdout(&b), "fit output differs between runs");
    let timed = cda(&["fit", "--config", &cfg, "--timings"]);
    let timed = BasisDocument::from_json(&stdout(&timed)).unwrap();
    assert!(timed.diagnostics.iter().all(|d| d.seconds.is_some()));
    let doc = BasisDocument::from_json(&stdout(&a)).unwrap();
    assert_eq!((doc.formulation.as_str(), doc.r()), ("cda", 2));
    // A flag beats the file.
    let c = cda(&["fit", "--config", &cfg, "--r-pairs", "1"]);
    assert_eq!(BasisDocument::from_json(&stdout(&c)).unwrap().r(), 1);
    fs::write(&cfg, "[solver]\nmethd = \"cda\"\n").unwrap();
    let bad = cda(&["fit", "--config", &cfg, "--x", &x, "--y", &y]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("methd"));
}

#[test]
fn cca_needs_correspondence() {
    let dir = TempDir::new().unwrap();
    let (x, y, _) = gen(dir.path(), &["--n", "200", "--drop", "0.1"]);
    let o = cda(&["fit", "--x", &x, "--y", &y, "--method", "cca"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CCA requires sample correspondence"), "{}", stderr(&o));

    let (x, y, _) = gen(dir.path(), &["--n", "200"]);
    let o = cda(&["fit", "--x", &x, "--y", &y, "--method", "cca"]);
    assert!(o.status.success());
    let doc = BasisDocument::from_json(&stdout(&o)).unwrap();
    assert_eq!((doc.formulation.as_str(), doc.divergence.clone()), ("cca", None));
}

#[test]
fn fit_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let bad = p(dir.path(), "bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    let o = cda(&["fit", "--x", &bad, "--y", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3, column 2"), "{}", stderr(&o));
    let o = cda(&["fit", "--x", &p(dir.path(), "missing.csv"), "--y", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let o = cda(&["fit", "--method", "pca"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cda(&["fit", "--method", "mcda", "--divergence", "mallows", "--x", &bad, "--y", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pearson_multi"));
}

fn write_basis(dir: &Path, betas: [f64; 2]) -> String {
    let doc = BasisDocument {
        version: "cda-basis/1".into(),
        formulation: "cda".into(),
        divergence: Some("mallows".into()),
        u: vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]],
        v: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        betas: betas.to_vec(),
        objectives: vec![0.0, 0.0],
        diagnostics: vec![],
        transforms: cda::format::TransformsDocument { x: vec![], y: vec![] },
    };
    let path = p(dir, "id.json");
    fs::write(&path, doc.to_json()).unwrap();
    path
}

#[test]
fn project_identity_columns_and_betas() {
    let dir = TempDir::new().unwrap();
    let basis = write_basis(dir.path(), [2.0, 0.5]);
    let x = p(dir.path(), "x.csv");
    fs::write(&x, "a,b,c\n1,2,3\n4,5,6.5\n").unwrap();
    let o = cda(&["project", "--basis", &basis, "--data", &x, "--side", "x"]);
    assert_eq!(stdout(&o), "z1,z2\n1,3\n4,6.5\n");
    let y = p(dir.path(), "y.csv");
    fs::write(&y, "p,q\n1,2\n3,4\n").unwrap();
    let o = cda(&["project", "--basis", &basis, "--data", &y, "--side", "y"]);
    assert_eq!(stdout(&o), "z1,z2\n2,1\n6,2\n");
    let o = cda(&["project", "--basis", &basis, "--data", &y, "--side", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("columns"));
}

#[test]
fn bench_reports_and_rejects_unknown_suites() {
    let o = cda(&["bench", "--suite", "table9"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for s in ["table1", "noise-sweep", "beta-compare", "runtime"] {
        assert!(err.contains(s), "{err}");
    }

    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "runtime.csv");
    let o = cda(&[
        "bench", "--suite", "runtime", "--trials", "2", "--n", "120", "--seed", "7", "--restarts", "1",
        "--max-outer-iters", "10", "--methods", "cda+mallows,rcda+mallows", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("rcda+mallows"));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("suite,setting,method,trial,error,seconds"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn table1_rows_cover_trials_settings_methods() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "t1.csv");
    let args = [
        "bench", "--suite", "table1", "--trials", "2", "--seed", "7", "--n", "100", "--restarts", "1",
        "--max-outer-iters", "5", "--methods", "rcda+mallows",
    ];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", &out]);
    assert!(cda(&with_out).status.success());
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 18);
    let again = cda(&args);
    let first = cda(&args);
    let strip = |o: &Output| stdout(o).lines().map(|l| l.split_whitespace().take(5).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>();
    assert_eq!(strip(&again), strip(&first));
}

#[test]
fn cluster_distance_orders_and_reports_w() {
    let dir = TempDir::new().unwrap();
    let base = PathBuf::from(dir.path());
    let (a, b) = (base.join("a.csv"), base.join("b.csv"));
    let mut ta = String::from("p,q\n");
    let mut tb = String::from("p,q\n");
    for i in 0..60 {
        let t = i as f64 / 60.0;
        let (p1, q1) = ((t * 7.3).sin(), (t * 3.1).cos() + t);
        ta.push_str(&format!("{p1},{q1}\n"));
        tb.push_str(&format!("{},{}\n", p1 * p1, q1 * 0.5));
    }
    fs::write(&a, &ta).unwrap();
    fs::write(&b, &tb).unwrap();
    let (sa, sb) = (a.to_string_lossy().into_owned(), b.to_string_lossy().into_owned());
    let common = ["--restarts", "1", "--max-outer-iters", "30"];
    let same = cda(&[&["cluster-dist", &sa, &sa][..], &common].concat());
    let diff = cda(&[&["cluster-dist", &sa, &sb][..], &common].concat());
    assert!(same.status.success(), "{}", stderr(&same));
    let value = |o: &Output| -> f64 { stdout(o).lines().next().unwrap().strip_prefix("distance ").unwrap().parse().unwrap() };
    assert!(value(&same) <= value(&diff), "{} vs {}", value(&same), value(&diff));
    assert!(stdout(&same).contains("\nw 2\n"));

    let manifest = base.join("m.json");
    fs::write(&manifest, "{\"selected\": []}").unwrap();
    let o = cda(&[&["cluster-dist", &sa, &sb, "--manifest", &manifest.to_string_lossy(), "--cover", "1,2,3,4,5,6,7,8,9,10", "--cost", "2"][..], &common].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("potential 5\n"), "{}", stdout(&o));

    fs::write(&manifest, "{\"selected\": [{\"data\": \"b.csv\", \"cover\": [1, 2, 3], \"cost\": 1.0}]}").unwrap();
    let o = cda(&[&["cluster-dist", &sa, &sb, "--manifest", &manifest.to_string_lossy(), "--cover", "1,2,3"][..], &common].concat());
    assert!(stdout(&o).contains("potential 0\n"), "{}", stdout(&o));
}
