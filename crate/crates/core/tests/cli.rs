use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fraclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(args)
        .env_remove("FRACLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn keys(table: &str) -> Vec<String> {
    table.lines().map(|l| l.split_once('=').unwrap().0.to_string()).collect()
}

#[test]
fn constants_table_has_fixed_keys() {
    let o = fraclab(&["constants", "--n", "1", "--s", "0.25", "--q", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(
        keys(&out),
        [
            "n", "s", "p", "q", "twoStar", "omegaN", "cNs", "aNs", "muNs", "gamma0", "blowupCoefficient",
            "rConstant", "blowupLimit"
        ]
    );
    let limit: f64 = out.lines().last().unwrap().split_once('=').unwrap().1.parse().unwrap();
    assert!((limit - 2.0279347202018529).abs() < 1e-12);
    // 17 significant digits
    assert!(out.contains("twoStar=4.0000000000000000e0"));
}

#[test]
fn csv_format_is_header_plus_row() {
    let o = fraclab(&["constants", "--s", "0.4", "--q", "12", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn q_not_above_p_is_a_usage_error() {
    let o = fraclab(&["solve", "--s", "0.25", "--p", "5", "--q", "4", "--eps", "0.3", "--h", "1/64"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind="), "{err}");
    assert!(stdout(&o).is_empty());
}

#[test]
fn unknown_flags_and_bad_numbers_are_usage_errors() {
    assert_eq!(fraclab(&["constants", "--s", "0.25", "--q", "5", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(fraclab(&["constants", "--s", "x", "--q", "5"]).status.code(), Some(2));
    assert_eq!(fraclab(&["constants", "--s", "1.5", "--q", "5"]).status.code(), Some(2));
    assert_eq!(fraclab(&[]).status.code(), Some(2));
}

#[test]
fn supercritical_continuation_is_rejected_before_computing() {
    let o = fraclab(&["continuation", "--s", "0.25", "--p", "5", "--q", "7", "--h", "1/64"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(["constants", "--s", "0.25", "--q", "5"])
        .env("FRACLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn solve_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "solve".to_string(),
            "--s=0.25".into(),
            "--q=5".into(),
            "--eps=0.3".into(),
            "--h=1/64".into(),
            "--restarts=2".into(),
            "--seed=7".into(),
            format!("--outdir={}", dir.display()),
        ]
    };
    let first = Command::new(env!("CARGO_BIN_EXE_fraclab")).args(args(a.path())).output().unwrap();
    let second = Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(args(b.path()))
        .env("FRACLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let fa = read_dir_sorted(a.path());
    let fb = read_dir_sorted(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["manifest", "solve.meta", "solve_u.csv", "solve_w.csv"]);
    // the manifest embeds the outdir-independent config only
    assert_eq!(fa, fb);
}

#[test]
fn manifest_checksums_match_artifacts() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let o = fraclab(&["greens", "--s", "0.3", "--x0", "0.25", "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let manifest = fs::read_to_string(dir.path().join("manifest")).unwrap();
    assert!(manifest.starts_with("command=greens\n"));
    let line = manifest.lines().find(|l| l.starts_with("artifact=")).unwrap();
    let (name, sum) = line["artifact=".len()..].split_once(" sha256=").unwrap();
    let bytes = fs::read(dir.path().join(name)).unwrap();
    assert_eq!(hex::encode(Sha256::digest(&bytes)), sum);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "command=constants\nn=1\ns=0.25\nq=9\n").unwrap();
    let from_file = fraclab(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    assert!(stdout(&from_file).contains("q=9.0000000000000000e0"));
    let overridden = fraclab(&["constants", "--config", cfg.to_str().unwrap(), "--q", "5"]);
    assert!(stdout(&overridden).contains("q=5.0000000000000000e0"));
}

#[test]
fn continuation_csv_column_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = fraclab(&[
        "continuation",
        "--s",
        "0.25",
        "--q",
        "5",
        "--h",
        "1/64",
        "--steps",
        "2",
        "--outdir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("continuation.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        body[0],
        "eps,supNorm,gammaEps,massCrit,blowupProduct,pohozaevLhs,pohozaevRhs,profileError"
    );
    assert_eq!(body.len(), 4);
    assert_eq!(stdout(&o), csv);
}

#[test]
fn bubble_check_and_kernel_report() {
    let o = fraclab(&["bubble-check", "--n", "2", "--s", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(keys(&stdout(&o)).contains(&"kelvinInvariance".to_string()));
    let k = fraclab(&["kernel", "--s", "0.25", "--half-width", "8", "--h", "1/8"]);
    assert_eq!(k.status.code(), Some(0));
    let out = stdout(&k);
    let lowest: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("lowest="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(lowest < 0.0);
}
