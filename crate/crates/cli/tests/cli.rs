use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn czw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_czw")).args(args).output().expect("spawn czw")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const CANTOR: &str = r#"{"s": 0.5, "eps": 0.1, "family": "cantor", "d": 1, "lambda": 0.25, "generation": 4}"#;

fn cantor_cloud(dir: &Path) -> String {
    let spec = write(dir, "spec.json", CANTOR);
    let out = dir.join("cantor.txt").to_string_lossy().into_owned();
    let o = czw(&["measure", "gen", "--spec", &spec, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn measure_gen_writes_a_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = cantor_cloud(dir.path());
    let text = fs::read_to_string(cloud).unwrap();
    assert!(text.starts_with("# d=1 n=16"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 16);
}

#[test]
fn select_prints_one_row_per_cube() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = cantor_cloud(dir.path());
    let o = czw(&["select", "--measure", &cloud, "--levels=-10:0"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "cube,mass,density,in_Dsel,in_Dhat,certificate");
    assert!(lines.count() > 16);
    assert!(String::from_utf8_lossy(&o.stderr).contains("retention upward"));
}

#[test]
fn czo_norm_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = cantor_cloud(dir.path());
    let args = ["czo", "norm", "--measure", &cloud, "--kernel", "random:2,3", "--seed", "4", "--eps", "0"];
    let a = stdout(&czw(&args));
    let b = stdout(&czw(&args));
    assert_eq!(a, b);
    let row: Vec<&str> = a.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "cantor");
    assert!(row[3].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn theta_reports_every_family_member() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = cantor_cloud(dir.path());
    let out = dir.path().join("theta.csv");
    let o = czw(&[
        "theta",
        "--measure",
        &cloud,
        "--cube",
        "0:0",
        "--family",
        "1,2/0.25,0.75",
        "--out",
        &out.to_string_lossy(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 5);
}

#[test]
fn reflect_verify_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = write(
        dir.path(),
        "hyp.json",
        r#"{"basis": [], "points": [[0.0], [1.0], [2.0]], "weights": [1.0, 1.0, 1.0],
            "window": {"lo": [-0.5], "hi": [2.5]}}"#,
    );
    let good = write(dir.path(), "good.txt", "# d=1 n=3\n0 1\n1 1\n2 1\n");
    let o = czw(&["reflect", "verify", "--measure", &good, "--hyp", &hyp]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let bad = write(dir.path(), "bad.txt", "# d=1 n=3\n0 1\n1 1\n2.5 1\n");
    let o = czw(&["reflect", "verify", "--measure", &bad, "--hyp", &hyp]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().count() > 1);
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{"version": 1, "name": "t", "measures": [{{"id": "c", "spec": {CANTOR}, "sweep": {{"n": [2, 3]}}}}],
                "tasks": [{{"task": "wolff"}}]}}"#
        ),
    );
    let out = dir.path().join("out");
    let o = czw(&["run", "--config", &cfg, "--out", &out.to_string_lossy()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("wolff.csv")).unwrap().lines().count(), 3);
}

#[test]
fn errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let o = czw(&["select", "--measure", &missing.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let cfg = write(dir.path(), "cfg.json", r#"{"version": 1, "surprise": true}"#);
    let o = czw(&["run", "--config", &cfg, "--out", &dir.path().join("o").to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));

    let cloud = cantor_cloud(dir.path());
    let o = czw(&["theta", "--measure", &cloud, "--cube", "0:x"]);
    assert_eq!(o.status.code(), Some(2));
}
