use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_flowdecay"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn tail_fit_recovers_the_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "seed = 1\n[map]\nkind = \"pm\"\nalpha = 0.5\ncutoff = 3000\n[grids]\ntail_window = [50, 2000]\n", &["tail"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("out/tail.csv")).unwrap();
    assert!(csv.starts_with("n,tail,partial,extrapolated,fit_exponent\n"));
    let fit: f64 = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((1.85..=2.15).contains(&fit), "{fit}");
    assert!(dir.path().join("out/plot_tail.py").exists());
}

#[test]
fn budget_names_the_dominant_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "seed = 1\n[budget]\nbeta = 1.0\ngamma = 2.0\nschedule = \"bounded\"\n", &["budget"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let summary = fs::read_to_string(dir.path().join("out/budget_summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == "dominant_rate").unwrap();
    assert_eq!(row[i], "(ln t)^2/t");
}

#[test]
fn quick_acceptance_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "seed = 7\n[accept]\ncriteria = [1, 5, 6, 11]\n", &["accept"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("out/accept.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(text(&o).contains("criterion  1 PASS"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_flowdecay")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_flowdecay")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_configs_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["seed = 1\nbogus = 1\n", "[map]\nkind = \"pm\"\nalpha = 0.5\n", "seed = 1\n[map]\nkind = \"pm\"\nalpha = 1.5\n"] {
        let o = run(dir.path(), cfg, &["tail"]);
        assert_eq!(o.status.code(), Some(3), "{cfg}: {}", text(&o));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_flowdecay"))
        .args(["tail", "--config"])
        .arg(dir.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn csv_output_does_not_depend_on_threads() {
    let cfg = "seed = 5\nobservables = [\"coordinate\"]\n[map]\nkind = \"doubling\"\ncutoff = 2\n\
               [roof]\nkind = \"cosine\"\nbase = 2.0\namp = 1.0\n[grids]\nt = [0.0, 1.0, 3.0]\nn_samples = 5000\n";
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(dir.path(), cfg, &["corr-flow", "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        outputs.push(fs::read(dir.path().join("out/corr_flow_coordinate.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
