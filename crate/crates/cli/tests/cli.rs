use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ltlf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltlf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ltlf")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small synthetic area with a fast configuration, returned with its config path.
fn small_area(root: &Path) -> PathBuf {
    std::fs::write(
        root.join("small.txt"),
        "max_epochs=8\nsynthetic.n_feeders=20\nsynthetic.n_years=13\nk_max=3\nkmeans_restarts=3\n",
    )
    .unwrap();
    ok(&ltlf(root, &["-c", "small.txt", "generate", "area"]));
    root.join("area").join("config.txt")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn pipeline_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_area(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let stdout = ok(&ltlf(tmp.path(), &["-c", cfg, "pipeline"]));
    assert!(stdout.contains("ssl"));
    let run = tmp.path().join("area").join("run");
    for f in ["config.txt", "clusters.csv", "registry.csv", "forecasts.csv", "metrics.csv", "comparison.csv", "growth.csv", "pca.txt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let config = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.lines().any(|l| l == "seed=42"));
}

#[test]
fn stages_run_one_at_a_time() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_area(tmp.path());
    let cfg = cfg.to_str().unwrap();
    for stage in ["cluster", "features", "train", "select"] {
        ok(&ltlf(tmp.path(), &["-c", cfg, stage]));
    }
    let growth = ok(&ltlf(tmp.path(), &["-c", cfg, "forecast"]));
    assert!(growth.contains("growth_%"));
    let run = tmp.path().join("area").join("run");
    assert!(run.join("features.csv").is_file());
    assert!(run.join("models").join("summer_c0_multiyear3.txt").is_file());
    let g = csv_rows(&run.join("growth.csv"));
    assert_eq!(g[0], ["season", "cluster", "year", "mean_peak", "growth_pct"]);

    // compare: six methods, three metrics for each of two seasons
    let table = ok(&ltlf(tmp.path(), &["-c", cfg, "compare"]));
    assert_eq!(table.lines().count(), 7);
    let cmp = csv_rows(&run.join("comparison.csv"));
    assert_eq!(cmp.len(), 7);
    assert!(cmp.iter().all(|r| r.len() == 7));
    let methods: Vec<&str> = cmp[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["ssl", "bottom_up", "ar2", "orf", "trf", "tnf"]);

    let by_year = ok(&ltlf(tmp.path(), &["-c", cfg, "evaluate", "--group-by", "year"]));
    assert!(by_year.contains("ssl by year"));
}

#[test]
fn evaluate_perfect_forecasts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_area(tmp.path());
    let area = tmp.path().join("area");
    let truth = csv_rows(&area.join("truth.csv"));
    let col = |name: &str| truth[0].iter().position(|h| h == name).unwrap();
    let (season, id, year, peak) = (col("season"), col("feeder_id"), col("year"), col("true_peak"));
    let mut w = csv::Writer::from_path(tmp.path().join("perfect.csv")).unwrap();
    w.write_record(["season", "feeder_id", "cluster", "method", "config", "year", "year_index", "forecast"])
        .unwrap();
    for r in &truth[1..] {
        w.write_record([&r[season], &r[id], "0", "ssl", "ssl", &r[year], "1", &r[peak]]).unwrap();
    }
    w.flush().unwrap();
    ok(&ltlf(
        tmp.path(),
        &["-c", cfg.to_str().unwrap(), "evaluate", "--forecasts", "perfect.csv"],
    ));
    let m = csv_rows(&area.join("run").join("metrics.csv"));
    let all = m.iter().find(|r| r[0] == "ssl" && r[1] == "all").unwrap();
    assert_eq!(all[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(all[4].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.txt"), "no_such_key=1\n").unwrap();
    assert_eq!(ltlf(tmp.path(), &["-c", "bad.txt", "cluster"]).status.code(), Some(1));
    std::fs::write(tmp.path().join("range.txt"), "k_min=5\nk_max=3\n").unwrap();
    assert_eq!(ltlf(tmp.path(), &["-c", "range.txt", "cluster"]).status.code(), Some(1));
    assert_eq!(ltlf(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    // missing input files are runtime failures
    let out = ltlf(tmp.path(), &["cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feeders.csv"));
    assert_eq!(ltlf(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_area(tmp.path());
    let feeders = tmp.path().join("area").join("feeders.csv");
    let text = std::fs::read_to_string(&feeders).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let broken = lines[1].replacen(',', ",x", 2);
    lines[1] = broken;
    std::fs::write(&feeders, lines.join("\n")).unwrap();
    let out = ltlf(tmp.path(), &["-c", cfg.to_str().unwrap(), "cluster"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_area(tmp.path());
    let cfg = cfg.to_str().unwrap();
    ok(&ltlf(tmp.path(), &["-c", cfg, "--out", "a", "pipeline"]));
    ok(&ltlf(tmp.path(), &["-c", cfg, "--out", "b", "-j", "2", "pipeline"]));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for f in ["clusters.csv", "registry.csv", "forecasts.csv", "metrics.csv", "comparison.csv", "pca.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}
