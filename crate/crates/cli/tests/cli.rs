use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn stinla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stinla")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stinla(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Ten sites over two weeks from the generator.
fn simulated(dir: &Path) {
    ok(&["simulate", "--sites", "10", "--days", "14", "--seed", "4", "--out", dir.to_str().unwrap()]);
}

fn fit(dir: &Path, out: &Path, extra: &[&str]) {
    let data = path(dir, "counts.csv");
    let graph = path(dir, "graph.txt");
    let mut args = vec!["fit", "--data", &data, "--graph", &graph, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_fit_report_and_baseline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    fit(dir, dir, &[]);
    for name in ["fitted.csv", "predictions.csv", "hyper.csv", "config.txt"] {
        assert!(dir.join(name).exists(), "{name}");
    }

    let (data, preds, out) = (path(dir, "counts.csv"), path(dir, "predictions.csv"), dir.to_str().unwrap());
    ok(&["report", "--data", &data, "--predictions", &preds, "--out", out]);
    let by_site = read(dir, "mpe_by_site.csv");
    assert!(by_site.starts_with("ID,N,MPE\n"));
    assert_eq!(by_site.lines().count(), 11);
    for name in ["mpe_by_day.csv", "mpe_by_time.csv", "mpe_by_day_time.csv"] {
        assert!(dir.join(name).exists(), "{name}");
    }

    ok(&["evaluate", "--data", &data, "--predictions", &preds, "--out", out]);
    assert!(dir.join("mpe.csv").exists());

    ok(&["baseline", "--data", &data, "--predictions", &preds, "--history-weeks", "1", "--out", out]);
    let cmp = read(dir, "comparison.csv");
    assert!(cmp.starts_with("Date,TimeBin,ID,ActualY,pred,mean,meanPE,predPE\n"));
    assert!(cmp.lines().last().unwrap().starts_with("overall"));
    // 10 sites x 7 days x 12 bins, plus header and overall row.
    assert_eq!(cmp.lines().count(), 10 * 7 * 12 + 2);
}

#[test]
fn weekday_and_weekend_fits_use_disjoint_dates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    let (wd, we) = (dir.join("weekday"), dir.join("weekend"));
    fit(dir, &wd, &["--weekpart", "weekday"]);
    fit(dir, &we, &["--weekpart", "weekend", "--predict-from", "2018-01-27"]);
    let dates = |d: &Path| -> std::collections::BTreeSet<String> {
        read(d, "fitted.csv").lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
    };
    let (a, b) = (dates(&wd), dates(&we));
    assert_eq!(a.len(), 10);
    assert_eq!(b.len(), 4);
    assert!(a.is_disjoint(&b));
}

#[test]
fn fits_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(&["simulate", "--sites", "4", "--days", "4", "--seed", "9", "--out", dir.to_str().unwrap()]);
    let (a, b) = (dir.join("a"), dir.join("b"));
    fit(dir, &a, &["--predict-from", "2018-01-18"]);
    fit(dir, &b, &["--predict-from", "2018-01-18"]);
    assert_eq!(read(&a, "fitted.csv"), read(&b, "fitted.csv"));
    assert_eq!(read(&a, "hyper.csv"), read(&b, "hyper.csv"));

    // predict re-reads the fitted table and extracts the masked day.
    let out = dir.join("p");
    ok(&["predict", "--data", &path(&a, "fitted.csv"), "--predict-from", "2018-01-18", "--out", out.to_str().unwrap()]);
    assert_eq!(read(&out, "predictions.csv"), read(&a, "predictions.csv"));
}

#[test]
fn clean_writes_hourly_counts() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let mut raw = String::from("Date,Time,Site,Detector,Count\n");
    for h in 14..38 {
        let label = format!("{:02}:{:02}-{:02}:{:02}", h / 2, h % 2 * 30, (h + 1) / 2, (h + 1) % 2 * 30);
        for site in [17, 42] {
            raw.push_str(&format!("16/10/17,{label},{site},1,5\n16/10/17,{label},{site},2,7\n"));
        }
    }
    fs::write(dir.join("raw.csv"), raw).unwrap();
    fs::write(dir.join("keep.txt"), "17: 1 2\n42: 2\n").unwrap();
    let out = dir.to_str().unwrap();
    ok(&["clean", "--data", &path(dir, "raw.csv"), "--keep", &path(dir, "keep.txt"), "--out", out]);
    let counts = read(dir, "counts.csv");
    let lines: Vec<&str> = counts.lines().collect();
    assert_eq!(lines[0], "Date,TimeBin,ID,Sum");
    assert_eq!(lines.len(), 1 + 2 * 12);
    assert!(lines.contains(&"2017-10-16,07:00-08:00,1,24"));
    assert!(lines.contains(&"2017-10-16,07:00-08:00,2,14"));
    assert_eq!(read(dir, "id_map.csv"), "OriginalSite,ID\n17,1\n42,2\n");
    assert!(dir.join("missingness.csv").exists());
    assert!(dir.join("coverage_warnings.csv").exists());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(stinla(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(stinla(&[]).status.code(), Some(2));

    let missing = path(dir, "nope.csv");
    let out = dir.to_str().unwrap();
    assert_eq!(
        stinla(&["evaluate", "--data", &missing, "--predictions", &missing, "--out", out]).status.code(),
        Some(3)
    );

    fs::write(dir.join("bad.csv"), "not,a,count,table\n").unwrap();
    let bad = path(dir, "bad.csv");
    assert_eq!(stinla(&["evaluate", "--data", &bad, "--predictions", &bad, "--out", out]).status.code(), Some(3));

    // Masking every date leaves nothing to fit.
    ok(&["simulate", "--sites", "3", "--days", "2", "--seed", "1", "--out", out]);
    let code = stinla(&[
        "fit",
        "--data",
        &path(dir, "counts.csv"),
        "--graph",
        &path(dir, "graph.txt"),
        "--predict-from",
        "2018-01-01",
        "--out",
        out,
    ])
    .status
    .code();
    assert_eq!(code, Some(4));
}
