use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hess-ems"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

/// A short synthetic cycle on a coarse grid.
fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("quick.conf");
    fs::write(
        &path,
        "seed = 7\nscenario.cycle_duration_s = 180\ngrid.bat_step = 0.02\ngrid.sc_step = 0.025\ngrid.controls = 21\n\
         ems.horizon_s = 120\nems.replan_period_s = 60\nems.apply_fraction = 0.5\npredict.nn.epochs = 10\npredict.gbdt.n_trees = 20\n",
    )
    .unwrap();
    path
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = run(&[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flags_and_files_fail() {
    let o = run(&["solve", "--bogus"]);
    assert!(!o.status.success());
    let o = run(&["predict", "--config", "/nonexistent/x.conf"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/x.conf"));
    let o = run(&["simulate", "--strategy", "mpc", "--load-factor", "0.5"]);
    assert!(!o.status.success());
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, "vehicle.eta_machine = 1.5\n").unwrap();
    let o = run(&["predict", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("vehicle.eta_machine"), "{}", stderr(&o));
    fs::write(&path, "ems.replan_period_s = 70\n").unwrap();
    let o = run(&["compare", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ems.replan_period_s"), "{}", stderr(&o));
}

#[test]
fn synthetic_generators_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["synth-cycle", "--seed", "3", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(&[
            "synth-passengers",
            "--seed",
            "3",
            "--start",
            "2014-09-01",
            "--end",
            "2014-09-30",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["cycle.csv", "passengers.csv", "weather.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cycle = fs::read_to_string(a.join("cycle.csv")).unwrap();
    assert_eq!(cycle.lines().count(), 1201);
    assert_eq!(
        fs::read_to_string(a.join("passengers.csv")).unwrap().lines().count(),
        1 + 30 * 16
    );
    let o = run(&["synth-cycle", "--duration", "30", "--out", a.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn predict_table_matches_hand_computation() {
    // Two training weeks with 100 riders at 08:00 every day: every model
    // fitted to the constant target predicts 100. The held-out week's
    // daily errors are then |100 - count|.
    let dir = tempfile::tempdir().unwrap();
    let start = chrono::NaiveDate::from_ymd_opt(2014, 12, 1).unwrap();
    let test_counts = [90, 80, 100, 70, 95, 85, 60];
    let mut passengers = String::from("date,hour,passenger_count\n");
    let mut weather = String::from("date,weather_code,temp_high_c,temp_low_c,wind_level,is_holiday\n");
    for k in 0..21 {
        let date = start + chrono::Duration::days(k);
        let count = if k < 14 { 100 } else { test_counts[(k - 14) as usize] };
        passengers.push_str(&format!("{date},8,{count}\n"));
        weather.push_str(&format!("{date},0,20,12,1,0\n"));
    }
    fs::write(dir.path().join("p.csv"), passengers).unwrap();
    fs::write(dir.path().join("w.csv"), weather).unwrap();
    let conf = dir.path().join("toy.conf");
    fs::write(
        &conf,
        "scenario.passengers_file = p.csv\nscenario.weather_file = w.csv\nscenario.data_start = 2014-12-01\n\
         scenario.data_end = 2014-12-21\nscenario.test_start = 2014-12-15\nscenario.eval_date = 2014-12-15\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "predict",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("rmse.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 7 + 2);
    assert_eq!(header[1], "2014-12-15");
    assert_eq!(&header[8..], ["total", "variance"]);
    // Errors 10, 20, 0, 30, 5, 15, 40: RMSE sqrt(3250 / 7), sample variance
    // (3250 - 120^2 / 7) / 6.
    let total = (3250.0f64 / 7.0).sqrt();
    let variance = (3250.0 - 14400.0 / 7.0) / 6.0;
    for row in lines.filter(|l| !l.starts_with("nn,")) {
        let v: Vec<f64> = row.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(&v[..7], [10.0, 20.0, 0.0, 30.0, 5.0, 15.0, 40.0], "{row}");
        assert!((v[7] - total).abs() < 1e-6 * total, "{row}");
        assert!((v[8] - variance).abs() < 1e-6 * variance, "{row}");
    }
    for kind in ["average", "tree", "gbdt", "nn"] {
        let model = fs::read_to_string(out.join(format!("model_{kind}.txt"))).unwrap();
        assert!(model.starts_with("hess-ems-predictor 1\n"));
    }
}

#[test]
fn solve_writes_balanced_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "solve",
        "--config",
        conf.to_str().unwrap(),
        "--load-factor",
        "0.8",
        "--dump-solution",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("dp_oracle"));
    let traj = hess_ems::io::load_trajectory(&out.join("trajectory_dp_oracle.csv")).unwrap();
    assert_eq!(traj.len(), 180);
    for s in &traj {
        // Written with nine significant digits.
        let scale = s.p_bat.abs().max(s.p_sc.abs()).max(s.p_demand.abs()).max(1.0);
        assert!((s.p_bat + s.p_sc - s.p_demand).abs() <= 1e-8 * scale, "{s:?}");
    }
    let dump = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(dump.starts_with("stage,soc_bat,soc_sc,value_usd,p_sc_w\n"));
}

#[test]
fn extract_rule_reports_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    let o = run(&["extract-rule", "--config", conf.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "load_factor,slope,intercept_w,r2");
    let loads: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(loads, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
}

#[test]
fn simulate_each_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    for (name, file) in [("dp-oracle", "dp_oracle"), ("rule", "pure_rule"), ("cloud", "cloud")] {
        let out = dir.path().join(name);
        let o = run(&[
            "simulate",
            "--config",
            conf.to_str().unwrap(),
            "--strategy",
            name,
            "--hour",
            "12",
            "--horizon",
            "120",
            "--replan",
            "30",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(stdout(&o).starts_with(file), "{}", stdout(&o));
        assert!(out.join(format!("trajectory_{file}.csv")).exists());
    }
    let o = run(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--horizon",
        "120",
        "--replan",
        "50",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ems.replan_period_s"));
}

#[test]
fn compare_on_demo_puts_oracle_first() {
    let dir = tempfile::tempdir().unwrap();
    let conf = demo_dir().join("demo.conf");
    let out = dir.path().join("out");
    let o = run(&[
        "compare",
        "--config",
        conf.to_str().unwrap(),
        "--hour",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = hess_ems::io::read_comparison(
        fs::File::open(out.join("comparison_08h.csv")).unwrap(),
        &out.join("comparison_08h.csv"),
    )
    .unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].strategy.name(), "dp_oracle");
    let min = rows.iter().map(|r| r.totals.total).fold(f64::INFINITY, f64::min);
    assert_eq!(rows[0].totals.total, min);
    for s in ["dp_oracle", "cloud", "pure_rule"] {
        assert!(out.join(format!("trajectory_08h_{s}.csv")).exists());
    }
}
