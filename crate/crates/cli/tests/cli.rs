use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use smoothflow::dro::{make_dro_benchmark, solve_tilting, DroEvaluator};
use smoothflow::dynamics::SmoothedObjective;
use smoothflow::{ObjectiveFamily, SolverConfig, Vector};
use smoothflow_cli::config::RunConfig;
use smoothflow_cli::seeds;

fn smoothflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn show_config_round_trips_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothflow(dir.path(), &["show-config"]);
    assert_eq!(o.status.code(), Some(0));
    let mut cfg: RunConfig = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg.out.take(), Some(dir.path().to_path_buf()));
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 3\n[moo]\nalpah = 3.1\n").unwrap();
    let o = smoothflow(dir.path(), &["--config", path.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpah"));
}

#[test]
fn invalid_values_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothflow(dir.path(), &["bench-moo", "--t-end", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_schedule_reports_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothflow(dir.path(), &["check-schedule", "--r", "2.1,2,1.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("check-schedule/schedules.json")).unwrap();
    let rows: serde_json::Value = serde_json::from_str(&text).unwrap();
    let flags = |i: usize, key: &str| rows[i][key].as_bool().unwrap();
    assert!(flags(0, "tmu_integrable") && flags(0, "t2mudot_integrable"));
    assert!(!flags(1, "tmu_integrable") && !flags(1, "t2mudot_integrable") && flags(1, "l1_integrable"));
    assert!(!flags(2, "tmu_integrable") && flags(2, "l1_integrable"));
    assert!(dir.path().join("check-schedule/summary.json").exists());
    assert!(!dir.path().join("check-schedule/failures.json").exists());
}

#[test]
fn quiet_success_prints_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothflow(dir.path(), &["--quiet", "smooth-profile"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
}

#[test]
fn dro_instance_file_reloads_as_the_same_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = smoothflow(dir.path(), &["bench-dro"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let cfg = RunConfig::load(&dir.path().join("bench-dro/dro_instance.toml")).unwrap();
    let mut loaded = cfg.problem.build(cfg.seed).unwrap();

    let seed = RunConfig::default().seed;
    let inst = make_dro_benchmark(seeds::stream(seed, "dro-instance"), 5, 6).unwrap();
    let costs: Arc<dyn ObjectiveFamily> = Arc::new(inst.costs);
    let mut ev = DroEvaluator::uniform(costs, inst.set).unwrap();
    for (k, mu) in [1.0, 0.1, 0.01].into_iter().enumerate() {
        let x = Vector::from_fn(5, |i, _| ((i + k) as f64 * 0.7).sin());
        let a = loaded.smoothed(&x, mu).unwrap();
        let b = ev.evaluate(&x, mu).unwrap();
        assert!((a.value - b.value).abs() <= 1e-8, "mu {mu}: {} vs {}", a.value, b.value);
        assert!((&a.grad - &b.grad).amax() <= 1e-8);
    }
}

#[test]
fn newton_tail_is_superlinear_on_the_benchmark_instance() {
    let seed = RunConfig::default().seed;
    let inst = make_dro_benchmark(seeds::stream(seed, "dro-instance"), 5, 6).unwrap();
    let f = inst.costs.eval(&Vector::zeros(5));
    let prior = Vector::from_element(6, 1.0 / 6.0);
    let sol = solve_tilting(&f, &inst.set, 1.0, &prior, None, &SolverConfig::default()).unwrap();
    let ratio = sol.tail_contraction().unwrap();
    assert!(ratio <= 0.1, "{:?}", sol.residual_history);
}
