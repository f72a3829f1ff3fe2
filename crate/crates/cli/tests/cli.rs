use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[sim]
n_days = 6
queries_per_day = 300
n_users = 150

[models]
train_queries_per_day = 150

[models.forest]
n_trees = 8

[models.embed_net]
epochs = 2

[pipeline]
train_window_days = 2

[pipeline.gate]
min_auc = 0.0
min_rate_factor = 0.0
max_rate_factor = 100.0

[experiments]
eval_window_days = 2
window_sizes = [1, 2, 3]
window_total_queries = 300
staleness_horizon = 3
"#;

fn farecombo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_farecombo"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.display().to_string()
}

fn simulated(extra: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), extra);
    let out = farecombo(dir.path(), &["--config", &cfg, "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir, cfg)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_world_days_summary_and_config() {
    let (dir, _) = simulated("");
    let d = dir.path();
    assert!(d.join("world.json").is_file());
    assert!(d.join("summary.json").is_file());
    assert!(d.join("simulate.config.toml").is_file());
    assert_eq!(fs::read_dir(d.join("days")).unwrap().count(), 6);
    let first = fs::read_to_string(d.join("days/0/ground_truth.jsonl")).unwrap();
    assert_eq!(first.lines().count(), 300);
    assert!(!d.join(".farecombo.lock").exists());

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    let p = summary["positive_rate"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn one_day_world_has_one_day_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg_text = fs::read_to_string(&cfg).unwrap().replace("n_days = 6", "n_days = 1");
    fs::write(&cfg, cfg_text).unwrap();
    assert!(farecombo(dir.path(), &["--config", &cfg, "simulate"]).status.success());
    assert_eq!(fs::read_dir(dir.path().join("days")).unwrap().count(), 1);
}

#[test]
fn resolved_config_reflects_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(farecombo(dir.path(), &["--config", &cfg, "--seed", "42", "simulate"]).status.success());
    let resolved = fs::read_to_string(dir.path().join("simulate.config.toml")).unwrap();
    assert!(resolved.contains("seed = 42"));
    assert!(resolved.contains("queries_per_day = 300"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[extra]\nfoo = 1\n");
    let out = farecombo(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg_text = fs::read_to_string(&cfg).unwrap().replace("n_days = 6", "n_days = 0");
    fs::write(&cfg, cfg_text).unwrap();
    assert_eq!(farecombo(dir.path(), &["--config", &cfg, "simulate"]).status.code(), Some(2));
}

#[test]
fn missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["eval-models", "pipeline", "embed"] {
        let out = farecombo(dir.path(), &[cmd]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("farecombo simulate"));
    }
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not_a_dir");
    fs::write(&file, "x").unwrap();
    let out = farecombo(&file.join("sub"), &["simulate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn held_lock_exits_1() {
    let (dir, cfg) = simulated("");
    fs::write(dir.path().join(".farecombo.lock"), "1").unwrap();
    let out = farecombo(dir.path(), &["--config", &cfg, "embed"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
}

#[test]
fn eval_models_writes_every_model_and_oracle_wins() {
    let (dir, cfg) = simulated("");
    let out = farecombo(dir.path(), &["--config", &cfg, "eval-models", "--budget", "0.2", "--export-models"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("models_auc.csv"));
    assert_eq!(rows.len(), 8);
    let auc: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let oracle = rows.iter().position(|r| r[0] == "oracle").unwrap();
    assert!(auc.iter().all(|&a| a <= auc[oracle]));
    assert_eq!(fs::read_dir(dir.path().join("curves")).unwrap().count(), 8);
    assert_eq!(csv_rows(&dir.path().join("models_budget.csv")).len(), 8);
    assert_eq!(fs::read_dir(dir.path().join("models")).unwrap().count(), 7);
    assert!(dir.path().join("eval-models.config.toml").is_file());
}

#[test]
fn pipeline_reports_every_served_day_and_is_reproducible() {
    let (dir, cfg) = simulated("");
    let d = dir.path();
    let args = ["--config", cfg.as_str(), "pipeline", "--stability", "--staleness", "--window-sweep"];
    let out = farecombo(d, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Six days with a two-day window leave four served days.
    let summary = fs::read(d.join("run_summary.csv")).unwrap();
    assert_eq!(csv_rows(&d.join("run_summary.csv")).len(), 4);
    for day in 2..6 {
        assert!(d.join(format!("days/{day}/rules.csv")).is_file());
        assert!(d.join(format!("days/{day}/report.json")).is_file());
    }
    let stability = fs::read_to_string(d.join("stability.csv")).unwrap();
    assert!(stability.starts_with("day,retained,dropped,added\n"));
    assert_eq!(csv_rows(&d.join("staleness.csv")).len(), 3);
    assert_eq!(csv_rows(&d.join("window_sweep.csv")).len(), 3);
    assert!(d.join("pipeline.config.toml").is_file());

    assert!(farecombo(d, &args).status.success());
    assert_eq!(fs::read(d.join("run_summary.csv")).unwrap(), summary);
}

#[test]
fn pipeline_window_flag_changes_served_days() {
    let (dir, cfg) = simulated("");
    let out = farecombo(dir.path(), &["--config", &cfg, "pipeline", "--window", "3", "--feature-mode", "trace"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&dir.path().join("run_summary.csv")).len(), 3);
    let resolved = fs::read_to_string(dir.path().join("pipeline.config.toml")).unwrap();
    assert!(resolved.contains("trace_embed"));
}

#[test]
fn pipeline_needs_more_days_than_the_window() {
    let (dir, cfg) = simulated("");
    let out = farecombo(dir.path(), &["--config", &cfg, "pipeline", "--window", "6"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gate_rejecting_every_day_exits_4() {
    let (dir, cfg) = simulated("");
    let text = fs::read_to_string(&cfg).unwrap().replace("min_auc = 0.0", "min_auc = 100.0");
    fs::write(&cfg, text).unwrap();
    let out = farecombo(dir.path(), &["--config", &cfg, "pipeline"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(csv_rows(&dir.path().join("run_summary.csv")).len(), 4);
}

#[test]
fn embed_writes_code_plus_dim_columns() {
    let (dir, cfg) = simulated("");
    let out = farecombo(dir.path(), &["--config", &cfg, "embed"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("embeddings.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 17);
    assert!(lines.all(|l| l.split(',').count() == 17));
    // 40 airports, 5 neighbors each.
    assert_eq!(csv_rows(&dir.path().join("neighbors.csv")).len(), 200);
}

#[test]
fn embed_without_traces_is_an_actionable_error() {
    let (dir, cfg) = simulated("");
    let text = fs::read_to_string(&cfg).unwrap().replace("n_users = 150", "n_users = 2000");
    fs::write(&cfg, text).unwrap();
    // Regenerate with too few searches per user to build any trace.
    let text = fs::read_to_string(&cfg).unwrap().replace("n_days = 6", "n_days = 1");
    fs::write(&cfg, text).unwrap();
    assert!(farecombo(dir.path(), &["--config", &cfg, "simulate"]).status.success());
    let out = farecombo(dir.path(), &["--config", &cfg, "embed"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate more days"));
}
