use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ttfm::cli::{self, CommonArgs};
use ttfm::io::config::RunConfig;
use ttfm::io::model_file::ModelFile;
use ttfm::io::panel::{self, IngestOptions, RawPanel, Transform};
use ttfm::simulation::{self, SimConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ttfm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn quarter(t: usize) -> String {
    format!("{}Q{}", 1990 + t / 4, t % 4 + 1)
}

/// Long-format panel from a simulated 5 x 6 series with a level shift, so
/// the default `none` transform still needs standardization.
fn write_data(dir: &Path, t: usize) -> PathBuf {
    let mut cfg = SimConfig::reference(vec![5, 6], t, 2.0);
    cfg.horizon = 0;
    cfg.seed = 11;
    let truth = simulation::generate(&cfg, 0).unwrap();
    let mut text = String::from("time,row,col,value\n");
    for (s, x) in truth.observations.iter().enumerate() {
        for j in 0..6 {
            for i in 0..5 {
                writeln!(text, "{},r{},c{},{}", quarter(s), i + 1, j + 1, 10.0 + x.data()[i + 5 * j]).unwrap();
            }
        }
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const BASE: &str = r#"
seed = 5

[data]
path = "data.csv"

[model]
rank = 3
orders = [1, 2]
delays = [1, 2]

[forecast]
train_end = 100

[[evaluate.subsets]]
name = "first_rows"
mode = 1
indices = [1, 2]

[[evaluate.subsets]]
name = "last_col"
mode = 2
indices = [6]
"#;

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn fit_forecast_evaluate_match_in_process_results() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 130);
    let config = write_config(dir.path(), BASE);
    let out_bin = dir.path().join("bin_out");
    let out_lib = dir.path().join("lib_out");
    let c = config.to_str().unwrap();
    let o = out_bin.to_str().unwrap();

    for cmd in ["fit", "forecast", "evaluate"] {
        let res = run(&[cmd, "--config", c, "--out", o]);
        assert!(res.status.success(), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
    }

    let common = CommonArgs {
        config: Some(config.clone()),
        out: Some(out_lib.clone()),
        ..CommonArgs::default()
    };
    let cfg = common.resolve().unwrap();
    cli::cmd_fit(&cfg).unwrap();
    cli::cmd_forecast(&cfg, &out_lib.join("model.json")).unwrap();
    cli::cmd_evaluate(&cfg, &out_lib).unwrap();

    for f in ["model.json", "factors.csv", "forecasts.csv", "forecast_entries.csv", "summary.csv"] {
        assert_eq!(read(&out_bin.join(f)), read(&out_lib.join(f)), "{f} differs");
    }

    let forecasts = String::from_utf8(read(&out_bin.join("forecasts.csv"))).unwrap();
    let mut lines = forecasts.lines();
    assert_eq!(lines.next().unwrap(), "t,f1,f2,f3,sq_err_obs,sq_err_signal");
    assert_eq!(lines.count(), 30);
    assert!(forecasts.lines().nth(1).unwrap().starts_with("99,"));

    let summary = String::from_utf8(read(&out_bin.join("summary.csv"))).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "subset,size,steps,mse_per_entry,mse_total,mse_signal");
    assert!(rows[1].starts_with("all,30,30,"));
    assert!(rows[2].starts_with("first_rows,12,30,"));
    assert!(rows[3].starts_with("last_col,5,30,"));

    let model = ModelFile::read(&out_bin.join("model.json")).unwrap();
    assert_eq!(model.times.len(), 100);
    assert_eq!(model.model.rank(), 3);
    assert_eq!(model.rows, vec!["r1", "r2", "r3", "r4", "r5"]);
    assert!(model.standardization.is_some());
}

#[test]
fn command_line_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 130);
    let config = write_config(dir.path(), BASE);
    let out = dir.path().join("o");
    let res = run(&[
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--rank",
        "2",
        "--regimes",
        "1",
        "--order-set",
        "1",
        "--train-end",
        "90",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let model = ModelFile::read(&out.join("model.json")).unwrap();
    assert_eq!(model.model.rank(), 2);
    assert_eq!(model.times.len(), 90);
    assert!(model.model.tars.iter().all(|t| t.regimes.len() == 1 && t.order == 1));

    let res = run(&[
        "forecast",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--train-end",
        "90",
        "--refit",
        "params",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("forecasts.csv")).unwrap();
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn exogenous_threshold_from_the_panel() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 130);
    let body = BASE.replace(
        "[forecast]",
        "[exog]\nname = \"lead\"\nrow = \"r1\"\ncol = \"c1\"\ntransform = \"diff\"\n\n[forecast]",
    );
    let config = write_config(dir.path(), &body);
    let out = dir.path().join("o");
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    let res = run(&["fit", "--config", c, "--out", o, "--threshold", "exog:lead", "--exog-delay", "1,2,3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let model = ModelFile::read(&out.join("model.json")).unwrap();
    let exog = model.exog.as_ref().unwrap();
    assert_eq!(exog.expr.transform, Transform::Diff);
    assert!(exog.window.is_some());
    assert!(model.model.tars.iter().all(|t| (1..=3).contains(&t.delay)));
    let res = run(&["forecast", "--config", c, "--out", o]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn configuration_errors_name_every_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 60);
    let body = BASE
        .replace("orders = [1, 2]", "orders = [0]\ntrim = 0.7\nregimes = 5")
        .replace("indices = [6]", "indices = [0]");
    let config = write_config(dir.path(), &body);
    let res = run(&["fit", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!res.status.success());
    let err: serde_json::Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
    let msg = err["message"].as_str().unwrap();
    for key in ["model.orders", "model.trim", "model.regimes", "evaluate.subsets[1].indices"] {
        assert!(msg.contains(key), "{key} missing from {msg}");
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 60);
    let config = write_config(dir.path(), &BASE.replace("rank = 3", "rank = 3\nranks = 2"));
    let res = run(&["fit", "--config", config.to_str().unwrap()]);
    assert!(!res.status.success());
    let err: serde_json::Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("ranks"));

    let config = write_config(dir.path(), BASE);
    let res = run(&["fit", "--config", config.to_str().unwrap(), "--rank", "7"]);
    let err: serde_json::Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert!(err["message"].as_str().unwrap().contains("model.rank 7"));

    let res = run(&["fit", "--config", config.to_str().unwrap(), "--threshold", "exogenous"]);
    let err: serde_json::Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert!(err["message"].as_str().unwrap().contains("model.threshold"));

    let res = run(&["fit", "--rank", "many"]);
    assert!(!res.status.success());
}

#[test]
fn missing_cells_are_reported_by_location() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 40);
    let text = std::fs::read_to_string(&data).unwrap();
    let kept: String = text
        .lines()
        .filter(|l| !l.starts_with("1991Q2,r3,c4,"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&data, kept).unwrap();
    let config = write_config(dir.path(), BASE);
    let res = run(&["fit", "--config", config.to_str().unwrap()]);
    let err: serde_json::Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "ingest");
    assert!(err["message"].as_str().unwrap().contains("(1991Q2, r3, c4)"));
}

#[test]
fn model_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 120);
    let config = write_config(dir.path(), BASE);
    let out = dir.path().join("o");
    let cfg = CommonArgs {
        config: Some(config),
        out: Some(out.clone()),
        ..CommonArgs::default()
    }
    .resolve()
    .unwrap();
    cli::cmd_fit(&cfg).unwrap();
    let path = out.join("model.json");
    let first = ModelFile::read(&path).unwrap();
    let again = out.join("again.json");
    first.write(&again).unwrap();
    assert_eq!(read(&path), read(&again));
    let second = ModelFile::read(&again).unwrap();
    assert_eq!(first, second);

    let bumped = String::from_utf8(read(&path)).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
    let err = ModelFile::from_json(&bumped).unwrap_err();
    assert_eq!(err.kind(), "model_file");
}

#[test]
fn ingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 50);
    let opts = IngestOptions {
        default_transform: Transform::Dln,
        ..IngestOptions::default()
    };
    let first = panel::ingest(&data, &opts).unwrap();
    let mut buf = Vec::new();
    panel::write_panel(&first, &mut buf).unwrap();
    let plain = IngestOptions {
        standardize: false,
        ..IngestOptions::default()
    };
    let second = panel::build_panel(RawPanel::from_reader(&buf[..]).unwrap(), &plain).unwrap();
    assert_eq!(second.series, first.series);
    assert_eq!(second.times, first.times);
    assert_eq!(second.rows, first.rows);
    assert_eq!(first.series.len(), 49);
}

#[test]
fn simulate_writes_the_study_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
seed = 3

[simulate]
dims = [[4, 5]]
snr = [1.0]
t = [60]
replicates = 2
horizon = 10
"#;
    let config = write_config(dir.path(), body);
    let out = dir.path().join("sim");
    let res = run(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--replicates", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("study.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "dims,snr,t,replicate,metric,factor,value");
    let rows: Vec<&str> = lines.collect();
    // Per replicate: 3 loading MSEs, 6 proportions, 4 prediction errors.
    assert_eq!(rows.len(), 3 * 13);
    assert!(rows.iter().any(|r| r.starts_with("4x5,1,60,2,")));
}

#[test]
fn config_paths_resolve_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 60);
    let config = write_config(dir.path(), BASE);
    let cfg = RunConfig::load(&config).unwrap();
    assert_eq!(cfg.data.unwrap().path, dir.path().join("data.csv"));
}
