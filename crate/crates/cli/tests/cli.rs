use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bundleseq_core::neuralkit::ParamSet;
use bundleseq_core::seqmodels::PARAMS_STEM;
use serde_json::Value;

const TINY: [&str; 10] = ["--embed-dim", "8", "--heads", "2", "--head-dim", "4", "--ff-dim", "16", "--blocks", "1"];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bundleseq"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn with_data(sessions: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--tracks", "6", "--sessions", sessions, "--seed", "3", "--out", "data"]);
    dir
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["train", "--no-such-flag"]), 1);
    assert_eq!(code(d, &["train", "--model", "mc"]), 1);
    assert_eq!(code(d, &["evaluate"]), 1);
    fs::write(d.join("bad.json"), r#"{"epochs": 3, "colour": "red"}"#).unwrap();
    assert_eq!(code(d, &["train", "--config", "bad.json", "--data", "x"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["--version"]), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = with_data("40");
    let d = dir.path();
    assert_eq!(code(d, &["summarize", "--data", "missing"]), 2);
    let sessions = fs::read_to_string(d.join("data/sessions.jsonl")).unwrap();
    let broken = sessions.replacen(r#""action":"skip""#, r#""action":"replay""#, 1);
    fs::write(d.join("data/sessions.jsonl"), broken).unwrap();
    assert_eq!(code(d, &["summarize", "--data", "data", "--strict"]), 2);
    assert_eq!(code(d, &["summarize", "--data", "data"]), 0);
    ok(d, &["train", "--data", "data", "--model", "mc", "--out", "mc"]);
    assert_eq!(code(d, &["analyze-attention", "--model-dir", "mc"]), 2);
}

#[test]
fn divergence_exits_with_three() {
    let dir = with_data("40");
    let d = dir.path();
    let mut args = vec!["train", "--data", "data", "--model", "transformer", "--learning-rate", "NaN", "--out", "tf"];
    args.extend(TINY);
    let out = run(d, &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn flags_override_the_config_file() {
    let dir = with_data("60");
    let d = dir.path();
    fs::write(d.join("train.json"), r#"{"seed": 5, "epochs": 2, "model": "lstm", "lstm": {"hidden": 4, "layers": 1}}"#).unwrap();
    ok(d, &["train", "--config", "train.json", "--data", "data", "--seed", "7", "--leak", "--out", "m"]);
    let config = json(d.join("m/config.json"));
    assert_eq!(config["seed"], 7);
    assert_eq!(config["epochs"], 2);
    assert_eq!(config["model"], "lstm");
    assert_eq!(config["lstm"]["hidden"], 4);
    assert_eq!(config["train_fraction"], 0.9);
    let sidecar = json(d.join("m/models/synthetic/model.json"));
    assert_eq!(sidecar["features"]["spec"]["leak"], true);
    let log = json(d.join("m/training/synthetic.json"));
    assert!(log["epochs"].as_array().unwrap().len() <= 2);
}

#[test]
fn manifest_digests_the_outputs() {
    let dir = with_data("30");
    let d = dir.path();
    let manifest = json(d.join("data/manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert!(manifest["extra"]["bayes_rate"].as_f64().unwrap() > 0.5);
    let outputs = manifest["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["config.json", "playlists.jsonl", "sessions.jsonl", "spec.json"]);
    assert!(outputs.iter().all(|o| o["sha256"].as_str().unwrap().len() == 64));
}

#[test]
fn evaluate_compares_session_end_modes_and_models() {
    let dir = with_data("200");
    let d = dir.path();
    ok(d, &["train", "--data", "data", "--model", "mc", "--out", "mc"]);
    ok(d, &["train", "--data", "data", "--model", "zero", "--out", "zero"]);
    let text = ok(d, &["evaluate", "--model-dir", "mc", "--model-dir", "zero", "--out", "full"]);
    assert!(text.contains("hit rate"));
    ok(d, &["evaluate", "--model-dir", "mc", "--session-end", "truncate", "--out", "trunc"]);
    assert_eq!(json(d.join("full/mc/report.json"))["session_end"], "full");
    assert_eq!(json(d.join("trunc/mc/report.json"))["session_end"], "truncate");
    let comparison = json(d.join("full/comparison.json"));
    assert_eq!(comparison["dominance"].as_array().unwrap().len(), 2);
    assert!(d.join("full/cdf.svg").exists());
    let header = fs::read_to_string(d.join("full/mc/hit_rates.csv")).unwrap();
    assert!(header.starts_with("playlist_id,sessions,observations,hits,hit_rate,pseudo_r2"));
}

#[test]
fn uniform_attention_correlates_perfectly() {
    let dir = with_data("80");
    let d = dir.path();
    let mut args = vec!["train", "--data", "data", "--model", "transformer", "--epochs", "1", "--out", "tf"];
    args.extend(TINY);
    ok(d, &args);
    let model_dir = d.join("tf/models/synthetic");
    let mut params = ParamSet::load(&model_dir, PARAMS_STEM).unwrap();
    for p in params.iter_mut() {
        if p.name.contains(".query.") || p.name.contains(".key.") {
            p.value.as_mut_slice().fill(0.0);
        }
    }
    params.save(&model_dir, PARAMS_STEM).unwrap();
    let table = ok(d, &["analyze-attention", "--model-dir", "tf", "--out", "att"]);
    assert!(table.contains("1.000"), "{table}");
    let summary = json(d.join("att/attention_summary.json"));
    let r = summary[0]["mean_correlation"].as_f64().unwrap();
    assert!((r - 1.0).abs() < 1e-9, "{r}");
    let csv = fs::read_to_string(d.join("att/attention_profiles.csv")).unwrap();
    assert!(csv.starts_with("playlist_id,session_id,j,empirical,baseline3,correlation\n"));
}

#[test]
fn prompts_and_summary_files() {
    let dir = with_data("100");
    let d = dir.path();
    ok(d, &["export-prompts", "--data", "data", "--out", "all"]);
    ok(d, &["export-prompts", "--data", "data", "--dedupe", "--out", "unique"]);
    ok(d, &["export-prompts", "--data", "data", "--split", "test", "--out", "test"]);
    let lines = |p: &str| fs::read_to_string(d.join(p)).unwrap().lines().count();
    assert!(lines("unique/prompts.jsonl") < lines("all/prompts.jsonl"));
    assert!(lines("test/prompts.jsonl") < lines("all/prompts.jsonl"));
    let text = ok(d, &["summarize", "--data", "data", "--out", "summary"]);
    assert!(text.starts_with("playlist"));
    let csv = fs::read_to_string(d.join("summary/summary.csv")).unwrap();
    assert!(csv.starts_with("playlist_id,tracks,sessions,events,avg_listening_time"));
    assert_eq!(json(d.join("summary/summary.json"))[0]["sessions"], 100);
}
