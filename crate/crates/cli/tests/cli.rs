mod common;

use beatpose_core::model::read_checkpoint;
use beatpose_core::util::{sha256_hex, stage_rng};
use beatpose_core::{ModelConfig, ModelParams};
use common::*;

#[test]
fn ingest_valid_corpus_exits_zero() {
    let dir = fixtures().join("valid");
    let mut paths: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .collect();
    paths.sort();
    let mut args = vec!["ingest"];
    args.extend(paths.iter().map(String::as_str));
    let out = beatpose(&args, &[]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), paths.len());
    for line in stdout.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn ingest_invalid_exits_nonzero_with_rule() {
    let path = fixtures().join("invalid/column_range.json");
    let out = beatpose(&["ingest", s(&path)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_envelope(&out)["kind"], "validation");
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["ok"], false);
    assert_eq!(
        line["violations"],
        serde_json::json!(["notes[1].column (column_range)"])
    );
}

#[test]
fn ingest_malformed_exits_nonzero() {
    let path = fixtures().join("malformed/truncated.json");
    let out = beatpose(&["ingest", s(&path)], &[]);
    assert_eq!(out.status.code(), Some(1));
    error_envelope(&out);
}

#[test]
fn unknown_config_key_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[style_model]\nlearning_rate = 0.1\n").unwrap();
    let out = beatpose(&["--config", s(&cfg), "gradcheck"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_envelope(&out);
    assert_eq!(err["kind"], "config");
    assert!(
        err.to_string().contains("style_model.learning_rate"),
        "{err}"
    );
}

#[test]
fn invalid_config_value_names_the_path() {
    let out = beatpose(&["gradcheck"], &["style_model.lr=-1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_envelope(&out);
    assert!(err.to_string().contains("style_model.lr"), "{err}");
}

#[test]
fn usage_error_exits_two() {
    let out = beatpose(&["rollout"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_envelope(&out)["kind"], "usage");
}

#[test]
fn gradcheck_passes() {
    let out = beatpose(&["gradcheck", "--seed", "7"], &[]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4, "{v}");
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_inputs(tmp.path(), 1, 3);
    let out_dir = tmp.path().join("out");
    let o = s(&out_dir);
    ok(&beatpose(&["--out", o, "dataset", s(&manifest)], SMALL));
    let mut set = SMALL.to_vec();
    set.extend(["style_model.lr=0", "style_model.steps=5"]);
    ok(&beatpose(
        &[
            "--out",
            o,
            "--seed",
            "9",
            "train",
            s(&out_dir.join("dataset.bin")),
        ],
        &set,
    ));

    let bytes = std::fs::read(out_dir.join("model.bpck")).unwrap();
    let (cfg, params) = read_checkpoint(&mut bytes.as_slice()).unwrap();
    let expected_cfg = ModelConfig {
        d_z: 8,
        hidden: 16,
        history: 6,
        future: 10,
        n: 3,
        n_ref: 2,
    };
    assert_eq!(cfg, expected_cfg);
    assert_eq!(params, ModelParams::init(&cfg, &mut stage_rng(9, "init")));
}

#[test]
fn train_rejects_mismatched_window() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_inputs(tmp.path(), 1, 4);
    let out_dir = tmp.path().join("out");
    let o = s(&out_dir);
    ok(&beatpose(&["--out", o, "dataset", s(&manifest)], SMALL));
    let mut set = SMALL.to_vec();
    set.push("context_builder.future=12");
    let out = beatpose(
        &["--out", o, "train", s(&out_dir.join("dataset.bin"))],
        &set,
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_envelope(&out)["kind"], "config");
}

#[test]
fn eval_records_rollout_input_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_inputs(tmp.path(), 1, 5);
    let out_dir = tmp.path().join("out");
    let o = s(&out_dir);
    let mut set = SMALL.to_vec();
    set.push("style_model.steps=10");
    ok(&beatpose(&["--out", o, "dataset", s(&manifest)], &set));
    ok(&beatpose(
        &["--out", o, "train", s(&out_dir.join("dataset.bin"))],
        &set,
    ));
    let ckpt = out_dir.join("model.bpck");
    let map = tmp.path().join("map0.json");
    let donor = tmp.path().join("play0.csv");
    ok(&beatpose(
        &[
            "--out",
            o,
            "rollout",
            "--checkpoint",
            s(&ckpt),
            "--beatmap",
            s(&map),
            "--donor",
            s(&donor),
        ],
        &set,
    ));
    let trace = out_dir.join("trace.csv");
    ok(&beatpose(
        &[
            "--out",
            o,
            "eval",
            "--trace",
            s(&trace),
            "--beatmap",
            s(&map),
            "--checkpoint",
            s(&ckpt),
            "--donor",
            s(&donor),
        ],
        &set,
    ));

    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("trace.json")).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let hash = |p: &std::path::Path| sha256_hex(&std::fs::read(p).unwrap());
    assert_eq!(side["trace_sha256"], hash(&trace));
    assert_eq!(report["inputs"]["trace_sha256"], side["trace_sha256"]);
    for key in ["checkpoint_sha256", "beatmap_sha256", "donor_sha256"] {
        assert_eq!(report["inputs"][key], side["inputs"][key], "{key}");
    }
    assert_eq!(report["inputs"]["beatmap_sha256"], hash(&map));
    assert!(report["style_distance"].as_f64().unwrap() >= 0.0);
    for svg in ["hit_timeline.svg", "outcomes.svg", "jerk.svg"] {
        let text = std::fs::read_to_string(out_dir.join(svg)).unwrap();
        assert!(text.starts_with("<svg"), "{svg}");
    }
}
