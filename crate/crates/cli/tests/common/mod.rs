#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use beatpose_core::beatmap::to_json;
use beatpose_core::pose::write_pose_trace;
use beatpose_core::synth::{random_beatmap, random_play_trace};
use beatpose_core::LaneGeometry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Small-model overrides that keep end-to-end runs fast.
pub const SMALL: &[&str] = &[
    "context_builder.history=6",
    "context_builder.future=10",
    "context_builder.n=3",
    "context_builder.n_ref=2",
    "context_builder.stride=4",
    "style_model.d_z=8",
    "style_model.hidden=16",
    "style_model.batch_size=8",
    "rollout.stride=5",
    "rollout.blend=3",
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/beatmaps")
}

pub fn beatpose(args: &[&str], overrides: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_beatpose"));
    cmd.env_remove("BEATPOSE_CONFIG").args(args);
    for o in overrides {
        cmd.arg("--set").arg(o);
    }
    cmd.output().expect("binary runs")
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn error_envelope(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is not empty");
    let v: serde_json::Value = serde_json::from_str(line).expect("stderr envelope is JSON");
    assert!(v["error"]["kind"].is_string(), "{v}");
    assert!(v["error"]["message"].is_string(), "{v}");
    v["error"].clone()
}

/// Writes `sessions` synthetic play sessions plus `inputs.json` into `dir`.
pub fn write_inputs(dir: &Path, sessions: usize, seed: u64) -> PathBuf {
    let lanes = LaneGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for i in 0..sessions {
        let map = random_beatmap(&mut rng, 8.0, 16, 3, 2);
        let trace = random_play_trace(&mut rng, 8.0, 30.0, &lanes);
        let mut csv = Vec::new();
        write_pose_trace(&trace, &mut csv).unwrap();
        std::fs::write(dir.join(format!("play{i}.csv")), csv).unwrap();
        std::fs::write(dir.join(format!("map{i}.json")), to_json(&map)).unwrap();
        entries.push(
            serde_json::json!({"trace": format!("play{i}.csv"), "beatmap": format!("map{i}.json")}),
        );
    }
    let manifest = dir.join("inputs.json");
    std::fs::write(
        &manifest,
        serde_json::json!({ "entries": entries }).to_string(),
    )
    .unwrap();
    manifest
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
