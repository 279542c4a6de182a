//! Binary training datasets.
//!
//! The dataset file is a sequence of records, each a little-endian `u32`
//! count followed by that many little-endian `f32` values. The field layout
//! is listed in the manifest under `record_layout`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{
    build_training_window_at, example_indices, select_style_references, ContextError, EventRows,
    GameContext, LaneGeometry, TrainingExample, WindowConfig, BOMB_FEATURES, NOTE_FEATURES,
    OBSTACLE_FEATURES,
};
use crate::beatmap::{parse_beatmap, Beatmap};
use crate::pose::{
    load_pose_trace, orthonormalize_6d, resample, AnchorTransform, PoseTrace, FRAME_FEATURES,
    JOINT_FEATURES,
};
use crate::util::{sha256_hex, stage_seed};

pub const RECORD_LAYOUT_VERSION: u32 = 1;

/// Numeric view of a [`TrainingExample`]; what the model trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExample {
    pub query_time: f64,
    pub anchor: AnchorTransform,
    pub history: Vec<[f64; FRAME_FEATURES]>,
    pub future: Vec<[f64; FRAME_FEATURES]>,
    pub context: GameContext,
    pub style_refs: Vec<Vec<[f64; FRAME_FEATURES]>>,
}

impl From<&TrainingExample> for FeatureExample {
    fn from(ex: &TrainingExample) -> Self {
        FeatureExample {
            query_time: ex.context.query_time,
            anchor: ex.anchor,
            history: ex.history.features(),
            future: ex.future.features(),
            context: ex.context.clone(),
            style_refs: ex.style_refs.features(),
        }
    }
}

/// `(name, shape)` of every record field in order.
pub fn record_layout(cfg: &WindowConfig) -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("query_time", vec![1]),
        ("anchor_yaw_tx_tz", vec![3]),
        ("history", vec![cfg.history_len(), FRAME_FEATURES]),
        ("future", vec![cfg.future, FRAME_FEATURES]),
        ("notes", vec![cfg.n, NOTE_FEATURES]),
        ("notes_mask", vec![cfg.n]),
        ("bombs", vec![cfg.n, BOMB_FEATURES]),
        ("bombs_mask", vec![cfg.n]),
        ("obstacles", vec![cfg.n, OBSTACLE_FEATURES]),
        ("obstacles_mask", vec![cfg.n]),
        ("style_refs", vec![cfg.n_ref, cfg.future, FRAME_FEATURES]),
    ]
}

fn record_len(cfg: &WindowConfig) -> usize {
    record_layout(cfg)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

fn push_mask(values: &mut Vec<f64>, mask: &[bool]) {
    values.extend(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
}

pub fn encode_record(ex: &FeatureExample, out: &mut Vec<u8>) {
    let mut values = vec![
        ex.query_time,
        ex.anchor.yaw,
        ex.anchor.translation_xz[0],
        ex.anchor.translation_xz[1],
    ];
    values.extend(ex.history.iter().flatten());
    values.extend(ex.future.iter().flatten());
    values.extend(ex.context.notes.rows.iter().flatten());
    push_mask(&mut values, &ex.context.notes.mask);
    values.extend(ex.context.bombs.rows.iter().flatten());
    push_mask(&mut values, &ex.context.bombs.mask);
    values.extend(ex.context.obstacles.rows.iter().flatten());
    push_mask(&mut values, &ex.context.obstacles.mask);
    values.extend(ex.style_refs.iter().flatten().flatten());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Cursor<'a> {
    values: &'a [f64],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> &[f64] {
        let s = &self.values[self.at..self.at + n];
        self.at += n;
        s
    }

    fn frames(&mut self, count: usize) -> Vec<[f64; FRAME_FEATURES]> {
        (0..count)
            .map(|_| {
                let mut f = [0.0; FRAME_FEATURES];
                f.copy_from_slice(self.take(FRAME_FEATURES));
                reorthonormalize(&mut f);
                f
            })
            .collect()
    }

    fn rows<const W: usize>(&mut self, n: usize) -> EventRows<W> {
        let rows = (0..n)
            .map(|_| {
                let mut r = [0.0; W];
                r.copy_from_slice(self.take(W));
                r
            })
            .collect();
        let mask = self.take(n).iter().map(|&m| m > 0.5).collect();
        EventRows { rows, mask }
    }
}

/// Stored rotations lose orthonormality in single precision; restore it.
fn reorthonormalize(frame: &mut [f64; FRAME_FEATURES]) {
    for j in 0..3 {
        let r = j * JOINT_FEATURES + 3..j * JOINT_FEATURES + 9;
        if let Ok([e1, e2, _]) = orthonormalize_6d(&frame[r.clone()]) {
            frame[r].copy_from_slice(&[e1.x, e1.y, e1.z, e2.x, e2.y, e2.z]);
        }
    }
}

pub fn decode_dataset(
    bytes: &[u8],
    cfg: &WindowConfig,
) -> Result<Vec<FeatureExample>, ContextError> {
    let expected = record_len(cfg);
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let header = bytes
            .get(at..at + 4)
            .ok_or_else(|| ContextError::Format(format!("truncated length prefix at byte {at}")))?;
        let count = u32::from_le_bytes(header.try_into().unwrap()) as usize;
        at += 4;
        if count != expected {
            return Err(ContextError::Format(format!(
                "record {} holds {count} values, layout expects {expected}",
                out.len()
            )));
        }
        let payload = bytes
            .get(at..at + 4 * count)
            .ok_or_else(|| ContextError::Format(format!("truncated record {}", out.len())))?;
        at += 4 * count;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let mut cur = Cursor {
            values: &values,
            at: 0,
        };
        let head = cur.take(4).to_vec();
        let history = cur.frames(cfg.history_len());
        let future = cur.frames(cfg.future);
        let notes = cur.rows::<NOTE_FEATURES>(cfg.n);
        let bombs = cur.rows::<BOMB_FEATURES>(cfg.n);
        let obstacles = cur.rows::<OBSTACLE_FEATURES>(cfg.n);
        let style_refs = (0..cfg.n_ref).map(|_| cur.frames(cfg.future)).collect();
        out.push(FeatureExample {
            query_time: head[0],
            anchor: AnchorTransform::new(head[1], [head[2], head[3]]),
            history,
            future,
            context: GameContext {
                query_time: head[0],
                notes,
                bombs,
                obstacles,
            },
            style_refs,
        });
    }
    Ok(out)
}

/// One performance: a trace on the config clock, its beatmap and the donor
/// trace style references are drawn from.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub name: String,
    pub trace: PoseTrace,
    pub beatmap: Beatmap,
    pub donor: PoseTrace,
    /// Input file hashes recorded in the manifest.
    pub hashes: Value,
}

pub struct DatasetBuild {
    pub bytes: Vec<u8>,
    pub manifest: Value,
    pub examples: usize,
}

/// Cuts examples at every `stride`-th admissible frame of every source, in
/// source order then frame order. Output is a pure function of the inputs,
/// `cfg`, `stride` and `seed`.
pub fn build_dataset(
    sources: &[DatasetSource],
    cfg: &WindowConfig,
    geom: &LaneGeometry,
    stride: usize,
    seed: u64,
) -> Result<DatasetBuild, ContextError> {
    if stride == 0 {
        return Err(ContextError::Manifest("stride must be >= 1".into()));
    }
    let mut bytes = Vec::new();
    let mut per_input = Vec::new();
    let mut inputs = Vec::new();
    let mut total = 0;
    for (i, src) in sources.iter().enumerate() {
        let refs = select_style_references(
            &src.donor,
            cfg.n_ref,
            cfg.future,
            stage_seed(seed, &format!("dataset/{i}")),
        )?;
        let indices = example_indices(src.trace.len(), cfg, stride);
        let examples: Vec<FeatureExample> = indices
            .par_iter()
            .map(|&idx| {
                build_training_window_at(&src.trace, &src.beatmap, idx, cfg, geom, &refs)
                    .map(|ex| FeatureExample::from(&ex))
            })
            .collect::<Result<_, _>>()?;
        for ex in &examples {
            encode_record(ex, &mut bytes);
        }
        total += examples.len();
        per_input.push(
            json!({"name": src.name, "examples": examples.len(), "style_ref_starts": refs.starts}),
        );
        inputs.push(json!({"name": src.name, "sha256": src.hashes}));
    }
    let layout: Vec<Value> = record_layout(cfg)
        .into_iter()
        .map(|(name, shape)| json!({"name": name, "shape": shape}))
        .collect();
    let manifest = json!({
        "record_layout": {
            "version": RECORD_LAYOUT_VERSION,
            "length_prefix": "u32le value count",
            "dtype": "f32le",
            "fields": layout,
        },
        "cfg": {"window": cfg, "stride": stride, "geometry": geom},
        "seed": seed,
        "counts": {"examples": total, "inputs": per_input},
        "inputs": inputs,
        "dataset_sha256": sha256_hex(&bytes),
    });
    Ok(DatasetBuild {
        bytes,
        manifest,
        examples: total,
    })
}

fn resolve(
    base: &Path,
    entry: &Value,
    key: &str,
    index: usize,
) -> Result<Option<PathBuf>, ContextError> {
    match entry.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(base.join(s))),
        Some(_) => Err(ContextError::Manifest(format!(
            "entries[{index}].{key} must be a path string"
        ))),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ContextError> {
    std::fs::read(path)
        .map_err(|e| ContextError::Manifest(format!("cannot read {}: {e}", path.display())))
}

/// Loads every trace/beatmap pair named in an input manifest
/// (`{"entries": [{"trace": .., "beatmap": .., "donor": ..}]}`, paths
/// relative to the manifest) and resamples traces to `cfg.rate`. A missing
/// `donor` means the trace is its own donor.
pub fn load_manifest_sources(
    path: &Path,
    cfg: &WindowConfig,
) -> Result<Vec<DatasetSource>, ContextError> {
    let text = read(path)?;
    let doc: Value = serde_json::from_slice(&text)
        .map_err(|e| ContextError::Manifest(format!("{}: {e}", path.display())))?;
    let entries = doc
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| ContextError::Manifest("manifest needs an `entries` array".into()))?;
    if entries.is_empty() {
        return Err(ContextError::Manifest("manifest has no entries".into()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut sources = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let trace_path = resolve(base, entry, "trace", i)?;
        let map_path = resolve(base, entry, "beatmap", i)?;
        let (trace_path, map_path) = match (trace_path, map_path) {
            (Some(t), Some(m)) => (t, m),
            (None, _) => {
                return Err(ContextError::Manifest(format!(
                    "entries[{i}] has no trace for its beatmap"
                )))
            }
            (_, None) => {
                return Err(ContextError::Manifest(format!(
                    "entries[{i}] has no beatmap for its trace"
                )))
            }
        };
        let donor_path = resolve(base, entry, "donor", i)?.unwrap_or_else(|| trace_path.clone());
        let trace_bytes = read(&trace_path)?;
        let map_bytes = read(&map_path)?;
        let donor_bytes = read(&donor_path)?;
        let raw_map = String::from_utf8(map_bytes.clone())
            .map_err(|_| ContextError::Manifest(format!("{} is not UTF-8", map_path.display())))?;
        let beatmap = parse_beatmap(&raw_map)?;
        let trace = resample(&load_pose_trace(trace_bytes.as_slice())?, cfg.rate)?;
        let donor = resample(&load_pose_trace(donor_bytes.as_slice())?, cfg.rate)?;
        sources.push(DatasetSource {
            name: trace_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            trace,
            beatmap,
            donor,
            hashes: json!({
                "trace": sha256_hex(&trace_bytes),
                "beatmap": sha256_hex(&map_bytes),
                "donor": sha256_hex(&donor_bytes),
            }),
        });
    }
    Ok(sources)
}

pub fn build_dataset_from_manifest(
    path: &Path,
    cfg: &WindowConfig,
    geom: &LaneGeometry,
    stride: usize,
    seed: u64,
) -> Result<DatasetBuild, ContextError> {
    build_dataset(&load_manifest_sources(path, cfg)?, cfg, geom, stride, seed)
}
