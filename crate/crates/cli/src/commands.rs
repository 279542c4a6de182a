//! Subcommand implementations. Every command is a pure function of its
//! input files, the effective config and the root seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use beatpose_core::beatmap::{parse_beatmap, parse_unvalidated, BeatmapError};
use beatpose_core::config::ConfigError;
use beatpose_core::context::{
    build_dataset_from_manifest, decode_dataset, select_style_references, ContextError,
    StyleReferenceSet,
};
use beatpose_core::eval::{emit_report, evaluate, EvalError};
use beatpose_core::model::{
    fit, gradient_check_mutated, read_checkpoint, write_checkpoint, Model, ModelConfig, ModelError,
    ModelParams, DEFAULT_GRADCHECK_EPSILON,
};
use beatpose_core::pose::{load_pose_trace, resample, write_pose_trace, PoseError, PoseTrace};
use beatpose_core::rollout::{
    rest_seed, rollout as run_rollout, ModelPredictor, RolloutConfig, RolloutError,
};
use beatpose_core::synth::random_feature_example;
use beatpose_core::util::{sha256_hex, stage_rng, stage_seed};
use beatpose_core::{Beatmap, PipelineConfig};

use crate::Global;

pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            details: None,
        }
    }

    /// Single-line JSON on stderr.
    pub fn emit(&self) {
        let mut body = json!({"kind": self.kind, "message": self.message});
        if let Some(d) = &self.details {
            body["details"] = d.clone();
        }
        eprintln!("{}", json!({ "error": body }));
    }
}

macro_rules! kind_from {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        })*
    };
}

kind_from! {
    ConfigError => "config",
    BeatmapError => "beatmap",
    PoseError => "pose",
    ContextError => "dataset",
    ModelError => "model",
    RolloutError => "rollout",
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let details = match &e {
            EvalError::Coverage {
                notes,
                bombs,
                obstacles,
            } => Some(json!({"notes": notes, "bombs": bombs, "obstacles": obstacles})),
            _ => None,
        };
        CliError {
            kind: "eval",
            message: e.to_string(),
            details,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::new("io", format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::new("io", format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn load(global: &Global) -> Result<Self, CliError> {
        let text = match &global.config {
            Some(p) => String::from_utf8(read(p)?)
                .map_err(|_| CliError::new("config", format!("{} is not UTF-8", p.display())))?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        for o in &global.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| {
                CliError::new("usage", format!("--set expects KEY=VALUE, got `{o}`"))
            })?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(seed) = global.seed {
            overrides.push(("cli_app.seed".into(), seed.to_string()));
        }
        if let Some(t) = global.threads {
            overrides.push(("cli_app.threads".into(), t.to_string()));
        }
        let cfg = PipelineConfig::from_toml_str(&text, &overrides)?;
        // A pool may already exist when commands run in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.cli_app.threads)
            .build_global();
        Ok(Context {
            cfg,
            out: global.out.clone(),
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.cli_app.seed
    }
}

fn load_beatmap(path: &Path) -> Result<(Beatmap, String), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::new("beatmap", format!("{} is not UTF-8", path.display())))?;
    Ok((parse_beatmap(&text)?, sha256_hex(&bytes)))
}

fn load_trace(path: &Path) -> Result<(PoseTrace, String), CliError> {
    let bytes = read(path)?;
    Ok((load_pose_trace(bytes.as_slice())?, sha256_hex(&bytes)))
}

fn load_model(ctx: &Context, path: &Path) -> Result<(Model, String), CliError> {
    let bytes = read(path)?;
    let (mcfg, params) = read_checkpoint(&mut bytes.as_slice())?;
    let want = ctx.cfg.model();
    for (key, have, expected) in [
        ("context_builder.history", mcfg.history, want.history),
        ("context_builder.future", mcfg.future, want.future),
        ("context_builder.n", mcfg.n, want.n),
        ("context_builder.n_ref", mcfg.n_ref, want.n_ref),
    ] {
        if have != expected {
            return Err(CliError::new(
                "config",
                format!("checkpoint has {key} = {have} but the config says {expected}"),
            ));
        }
    }
    Ok((Model::new(mcfg, params), sha256_hex(&bytes)))
}

/// Style references for rollout and eval, drawn with the "rollout" stage seed.
fn style_refs(ctx: &Context, donor_path: &Path) -> Result<(StyleReferenceSet, String), CliError> {
    let (donor, hash) = load_trace(donor_path)?;
    let donor = resample(&donor, ctx.cfg.pose_core.rate)?;
    let w = ctx.cfg.window();
    let refs =
        select_style_references(&donor, w.n_ref, w.future, stage_seed(ctx.seed(), "rollout"))?;
    Ok((refs, hash))
}

pub fn ingest(_ctx: &Context, paths: &[PathBuf]) -> Result<(), CliError> {
    let mut failed = 0;
    for path in paths {
        let bytes = read(path)?;
        let hash = sha256_hex(&bytes);
        let line = match std::str::from_utf8(&bytes)
            .map_err(|_| "not UTF-8".to_string())
            .and_then(|text| parse_unvalidated(text).map_err(|e| e.to_string()))
        {
            Ok((map, violations)) => {
                if !violations.is_empty() {
                    failed += 1;
                }
                json!({
                    "path": path.display().to_string(),
                    "sha256": hash,
                    "ok": violations.is_empty(),
                    "notes": map.notes.len(),
                    "bombs": map.bombs.len(),
                    "obstacles": map.obstacles.len(),
                    "song_length": map.song_length,
                    "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                })
            }
            Err(message) => {
                failed += 1;
                json!({"path": path.display().to_string(), "sha256": hash, "ok": false, "error": message})
            }
        };
        println!("{line}");
    }
    if failed > 0 {
        return Err(CliError::new(
            "validation",
            format!("{failed} of {} beatmap(s) failed validation", paths.len()),
        ));
    }
    Ok(())
}

pub fn dataset(ctx: &Context, manifest: &Path) -> Result<(), CliError> {
    let c = &ctx.cfg.context_builder;
    let build = build_dataset_from_manifest(
        manifest,
        &ctx.cfg.window(),
        &c.geometry,
        c.stride,
        ctx.seed(),
    )?;
    let mut meta = build.manifest;
    meta["config"] = ctx.cfg.to_json();
    meta["input_manifest_sha256"] = json!(sha256_hex(&read(manifest)?));
    let bin = ctx.out.join("dataset.bin");
    write(&bin, &build.bytes)?;
    write(&ctx.out.join("dataset.json"), pretty(&meta))?;
    println!(
        "{}",
        json!({"dataset": bin.display().to_string(), "examples": build.examples, "sha256": meta["dataset_sha256"]})
    );
    Ok(())
}

pub fn train(ctx: &Context, dataset: &Path) -> Result<(), CliError> {
    let bytes = read(dataset)?;
    let meta_path = dataset.with_extension("json");
    let meta: Value = serde_json::from_slice(&read(&meta_path)?)
        .map_err(|e| CliError::new("dataset", format!("{}: {e}", meta_path.display())))?;
    let window = ctx.cfg.window();
    if meta["cfg"]["window"] != serde_json::to_value(window).expect("window serializes") {
        return Err(CliError::new(
            "config",
            format!(
                "dataset window {} does not match context_builder config",
                meta["cfg"]["window"]
            ),
        ));
    }
    let examples = decode_dataset(&bytes, &window)?;
    let mcfg = ctx.cfg.model();
    let params = ModelParams::init(&mcfg, &mut stage_rng(ctx.seed(), "init"));
    let mut model = Model::new(mcfg, params);
    let report = fit(&mut model, &examples, &ctx.cfg.train(), ctx.seed())?;

    let mut ckpt = Vec::new();
    write_checkpoint(&mut ckpt, &mcfg, &model.params)?;
    let mut csv = String::from("step,recon,match,total\n");
    for (i, l) in report.history.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{}", l.recon, l.matched, l.total);
    }
    let ckpt_path = ctx.out.join("model.bpck");
    write(&ckpt_path, &ckpt)?;
    write(&ctx.out.join("loss_history.csv"), &csv)?;
    let last = report.history.last().copied();
    let sidecar = json!({
        "config": ctx.cfg.to_json(),
        "model": mcfg,
        "seed": ctx.seed(),
        "steps": report.steps,
        "examples": examples.len(),
        "loss_history": "loss_history.csv",
        "final_loss": last,
        "dataset_sha256": sha256_hex(&bytes),
        "checkpoint_sha256": sha256_hex(&ckpt),
    });
    write(&ctx.out.join("model.json"), pretty(&sidecar))?;
    println!(
        "{}",
        json!({"checkpoint": ckpt_path.display().to_string(), "steps": report.steps, "final_loss": last})
    );
    Ok(())
}

pub fn rollout(
    ctx: &Context,
    checkpoint: &Path,
    beatmap: &Path,
    donor: &Path,
) -> Result<(), CliError> {
    let (model, ckpt_hash) = load_model(ctx, checkpoint)?;
    let (map, map_hash) = load_beatmap(beatmap)?;
    let (refs, donor_hash) = style_refs(ctx, donor)?;
    let predictor = ModelPredictor::new(&model, &refs.features())?;
    let rate = ctx.cfg.pose_core.rate;
    let rcfg = RolloutConfig {
        settings: ctx.cfg.rollout,
        seed_history: rest_seed(model.config.history + 1, rate),
        rate,
        horizon: ctx.cfg.context_builder.horizon,
    };
    let trace = run_rollout(&predictor, &map, &ctx.cfg.context_builder.geometry, &rcfg)?;
    let mut csv = Vec::new();
    write_pose_trace(&trace, &mut csv)?;
    let path = ctx.out.join("trace.csv");
    write(&path, &csv)?;
    let sidecar = json!({
        "config": ctx.cfg.to_json(),
        "seed": ctx.seed(),
        "frames": trace.len(),
        "style_ref_starts": refs.starts,
        "inputs": {
            "checkpoint_sha256": ckpt_hash,
            "beatmap_sha256": map_hash,
            "donor_sha256": donor_hash,
        },
        "trace_sha256": sha256_hex(&csv),
    });
    write(&ctx.out.join("trace.json"), pretty(&sidecar))?;
    println!(
        "{}",
        json!({"trace": path.display().to_string(), "frames": trace.len()})
    );
    Ok(())
}

pub fn eval(
    ctx: &Context,
    trace: &Path,
    beatmap: &Path,
    style: Option<(&Path, &Path)>,
) -> Result<(), CliError> {
    let (trace, trace_hash) = load_trace(trace)?;
    let (map, map_hash) = load_beatmap(beatmap)?;
    let mut inputs = json!({"trace_sha256": trace_hash, "beatmap_sha256": map_hash});
    let loaded = match style {
        Some((ckpt, donor)) => {
            let (model, ckpt_hash) = load_model(ctx, ckpt)?;
            let (refs, donor_hash) = style_refs(ctx, donor)?;
            inputs["checkpoint_sha256"] = json!(ckpt_hash);
            inputs["donor_sha256"] = json!(donor_hash);
            Some((model, refs.features()))
        }
        None => None,
    };
    let report = evaluate(
        &trace,
        &map,
        &ctx.cfg.context_builder.geometry,
        &ctx.cfg.eval_suite,
        loaded.as_ref().map(|(m, r)| (m, r.as_slice())),
    )?;
    let config = json!({
        "eval_suite": ctx.cfg.eval_suite,
        "geometry": ctx.cfg.context_builder.geometry,
        "seed": ctx.seed(),
    });
    let written = emit_report(&report, &trace, &map, &config, &inputs, &ctx.out)?;
    println!(
        "{}",
        json!({"report": written[0].display().to_string(), "hit_rate": report.hit_rate, "notes": report.outcomes.len()})
    );
    Ok(())
}

pub fn gradcheck(ctx: &Context) -> Result<(), CliError> {
    let mcfg = ModelConfig::toy();
    let model = Model::new(
        mcfg,
        ModelParams::init(&mcfg, &mut stage_rng(ctx.seed(), "init")),
    );
    let example = random_feature_example(&mcfg, &mut stage_rng(ctx.seed(), "gradcheck"));
    let lambda = ctx.cfg.style_model.lambda_match;
    let (err, block) =
        gradient_check_mutated(&model, &example, lambda, DEFAULT_GRADCHECK_EPSILON, |_| {})?;
    let pass = err < GRADCHECK_THRESHOLD;
    println!(
        "{}",
        json!({
            "max_relative_error": err,
            "worst_block": block,
            "epsilon": DEFAULT_GRADCHECK_EPSILON,
            "threshold": GRADCHECK_THRESHOLD,
            "model": mcfg,
            "pass": pass,
        })
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::new(
            "gradcheck",
            format!("max relative error {err} in {block} is not below {GRADCHECK_THRESHOLD}"),
        ))
    }
}
