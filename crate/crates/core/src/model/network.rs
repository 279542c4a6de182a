//! Encoders, decoder, losses and their hand-written gradients.

use super::layers::{Mlp, MlpCache};
use super::params::ModelParams;
use super::{LatentVector, LossBreakdown, ModelConfig, ModelError};
use crate::context::FeatureExample;
use crate::context::{EventRows, GameContext};
use crate::pose::{Vec3, FRAME_FEATURES, JOINT_FEATURES};

pub type Frame = [f64; FRAME_FEATURES];

/// Below this the second 6d half is treated as collinear with the first.
const GS_EPS: f64 = 1e-12;

fn encode_frames(mlp: &Mlp, frames: &[Frame]) -> (Vec<f64>, Vec<MlpCache>) {
    let mut z = vec![0.0; mlp.output.outputs];
    let mut caches = Vec::with_capacity(frames.len());
    for f in frames {
        let (y, cache) = mlp.forward(f);
        for (a, b) in z.iter_mut().zip(&y) {
            *a += b;
        }
        caches.push(cache);
    }
    let n = frames.len() as f64;
    z.iter_mut().for_each(|v| *v /= n);
    (z, caches)
}

fn encode_frames_backward(
    mlp: &Mlp,
    caches: &[MlpCache],
    dz: &[f64],
    grad: &mut Mlp,
    mut dframes: Option<&mut [Frame]>,
) {
    let n = caches.len() as f64;
    let dy: Vec<f64> = dz.iter().map(|g| g / n).collect();
    for (i, cache) in caches.iter().enumerate() {
        let dx = dframes.as_deref_mut().map(|d| &mut d[i][..]);
        mlp.backward(cache, &dy, grad, dx);
    }
}

fn pool_rows<const W: usize>(mlp: &Mlp, rows: &EventRows<W>) -> (Vec<f64>, Vec<MlpCache>) {
    let mut pooled = vec![0.0; mlp.output.outputs];
    let mut caches = Vec::new();
    for (row, &present) in rows.rows.iter().zip(&rows.mask) {
        if !present {
            continue;
        }
        let (y, cache) = mlp.forward(row);
        for (a, b) in pooled.iter_mut().zip(&y) {
            *a += b;
        }
        caches.push(cache);
    }
    (pooled, caches)
}

struct GameTrace {
    caches: [Vec<MlpCache>; 3],
    pooled: Vec<f64>,
}

fn encode_game_traced(params: &ModelParams, ctx: &GameContext) -> (Vec<f64>, GameTrace) {
    let g = &params.game_encoder;
    let (pn, cn) = pool_rows(&g.note, &ctx.notes);
    let (pb, cb) = pool_rows(&g.bomb, &ctx.bombs);
    let (po, co) = pool_rows(&g.obstacle, &ctx.obstacles);
    let pooled: Vec<f64> = pn.into_iter().chain(pb).chain(po).collect();
    let z = g.out.forward(&pooled);
    (
        z,
        GameTrace {
            caches: [cn, cb, co],
            pooled,
        },
    )
}

fn encode_game_backward(
    params: &ModelParams,
    trace: &GameTrace,
    dz: &[f64],
    grad: &mut ModelParams,
) {
    let g = &params.game_encoder;
    let mut dpooled = vec![0.0; trace.pooled.len()];
    g.out.backward(
        &trace.pooled,
        dz,
        &mut grad.game_encoder.out,
        Some(&mut dpooled),
    );
    let width = g.note.output.outputs;
    let gg = &mut grad.game_encoder;
    for (k, (mlp, gmlp)) in [
        (&g.note, &mut gg.note),
        (&g.bomb, &mut gg.bomb),
        (&g.obstacle, &mut gg.obstacle),
    ]
    .into_iter()
    .enumerate()
    {
        let dy = &dpooled[k * width..(k + 1) * width];
        for cache in &trace.caches[k] {
            mlp.backward(cache, dy, gmlp, None);
        }
    }
}

fn encode_style_traced(
    params: &ModelParams,
    refs: &[Vec<Frame>],
) -> (Vec<f64>, Vec<Vec<MlpCache>>) {
    let mut z = vec![0.0; params.style_encoder.output.outputs];
    let mut caches = Vec::with_capacity(refs.len());
    for r in refs {
        let (zr, c) = encode_frames(&params.style_encoder, r);
        for (a, b) in z.iter_mut().zip(&zr) {
            *a += b;
        }
        caches.push(c);
    }
    let n = refs.len() as f64;
    z.iter_mut().for_each(|v| *v /= n);
    (z, caches)
}

/// Gram-Schmidt on one 6-vector; returns the orthonormal pair and the norms
/// needed for the backward pass.
fn orthonormalize(raw: &[f64]) -> (Vec3, Vec3, f64, f64) {
    let a = Vec3::from_slice(&raw[0..3]);
    let b = Vec3::from_slice(&raw[3..6]);
    let na = a.norm();
    let c0 = if na > GS_EPS {
        a * (1.0 / na)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    let bp = b - c0 * c0.dot(b);
    let nb = bp.norm();
    let c1 = if nb > GS_EPS {
        bp * (1.0 / nb)
    } else {
        let helper = if c0.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let p = helper - c0 * c0.dot(helper);
        p * (1.0 / p.norm())
    };
    (c0, c1, na, nb)
}

fn orthonormalize_backward(raw: &[f64], g0: Vec3, g1: Vec3, out: &mut [f64]) {
    let (c0, c1, na, nb) = orthonormalize(raw);
    if na <= GS_EPS || nb <= GS_EPS {
        return;
    }
    let b = Vec3::from_slice(&raw[3..6]);
    let gbp = (g1 - c1 * c1.dot(g1)) * (1.0 / nb);
    let gb = gbp - c0 * c0.dot(gbp);
    let gc0 = g0 - b * c0.dot(gbp) - gbp * c0.dot(b);
    let ga = (gc0 - c0 * c0.dot(gc0)) * (1.0 / na);
    out[0..3].copy_from_slice(&ga.to_array());
    out[3..6].copy_from_slice(&gb.to_array());
}

fn finish_decode(raw: &[f64], frames: usize) -> Vec<Frame> {
    (0..frames)
        .map(|t| {
            let mut f = [0.0; FRAME_FEATURES];
            let src = &raw[t * FRAME_FEATURES..(t + 1) * FRAME_FEATURES];
            for j in 0..3 {
                let base = j * JOINT_FEATURES;
                f[base..base + 3].copy_from_slice(&src[base..base + 3]);
                let (c0, c1, _, _) = orthonormalize(&src[base + 3..base + 9]);
                f[base + 3..base + 6].copy_from_slice(&c0.to_array());
                f[base + 6..base + 9].copy_from_slice(&c1.to_array());
            }
            f
        })
        .collect()
}

fn columns(f: &Frame, joint: usize) -> (Vec3, Vec3, Vec3) {
    let base = joint * JOINT_FEATURES;
    let c0 = Vec3::from_slice(&f[base + 3..base + 6]);
    let c1 = Vec3::from_slice(&f[base + 6..base + 9]);
    (c0, c1, c0.cross(c1))
}

/// Geodesic angle between two rotations given as orthonormal column pairs.
fn geodesic(p: &Frame, t: &Frame, joint: usize) -> (f64, f64) {
    let (p0, p1, p2) = columns(p, joint);
    let (t0, t1, t2) = columns(t, joint);
    let trace = p0.dot(t0) + p1.dot(t1) + p2.dot(t2);
    let x = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    (x.acos(), trace)
}

/// d(theta^2)/d(trace).
fn geodesic_sq_slope(theta: f64) -> f64 {
    let ratio = if theta < 1e-4 {
        1.0 + theta * theta / 6.0
    } else {
        let s = theta.sin();
        if s < 1e-9 {
            return 0.0;
        }
        theta / s
    };
    -ratio
}

/// Mean squared joint position error plus mean squared geodesic angle.
pub fn loss_recon(pred: &[Frame], target: &[Frame]) -> Result<f64, ModelError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(ModelError::Shape(format!(
            "prediction has {} frames, target {}",
            pred.len(),
            target.len()
        )));
    }
    let mut pos = 0.0;
    let mut rot = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for j in 0..3 {
            let base = j * JOINT_FEATURES;
            for k in 0..3 {
                let d = p[base + k] - t[base + k];
                pos += d * d;
            }
            let (theta, _) = geodesic(p, t, j);
            rot += theta * theta;
        }
    }
    let count = (3 * pred.len()) as f64;
    Ok(pos / count + rot / count)
}

fn loss_recon_backward(pred: &[Frame], target: &[Frame], scale: f64, dpred: &mut [Frame]) {
    let count = (3 * pred.len()) as f64;
    for ((p, t), d) in pred.iter().zip(target).zip(dpred.iter_mut()) {
        for j in 0..3 {
            let base = j * JOINT_FEATURES;
            for k in 0..3 {
                d[base + k] += scale * 2.0 * (p[base + k] - t[base + k]) / count;
            }
            let (theta, _) = geodesic(p, t, j);
            let s = scale * geodesic_sq_slope(theta) / count;
            let (p0, p1, _) = columns(p, j);
            let (t0, t1, t2) = columns(t, j);
            let g0 = (t0 + p1.cross(t2)) * s;
            let g1 = (t1 + t2.cross(p0)) * s;
            for k in 0..3 {
                d[base + 3 + k] += g0.to_array()[k];
                d[base + 6 + k] += g1.to_array()[k];
            }
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    pose_caches: Vec<MlpCache>,
    game: GameTrace,
    style_caches: Vec<Vec<MlpCache>>,
    decoder_cache: MlpCache,
    raw: Vec<f64>,
    pub pred: Vec<Frame>,
    match_caches: Vec<MlpCache>,
    z_pred: Vec<f64>,
    z_ref: Vec<f64>,
    pub breakdown: LossBreakdown,
}

/// The model: fixed configuration plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Model { config, params }
    }

    fn check_frames(
        &self,
        what: &str,
        frames: &[Frame],
        expected: usize,
    ) -> Result<(), ModelError> {
        if frames.len() != expected {
            return Err(ModelError::Shape(format!(
                "{what} has {} frames, expected {expected}",
                frames.len()
            )));
        }
        Ok(())
    }

    fn check_context(&self, ctx: &GameContext) -> Result<(), ModelError> {
        let n = self.config.n;
        for (name, len, mask) in [
            ("notes", ctx.notes.rows.len(), ctx.notes.mask.len()),
            ("bombs", ctx.bombs.rows.len(), ctx.bombs.mask.len()),
            (
                "obstacles",
                ctx.obstacles.rows.len(),
                ctx.obstacles.mask.len(),
            ),
        ] {
            if len != mask {
                return Err(ModelError::Shape(format!(
                    "{name}: {len} rows but {mask} mask entries"
                )));
            }
            if len != n {
                return Err(ModelError::Shape(format!(
                    "{name}: {len} rows, expected {n}"
                )));
            }
        }
        Ok(())
    }

    fn check_refs(&self, refs: &[Vec<Frame>]) -> Result<(), ModelError> {
        if refs.is_empty() {
            return Err(ModelError::Shape("style reference set is empty".into()));
        }
        for (i, r) in refs.iter().enumerate() {
            self.check_frames(&format!("style reference {i}"), r, self.config.future)?;
        }
        Ok(())
    }

    pub fn encode_3p(&self, history: &[Frame]) -> Result<LatentVector, ModelError> {
        self.check_frames("history", history, self.config.history + 1)?;
        Ok(LatentVector(
            encode_frames(&self.params.pose_encoder, history).0,
        ))
    }

    /// Context rows must come in the configured count; masked rows are ignored.
    pub fn encode_game(&self, ctx: &GameContext) -> Result<LatentVector, ModelError> {
        self.check_context(ctx)?;
        Ok(LatentVector(encode_game_traced(&self.params, ctx).0))
    }

    /// Like [`Model::encode_game`] but accepts any row count.
    pub fn encode_game_unchecked(&self, ctx: &GameContext) -> LatentVector {
        LatentVector(encode_game_traced(&self.params, ctx).0)
    }

    /// Mean over references of the per-reference frame-mean encoding.
    /// Any number of references is accepted.
    pub fn encode_style(&self, refs: &[Vec<Frame>]) -> Result<LatentVector, ModelError> {
        self.check_refs(refs)?;
        Ok(LatentVector(encode_style_traced(&self.params, refs).0))
    }

    pub fn decode(
        &self,
        z3p: &LatentVector,
        zgame: &LatentVector,
        zstyle: &LatentVector,
    ) -> Result<Vec<Frame>, ModelError> {
        let d = self.config.d_z;
        for (name, z) in [("z3p", z3p), ("zgame", zgame), ("zstyle", zstyle)] {
            if z.0.len() != d {
                return Err(ModelError::Shape(format!(
                    "{name} has {} entries, expected {d}",
                    z.0.len()
                )));
            }
        }
        let input: Vec<f64> = z3p
            .0
            .iter()
            .chain(&zgame.0)
            .chain(&zstyle.0)
            .copied()
            .collect();
        let (raw, _) = self.params.decoder.forward(&input);
        Ok(finish_decode(&raw, self.config.future))
    }

    /// Full prediction for one canonical history and context.
    pub fn predict(
        &self,
        history: &[Frame],
        ctx: &GameContext,
        zstyle: &LatentVector,
    ) -> Result<Vec<Frame>, ModelError> {
        let z3p = self.encode_3p(history)?;
        let zgame = self.encode_game(ctx)?;
        self.decode(&z3p, &zgame, zstyle)
    }

    /// Squared distance between the style latent of `pred` (as a single
    /// reference) and the style latent of `refs`.
    pub fn loss_match(&self, pred: &[Frame], refs: &[Vec<Frame>]) -> Result<f64, ModelError> {
        self.check_frames("prediction", pred, self.config.future)?;
        self.check_refs(refs)?;
        let (z_pred, _) = encode_frames(&self.params.style_encoder, pred);
        let (z_ref, _) = encode_style_traced(&self.params, refs);
        Ok(squared_distance(&z_pred, &z_ref))
    }

    fn check_example(&self, ex: &FeatureExample) -> Result<(), ModelError> {
        self.check_frames("history", &ex.history, self.config.history + 1)?;
        self.check_frames("future", &ex.future, self.config.future)?;
        self.check_context(&ex.context)?;
        self.check_refs(&ex.style_refs)
    }

    /// Runs the whole pipeline on one example.
    pub fn forward(&self, ex: &FeatureExample, lambda: f64) -> Result<ForwardTrace, ModelError> {
        self.check_example(ex)?;
        let p = &self.params;
        let (z3p, pose_caches) = encode_frames(&p.pose_encoder, &ex.history);
        let (zgame, game) = encode_game_traced(p, &ex.context);
        let (zstyle, style_caches) = encode_style_traced(p, &ex.style_refs);
        let input: Vec<f64> = z3p.iter().chain(&zgame).chain(&zstyle).copied().collect();
        let (raw, decoder_cache) = p.decoder.forward(&input);
        let pred = finish_decode(&raw, self.config.future);
        let recon = loss_recon(&pred, &ex.future)?;
        let (z_pred, match_caches) = encode_frames(&p.style_encoder, &pred);
        let z_ref = zstyle.clone();
        let matched = squared_distance(&z_pred, &z_ref);
        Ok(ForwardTrace {
            pose_caches,
            game,
            style_caches,
            decoder_cache,
            raw,
            pred,
            match_caches,
            z_pred,
            z_ref,
            breakdown: LossBreakdown::new(recon, matched, lambda),
        })
    }

    pub fn total_loss(
        &self,
        ex: &FeatureExample,
        lambda: f64,
    ) -> Result<LossBreakdown, ModelError> {
        Ok(self.forward(ex, lambda)?.breakdown)
    }

    /// Accumulates `scale * d(total)/d(params)` into `grad`. The decoder
    /// sees the match term only through the prediction; the style encoder
    /// is differentiated through both latents.
    pub fn backward(
        &self,
        ex: &FeatureExample,
        trace: &ForwardTrace,
        scale: f64,
        grad: &mut ModelParams,
    ) {
        let p = &self.params;
        let lambda = trace.breakdown.lambda_match;
        let mut dpred = vec![[0.0; FRAME_FEATURES]; trace.pred.len()];
        loss_recon_backward(&trace.pred, &ex.future, scale, &mut dpred);

        let dz_pred: Vec<f64> = trace
            .z_pred
            .iter()
            .zip(&trace.z_ref)
            .map(|(a, b)| scale * lambda * 2.0 * (a - b))
            .collect();
        encode_frames_backward(
            &p.style_encoder,
            &trace.match_caches,
            &dz_pred,
            &mut grad.style_encoder,
            Some(&mut dpred),
        );

        let mut draw = vec![0.0; trace.raw.len()];
        for (t, d) in dpred.iter().enumerate() {
            let off = t * FRAME_FEATURES;
            for j in 0..3 {
                let base = off + j * JOINT_FEATURES;
                draw[base..base + 3]
                    .copy_from_slice(&d[j * JOINT_FEATURES..j * JOINT_FEATURES + 3]);
                let g0 = Vec3::from_slice(&d[j * JOINT_FEATURES + 3..j * JOINT_FEATURES + 6]);
                let g1 = Vec3::from_slice(&d[j * JOINT_FEATURES + 6..j * JOINT_FEATURES + 9]);
                orthonormalize_backward(
                    &trace.raw[base + 3..base + 9],
                    g0,
                    g1,
                    &mut draw[base + 3..base + 9],
                );
            }
        }
        let d = self.config.d_z;
        let mut dinput = vec![0.0; 3 * d];
        p.decoder.backward(
            &trace.decoder_cache,
            &draw,
            &mut grad.decoder,
            Some(&mut dinput),
        );

        encode_frames_backward(
            &p.pose_encoder,
            &trace.pose_caches,
            &dinput[..d],
            &mut grad.pose_encoder,
            None,
        );
        encode_game_backward(p, &trace.game, &dinput[d..2 * d], grad);
        let n = trace.style_caches.len() as f64;
        let dref: Vec<f64> = dinput[2 * d..]
            .iter()
            .zip(&dz_pred)
            .map(|(g, m)| (g - m) / n)
            .collect();
        for caches in &trace.style_caches {
            encode_frames_backward(
                &p.style_encoder,
                caches,
                &dref,
                &mut grad.style_encoder,
                None,
            );
        }
    }

    /// Loss and parameter gradient for one example.
    pub fn loss_and_grad(
        &self,
        ex: &FeatureExample,
        lambda: f64,
    ) -> Result<(LossBreakdown, ModelParams), ModelError> {
        let trace = self.forward(ex, lambda)?;
        let mut grad = self.params.zeros_like();
        self.backward(ex, &trace, 1.0, &mut grad);
        Ok((trace.breakdown, grad))
    }
}
