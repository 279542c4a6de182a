//! Autoregressive whole-song generation.

use serde::{Deserialize, Serialize};

use crate::beatmap::Beatmap;
use crate::context::{upcoming_events, ContextError, GameContext, LaneGeometry};
use crate::model::{Frame, LatentVector, Model, ModelError};
use crate::pose::{canonicalize_window, slerp, PoseError, PoseTrace, PoseWindow, ThreePointPose};

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("rollout config error at {field}: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error("non-finite prediction at t={timestamp}")]
    NonFinite { timestamp: f64 },
    #[error("stitch length mismatch: tail {tail}, head {head}")]
    Shape { tail: usize, head: usize },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that maps a canonical history and context to `future` canonical
/// frames.
pub trait Predictor {
    fn history_len(&self) -> usize;
    fn future(&self) -> usize;
    fn context_rows(&self) -> usize;
    fn predict(&self, history: &[Frame], ctx: &GameContext) -> Result<Vec<Frame>, RolloutError>;
}

/// The trained model with a style latent fixed for the whole song.
pub struct ModelPredictor<'a> {
    pub model: &'a Model,
    pub style: LatentVector,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Model, refs: &[Vec<Frame>]) -> Result<Self, ModelError> {
        Ok(ModelPredictor {
            model,
            style: model.encode_style(refs)?,
        })
    }
}

impl Predictor for ModelPredictor<'_> {
    fn history_len(&self) -> usize {
        self.model.config.history + 1
    }

    fn future(&self) -> usize {
        self.model.config.future
    }

    fn context_rows(&self) -> usize {
        self.model.config.n
    }

    fn predict(&self, history: &[Frame], ctx: &GameContext) -> Result<Vec<Frame>, RolloutError> {
        Ok(self.model.predict(history, ctx, &self.style)?)
    }
}

/// Repeats the last history frame.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor {
    pub history: usize,
    pub future: usize,
    pub n: usize,
}

impl Predictor for ConstantPredictor {
    fn history_len(&self) -> usize {
        self.history + 1
    }

    fn future(&self) -> usize {
        self.future
    }

    fn context_rows(&self) -> usize {
        self.n
    }

    fn predict(&self, history: &[Frame], _ctx: &GameContext) -> Result<Vec<Frame>, RolloutError> {
        let last = *history.last().expect("non-empty history");
        Ok(vec![last; self.future])
    }
}

/// Commit and crossfade lengths, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSettings {
    pub stride: usize,
    pub blend: usize,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        RolloutSettings {
            stride: 15,
            blend: 5,
        }
    }
}

impl RolloutSettings {
    pub fn validate(&self, future: usize) -> Result<(), RolloutError> {
        if self.stride < 1 || self.stride > future {
            return Err(RolloutError::Config {
                field: "stride",
                message: format!("must be in [1, {future}], got {}", self.stride),
            });
        }
        if self.blend >= self.stride {
            return Err(RolloutError::Config {
                field: "blend",
                message: format!("must be below stride {}, got {}", self.stride, self.blend),
            });
        }
        if self.stride + self.blend > future {
            return Err(RolloutError::Config {
                field: "blend",
                message: format!("stride + blend must not exceed {future}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub settings: RolloutSettings,
    /// World-frame seed of `h + 1` frames on the output clock.
    pub seed_history: PoseWindow,
    pub rate: f64,
    pub horizon: f64,
}

/// Rest pose held for `frames` frames starting at t = 0.
pub fn rest_seed(frames: usize, rate: f64) -> PoseWindow {
    PoseWindow::new(
        (0..frames)
            .map(|i| ThreePointPose::rest(i as f64 / rate))
            .collect(),
    )
}

/// Crossfades `tail` (previous window) into `head` (new window): frame `i`
/// takes weight `(i + 1) / (len + 1)` from the new frame.
pub fn stitch(
    tail: &[ThreePointPose],
    head: &[ThreePointPose],
) -> Result<Vec<ThreePointPose>, RolloutError> {
    if tail.len() != head.len() {
        return Err(RolloutError::Shape {
            tail: tail.len(),
            head: head.len(),
        });
    }
    let blend = head.len();
    Ok(tail
        .iter()
        .zip(head)
        .enumerate()
        .map(|(i, (a, b))| {
            let w = (i + 1) as f64 / (blend + 1) as f64;
            let joints = a.joints();
            let mut out = b.joints();
            for (o, p) in out.iter_mut().zip(joints) {
                o.position = p.position.lerp(o.position, w);
                o.orientation = slerp(p.orientation, o.orientation, w);
            }
            ThreePointPose::from_joints(b.timestamp, out)
        })
        .collect())
}

fn grid_time(start: f64, k: usize, rate: f64) -> f64 {
    start + k as f64 / rate
}

/// Slides `predictor` from the end of the seed to the end of the song.
pub fn rollout(
    predictor: &dyn Predictor,
    map: &Beatmap,
    geom: &LaneGeometry,
    cfg: &RolloutConfig,
) -> Result<PoseTrace, RolloutError> {
    let future = predictor.future();
    cfg.settings.validate(future)?;
    let hist = predictor.history_len();
    let seed = &cfg.seed_history.frames;
    if seed.len() != hist {
        return Err(RolloutError::Config {
            field: "seed_history",
            message: format!("expected {hist} frames, got {}", seed.len()),
        });
    }
    if !(cfg.rate > 0.0 && cfg.rate.is_finite()) {
        return Err(RolloutError::Config {
            field: "rate",
            message: format!("must be positive, got {}", cfg.rate),
        });
    }
    let start = seed[0].timestamp;
    let span = map.song_length - start;
    let total = if span < 0.0 {
        0
    } else {
        (span * cfg.rate + 1e-9).floor() as usize + 1
    };
    let mut frames: Vec<ThreePointPose> = seed
        .iter()
        .enumerate()
        .map(|(k, f)| ThreePointPose {
            timestamp: grid_time(start, k, cfg.rate),
            ..*f
        })
        .collect();
    let (stride, blend) = (cfg.settings.stride, cfg.settings.blend);
    let mut pending_tail: Vec<ThreePointPose> = Vec::new();
    while frames.len() < total {
        let window = PoseWindow::new(frames[frames.len() - hist..].to_vec());
        let (canonical, anchor) = canonicalize_window(&window)?;
        let now = frames.last().expect("seed is non-empty").timestamp;
        let ctx = upcoming_events(
            map,
            now,
            predictor.context_rows(),
            cfg.horizon,
            &anchor,
            geom,
        );
        let pred = predictor.predict(&canonical.features(), &ctx)?;
        let base = frames.len();
        let mut world = Vec::with_capacity(future);
        for (i, f) in pred.iter().enumerate() {
            let t = grid_time(start, base + i, cfg.rate);
            if !f.iter().all(|v| v.is_finite()) {
                return Err(RolloutError::NonFinite { timestamp: t });
            }
            let local = ThreePointPose::from_features(t, f)?;
            world.push(anchor.invert_pose(&local));
        }
        let mut commit: Vec<ThreePointPose> = world[..stride].to_vec();
        if !pending_tail.is_empty() {
            let blended = stitch(&pending_tail, &commit[..blend])?;
            commit[..blend].copy_from_slice(&blended);
        }
        pending_tail = world[stride..stride + blend].to_vec();
        let take = stride.min(total - frames.len());
        frames.extend_from_slice(&commit[..take]);
    }
    Ok(PoseTrace::new(frames, cfg.rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{Joint, Quat, Vec3};

    fn song(length: f64) -> Beatmap {
        Beatmap::empty(120.0, length)
    }

    fn settings(stride: usize, blend: usize) -> RolloutConfig {
        RolloutConfig {
            settings: RolloutSettings { stride, blend },
            seed_history: rest_seed(3, 30.0),
            rate: 30.0,
            horizon: 2.0,
        }
    }

    const CONSTANT: ConstantPredictor = ConstantPredictor {
        history: 2,
        future: 3,
        n: 2,
    };

    #[test]
    fn stitch_blend_zero_is_identity() {
        assert!(stitch(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn stitch_midpoint() {
        let a = ThreePointPose::from_joints(0.0, [Joint::new(Vec3::ZERO, Quat::IDENTITY); 3]);
        let b = ThreePointPose::from_joints(
            0.0,
            [Joint::new(Vec3::new(1.0, 0.0, 0.0), Quat::IDENTITY); 3],
        );
        let out = stitch(&[a], &[b]).unwrap();
        assert_eq!(out[0].head.position, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(stitch(&[b], &[b]).unwrap(), vec![b]);
        assert!(matches!(
            stitch(&[a, a], &[b]),
            Err(RolloutError::Shape { .. })
        ));
    }

    #[test]
    fn seed_covering_the_song_is_returned_verbatim() {
        let cfg = settings(3, 0);
        let out = rollout(&CONSTANT, &song(2.0 / 30.0), &LaneGeometry::default(), &cfg).unwrap();
        assert_eq!(out.frames, cfg.seed_history.frames);
    }

    #[test]
    fn full_stride_frame_count() {
        let cfg = settings(3, 0);
        let out = rollout(&CONSTANT, &song(1.0), &LaneGeometry::default(), &cfg).unwrap();
        assert_eq!(out.len(), 31);
    }

    #[test]
    fn constant_predictor_continues_the_seed() {
        let cfg = settings(2, 1);
        let out = rollout(&CONSTANT, &song(3.0), &LaneGeometry::default(), &cfg).unwrap();
        assert_eq!(out.len(), 91);
        let last = cfg.seed_history.frames.last().unwrap();
        for (k, f) in out.frames.iter().enumerate() {
            assert!((f.timestamp - k as f64 / 30.0).abs() <= 1e-9);
            assert_eq!(f.joints(), last.joints());
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        for (s, b) in [(0, 0), (4, 0), (2, 2), (3, 1)] {
            let cfg = settings(s, b);
            assert!(matches!(
                rollout(&CONSTANT, &song(1.0), &LaneGeometry::default(), &cfg),
                Err(RolloutError::Config { .. })
            ));
        }
    }

    #[test]
    fn nan_prediction_reports_timestamp() {
        struct Broken;
        impl Predictor for Broken {
            fn history_len(&self) -> usize {
                3
            }
            fn future(&self) -> usize {
                3
            }
            fn context_rows(&self) -> usize {
                2
            }
            fn predict(&self, _: &[Frame], _: &GameContext) -> Result<Vec<Frame>, RolloutError> {
                Ok(vec![[f64::NAN; 27]; 3])
            }
        }
        let err = rollout(
            &Broken,
            &song(1.0),
            &LaneGeometry::default(),
            &settings(3, 0),
        )
        .unwrap_err();
        match err {
            RolloutError::NonFinite { timestamp } => assert!((timestamp - 0.1).abs() < 1e-12),
            other => panic!("{other}"),
        }
    }
}
