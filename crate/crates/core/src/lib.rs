//! Style-conditioned 3-point (head + hands) pose prediction for rhythm-game
//! beatmaps.
//!
//! The crate is organised bottom-up:
//!
//! * [`beatmap`] parses and validates beatmap JSON into a sorted timeline.
//! * [`pose`] holds the rotation math, pose traces and window canonicalization.
//! * [`context`] turns beatmaps and traces into fixed-size model inputs and
//!   binary datasets.
//! * [`model`] is the encoder/decoder network with hand-written gradients,
//!   the losses, SGD training and checkpoints.
//! * [`rollout`] slides a predictor along a whole song.
//! * [`eval`] scores any trace against a beatmap with a geometric oracle.
//!
//! Conventions: +y is up, +z is forward, +x points toward column 3; units
//! are meters, seconds and radians. Quaternions are stored `w, x, y, z`.

pub mod beatmap;
pub mod config;
pub mod context;
pub mod eval;
pub mod model;
pub mod pose;
pub mod rollout;
pub mod synth;
pub mod util;

pub use beatmap::{parse_beatmap, Beatmap, BeatmapError};
pub use config::{ConfigError, PipelineConfig};
pub use context::{
    FeatureExample, GameContext, LaneGeometry, StyleReferenceSet, TrainingExample, WindowConfig,
};
pub use model::{LatentVector, LossBreakdown, Model, ModelConfig, ModelError, ModelParams};
pub use pose::{PoseTrace, PoseWindow, Quat, ThreePointPose, Vec3};
pub use rollout::{
    rollout, ConstantPredictor, ModelPredictor, Predictor, RolloutConfig, RolloutError,
    RolloutSettings,
};
