//! 3-point pose representation, resampling and canonicalization.

mod canonical;
mod math;
mod trace;

use thiserror::Error;

pub use canonical::{canonicalize_window, decanonicalize, AnchorTransform};
pub use math::{orthonormalize_6d, rotation_from_6d, rotation_to_6d, slerp, Quat, Vec3};
pub use trace::{
    jerk_metric, jerk_series, load_pose_trace, resample, write_pose_trace, TRACE_HEADER,
};

/// Default clock for every dataset and rollout.
pub const DEFAULT_RATE: f64 = 30.0;

/// Reals per joint fed to the model: position xyz + 6d rotation.
pub const JOINT_FEATURES: usize = 9;
/// Reals per frame: three joints.
pub const FRAME_FEATURES: usize = 3 * JOINT_FEATURES;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate head facing at t={timestamp}: facing is vertical")]
    DegenerateFacing { timestamp: f64 },
    #[error("degenerate 6d rotation {0:?}: halves are collinear")]
    Degenerate6d(Vec<f64>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Joint {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Joint {
    pub const fn new(position: Vec3, orientation: Quat) -> Self {
        Joint {
            position,
            orientation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThreePointPose {
    pub timestamp: f64,
    pub head: Joint,
    pub left_hand: Joint,
    pub right_hand: Joint,
}

impl ThreePointPose {
    pub fn joints(&self) -> [Joint; 3] {
        [self.head, self.left_hand, self.right_hand]
    }

    pub fn from_joints(timestamp: f64, joints: [Joint; 3]) -> Self {
        ThreePointPose {
            timestamp,
            head: joints[0],
            left_hand: joints[1],
            right_hand: joints[2],
        }
    }

    /// Model features: per joint `[px, py, pz, r00, r10, r20, r01, r11, r21]`.
    pub fn features(&self) -> [f64; FRAME_FEATURES] {
        let mut out = [0.0; FRAME_FEATURES];
        for (j, joint) in self.joints().iter().enumerate() {
            let base = j * JOINT_FEATURES;
            out[base..base + 3].copy_from_slice(&joint.position.to_array());
            out[base + 3..base + 9].copy_from_slice(&rotation_to_6d(joint.orientation));
        }
        out
    }

    pub fn from_features(timestamp: f64, features: &[f64]) -> Result<Self, PoseError> {
        if features.len() != FRAME_FEATURES {
            return Err(PoseError::Domain(format!(
                "expected {FRAME_FEATURES} frame features, got {}",
                features.len()
            )));
        }
        let mut joints = [Joint::default(); 3];
        for (j, joint) in joints.iter_mut().enumerate() {
            let base = j * JOINT_FEATURES;
            joint.position = Vec3::from_slice(&features[base..base + 3]);
            joint.orientation = rotation_from_6d(&features[base + 3..base + 9])?;
        }
        Ok(ThreePointPose::from_joints(timestamp, joints))
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite() && self.joints().iter().all(Joint::is_finite)
    }

    /// Default rollout seed: head at (0, 1.7, 0) facing +z, hands at
    /// (-0.3, 1.2, 0.2) and (0.3, 1.2, 0.2), identity orientations.
    pub fn rest(timestamp: f64) -> Self {
        ThreePointPose {
            timestamp,
            head: Joint::new(Vec3::new(0.0, 1.7, 0.0), Quat::IDENTITY),
            left_hand: Joint::new(Vec3::new(-0.3, 1.2, 0.2), Quat::IDENTITY),
            right_hand: Joint::new(Vec3::new(0.3, 1.2, 0.2), Quat::IDENTITY),
        }
    }
}

/// Uniformly clocked sequence of poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrace {
    pub frames: Vec<ThreePointPose>,
    /// Hz.
    pub rate: f64,
}

impl PoseTrace {
    pub fn new(frames: Vec<ThreePointPose>, rate: f64) -> Self {
        PoseTrace { frames, rate }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.timestamp)
    }

    pub fn end_time(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.timestamp)
    }

    /// Copies `len` frames starting at `start` into a world-frame window.
    pub fn window(&self, start: usize, len: usize) -> Option<PoseWindow> {
        self.frames
            .get(start..start + len)
            .map(|frames| PoseWindow::new(frames.to_vec()))
    }
}

/// A fixed-length slice of poses, optionally expressed in a canonical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseWindow {
    pub frames: Vec<ThreePointPose>,
    pub canonical: bool,
}

impl PoseWindow {
    pub fn new(frames: Vec<ThreePointPose>) -> Self {
        PoseWindow {
            frames,
            canonical: false,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Row-major `len x FRAME_FEATURES` model features.
    pub fn features(&self) -> Vec<[f64; FRAME_FEATURES]> {
        self.frames.iter().map(ThreePointPose::features).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_round_trip() {
        let mut p = ThreePointPose::rest(0.5);
        p.left_hand.orientation = Quat::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.4);
        let back = ThreePointPose::from_features(0.5, &p.features()).unwrap();
        for (a, b) in p.joints().iter().zip(back.joints()) {
            assert!((a.position - b.position).norm() < 1e-15);
            assert!(a.orientation.angle_to(b.orientation) < 1e-9);
        }
    }
}
