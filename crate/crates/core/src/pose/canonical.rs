use super::{Joint, PoseError, PoseWindow, Quat, ThreePointPose, Vec3};

/// Rigid world-to-canonical map: translate by `(tx, 0, tz)`, then rotate by
/// `yaw` about +y.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnchorTransform {
    pub yaw: f64,
    pub translation_xz: [f64; 2],
}

impl AnchorTransform {
    pub const IDENTITY: AnchorTransform = AnchorTransform {
        yaw: 0.0,
        translation_xz: [0.0, 0.0],
    };

    pub fn new(yaw: f64, translation_xz: [f64; 2]) -> Self {
        AnchorTransform {
            yaw,
            translation_xz,
        }
    }

    /// Anchor that maps `head`'s horizontal position to the origin and its
    /// facing onto +z.
    pub fn from_head(head: &Joint, timestamp: f64) -> Result<Self, PoseError> {
        let facing = head.orientation.rotate(Vec3::FORWARD);
        if facing.x.hypot(facing.z) < 1e-6 {
            return Err(PoseError::DegenerateFacing { timestamp });
        }
        let heading = facing.x.atan2(facing.z);
        Ok(AnchorTransform::new(
            -heading,
            [-head.position.x, -head.position.z],
        ))
    }

    pub fn rotate_vector(&self, v: Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
    }

    fn unrotate_vector(&self, v: Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x - s * v.z, v.y, s * v.x + c * v.z)
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let [tx, tz] = self.translation_xz;
        self.rotate_vector(Vec3::new(p.x + tx, p.y, p.z + tz))
    }

    pub fn invert_point(&self, p: Vec3) -> Vec3 {
        let [tx, tz] = self.translation_xz;
        let q = self.unrotate_vector(p);
        Vec3::new(q.x - tx, q.y, q.z - tz)
    }

    pub fn apply_rotation(&self, q: Quat) -> Quat {
        Quat::from_yaw(self.yaw) * q
    }

    pub fn invert_rotation(&self, q: Quat) -> Quat {
        Quat::from_yaw(-self.yaw) * q
    }

    pub fn apply_pose(&self, pose: &ThreePointPose) -> ThreePointPose {
        let map = |j: Joint| {
            Joint::new(
                self.apply_point(j.position),
                self.apply_rotation(j.orientation),
            )
        };
        ThreePointPose {
            timestamp: pose.timestamp,
            head: map(pose.head),
            left_hand: map(pose.left_hand),
            right_hand: map(pose.right_hand),
        }
    }

    pub fn invert_pose(&self, pose: &ThreePointPose) -> ThreePointPose {
        let map = |j: Joint| {
            Joint::new(
                self.invert_point(j.position),
                self.invert_rotation(j.orientation),
            )
        };
        ThreePointPose {
            timestamp: pose.timestamp,
            head: map(pose.head),
            left_hand: map(pose.left_hand),
            right_hand: map(pose.right_hand),
        }
    }

    /// The transform equal to applying `self` and then `next`.
    pub fn then(&self, next: &AnchorTransform) -> AnchorTransform {
        let t2 = self.unrotate_vector(Vec3::new(
            next.translation_xz[0],
            0.0,
            next.translation_xz[1],
        ));
        AnchorTransform::new(
            self.yaw + next.yaw,
            [self.translation_xz[0] + t2.x, self.translation_xz[1] + t2.z],
        )
    }
}

/// Re-expresses a window relative to its last frame's head: horizontal head
/// position at the origin, facing along +z, height untouched.
pub fn canonicalize_window(
    window: &PoseWindow,
) -> Result<(PoseWindow, AnchorTransform), PoseError> {
    let last = window
        .frames
        .last()
        .ok_or_else(|| PoseError::Domain("cannot canonicalize an empty window".into()))?;
    let anchor = AnchorTransform::from_head(&last.head, last.timestamp)?;
    let frames = window.frames.iter().map(|p| anchor.apply_pose(p)).collect();
    Ok((
        PoseWindow {
            frames,
            canonical: true,
        },
        anchor,
    ))
}

pub fn decanonicalize(window: &PoseWindow, anchor: &AnchorTransform) -> PoseWindow {
    let frames = window
        .frames
        .iter()
        .map(|p| anchor.invert_pose(p))
        .collect();
    PoseWindow {
        frames,
        canonical: false,
    }
}
