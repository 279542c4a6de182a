//! Lane geometry and play-space placement.

use serde::{Deserialize, Serialize};

use crate::beatmap::ObstacleKind;
use crate::pose::{AnchorTransform, Vec3};

/// Rigid placement of the note grid in the world: local coordinates are
/// rotated by `yaw` about +y and then offset horizontally.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaySpace {
    pub yaw: f64,
    pub offset_xz: [f64; 2],
}

impl PlaySpace {
    /// World-to-local map expressed as an anchor.
    pub fn world_to_local(&self) -> AnchorTransform {
        AnchorTransform::new(-self.yaw, [-self.offset_xz[0], -self.offset_xz[1]])
    }

    pub fn to_world_point(&self, p: Vec3) -> Vec3 {
        self.world_to_local().invert_point(p)
    }

    pub fn to_world_vector(&self, v: Vec3) -> Vec3 {
        AnchorTransform::new(self.yaw, [0.0, 0.0]).rotate_vector(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaneGeometry {
    /// Column centers, meters.
    pub column_x: [f64; 4],
    /// Row centers, meters.
    pub row_y: [f64; 3],
    pub cell_width: f64,
    pub cell_height: f64,
    /// Depth of the plane notes sit on at their event time.
    pub z_spawn: f64,
    /// Obstacle approach speed, m/s; sets obstacle depth.
    pub beam_speed: f64,
    pub full_height_min_y: f64,
    pub full_height_extent_y: f64,
    pub crouch_min_y: f64,
    pub crouch_extent_y: f64,
    pub play_space: PlaySpace,
}

impl Default for LaneGeometry {
    fn default() -> Self {
        LaneGeometry {
            column_x: [-0.9, -0.3, 0.3, 0.9],
            row_y: [0.8, 1.2, 1.6],
            cell_width: 0.6,
            cell_height: 0.4,
            z_spawn: 0.0,
            beam_speed: 4.0,
            full_height_min_y: 0.0,
            full_height_extent_y: 2.0,
            crouch_min_y: 1.2,
            crouch_extent_y: 0.8,
            play_space: PlaySpace::default(),
        }
    }
}

/// Axis-aligned box in play-space local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBox {
    pub min: Vec3,
    pub extent: Vec3,
}

impl LocalBox {
    pub fn max(&self) -> Vec3 {
        self.min + self.extent
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: Vec3) -> f64 {
        let max = self.max();
        let gap = |v: f64, lo: f64, hi: f64| (lo - v).max(0.0).max(v - hi);
        Vec3::new(
            gap(p.x, self.min.x, max.x),
            gap(p.y, self.min.y, max.y),
            gap(p.z, self.min.z, max.z),
        )
        .norm()
    }
}

impl LaneGeometry {
    /// Cell center in play-space local coordinates. Columns and rows must be
    /// in range (validated beatmap).
    pub fn cell_center_local(&self, column: i32, row: i32) -> Vec3 {
        Vec3::new(
            self.column_x[column as usize],
            self.row_y[row as usize],
            self.z_spawn,
        )
    }

    pub fn cell_center_world(&self, column: i32, row: i32) -> Vec3 {
        self.play_space
            .to_world_point(self.cell_center_local(column, row))
    }

    /// Obstacle box at its start time, local coordinates. The box moves
    /// toward -z at `beam_speed` while active.
    pub fn obstacle_box_local(
        &self,
        column: i32,
        width: i32,
        kind: ObstacleKind,
        duration_s: f64,
    ) -> LocalBox {
        let (min_y, extent_y) = match kind {
            ObstacleKind::FullHeight => (self.full_height_min_y, self.full_height_extent_y),
            ObstacleKind::Crouch => (self.crouch_min_y, self.crouch_extent_y),
        };
        LocalBox {
            min: Vec3::new(
                self.column_x[column as usize] - 0.5 * self.cell_width,
                min_y,
                self.z_spawn,
            ),
            extent: Vec3::new(
                f64::from(width) * self.cell_width,
                extent_y,
                duration_s * self.beam_speed,
            ),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.cell_width > 0.0 && self.cell_height > 0.0) {
            return Err("cell_width and cell_height must be positive".into());
        }
        if !(self.beam_speed > 0.0) {
            return Err("beam_speed must be positive".into());
        }
        if !(self.full_height_extent_y > 0.0 && self.crouch_extent_y > 0.0) {
            return Err("obstacle extents must be positive".into());
        }
        let all = self
            .column_x
            .iter()
            .chain(&self.row_y)
            .chain([&self.z_spawn, &self.play_space.yaw])
            .chain(&self.play_space.offset_xz);
        if !all.into_iter().all(|v| v.is_finite()) {
            return Err("geometry values must be finite".into());
        }
        Ok(())
    }
}
