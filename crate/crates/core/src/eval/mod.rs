//! Geometric scoring of pose traces against beatmaps, plus style and
//! smoothness metrics.

mod report;

use serde::{Deserialize, Serialize};

use crate::beatmap::{Beatmap, Color};
use crate::context::{LaneGeometry, LocalBox};
use crate::model::{Model, ModelError};
use crate::pose::{
    canonicalize_window, jerk_metric, AnchorTransform, PoseError, PoseTrace, PoseWindow, Vec3,
};

pub use report::{emit_report, render_svg_plots, report_json, REPORT_NOTE};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(
        "trace does not cover events: notes {notes:?}, bombs {bombs:?}, obstacles {obstacles:?}"
    )]
    Coverage {
        notes: Vec<usize>,
        bombs: Vec<usize>,
        obstacles: Vec<usize>,
    },
    #[error("scoring config error at {field}: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scoring thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringGeometry {
    /// Seconds each side of an event time.
    pub hit_window: f64,
    /// Half the note box depth along z, meters. The other half extents come
    /// from the lane cell size.
    pub note_half_depth: f64,
    pub min_hand_speed: f64,
    pub direction_cos_min: f64,
    pub bomb_radius: f64,
    pub head_radius: f64,
}

impl Default for ScoringGeometry {
    fn default() -> Self {
        ScoringGeometry {
            hit_window: 0.20,
            note_half_depth: 0.5,
            min_hand_speed: 1.0,
            direction_cos_min: 0.5,
            bomb_radius: 0.15,
            head_radius: 0.10,
        }
    }
}

impl ScoringGeometry {
    pub fn validate(&self) -> Result<(), EvalError> {
        let positive = [
            ("hit_window", self.hit_window),
            ("note_half_depth", self.note_half_depth),
            ("min_hand_speed", self.min_hand_speed),
            ("bomb_radius", self.bomb_radius),
            ("head_radius", self.head_radius),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EvalError::Config {
                    field,
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.direction_cos_min > 0.0 && self.direction_cos_min <= 1.0) {
            return Err(EvalError::Config {
                field: "direction_cos_min",
                message: format!("must be in (0, 1], got {}", self.direction_cos_min),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteOutcome {
    Miss,
    TooSlow,
    WrongDirection,
    Hit,
}

impl NoteOutcome {
    pub const ALL: [NoteOutcome; 4] = [
        NoteOutcome::Hit,
        NoteOutcome::Miss,
        NoteOutcome::WrongDirection,
        NoteOutcome::TooSlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoteOutcome::Hit => "hit",
            NoteOutcome::Miss => "miss",
            NoteOutcome::WrongDirection => "wrong_direction",
            NoteOutcome::TooSlow => "too_slow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub outcomes: Vec<NoteOutcome>,
    pub bomb_touches: usize,
    pub obstacle_collisions: usize,
    pub hit_rate: f64,
    pub jerk: f64,
    pub style_distance: Option<f64>,
}

impl HitReport {
    pub fn count(&self, outcome: NoteOutcome) -> usize {
        self.outcomes.iter().filter(|o| **o == outcome).count()
    }
}

/// Per-frame hand data in play-space local coordinates.
struct HandSamples {
    times: Vec<f64>,
    positions: Vec<Vec3>,
    velocities: Vec<Vec3>,
}

/// Central-difference velocity, one-sided at the ends.
pub fn finite_velocities(positions: &[Vec3], rate: f64) -> Vec<Vec3> {
    let n = positions.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                Vec3::ZERO
            } else if i == 0 {
                (positions[1] - positions[0]) * rate
            } else if i == n - 1 {
                (positions[n - 1] - positions[n - 2]) * rate
            } else {
                (positions[i + 1] - positions[i - 1]) * (rate / 2.0)
            }
        })
        .collect()
}

fn hand_samples(trace: &PoseTrace, local: &AnchorTransform, color: Color) -> HandSamples {
    let positions: Vec<Vec3> = trace
        .frames
        .iter()
        .map(|f| {
            let hand = match color {
                Color::Left => f.left_hand,
                Color::Right => f.right_hand,
            };
            local.apply_point(hand.position)
        })
        .collect();
    HandSamples {
        times: trace.frames.iter().map(|f| f.timestamp).collect(),
        velocities: finite_velocities(&positions, trace.rate),
        positions,
    }
}

fn strictly_inside(p: Vec3, center: Vec3, half: Vec3) -> bool {
    (p.x - center.x).abs() < half.x
        && (p.y - center.y).abs() < half.y
        && (p.z - center.z).abs() < half.z
}

fn strictly_inside_box(p: Vec3, b: &LocalBox, radius: f64) -> bool {
    b.distance(p) < radius
}

fn window_range(times: &[f64], lo: f64, hi: f64) -> std::ops::Range<usize> {
    let start = times.partition_point(|t| *t < lo);
    let end = times.partition_point(|t| *t <= hi);
    start..end.max(start)
}

/// Outcome of one in-window frame with the hand inside the note box.
fn judge_contact(v: Vec3, swing: Option<[f64; 3]>, geom: &ScoringGeometry) -> NoteOutcome {
    let speed = v.norm();
    if speed < geom.min_hand_speed {
        return NoteOutcome::TooSlow;
    }
    match swing {
        None => NoteOutcome::Hit,
        Some(d) => {
            let cos = v.dot(Vec3::new(d[0], d[1], d[2])) / speed;
            if cos >= geom.direction_cos_min {
                NoteOutcome::Hit
            } else {
                NoteOutcome::WrongDirection
            }
        }
    }
}

fn coverage_check(
    trace: &PoseTrace,
    map: &Beatmap,
    geom: &ScoringGeometry,
) -> Result<(), EvalError> {
    const TOL: f64 = 1e-9;
    let (start, end) = if trace.is_empty() {
        (f64::INFINITY, f64::NEG_INFINITY)
    } else {
        (trace.start_time(), trace.end_time())
    };
    let covers = |lo: f64, hi: f64| {
        let lo = lo.max(0.0);
        let hi = hi.min(map.song_length).max(lo);
        start <= lo + TOL && end >= hi - TOL
    };
    let hw = geom.hit_window;
    let notes: Vec<usize> = map
        .notes
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            let t = map.seconds(n.beat);
            !covers(t - hw, t + hw)
        })
        .map(|(i, _)| i)
        .collect();
    let bombs: Vec<usize> = map
        .bombs
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let t = map.seconds(b.beat);
            !covers(t - hw, t + hw)
        })
        .map(|(i, _)| i)
        .collect();
    let obstacles: Vec<usize> = map
        .obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let t = map.seconds(o.beat);
            !covers(t, t + map.seconds(o.duration))
        })
        .map(|(i, _)| i)
        .collect();
    if notes.is_empty() && bombs.is_empty() && obstacles.is_empty() {
        Ok(())
    } else {
        Err(EvalError::Coverage {
            notes,
            bombs,
            obstacles,
        })
    }
}

/// Per-note outcomes. Every in-window frame with the matching hand strictly
/// inside the note box is judged; the best judgement wins.
pub fn score_notes(
    trace: &PoseTrace,
    map: &Beatmap,
    lanes: &LaneGeometry,
    geom: &ScoringGeometry,
) -> Result<Vec<NoteOutcome>, EvalError> {
    geom.validate()?;
    coverage_check(trace, map, geom)?;
    let local = lanes.play_space.world_to_local();
    let left = hand_samples(trace, &local, Color::Left);
    let right = hand_samples(trace, &local, Color::Right);
    let half = Vec3::new(
        lanes.cell_width / 2.0,
        lanes.cell_height / 2.0,
        geom.note_half_depth,
    );
    Ok(map
        .notes
        .iter()
        .map(|note| {
            let hand = match note.color {
                Color::Left => &left,
                Color::Right => &right,
            };
            let t = map.seconds(note.beat);
            let center = lanes.cell_center_local(note.column, note.row);
            let swing = note.cut_direction.swing_vector();
            window_range(&hand.times, t - geom.hit_window, t + geom.hit_window)
                .filter(|&i| strictly_inside(hand.positions[i], center, half))
                .map(|i| judge_contact(hand.velocities[i], swing, geom))
                .max()
                .unwrap_or(NoteOutcome::Miss)
        })
        .collect())
}

/// Number of bombs touched by either hand.
pub fn check_bombs(
    trace: &PoseTrace,
    map: &Beatmap,
    lanes: &LaneGeometry,
    geom: &ScoringGeometry,
) -> Result<usize, EvalError> {
    geom.validate()?;
    coverage_check(trace, map, geom)?;
    let local = lanes.play_space.world_to_local();
    let times: Vec<f64> = trace.frames.iter().map(|f| f.timestamp).collect();
    Ok(map
        .bombs
        .iter()
        .filter(|bomb| {
            let t = map.seconds(bomb.beat);
            let center = lanes.cell_center_local(bomb.column, bomb.row);
            window_range(&times, t - geom.hit_window, t + geom.hit_window).any(|i| {
                let f = &trace.frames[i];
                [f.left_hand, f.right_hand]
                    .iter()
                    .any(|h| (local.apply_point(h.position) - center).norm() < geom.bomb_radius)
            })
        })
        .count())
}

/// Obstacle box at time `t` of its active interval.
pub fn obstacle_box_at(lanes: &LaneGeometry, map: &Beatmap, index: usize, t: f64) -> LocalBox {
    let o = &map.obstacles[index];
    let start = map.seconds(o.beat);
    let mut b = lanes.obstacle_box_local(o.column, o.width, o.kind, map.seconds(o.duration));
    b.min.z -= (t - start) * lanes.beam_speed;
    b
}

/// Number of obstacles the head sphere enters.
pub fn check_obstacles(
    trace: &PoseTrace,
    map: &Beatmap,
    lanes: &LaneGeometry,
    geom: &ScoringGeometry,
) -> Result<usize, EvalError> {
    geom.validate()?;
    coverage_check(trace, map, geom)?;
    let local = lanes.play_space.world_to_local();
    let times: Vec<f64> = trace.frames.iter().map(|f| f.timestamp).collect();
    Ok((0..map.obstacles.len())
        .filter(|&k| {
            let o = &map.obstacles[k];
            let start = map.seconds(o.beat);
            let end = start + map.seconds(o.duration);
            window_range(&times, start, end).any(|i| {
                let f = &trace.frames[i];
                let b = obstacle_box_at(lanes, map, k, f.timestamp);
                strictly_inside_box(local.apply_point(f.head.position), &b, geom.head_radius)
            })
        })
        .count())
}

/// Mean squared style-latent distance of consecutive non-overlapping
/// `T`-frame windows of `trace` to the pooled latent of `refs`.
pub fn style_distance(
    model: &Model,
    trace: &PoseTrace,
    refs: &[Vec<crate::model::Frame>],
) -> Result<f64, EvalError> {
    let t = model.config.future;
    if trace.len() < t {
        return Err(EvalError::Domain(format!(
            "trace has {} frames, style windows need {t}",
            trace.len()
        )));
    }
    let target = model.encode_style(refs)?;
    let mut total = 0.0;
    let windows = trace.len() / t;
    for w in 0..windows {
        let window = PoseWindow::new(trace.frames[w * t..(w + 1) * t].to_vec());
        let (canonical, _) = canonicalize_window(&window)?;
        let z = model.encode_style(&[canonical.features()])?;
        total +=
            z.0.iter()
                .zip(&target.0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
    }
    Ok(total / windows as f64)
}

/// Full report; `model` and `refs` enable the style distance.
pub fn evaluate(
    trace: &PoseTrace,
    map: &Beatmap,
    lanes: &LaneGeometry,
    geom: &ScoringGeometry,
    style: Option<(&Model, &[Vec<crate::model::Frame>])>,
) -> Result<HitReport, EvalError> {
    let outcomes = score_notes(trace, map, lanes, geom)?;
    let bomb_touches = check_bombs(trace, map, lanes, geom)?;
    let obstacle_collisions = check_obstacles(trace, map, lanes, geom)?;
    let hits = outcomes.iter().filter(|o| **o == NoteOutcome::Hit).count();
    let hit_rate = hits as f64 / outcomes.len().max(1) as f64;
    let jerk = jerk_metric(trace)?;
    let style_distance = style
        .map(|(m, r)| style_distance(m, trace, r))
        .transpose()?;
    Ok(HitReport {
        outcomes,
        bomb_touches,
        obstacle_collisions,
        hit_rate,
        jerk,
        style_distance,
    })
}
