//! Fixed-size game context, aligned training windows and style references.

mod dataset;
mod geometry;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beatmap::{Beatmap, BeatmapError, BombEvent, NoteEvent, ObstacleEvent};
use crate::pose::{
    canonicalize_window, AnchorTransform, PoseError, PoseTrace, PoseWindow, FRAME_FEATURES,
};

pub use dataset::{
    build_dataset, build_dataset_from_manifest, decode_dataset, encode_record,
    load_manifest_sources, record_layout, DatasetBuild, DatasetSource, FeatureExample,
    RECORD_LAYOUT_VERSION,
};
pub use geometry::{LaneGeometry, LocalBox, PlaySpace};

pub const NOTE_FEATURES: usize = 15;
pub const BOMB_FEATURES: usize = 4;
pub const OBSTACLE_FEATURES: usize = 8;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("window error: {0}")]
    Window(String),
    #[error("capacity error: need {needed} frames, donor has {available}")]
    Capacity { needed: usize, available: usize },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Beatmap(#[from] BeatmapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Window and context sizes shared by dataset building, training and rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// History length `h`; history windows hold `h + 1` frames.
    pub history: usize,
    /// Future length `T` in frames.
    pub future: usize,
    /// Events kept per category.
    pub n: usize,
    /// Look-ahead, seconds.
    pub horizon: f64,
    /// Style references per example.
    pub n_ref: usize,
    /// Frame rate, Hz.
    pub rate: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            history: 15,
            future: 30,
            n: 4,
            horizon: 2.0,
            n_ref: 4,
            rate: crate::pose::DEFAULT_RATE,
        }
    }
}

impl WindowConfig {
    pub fn history_len(&self) -> usize {
        self.history + 1
    }

    /// Checks the sizes, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.future < 1 {
            return Err(("future", "must be >= 1".into()));
        }
        if self.n < 1 {
            return Err(("n", "must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(("horizon", "must be positive".into()));
        }
        if self.n_ref < 1 {
            return Err(("n_ref", "must be >= 1".into()));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(("rate", "must be positive".into()));
        }
        Ok(())
    }
}

/// Exactly `n` feature rows plus a presence mask; masked rows are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRows<const W: usize> {
    pub rows: Vec<[f64; W]>,
    pub mask: Vec<bool>,
}

impl<const W: usize> EventRows<W> {
    pub fn padded(mut filled: Vec<[f64; W]>, n: usize) -> Self {
        let present = filled.len().min(n);
        filled.truncate(n);
        filled.resize(n, [0.0; W]);
        let mask = (0..n).map(|i| i < present).collect();
        EventRows { rows: filled, mask }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn present(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// The `n` nearest upcoming notes, bombs and obstacles at `query_time`,
/// featurized in a window's canonical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GameContext {
    pub query_time: f64,
    pub notes: EventRows<NOTE_FEATURES>,
    pub bombs: EventRows<BOMB_FEATURES>,
    pub obstacles: EventRows<OBSTACLE_FEATURES>,
}

/// `[time-to-event; cell xyz; color one-hot(2); cut one-hot(9)]`.
pub fn featurize_note(
    note: &NoteEvent,
    event_time: f64,
    t: f64,
    anchor: &AnchorTransform,
    geom: &LaneGeometry,
) -> [f64; NOTE_FEATURES] {
    let mut row = [0.0; NOTE_FEATURES];
    row[0] = event_time - t;
    let p = anchor.apply_point(geom.cell_center_world(note.column, note.row));
    row[1..4].copy_from_slice(&p.to_array());
    row[4 + note.color.code() as usize] = 1.0;
    row[6 + note.cut_direction.code() as usize] = 1.0;
    row
}

/// `[time-to-event; cell xyz]`.
pub fn featurize_bomb(
    bomb: &BombEvent,
    event_time: f64,
    t: f64,
    anchor: &AnchorTransform,
    geom: &LaneGeometry,
) -> [f64; BOMB_FEATURES] {
    let p = anchor.apply_point(geom.cell_center_world(bomb.column, bomb.row));
    [event_time - t, p.x, p.y, p.z]
}

/// `[time-to-start (0 while active); duration s; min-corner xyz; extent xyz]`.
/// The extent is the box diagonal rotated into the canonical frame.
pub fn featurize_obstacle(
    obstacle: &ObstacleEvent,
    start_time: f64,
    duration_s: f64,
    t: f64,
    anchor: &AnchorTransform,
    geom: &LaneGeometry,
) -> [f64; OBSTACLE_FEATURES] {
    let b = geom.obstacle_box_local(obstacle.column, obstacle.width, obstacle.kind, duration_s);
    let corner = anchor.apply_point(geom.play_space.to_world_point(b.min));
    let extent = anchor.rotate_vector(geom.play_space.to_world_vector(b.extent));
    [
        (start_time - t).max(0.0),
        duration_s,
        corner.x,
        corner.y,
        corner.z,
        extent.x,
        extent.y,
        extent.z,
    ]
}

/// Collects the first `n` events per category in `[t, t + horizon]`
/// (obstacles: upcoming or active), ascending by time-to-event, zero-padded.
pub fn upcoming_events(
    map: &Beatmap,
    t: f64,
    n: usize,
    horizon: f64,
    anchor: &AnchorTransform,
    geom: &LaneGeometry,
) -> GameContext {
    let in_range = |te: f64| te >= t && te <= t + horizon;
    let notes = map
        .notes
        .iter()
        .map(|e| (e, map.seconds(e.beat)))
        .filter(|(_, te)| in_range(*te))
        .take(n)
        .map(|(e, te)| featurize_note(e, te, t, anchor, geom))
        .collect();
    let bombs = map
        .bombs
        .iter()
        .map(|e| (e, map.seconds(e.beat)))
        .filter(|(_, te)| in_range(*te))
        .take(n)
        .map(|(e, te)| featurize_bomb(e, te, t, anchor, geom))
        .collect();
    let mut obstacles: Vec<(f64, &ObstacleEvent, f64, f64)> = map
        .obstacles
        .iter()
        .filter_map(|e| {
            let start = map.seconds(e.beat);
            let duration = map.seconds(e.duration);
            let active = t >= start && t <= start + duration;
            (in_range(start) || active).then(|| ((start - t).max(0.0), e, start, duration))
        })
        .collect();
    obstacles.sort_by(|a, b| a.0.total_cmp(&b.0));
    let obstacles = obstacles
        .into_iter()
        .take(n)
        .map(|(_, e, start, duration)| featurize_obstacle(e, start, duration, t, anchor, geom))
        .collect();
    GameContext {
        query_time: t,
        notes: EventRows::padded(notes, n),
        bombs: EventRows::padded(bombs, n),
        obstacles: EventRows::padded(obstacles, n),
    }
}

/// `N_ref` canonical windows of `T` frames from a donor trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleReferenceSet {
    pub refs: Vec<PoseWindow>,
    /// Donor frame index where each reference starts.
    pub starts: Vec<usize>,
}

impl StyleReferenceSet {
    pub fn features(&self) -> Vec<Vec<[f64; FRAME_FEATURES]>> {
        self.refs.iter().map(PoseWindow::features).collect()
    }
}

/// Samples `n_ref` non-overlapping `future`-frame windows uniformly at random
/// and canonicalizes each on its own last frame.
pub fn select_style_references(
    donor: &PoseTrace,
    n_ref: usize,
    future: usize,
    seed: u64,
) -> Result<StyleReferenceSet, ContextError> {
    let needed = n_ref * future;
    if n_ref == 0 || future == 0 || needed > donor.len() {
        return Err(ContextError::Capacity {
            needed,
            available: donor.len(),
        });
    }
    // Disjoint placements correspond to n_ref sorted draws from
    // `slack + n_ref` slots; subtracting the rank leaves the gap offsets.
    let slack = donor.len() - needed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, slack + n_ref, n_ref).into_vec();
    picks.sort_unstable();
    let starts: Vec<usize> = picks
        .iter()
        .enumerate()
        .map(|(i, &p)| p - i + i * future)
        .collect();
    let refs = starts
        .iter()
        .map(|&s| {
            let window = donor.window(s, future).expect("start within donor");
            canonicalize_window(&window).map(|(c, _)| c)
        })
        .collect::<Result<_, _>>()?;
    Ok(StyleReferenceSet { refs, starts })
}

/// Aligned history, future, context and style references sharing one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub history: PoseWindow,
    pub future: PoseWindow,
    pub context: GameContext,
    pub style_refs: StyleReferenceSet,
    pub anchor: AnchorTransform,
}

/// Frame index of `t` on the trace grid, if it lies on it.
fn grid_index(trace: &PoseTrace, t: f64) -> Option<usize> {
    let k = ((t - trace.start_time()) * trace.rate).round();
    if k < 0.0 || !k.is_finite() {
        return None;
    }
    let k = k as usize;
    trace
        .frames
        .get(k)
        .filter(|f| (f.timestamp - t).abs() <= 1e-6)
        .map(|_| k)
}

/// Cuts the example whose history ends at `t`. The future starts one frame
/// after `t`.
pub fn build_training_window(
    trace: &PoseTrace,
    map: &Beatmap,
    t: f64,
    cfg: &WindowConfig,
    geom: &LaneGeometry,
    style_refs: &StyleReferenceSet,
) -> Result<TrainingExample, ContextError> {
    let idx = grid_index(trace, t)
        .ok_or_else(|| ContextError::Window(format!("t={t} is not on the trace's frame grid")))?;
    build_training_window_at(trace, map, idx, cfg, geom, style_refs)
}

pub fn build_training_window_at(
    trace: &PoseTrace,
    map: &Beatmap,
    idx: usize,
    cfg: &WindowConfig,
    geom: &LaneGeometry,
    style_refs: &StyleReferenceSet,
) -> Result<TrainingExample, ContextError> {
    if idx < cfg.history {
        return Err(ContextError::Window(format!(
            "frame {idx} has fewer than {} history frames before it",
            cfg.history
        )));
    }
    if idx + cfg.future >= trace.len() {
        return Err(ContextError::Window(format!(
            "frame {idx} has fewer than {} future frames after it (trace has {})",
            cfg.future,
            trace.len()
        )));
    }
    let history = trace
        .window(idx - cfg.history, cfg.history_len())
        .expect("bounds checked");
    let (history, anchor) = canonicalize_window(&history)?;
    let future_frames = trace.frames[idx + 1..=idx + cfg.future]
        .iter()
        .map(|p| anchor.apply_pose(p))
        .collect();
    let t = trace.frames[idx].timestamp;
    Ok(TrainingExample {
        history,
        future: PoseWindow {
            frames: future_frames,
            canonical: true,
        },
        context: upcoming_events(map, t, cfg.n, cfg.horizon, &anchor, geom),
        style_refs: style_refs.clone(),
        anchor,
    })
}

/// Frames at which a full example can be cut: `h, h + stride, ...`.
pub fn example_indices(trace_len: usize, cfg: &WindowConfig, stride: usize) -> Vec<usize> {
    if trace_len < cfg.history + cfg.future + 1 {
        return Vec::new();
    }
    (cfg.history..trace_len - cfg.future)
        .step_by(stride.max(1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beatmap::{Color, CutDirection, ObstacleKind};
    use crate::pose::{Joint, Quat, ThreePointPose, Vec3};
    use rand::Rng;

    fn wavy_trace(len: usize, rate: f64) -> PoseTrace {
        let frames = (0..len)
            .map(|i| {
                let t = i as f64 / rate;
                let head = Joint::new(
                    Vec3::new(0.1 * t.sin(), 1.7, 0.05 * t),
                    Quat::from_yaw(0.2 * (2.0 * t).sin()),
                );
                let lh = Joint::new(
                    Vec3::new(-0.3 + 0.2 * (3.0 * t).sin(), 1.2, 0.3),
                    Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), t),
                );
                let rh = Joint::new(Vec3::new(0.3, 1.2 + 0.1 * t.cos(), 0.3), Quat::from_yaw(-t));
                ThreePointPose::from_joints(t, [head, lh, rh])
            })
            .collect();
        PoseTrace::new(frames, rate)
    }

    fn map_with_notes(times: &[f64]) -> Beatmap {
        let mut map = Beatmap::empty(60.0, 100.0);
        map.notes = times
            .iter()
            .map(|&beat| NoteEvent {
                beat,
                column: 1,
                row: 1,
                color: Color::Right,
                cut_direction: CutDirection::Up,
            })
            .collect();
        map
    }

    #[test]
    fn empty_map_gives_all_zero_masks() {
        let ctx = upcoming_events(
            &Beatmap::empty(120.0, 10.0),
            1.0,
            4,
            2.0,
            &AnchorTransform::IDENTITY,
            &LaneGeometry::default(),
        );
        assert_eq!(
            ctx.notes.present() + ctx.bombs.present() + ctx.obstacles.present(),
            0
        );
        assert!(ctx.notes.rows.iter().all(|r| r.iter().all(|v| *v == 0.0)));
        assert_eq!(ctx.notes.len(), 4);
    }

    #[test]
    fn two_notes_are_ordered_and_padded() {
        let t = 3.0;
        let map = map_with_notes(&[t + 1.0, t + 0.5, t - 0.5, t + 5.0]);
        let map = crate::beatmap::sort_events(map);
        let ctx = upcoming_events(
            &map,
            t,
            4,
            2.0,
            &AnchorTransform::IDENTITY,
            &LaneGeometry::default(),
        );
        assert_eq!(ctx.notes.mask, vec![true, true, false, false]);
        assert_eq!(ctx.notes.rows[0][0], 0.5);
        assert_eq!(ctx.notes.rows[1][0], 1.0);
        assert!(ctx.notes.rows[2].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn active_obstacle_has_zero_time_to_event() {
        let mut map = Beatmap::empty(60.0, 100.0);
        map.obstacles = vec![ObstacleEvent {
            beat: 4.0,
            duration: 2.0,
            column: 0,
            width: 1,
            kind: ObstacleKind::FullHeight,
        }];
        let ctx = upcoming_events(
            &map,
            5.0,
            2,
            2.0,
            &AnchorTransform::IDENTITY,
            &LaneGeometry::default(),
        );
        assert_eq!(ctx.obstacles.mask, vec![true, false]);
        assert_eq!(ctx.obstacles.rows[0][0], 0.0);
        assert_eq!(ctx.obstacles.rows[0][1], 2.0);
    }

    #[test]
    fn note_features_use_lane_constants() {
        let geom = LaneGeometry::default();
        let note = NoteEvent {
            beat: 0.0,
            column: 0,
            row: 0,
            color: Color::Left,
            cut_direction: CutDirection::Any,
        };
        let row = featurize_note(&note, 2.0, 1.5, &AnchorTransform::IDENTITY, &geom);
        assert_eq!(row[0], 0.5);
        assert_eq!(&row[1..4], &[-0.9, 0.8, geom.z_spawn]);
        assert_eq!(&row[4..6], &[1.0, 0.0]);
        assert_eq!(row[14], 1.0);
        assert_eq!(row[6..14].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn bomb_and_obstacle_features() {
        let geom = LaneGeometry::default();
        let bomb = BombEvent {
            beat: 0.0,
            column: 3,
            row: 2,
        };
        assert_eq!(
            featurize_bomb(&bomb, 1.0, 1.0, &AnchorTransform::IDENTITY, &geom),
            [0.0, 0.9, 1.6, 0.0]
        );
        let wall = ObstacleEvent {
            beat: 0.0,
            duration: 1.0,
            column: 0,
            width: 2,
            kind: ObstacleKind::FullHeight,
        };
        let row = featurize_obstacle(&wall, 1.0, 0.5, 0.0, &AnchorTransform::IDENTITY, &geom);
        assert_eq!(row[2], -1.2);
        assert!((row[5] - 1.2).abs() < 1e-15);
        assert_eq!(row[6], 2.0);
        assert_eq!(row[7], 0.5 * geom.beam_speed);
        let crouch = ObstacleEvent {
            kind: ObstacleKind::Crouch,
            ..wall
        };
        let row = featurize_obstacle(&crouch, 1.0, 0.5, 0.0, &AnchorTransform::IDENTITY, &geom);
        assert_eq!(row[3], 1.2);
        assert_eq!(row[6], 0.8);
    }

    fn tiny_cfg() -> WindowConfig {
        WindowConfig {
            history: 3,
            future: 4,
            n: 2,
            horizon: 2.0,
            n_ref: 1,
            rate: 30.0,
        }
    }

    fn refs_for(trace: &PoseTrace, cfg: &WindowConfig) -> StyleReferenceSet {
        select_style_references(trace, cfg.n_ref, cfg.future, 7).unwrap()
    }

    #[test]
    fn window_at_first_admissible_frame() {
        let cfg = tiny_cfg();
        let trace = wavy_trace(20, 30.0);
        let refs = refs_for(&trace, &cfg);
        let map = map_with_notes(&[0.3]);
        let t = trace.frames[cfg.history].timestamp;
        let ex =
            build_training_window(&trace, &map, t, &cfg, &LaneGeometry::default(), &refs).unwrap();
        assert_eq!(ex.history.len(), cfg.history + 1);
        assert_eq!(ex.future.len(), cfg.future);
        assert_eq!(
            ex.history.frames.last().unwrap().timestamp,
            ex.context.query_time
        );
        assert!((ex.future.frames[0].timestamp - 1.0 / 30.0 - ex.context.query_time).abs() < 1e-12);
        let early = trace.frames[cfg.history - 1].timestamp;
        assert!(matches!(
            build_training_window(&trace, &map, early, &cfg, &LaneGeometry::default(), &refs),
            Err(ContextError::Window(_))
        ));
    }

    #[test]
    fn window_needs_future_frames() {
        let cfg = tiny_cfg();
        let trace = wavy_trace(cfg.history + cfg.future + 1, 30.0);
        let refs = refs_for(&trace, &cfg);
        let map = map_with_notes(&[]);
        let geom = LaneGeometry::default();
        assert!(build_training_window_at(&trace, &map, cfg.history, &cfg, &geom, &refs).is_ok());
        assert!(
            build_training_window_at(&trace, &map, cfg.history + 1, &cfg, &geom, &refs).is_err()
        );
    }

    #[test]
    fn example_indices_counting() {
        let cfg = tiny_cfg();
        let exact = cfg.history + cfg.future + 1;
        assert_eq!(example_indices(exact, &cfg, 1), vec![cfg.history]);
        assert_eq!(
            example_indices(exact + 1, &cfg, 1),
            vec![cfg.history, cfg.history + 1]
        );
        assert_eq!(example_indices(exact + 1, &cfg, 2), vec![cfg.history]);
        assert!(example_indices(exact - 1, &cfg, 1).is_empty());
    }

    #[test]
    fn style_reference_selection() {
        let trace = wavy_trace(30, 30.0);
        let one =
            select_style_references(&PoseTrace::new(trace.frames[..6].to_vec(), 30.0), 1, 6, 0)
                .unwrap();
        assert_eq!(one.starts, vec![0]);
        let a = select_style_references(&trace, 3, 5, 11).unwrap();
        let b = select_style_references(&trace, 3, 5, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.refs.iter().all(|r| r.canonical && r.len() == 5));
        assert!(a.starts.windows(2).all(|w| w[1] >= w[0] + 5));
        assert!(matches!(
            select_style_references(&trace, 7, 5, 0),
            Err(ContextError::Capacity { .. })
        ));
    }

    #[test]
    fn style_reference_starts_cover_all_placements() {
        // 2 windows of 2 frames in 5 frames: starts (0,2),(0,3),(1,3)
        let trace = wavy_trace(5, 30.0);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            seen.insert(select_style_references(&trace, 2, 2, seed).unwrap().starts);
        }
        let expected: std::collections::BTreeSet<Vec<usize>> =
            [vec![0, 2], vec![0, 3], vec![1, 3]].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn rigid_motion_of_trace_and_geometry_leaves_features_unchanged() {
        let cfg = WindowConfig {
            history: 4,
            future: 5,
            n: 3,
            horizon: 2.0,
            n_ref: 1,
            rate: 30.0,
        };
        let trace = wavy_trace(40, 30.0);
        let mut map = map_with_notes(&[0.5, 0.6, 0.9]);
        map.bombs = vec![BombEvent {
            beat: 0.7,
            column: 2,
            row: 0,
        }];
        map.obstacles = vec![ObstacleEvent {
            beat: 0.2,
            duration: 1.0,
            column: 1,
            width: 2,
            kind: ObstacleKind::Crouch,
        }];
        let geom = LaneGeometry::default();
        let refs = refs_for(&trace, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let yaw = rng.gen_range(-3.0..3.0);
            let offset = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let place = PlaySpace {
                yaw,
                offset_xz: offset,
            };
            let to_world = place.world_to_local();
            let moved = PoseTrace::new(
                trace
                    .frames
                    .iter()
                    .map(|p| to_world.invert_pose(p))
                    .collect(),
                trace.rate,
            );
            let moved_geom = LaneGeometry {
                play_space: place,
                ..geom.clone()
            };
            let idx = rng.gen_range(cfg.history..trace.len() - cfg.future);
            let a = build_training_window_at(&trace, &map, idx, &cfg, &geom, &refs).unwrap();
            let b = build_training_window_at(&moved, &map, idx, &cfg, &moved_geom, &refs).unwrap();
            let pairs = a
                .history
                .features()
                .into_iter()
                .zip(b.history.features())
                .chain(a.future.features().into_iter().zip(b.future.features()));
            for (fa, fb) in pairs {
                for (x, y) in fa.iter().zip(fb.iter()) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
            let rows_a = a
                .context
                .notes
                .rows
                .iter()
                .flatten()
                .chain(a.context.bombs.rows.iter().flatten())
                .chain(a.context.obstacles.rows.iter().flatten());
            let rows_b = b
                .context
                .notes
                .rows
                .iter()
                .flatten()
                .chain(b.context.bombs.rows.iter().flatten())
                .chain(b.context.obstacles.rows.iter().flatten());
            for (x, y) in rows_a.zip(rows_b) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
    }
}
