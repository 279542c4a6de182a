//! Seeded synthetic data: random model inputs, beatmaps and play traces.

use rand::Rng;

use crate::beatmap::{
    sort_events, Beatmap, BombEvent, Color, CutDirection, NoteEvent, ObstacleEvent, ObstacleKind,
};
use crate::context::{
    EventRows, FeatureExample, GameContext, LaneGeometry, BOMB_FEATURES, NOTE_FEATURES,
    OBSTACLE_FEATURES,
};
use crate::model::{Frame, ModelConfig};
use crate::pose::{AnchorTransform, Joint, PoseTrace, Quat, ThreePointPose, Vec3};

pub fn random_quat(rng: &mut impl Rng) -> Quat {
    loop {
        let q = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q.normalized();
        }
    }
}

pub fn random_pose(rng: &mut impl Rng, timestamp: f64) -> ThreePointPose {
    let mut joint = |center: Vec3| {
        let jitter = Vec3::new(
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        );
        Joint::new(center + jitter, random_quat(rng))
    };
    let head = joint(Vec3::new(0.0, 1.7, 0.0));
    let left = joint(Vec3::new(-0.3, 1.2, 0.2));
    let right = joint(Vec3::new(0.3, 1.2, 0.2));
    ThreePointPose::from_joints(timestamp, [head, left, right])
}

pub fn random_frames(rng: &mut impl Rng, count: usize) -> Vec<Frame> {
    (0..count)
        .map(|i| random_pose(rng, i as f64).features())
        .collect()
}

fn random_rows<const W: usize>(rng: &mut impl Rng, n: usize) -> EventRows<W> {
    let present = rng.gen_range(0..=n);
    let rows = (0..present)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    EventRows::padded(rows, n)
}

pub fn random_context(rng: &mut impl Rng, n: usize) -> GameContext {
    GameContext {
        query_time: 0.0,
        notes: random_rows::<NOTE_FEATURES>(rng, n),
        bombs: random_rows::<BOMB_FEATURES>(rng, n),
        obstacles: random_rows::<OBSTACLE_FEATURES>(rng, n),
    }
}

/// A shape-correct training example with random content.
pub fn random_feature_example(cfg: &ModelConfig, rng: &mut impl Rng) -> FeatureExample {
    FeatureExample {
        query_time: 0.0,
        anchor: AnchorTransform::new(0.0, [0.0, 0.0]),
        history: random_frames(rng, cfg.history + 1),
        future: random_frames(rng, cfg.future),
        context: random_context(rng, cfg.n),
        style_refs: (0..cfg.n_ref)
            .map(|_| random_frames(rng, cfg.future))
            .collect(),
    }
}

/// Random sorted beatmap of `song_length` seconds; events stay 0.3 s clear of
/// both ends.
pub fn random_beatmap(
    rng: &mut impl Rng,
    song_length: f64,
    notes: usize,
    bombs: usize,
    obstacles: usize,
) -> Beatmap {
    let bpm = rng.gen_range(90.0..180.0);
    let beats = |rng: &mut _| {
        let t: f64 = Rng::gen_range(rng, 0.3..(song_length - 0.3).max(0.31));
        t * bpm / 60.0
    };
    let mut map = Beatmap::empty(bpm, song_length);
    for _ in 0..notes {
        let beat = beats(rng);
        map.notes.push(NoteEvent {
            beat,
            column: rng.gen_range(0..4),
            row: rng.gen_range(0..3),
            color: if rng.gen_bool(0.5) {
                Color::Left
            } else {
                Color::Right
            },
            cut_direction: CutDirection::ALL[rng.gen_range(0..CutDirection::ALL.len())],
        });
    }
    for _ in 0..bombs {
        let beat = beats(rng);
        map.bombs.push(BombEvent {
            beat,
            column: rng.gen_range(0..4),
            row: rng.gen_range(0..3),
        });
    }
    for _ in 0..obstacles {
        let beat = beats(rng);
        let column = rng.gen_range(0..4);
        let max_duration = ((song_length - 0.3) * bpm / 60.0 - beat).max(0.05);
        map.obstacles.push(ObstacleEvent {
            beat,
            duration: rng.gen_range(0.0..max_duration.min(2.0)).max(0.05),
            column,
            width: rng.gen_range(1..=4 - column),
            kind: if rng.gen_bool(0.5) {
                ObstacleKind::FullHeight
            } else {
                ObstacleKind::Crouch
            },
        });
    }
    sort_events(map)
}

struct Wave {
    amplitude: Vec3,
    omega: f64,
    phase: [f64; 3],
}

impl Wave {
    fn random(rng: &mut impl Rng, amplitude: Vec3, omega: std::ops::Range<f64>) -> Self {
        Wave {
            amplitude,
            omega: rng.gen_range(omega),
            phase: std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU)),
        }
    }

    fn at(&self, t: f64) -> Vec3 {
        let a = self.amplitude;
        Vec3::new(
            a.x * (self.omega * t + self.phase[0]).sin(),
            a.y * (self.omega * 1.3 * t + self.phase[1]).sin(),
            a.z * (self.omega * 0.7 * t + self.phase[2]).sin(),
        )
    }
}

/// Smooth random motion sweeping the hands across the note grid and the
/// head through the wall region.
pub fn random_play_trace(
    rng: &mut impl Rng,
    duration: f64,
    rate: f64,
    lanes: &LaneGeometry,
) -> PoseTrace {
    let grid_y = (lanes.row_y[0] + lanes.row_y[2]) / 2.0;
    let hands = [
        (
            Vec3::new(-0.4, grid_y, lanes.z_spawn),
            Wave::random(rng, Vec3::new(0.7, 0.6, 0.4), 2.0..9.0),
        ),
        (
            Vec3::new(0.4, grid_y, lanes.z_spawn),
            Wave::random(rng, Vec3::new(0.7, 0.6, 0.4), 2.0..9.0),
        ),
    ];
    let head = Wave::random(rng, Vec3::new(0.6, 0.5, 0.3), 0.5..3.0);
    let yaw = Wave::random(rng, Vec3::new(0.4, 0.0, 0.0), 0.3..1.5);
    let place = lanes.play_space;
    let count = (duration * rate + 1e-9).floor() as usize + 1;
    let frames = (0..count)
        .map(|k| {
            let t = k as f64 / rate;
            let facing = Quat::from_yaw(place.yaw + yaw.at(t).x);
            let world = |p: Vec3| place.to_world_point(p);
            let head = Joint::new(
                world(Vec3::new(0.0, 1.4, lanes.z_spawn) + head.at(t)),
                facing,
            );
            let left = Joint::new(world(hands[0].0 + hands[0].1.at(t)), facing);
            let right = Joint::new(world(hands[1].0 + hands[1].1.at(t)), facing);
            ThreePointPose::from_joints(t, [head, left, right])
        })
        .collect();
    PoseTrace::new(frames, rate)
}
