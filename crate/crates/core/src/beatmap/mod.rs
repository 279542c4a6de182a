//! Beatmap domain types, timing and event ordering.
//!
//! The grid is 4 columns by 3 rows. Tempo is a single constant bpm; maps that
//! carry tempo changes parse but fail validation.

mod json;
mod validate;

use std::cmp::Ordering;

use thiserror::Error;

pub use json::{parse_beatmap, parse_unvalidated, to_json};
pub use validate::{validate_beatmap, Category, Rule, Violation};

pub const GRID_COLUMNS: i32 = 4;
pub const GRID_ROWS: i32 = 3;

/// Seconds appended after the last event when a map has no `songLength`.
pub const SONG_TAIL_SECONDS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BeatmapError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("beatmap failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("domain error: {0}")]
    Domain(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Left,
    Right,
}

impl Color {
    pub fn code(self) -> i64 {
        match self {
            Color::Left => 0,
            Color::Right => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Color::Left),
            1 => Some(Color::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutDirection {
    Up,
    Down,
    Left,
    Right,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
    Any,
}

impl CutDirection {
    pub const ALL: [CutDirection; 9] = [
        CutDirection::Up,
        CutDirection::Down,
        CutDirection::Left,
        CutDirection::Right,
        CutDirection::UpLeft,
        CutDirection::UpRight,
        CutDirection::DownLeft,
        CutDirection::DownRight,
        CutDirection::Any,
    ];

    /// Wire code, also the one-hot slot index.
    pub fn code(self) -> i64 {
        CutDirection::ALL.iter().position(|d| *d == self).unwrap() as i64
    }

    pub fn from_code(code: i64) -> Option<Self> {
        usize::try_from(code)
            .ok()
            .and_then(|i| CutDirection::ALL.get(i).copied())
    }

    /// Unit swing direction in the play-space xy plane, `None` for `Any`.
    pub fn swing_vector(self) -> Option<[f64; 3]> {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            CutDirection::Up => Some([0.0, 1.0, 0.0]),
            CutDirection::Down => Some([0.0, -1.0, 0.0]),
            CutDirection::Left => Some([-1.0, 0.0, 0.0]),
            CutDirection::Right => Some([1.0, 0.0, 0.0]),
            CutDirection::UpLeft => Some([-d, d, 0.0]),
            CutDirection::UpRight => Some([d, d, 0.0]),
            CutDirection::DownLeft => Some([-d, -d, 0.0]),
            CutDirection::DownRight => Some([d, -d, 0.0]),
            CutDirection::Any => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObstacleKind {
    FullHeight,
    Crouch,
}

impl ObstacleKind {
    pub fn code(self) -> i64 {
        match self {
            ObstacleKind::FullHeight => 0,
            ObstacleKind::Crouch => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ObstacleKind::FullHeight),
            1 => Some(ObstacleKind::Crouch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub beat: f64,
    pub column: i32,
    pub row: i32,
    pub color: Color,
    pub cut_direction: CutDirection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BombEvent {
    pub beat: f64,
    pub column: i32,
    pub row: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleEvent {
    pub beat: f64,
    pub duration: f64,
    /// Leftmost occupied lane.
    pub column: i32,
    pub width: i32,
    pub kind: ObstacleKind,
}

/// A tempo change. Present only so that variable-tempo maps can be detected
/// and rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoChange {
    pub beat: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beatmap {
    pub bpm: f64,
    pub notes: Vec<NoteEvent>,
    pub bombs: Vec<BombEvent>,
    pub obstacles: Vec<ObstacleEvent>,
    /// Seconds.
    pub song_length: f64,
    pub tempo_changes: Vec<TempoChange>,
}

impl Beatmap {
    pub fn empty(bpm: f64, song_length: f64) -> Self {
        Beatmap {
            bpm,
            notes: Vec::new(),
            bombs: Vec::new(),
            obstacles: Vec::new(),
            song_length,
            tempo_changes: Vec::new(),
        }
    }

    /// Resolves a beat to seconds at this map's tempo. Assumes a validated map.
    pub fn seconds(&self, beat: f64) -> f64 {
        beat * 60.0 / self.bpm
    }

    /// Latest beat touched by any event, counting obstacle ends.
    pub fn last_event_beat(&self) -> f64 {
        let notes = self.notes.iter().map(|n| n.beat);
        let bombs = self.bombs.iter().map(|b| b.beat);
        let obstacles = self.obstacles.iter().map(|o| o.beat + o.duration);
        notes.chain(bombs).chain(obstacles).fold(0.0, f64::max)
    }

    pub fn event_count(&self) -> usize {
        self.notes.len() + self.bombs.len() + self.obstacles.len()
    }
}

/// `beat * 60 / bpm`.
pub fn beats_to_seconds(beat: f64, bpm: f64) -> Result<f64, BeatmapError> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(BeatmapError::Domain(format!(
            "bpm must be positive, got {bpm}"
        )));
    }
    if !(beat >= 0.0) || !beat.is_finite() {
        return Err(BeatmapError::Domain(format!(
            "beat must be non-negative, got {beat}"
        )));
    }
    Ok(beat * 60.0 / bpm)
}

fn cmp_key(a: (f64, i32, i32), b: (f64, i32, i32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Sorts every event list by `(beat, column, row)`. The sort is stable, so
/// declaration order breaks the remaining ties.
pub fn sort_events(mut map: Beatmap) -> Beatmap {
    map.notes
        .sort_by(|a, b| cmp_key((a.beat, a.column, a.row), (b.beat, b.column, b.row)));
    map.bombs
        .sort_by(|a, b| cmp_key((a.beat, a.column, a.row), (b.beat, b.column, b.row)));
    map.obstacles
        .sort_by(|a, b| cmp_key((a.beat, a.column, 0), (b.beat, b.column, 0)));
    map.tempo_changes.sort_by(|a, b| a.beat.total_cmp(&b.beat));
    map
}

pub(crate) fn is_sorted(map: &Beatmap) -> (bool, bool, bool) {
    let notes = map.notes.windows(2).all(|w| {
        cmp_key(
            (w[0].beat, w[0].column, w[0].row),
            (w[1].beat, w[1].column, w[1].row),
        ) != Ordering::Greater
    });
    let bombs = map.bombs.windows(2).all(|w| {
        cmp_key(
            (w[0].beat, w[0].column, w[0].row),
            (w[1].beat, w[1].column, w[1].row),
        ) != Ordering::Greater
    });
    let obstacles = map.obstacles.windows(2).all(|w| {
        cmp_key((w[0].beat, w[0].column, 0), (w[1].beat, w[1].column, 0)) != Ordering::Greater
    });
    (notes, bombs, obstacles)
}
