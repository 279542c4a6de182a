use std::fmt;

use super::{is_sorted, Beatmap, GRID_COLUMNS, GRID_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Map,
    Note,
    Bomb,
    Obstacle,
    Tempo,
}

impl Category {
    pub fn list_name(self) -> &'static str {
        match self {
            Category::Map => "map",
            Category::Note => "notes",
            Category::Bomb => "bombs",
            Category::Obstacle => "obstacles",
            Category::Tempo => "bpmChanges",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    ColumnRange,
    RowRange,
    BeatRange,
    ColorCode,
    CutDirectionCode,
    KindCode,
    WidthMin,
    LaneSpan,
    DurationPositive,
    PastSongLength,
    BpmPositive,
    SongLengthPositive,
    ConstantTempo,
    SortOrder,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::ColumnRange => "column_range",
            Rule::RowRange => "row_range",
            Rule::BeatRange => "beat_range",
            Rule::ColorCode => "color_code",
            Rule::CutDirectionCode => "cut_direction_code",
            Rule::KindCode => "kind_code",
            Rule::WidthMin => "width_min",
            Rule::LaneSpan => "lane_span",
            Rule::DurationPositive => "duration_positive",
            Rule::PastSongLength => "past_song_length",
            Rule::BpmPositive => "bpm_positive",
            Rule::SongLengthPositive => "song_length_positive",
            Rule::ConstantTempo => "constant_tempo",
            Rule::SortOrder => "sort_order",
        }
    }
}

/// One broken invariant. `index` is the event's position in its list, or
/// `None` for map-level rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub category: Category,
    pub index: Option<usize>,
    pub field: &'static str,
    pub rule: Rule,
}

impl Violation {
    pub(crate) fn event(category: Category, index: usize, field: &'static str, rule: Rule) -> Self {
        Violation {
            category,
            index: Some(index),
            field,
            rule,
        }
    }

    pub(crate) fn map(field: &'static str, rule: Rule) -> Self {
        Violation {
            category: Category::Map,
            index: None,
            field,
            rule,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(
                f,
                "{}[{}].{} ({})",
                self.category.list_name(),
                i,
                self.field,
                self.rule.id()
            ),
            None => write!(f, "{} ({})", self.field, self.rule.id()),
        }
    }
}

/// Every invariant violation in `map`, including unsorted event lists.
/// Empty iff the map satisfies all beatmap invariants.
pub fn validate_beatmap(map: &Beatmap) -> Vec<Violation> {
    let mut out = check_fields(map);
    let (notes, bombs, obstacles) = is_sorted(map);
    for (ok, category) in [
        (notes, Category::Note),
        (bombs, Category::Bomb),
        (obstacles, Category::Obstacle),
    ] {
        if !ok {
            out.push(Violation {
                category,
                index: None,
                field: "beat",
                rule: Rule::SortOrder,
            });
        }
    }
    out
}

fn beat_ok(beat: f64) -> bool {
    beat.is_finite() && beat >= 0.0
}

/// Field-level checks; independent of list order so parse can report source
/// indices.
pub(crate) fn check_fields(map: &Beatmap) -> Vec<Violation> {
    let mut out = Vec::new();
    let bpm_ok = map.bpm.is_finite() && map.bpm > 0.0;
    if !bpm_ok {
        out.push(Violation::map("bpm", Rule::BpmPositive));
    }
    if !(map.song_length.is_finite() && map.song_length > 0.0) {
        out.push(Violation::map("songLength", Rule::SongLengthPositive));
    }
    if !map.tempo_changes.is_empty() {
        out.push(Violation::map("bpmChanges", Rule::ConstantTempo));
    }
    // Time checks only make sense with a valid tempo.
    let past_end = |beat: f64| bpm_ok && beat_ok(beat) && map.seconds(beat) > map.song_length;

    for (i, n) in map.notes.iter().enumerate() {
        let c = Category::Note;
        if !beat_ok(n.beat) {
            out.push(Violation::event(c, i, "beat", Rule::BeatRange));
        }
        if !(0..GRID_COLUMNS).contains(&n.column) {
            out.push(Violation::event(c, i, "column", Rule::ColumnRange));
        }
        if !(0..GRID_ROWS).contains(&n.row) {
            out.push(Violation::event(c, i, "row", Rule::RowRange));
        }
        if past_end(n.beat) {
            out.push(Violation::event(c, i, "beat", Rule::PastSongLength));
        }
    }
    for (i, b) in map.bombs.iter().enumerate() {
        let c = Category::Bomb;
        if !beat_ok(b.beat) {
            out.push(Violation::event(c, i, "beat", Rule::BeatRange));
        }
        if !(0..GRID_COLUMNS).contains(&b.column) {
            out.push(Violation::event(c, i, "column", Rule::ColumnRange));
        }
        if !(0..GRID_ROWS).contains(&b.row) {
            out.push(Violation::event(c, i, "row", Rule::RowRange));
        }
        if past_end(b.beat) {
            out.push(Violation::event(c, i, "beat", Rule::PastSongLength));
        }
    }
    for (i, o) in map.obstacles.iter().enumerate() {
        let c = Category::Obstacle;
        if !beat_ok(o.beat) {
            out.push(Violation::event(c, i, "beat", Rule::BeatRange));
        }
        if !(o.duration.is_finite() && o.duration > 0.0) {
            out.push(Violation::event(c, i, "duration", Rule::DurationPositive));
        }
        let column_ok = (0..GRID_COLUMNS).contains(&o.column);
        if !column_ok {
            out.push(Violation::event(c, i, "column", Rule::ColumnRange));
        }
        if o.width < 1 {
            out.push(Violation::event(c, i, "width", Rule::WidthMin));
        } else if column_ok && o.column + o.width > GRID_COLUMNS {
            out.push(Violation::event(c, i, "width", Rule::LaneSpan));
        }
        if past_end(o.beat) {
            out.push(Violation::event(c, i, "beat", Rule::PastSongLength));
        }
    }
    out
}
