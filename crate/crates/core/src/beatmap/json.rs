//! Beatmap JSON wire format.
//!
//! ```json
//! {"bpm": 120, "songLength": 30.0,
//!  "notes": [{"beat": 2, "column": 1, "row": 0, "color": 1, "cutDirection": 1}],
//!  "bombs": [{"beat": 3, "column": 0, "row": 2}],
//!  "obstacles": [{"beat": 4, "duration": 1, "column": 0, "width": 2, "kind": 0}]}
//! ```
//!
//! `songLength` is optional. `bpmChanges` is accepted only so that
//! variable-tempo maps can be rejected by validation.

use serde_json::{json, Map, Value};

use super::validate::{check_fields, Category, Rule, Violation};
use super::{
    sort_events, Beatmap, BeatmapError, BombEvent, Color, CutDirection, NoteEvent, ObstacleEvent,
    ObstacleKind, TempoChange, SONG_TAIL_SECONDS,
};

/// Parses, validates and sorts a beatmap document.
///
/// Violations carry the event's index in the source document.
pub fn parse_beatmap(raw: &str) -> Result<Beatmap, BeatmapError> {
    let (map, violations) = parse_unvalidated(raw)?;
    if violations.is_empty() {
        Ok(map)
    } else {
        Err(BeatmapError::Validation(violations))
    }
}

/// Parses a document that is well-formed and schema-complete, returning the
/// sorted map alongside every violation (indexed in source order) instead of
/// failing on them.
pub fn parse_unvalidated(raw: &str) -> Result<(Beatmap, Vec<Violation>), BeatmapError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| BeatmapError::Parse {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let root = value
        .as_object()
        .ok_or_else(|| schema("$", "expected a JSON object"))?;

    let mut violations = Vec::new();
    let bpm = number(root, "bpm", "bpm")?;
    let song_length = match root.get("songLength") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_number(v, "songLength")?),
    };

    let mut notes = Vec::new();
    for (i, item) in array(root, "notes")?.iter().enumerate() {
        let path = |f: &str| format!("notes[{i}].{f}");
        let obj = item
            .as_object()
            .ok_or_else(|| schema(&format!("notes[{i}]"), "expected an object"))?;
        let color_code = integer(obj, "color", &path("color"))?;
        let dir_code = integer(obj, "cutDirection", &path("cutDirection"))?;
        let color = Color::from_code(color_code).unwrap_or_else(|| {
            violations.push(Violation::event(
                Category::Note,
                i,
                "color",
                Rule::ColorCode,
            ));
            Color::Left
        });
        let cut_direction = CutDirection::from_code(dir_code).unwrap_or_else(|| {
            violations.push(Violation::event(
                Category::Note,
                i,
                "cutDirection",
                Rule::CutDirectionCode,
            ));
            CutDirection::Any
        });
        notes.push(NoteEvent {
            beat: number(obj, "beat", &path("beat"))?,
            column: small_int(obj, "column", &path("column"))?,
            row: small_int(obj, "row", &path("row"))?,
            color,
            cut_direction,
        });
    }

    let mut bombs = Vec::new();
    for (i, item) in array(root, "bombs")?.iter().enumerate() {
        let path = |f: &str| format!("bombs[{i}].{f}");
        let obj = item
            .as_object()
            .ok_or_else(|| schema(&format!("bombs[{i}]"), "expected an object"))?;
        bombs.push(BombEvent {
            beat: number(obj, "beat", &path("beat"))?,
            column: small_int(obj, "column", &path("column"))?,
            row: small_int(obj, "row", &path("row"))?,
        });
    }

    let mut obstacles = Vec::new();
    for (i, item) in array(root, "obstacles")?.iter().enumerate() {
        let path = |f: &str| format!("obstacles[{i}].{f}");
        let obj = item
            .as_object()
            .ok_or_else(|| schema(&format!("obstacles[{i}]"), "expected an object"))?;
        let kind_code = integer(obj, "kind", &path("kind"))?;
        let kind = ObstacleKind::from_code(kind_code).unwrap_or_else(|| {
            violations.push(Violation::event(
                Category::Obstacle,
                i,
                "kind",
                Rule::KindCode,
            ));
            ObstacleKind::FullHeight
        });
        obstacles.push(ObstacleEvent {
            beat: number(obj, "beat", &path("beat"))?,
            duration: number(obj, "duration", &path("duration"))?,
            column: small_int(obj, "column", &path("column"))?,
            width: small_int(obj, "width", &path("width"))?,
            kind,
        });
    }

    let mut tempo_changes = Vec::new();
    if let Some(changes) = root.get("bpmChanges") {
        let items = changes
            .as_array()
            .ok_or_else(|| schema("bpmChanges", "expected an array"))?;
        for (i, item) in items.iter().enumerate() {
            let obj = item
                .as_object()
                .ok_or_else(|| schema(&format!("bpmChanges[{i}]"), "expected an object"))?;
            tempo_changes.push(TempoChange {
                beat: number(obj, "beat", &format!("bpmChanges[{i}].beat"))?,
                bpm: number(obj, "bpm", &format!("bpmChanges[{i}].bpm"))?,
            });
        }
    }

    let mut map = Beatmap {
        bpm,
        notes,
        bombs,
        obstacles,
        song_length: 0.0,
        tempo_changes,
    };
    map.song_length = match song_length {
        Some(s) => s,
        None if bpm > 0.0 && bpm.is_finite() => {
            map.seconds(map.last_event_beat()) + SONG_TAIL_SECONDS
        }
        None => SONG_TAIL_SECONDS,
    };
    violations.extend(check_fields(&map));
    Ok((sort_events(map), violations))
}

/// Serializes a map to the wire format. `songLength` is always written.
pub fn to_json(map: &Beatmap) -> String {
    let notes: Vec<Value> = map
        .notes
        .iter()
        .map(|n| {
            json!({"beat": n.beat, "column": n.column, "row": n.row,
                   "color": n.color.code(), "cutDirection": n.cut_direction.code()})
        })
        .collect();
    let bombs: Vec<Value> = map
        .bombs
        .iter()
        .map(|b| json!({"beat": b.beat, "column": b.column, "row": b.row}))
        .collect();
    let obstacles: Vec<Value> = map
        .obstacles
        .iter()
        .map(|o| {
            json!({"beat": o.beat, "duration": o.duration, "column": o.column,
                   "width": o.width, "kind": o.kind.code()})
        })
        .collect();
    let mut doc = json!({
        "bpm": map.bpm,
        "songLength": map.song_length,
        "notes": notes,
        "bombs": bombs,
        "obstacles": obstacles,
    });
    if !map.tempo_changes.is_empty() {
        let changes: Vec<Value> = map
            .tempo_changes
            .iter()
            .map(|c| json!({"beat": c.beat, "bpm": c.bpm}))
            .collect();
        doc["bpmChanges"] = Value::Array(changes);
    }
    serde_json::to_string_pretty(&doc).expect("beatmap values are finite JSON numbers")
}

/// serde_json reports 1-based line and column; turn that into a byte offset.
fn byte_offset(raw: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = raw.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(raw.len())
}

fn schema(field: &str, message: &str) -> BeatmapError {
    BeatmapError::Schema {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn array<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>, BeatmapError> {
    match obj.get(key) {
        None => Err(schema(key, "missing required field")),
        Some(v) => v.as_array().ok_or_else(|| schema(key, "expected an array")),
    }
}

fn as_number(v: &Value, path: &str) -> Result<f64, BeatmapError> {
    v.as_f64().ok_or_else(|| schema(path, "expected a number"))
}

fn number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64, BeatmapError> {
    match obj.get(key) {
        None => Err(schema(path, "missing required field")),
        Some(v) => as_number(v, path),
    }
}

fn integer(obj: &Map<String, Value>, key: &str, path: &str) -> Result<i64, BeatmapError> {
    match obj.get(key) {
        None => Err(schema(path, "missing required field")),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| schema(path, "expected an integer")),
    }
}

fn small_int(obj: &Map<String, Value>, key: &str, path: &str) -> Result<i32, BeatmapError> {
    let v = integer(obj, key, path)?;
    i32::try_from(v).map_err(|_| schema(path, "integer out of range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let raw = r#"{"bpm":120,"notes":[{"beat":2,"column":1,"row":0,"color":1,"cutDirection":1}],"bombs":[],"obstacles":[]}"#;
        let map = parse_beatmap(raw).unwrap();
        assert_eq!(map.notes.len(), 1);
        assert!(map.bombs.is_empty() && map.obstacles.is_empty());
        let n = map.notes[0];
        assert_eq!((n.beat, n.column, n.row), (2.0, 1, 0));
        assert_eq!(n.color, Color::Right);
        assert_eq!(n.cut_direction, CutDirection::Down);
        // derived length: 1 s + tail
        assert_eq!(map.song_length, 3.0);
    }

    #[test]
    fn empty_document() {
        let map = parse_beatmap(r#"{"bpm":90,"notes":[],"bombs":[],"obstacles":[]}"#).unwrap();
        assert_eq!(map.event_count(), 0);
        assert_eq!(map.song_length, SONG_TAIL_SECONDS);
    }

    #[test]
    fn column_out_of_range_names_event_and_field() {
        let raw = r#"{"bpm":120,"notes":[{"beat":2,"column":4,"row":0,"color":1,"cutDirection":1}],"bombs":[],"obstacles":[]}"#;
        match parse_beatmap(raw) {
            Err(BeatmapError::Validation(v)) => {
                assert_eq!(
                    v,
                    vec![Violation::event(
                        Category::Note,
                        0,
                        "column",
                        Rule::ColumnRange
                    )]
                );
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_offset() {
        let raw = "{\"bpm\":120,\n\"notes\":[}";
        match parse_beatmap(raw) {
            Err(BeatmapError::Parse { offset, .. }) => assert_eq!(&raw[offset..offset + 1], "}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let raw = r#"{"bpm":120,"notes":[{"column":1,"row":0,"color":1,"cutDirection":1}],"bombs":[],"obstacles":[]}"#;
        match parse_beatmap(raw) {
            Err(BeatmapError::Schema { field, .. }) => assert_eq!(field, "notes[0].beat"),
            other => panic!("expected schema error, got {other:?}"),
        }
        match parse_beatmap(r#"{"bpm":120,"notes":[],"obstacles":[]}"#) {
            Err(BeatmapError::Schema { field, .. }) => assert_eq!(field, "bombs"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_enum_codes_are_violations() {
        let raw = r#"{"bpm":120,"notes":[{"beat":1,"column":1,"row":0,"color":2,"cutDirection":9}],"bombs":[],
            "obstacles":[{"beat":1,"duration":1,"column":0,"width":1,"kind":3}]}"#;
        let (_, v) = parse_unvalidated(raw).unwrap();
        let rules: Vec<Rule> = v.iter().map(|x| x.rule).collect();
        assert_eq!(
            rules,
            vec![Rule::ColorCode, Rule::CutDirectionCode, Rule::KindCode]
        );
    }

    #[test]
    fn tempo_changes_rejected() {
        let raw = r#"{"bpm":120,"notes":[],"bombs":[],"obstacles":[],"bpmChanges":[{"beat":4,"bpm":140}]}"#;
        match parse_beatmap(raw) {
            Err(BeatmapError::Validation(v)) => assert_eq!(v[0].rule, Rule::ConstantTempo),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn violation_indices_refer_to_source_order() {
        let raw = r#"{"bpm":120,"songLength":10,"notes":[
            {"beat":3,"column":1,"row":0,"color":1,"cutDirection":1},
            {"beat":1,"column":1,"row":7,"color":1,"cutDirection":1}],"bombs":[],"obstacles":[]}"#;
        let (map, v) = parse_unvalidated(raw).unwrap();
        assert_eq!(
            v,
            vec![Violation::event(Category::Note, 1, "row", Rule::RowRange)]
        );
        assert_eq!(map.notes[0].beat, 1.0);
    }

    #[test]
    fn serialized_map_reparses_identically() {
        let raw = r#"{"bpm":127.5,"songLength":12.25,"notes":[{"beat":0.1,"column":3,"row":2,"color":0,"cutDirection":8}],
            "bombs":[{"beat":1.3333333333333333,"column":0,"row":1}],
            "obstacles":[{"beat":2,"duration":0.75,"column":1,"width":3,"kind":1}]}"#;
        let map = parse_beatmap(raw).unwrap();
        assert_eq!(parse_beatmap(&to_json(&map)).unwrap(), map);
    }
}
