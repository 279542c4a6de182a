use std::path::{Path, PathBuf};

use beatpose_core::beatmap::{
    parse_beatmap, parse_unvalidated, to_json, validate_beatmap, BeatmapError,
};
use serde_json::Value;

fn fixtures(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/beatmaps")
        .join(kind);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn corpus_is_large_enough() {
    let total: usize = ["valid", "invalid", "malformed"]
        .iter()
        .map(|k| fixtures(k).len())
        .sum();
    assert!(total >= 12);
}

#[test]
fn valid_fixtures_parse_validate_and_round_trip() {
    for path in fixtures("valid") {
        let raw = read(&path);
        let map = parse_beatmap(&raw).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(validate_beatmap(&map).is_empty(), "{}", path.display());
        let again = parse_beatmap(&to_json(&map)).unwrap();
        assert_eq!(again, map, "{}", path.display());

        let doc: Value = serde_json::from_str(&raw).unwrap();
        let count = |k: &str| doc[k].as_array().map_or(0, Vec::len);
        assert_eq!(map.notes.len(), count("notes"));
        assert_eq!(map.bombs.len(), count("bombs"));
        assert_eq!(map.obstacles.len(), count("obstacles"));
    }
}

#[test]
fn empty_fixture_has_three_empty_lists() {
    let map = parse_beatmap(&read(
        &fixtures("valid")
            .into_iter()
            .find(|p| p.ends_with("empty.json"))
            .unwrap(),
    ))
    .unwrap();
    assert!(map.notes.is_empty() && map.bombs.is_empty() && map.obstacles.is_empty());
    assert_eq!(map.song_length, 2.0);
}

#[test]
fn tie_heavy_order_matches_a_stable_sort_of_the_source() {
    let path = fixtures("valid")
        .into_iter()
        .find(|p| p.ends_with("tie_heavy.json"))
        .unwrap();
    let raw = read(&path);
    let doc: Value = serde_json::from_str(&raw).unwrap();
    let mut source: Vec<(f64, i64, i64, i64, i64)> = doc["notes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| {
            (
                n["beat"].as_f64().unwrap(),
                n["column"].as_i64().unwrap(),
                n["row"].as_i64().unwrap(),
                n["color"].as_i64().unwrap(),
                n["cutDirection"].as_i64().unwrap(),
            )
        })
        .collect();
    // insertion sort is stable by construction
    for i in 1..source.len() {
        let mut j = i;
        while j > 0
            && (source[j - 1].0, source[j - 1].1, source[j - 1].2)
                > (source[j].0, source[j].1, source[j].2)
        {
            source.swap(j - 1, j);
            j -= 1;
        }
    }
    let map = parse_beatmap(&raw).unwrap();
    let got: Vec<(f64, i64, i64, i64, i64)> = map
        .notes
        .iter()
        .map(|n| {
            (
                n.beat,
                n.column.into(),
                n.row.into(),
                n.color.code(),
                n.cut_direction.code(),
            )
        })
        .collect();
    assert_eq!(got, source);
}

#[test]
fn each_invalid_fixture_has_exactly_its_violation() {
    let files = fixtures("invalid");
    assert!(files.len() >= 13);
    for path in files {
        let rule = path.file_stem().unwrap().to_str().unwrap().to_string();
        let (_, violations) = parse_unvalidated(&read(&path)).unwrap();
        assert_eq!(violations.len(), 1, "{rule}: {violations:?}");
        assert_eq!(violations[0].rule.id(), rule);
        assert!(matches!(
            parse_beatmap(&read(&path)),
            Err(BeatmapError::Validation(_))
        ));
    }
}

#[test]
fn invalid_column_names_event_and_field() {
    let path = fixtures("invalid")
        .into_iter()
        .find(|p| p.ends_with("column_range.json"))
        .unwrap();
    let (_, v) = parse_unvalidated(&read(&path)).unwrap();
    assert_eq!(v[0].to_string(), "notes[1].column (column_range)");
}

#[test]
fn malformed_fixtures_fail_before_validation() {
    for path in fixtures("malformed") {
        let err = parse_beatmap(&read(&path)).unwrap_err();
        let name = path.file_stem().unwrap().to_str().unwrap();
        match (name, &err) {
            ("truncated", BeatmapError::Parse { offset, .. }) => assert!(*offset > 0),
            ("missing_field", BeatmapError::Schema { field, .. }) => {
                assert_eq!(field, "notes[1].row")
            }
            ("wrong_type", BeatmapError::Schema { field, .. }) => {
                assert_eq!(field, "bombs[0].beat")
            }
            _ => panic!("{name}: unexpected {err}"),
        }
    }
}
