//! Report JSON and SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{EvalError, HitReport, NoteOutcome};
use crate::beatmap::Beatmap;
use crate::pose::{jerk_series, PoseTrace};

pub const REPORT_NOTE: &str =
    "proxy metrics from a geometric scoring oracle; not comparable to in-game scores";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 240.0;
const MARGIN: f64 = 40.0;

/// Canonical-key-order report JSON, newline terminated.
pub fn report_json(report: &HitReport, config: &Value, inputs: &Value) -> String {
    let outcomes: serde_json::Map<String, Value> = NoteOutcome::ALL
        .iter()
        .map(|o| (o.name().to_string(), json!(report.count(*o))))
        .collect();
    let value = json!({
        "note": REPORT_NOTE,
        "hit_rate": report.hit_rate,
        "note_count": report.outcomes.len(),
        "outcomes": outcomes,
        "per_note": report.outcomes.iter().map(|o| o.name()).collect::<Vec<_>>(),
        "bomb_touches": report.bomb_touches,
        "obstacle_collisions": report.obstacle_collisions,
        "jerk": report.jerk,
        "style_distance": report.style_distance,
        "config": config,
        "inputs": inputs,
    });
    let mut s = serde_json::to_string_pretty(&sort_keys(value)).expect("report serializes");
    s.push('\n');
    s
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, sort_keys(v)))
                    .collect(),
            )
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

fn outcome_color(o: NoteOutcome) -> &'static str {
    match o {
        NoteOutcome::Hit => "#2a9d3f",
        NoteOutcome::Miss => "#888888",
        NoteOutcome::WrongDirection => "#d98c1f",
        NoteOutcome::TooSlow => "#3a6fd9",
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{title}</text>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#000000"/>"##,
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN
    );
    s
}

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        out_lo
    }
}

fn hit_timeline(report: &HitReport, map: &Beatmap) -> String {
    let mut s = svg_open("hit timeline");
    let end = map.song_length.max(1e-9);
    let rows = [
        NoteOutcome::Hit,
        NoteOutcome::WrongDirection,
        NoteOutcome::TooSlow,
        NoteOutcome::Miss,
    ];
    for (r, o) in rows.iter().enumerate() {
        let y = MARGIN + 10.0 + r as f64 * 40.0;
        let _ = writeln!(
            s,
            r#"<text x="4" y="{y:.1}" font-family="sans-serif" font-size="9">{}</text>"#,
            o.name()
        );
    }
    for (note, outcome) in map.notes.iter().zip(&report.outcomes) {
        let x = scale(map.seconds(note.beat), 0.0, end, MARGIN, WIDTH - MARGIN);
        let row = rows.iter().position(|o| o == outcome).unwrap_or(0);
        let y = MARGIN + 10.0 + row as f64 * 40.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#,
            outcome_color(*outcome)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn outcome_histogram(report: &HitReport) -> String {
    let mut s = svg_open("outcomes");
    let counts: Vec<usize> = NoteOutcome::ALL.iter().map(|o| report.count(*o)).collect();
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let slot = (WIDTH - 2.0 * MARGIN) / counts.len() as f64;
    for (k, (o, c)) in NoteOutcome::ALL.iter().zip(&counts).enumerate() {
        let h = *c as f64 / top * (HEIGHT - 2.0 * MARGIN - 20.0);
        let x = MARGIN + k as f64 * slot + slot * 0.15;
        let y = HEIGHT - MARGIN - h;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{}"/>"#,
            outcome_color(*o),
            w = slot * 0.7
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{ty:.2}" font-family="sans-serif" font-size="10">{} {c}</text>"#,
            o.name(),
            ty = HEIGHT - MARGIN + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn jerk_plot(series: &[f64], rate: f64) -> String {
    let mut s = svg_open("jerk (m/s^3)");
    if series.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let top = series.iter().copied().fold(0.0, f64::max).max(1e-9);
    let end = (series.len().max(2) - 1) as f64 / rate;
    let mut points = String::new();
    for (i, v) in series.iter().enumerate() {
        let x = scale(i as f64 / rate, 0.0, end, MARGIN, WIDTH - MARGIN);
        let y = scale(*v, 0.0, top, HEIGHT - MARGIN, MARGIN);
        let _ = write!(points, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b"/>"##,
        points.trim_end()
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="10">max {top:.3}</text>"#,
        MARGIN - 4.0
    );
    s.push_str("</svg>\n");
    s
}

/// `(file name, SVG text)` for the hit timeline, outcome histogram and jerk
/// plot.
pub fn render_svg_plots(
    report: &HitReport,
    trace: &PoseTrace,
    map: &Beatmap,
) -> Vec<(&'static str, String)> {
    let series = jerk_series(trace).unwrap_or_default();
    vec![
        ("hit_timeline.svg", hit_timeline(report, map)),
        ("outcomes.svg", outcome_histogram(report)),
        ("jerk.svg", jerk_plot(&series, trace.rate)),
    ]
}

/// Writes `report.json` and the plots into `dir`; returns the written paths.
pub fn emit_report(
    report: &HitReport,
    trace: &PoseTrace,
    map: &Beatmap,
    config: &Value,
    inputs: &Value,
    dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, report_json(report, config, inputs))?;
    written.push(json_path);
    for (name, svg) in render_svg_plots(report, trace, map) {
        let path = dir.join(name);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
