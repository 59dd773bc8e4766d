//! Trace export and convergence charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fan::{EpochRecord, TrainingTrace};

pub const TRACE_HEADER: [&str; 8] = [
    "epoch",
    "mse",
    "d_current",
    "d_hat",
    "l_a",
    "ratchet_best",
    "d_bar",
    "baseline",
];

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text of a trace. Numbers use the shortest exact representation, so
/// reading the text back reproduces every value.
pub fn trace_csv(trace: &TrainingTrace) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::Input("cannot export an empty trace".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.epoch.to_string(),
            r.mse.to_string(),
            r.d_current.to_string(),
            r.d_hat.to_string(),
            r.l_a.to_string(),
            cell(r.ratchet_best),
            cell(r.d_bar),
            cell(trace.baseline),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Input(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_trace(trace: &TrainingTrace, path: &Path) -> Result<()> {
    let text = trace_csv(trace)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parse a trace written by [`export_trace`]. Recovery counts and the stop
/// reason are not part of the file.
pub fn read_trace(path: &Path) -> Result<TrainingTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

fn parse_trace(text: &str, path: &Path) -> Result<TrainingTrace> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header '{}'", header.join(",")),
        });
    }
    let mut trace = TrainingTrace::default();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |field: &str, v: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad {field} '{v}'"),
        };
        let num =
            |j: usize| -> Result<f64> { row[j].parse().map_err(|_| bad(TRACE_HEADER[j], &row[j])) };
        let opt = |j: usize| -> Result<Option<f64>> {
            if row[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        trace.records.push(EpochRecord {
            epoch: row[0].parse().map_err(|_| bad("epoch", &row[0]))?,
            mse: num(1)?,
            d_current: num(2)?,
            d_hat: num(3)?,
            l_a: num(4)?,
            ratchet_best: opt(5)?,
            d_bar: opt(6)?,
        });
        if let Some(b) = opt(7)? {
            trace.baseline = Some(b);
        }
    }
    if trace.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "trace has no rows".into(),
        });
    }
    Ok(trace)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// A chart series in plot units: `(epoch, value in [0, 1])`.
struct Series {
    label: String,
    color: &'static str,
    dashed: bool,
    markers: bool,
    points: Vec<(f64, f64)>,
}

/// Min-max scale to [0, 1]; a constant series sits at 0.5.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; values.len()]
    }
}

fn scaled(label: &str, color: &'static str, pts: Vec<(f64, f64)>) -> Option<Series> {
    if pts.is_empty() {
        return None;
    }
    let ys = normalize(&pts.iter().map(|p| p.1).collect::<Vec<_>>());
    Some(Series {
        label: format!("{label} (scaled)"),
        color,
        dashed: false,
        markers: false,
        points: pts.iter().zip(ys).map(|(p, y)| (p.0, y)).collect(),
    })
}

fn series(trace: &TrainingTrace) -> Vec<Series> {
    let recs = &trace.records;
    let first = recs[0].epoch as f64;
    let last = recs[recs.len() - 1].epoch as f64;
    let all = |f: fn(&EpochRecord) -> f64| recs.iter().map(|r| (r.epoch as f64, f(r))).collect();
    let mut out: Vec<Series> = [
        scaled("MSE", "#1f77b4", all(|r| r.mse)),
        scaled("D", "#ff7f0e", all(|r| r.d_current)),
        scaled("D-hat", "#2ca02c", all(|r| r.d_hat)),
        scaled("L_A", "#9467bd", all(|r| r.l_a)),
        scaled(
            "ratchet best",
            "#8c564b",
            recs.iter()
                .filter_map(|r| r.ratchet_best.map(|b| (r.epoch as f64, b)))
                .collect(),
        ),
    ]
    .into_iter()
    .flatten()
    .collect();
    let audits: Vec<(f64, f64)> = trace.audits().map(|(e, d)| (e as f64, d)).collect();
    if !audits.is_empty() {
        out.push(Series {
            label: "D-bar".into(),
            color: "#d62728",
            dashed: false,
            markers: true,
            points: audits,
        });
    }
    if let Some(b) = trace.baseline {
        out.push(Series {
            label: "baseline".into(),
            color: "#000000",
            dashed: true,
            markers: false,
            points: vec![(first, b), (last, b)],
        });
    }
    out
}

/// SVG 1.1 line chart. D-bar and the baseline are drawn in true units on
/// [0, 1]; every other series is min-max scaled into the same range.
pub fn convergence_svg(trace: &TrainingTrace) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::Input("cannot chart an empty trace".into()));
    }
    let first = trace.records[0].epoch as f64;
    let last = trace.records[trace.len() - 1].epoch as f64;
    let span = (last - first).max(1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |e: f64| LEFT + (e - first) / span * pw;
    let py = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    // axes and ticks
    let _ = writeln!(
        s,
        r##"<g stroke="#444" stroke-width="1"><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/><line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/></g>"##,
        TOP + ph,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(
        s,
        r##"<g font-family="sans-serif" font-size="11" fill="#222">"##
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 6.0,
            py(v) + 4.0
        );
    }
    for i in 0..=4 {
        let e = first + span * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(e),
            TOP + ph + 16.0,
            e.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">epoch</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">proportion correct / scaled</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(s, "</g>");

    let all = series(trace);
    for (i, ser) in all.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(e, v)| format!("{:.2},{:.2}", px(e), py(v)))
            .collect();
        let dash = if ser.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            ser.label,
            ser.color,
            pts.join(" ")
        );
        if ser.markers {
            for &(e, v) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                    px(e),
                    py(v),
                    ser.color
                );
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 24.0,
            ser.color,
            lx + 30.0,
            ly + 4.0,
            ser.label
        );
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn render_convergence_chart(trace: &TrainingTrace, path: &Path) -> Result<()> {
    let svg = convergence_svg(trace)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(epoch: usize, v: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            mse: v,
            d_current: 0.69,
            d_hat: v / 3.0,
            l_a: v + 0.1,
            ratchet_best: (epoch > 2).then_some(v),
            d_bar: None,
        }
    }

    fn trace(n: usize) -> TrainingTrace {
        TrainingTrace {
            records: (1..=n).map(|e| rec(e, 1.0 / e as f64)).collect(),
            baseline: Some(0.5),
            ..Default::default()
        }
    }

    /// Tag balance and attribute quoting; enough to catch malformed output.
    fn well_formed(svg: &str) -> bool {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg;
        while let Some(start) = rest.find('<') {
            let end = match rest[start..].find('>') {
                Some(e) => start + e,
                None => return false,
            };
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') {
                continue;
            }
            if !tag.matches('"').count().is_multiple_of(2) {
                return false;
            }
            if let Some(name) = tag.strip_prefix('/') {
                if stack.pop().as_deref() != Some(name.trim()) {
                    return false;
                }
            } else if !tag.ends_with('/') {
                stack.push(tag.split_whitespace().next().unwrap_or("").to_string());
            }
        }
        stack.is_empty()
    }

    #[test]
    fn one_epoch_is_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        export_trace(&trace(1), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(
            text.lines().next().unwrap(),
            "epoch,mse,d_current,d_hat,l_a,ratchet_best,d_bar,baseline"
        );
    }

    #[test]
    fn single_audit_gives_single_d_bar_cell() {
        let mut t = trace(600);
        t.records[499].d_bar = Some(0.61);
        let text = trace_csv(&t).unwrap();
        let filled = text
            .lines()
            .skip(1)
            .filter(|l| !l.split(',').nth(6).unwrap().is_empty())
            .count();
        assert_eq!(filled, 1);
        assert!(text.lines().nth(500).unwrap().starts_with("500,"));
    }

    #[test]
    fn empty_trace_is_rejected() {
        assert!(trace_csv(&TrainingTrace::default()).is_err());
        assert!(convergence_svg(&TrainingTrace::default()).is_err());
    }

    #[test]
    fn chart_structure() {
        let mut t = trace(50);
        t.records[24].d_bar = Some(0.8);
        t.records[49].d_bar = Some(0.55);
        let svg = convergence_svg(&t).unwrap();
        assert!(well_formed(&svg));
        // five scaled series, D-bar and baseline
        assert_eq!(svg.matches("<polyline").count(), 7);
        assert_eq!(svg.matches("(scaled)\"").count(), 5);
        assert_eq!(svg.matches("<circle").count(), 2);
        let baseline = svg
            .lines()
            .find(|l| l.contains(r#"data-label="baseline""#))
            .unwrap();
        assert!(baseline.contains("stroke-dasharray"));
        // baseline 0.5 sits halfway down the plot area
        let y = TOP + 0.5 * (HEIGHT - TOP - BOTTOM);
        assert!(baseline.contains(&format!(",{y:.2} ")));
        // D-bar is drawn in true units
        let dbar = svg
            .lines()
            .find(|l| l.contains(r#"data-label="D-bar""#))
            .unwrap();
        let y08 = TOP + 0.2 * (HEIGHT - TOP - BOTTOM);
        assert!(dbar.contains(&format!(",{y08:.2}")));
    }

    #[test]
    fn constant_series_is_horizontal() {
        let svg = convergence_svg(&trace(10)).unwrap();
        let d = svg
            .lines()
            .find(|l| l.contains(r#"data-label="D (scaled)""#))
            .unwrap();
        let pts = d
            .split("points=\"")
            .nth(1)
            .unwrap()
            .trim_end_matches("\"/>");
        let ys: Vec<&str> = pts
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.iter().all(|y| *y == ys[0]));
        assert_eq!(normalize(&[3.0, 3.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err =
            render_convergence_chart(&trace(3), Path::new("/nonexistent/dir/c.svg")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    fn arb_value() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            -1e3..1e3f64
        ]
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_lossless(
            rows in prop::collection::vec(
                (arb_value(), arb_value(), arb_value(), arb_value(),
                 prop::option::of(arb_value()), prop::option::of(0.0..=1.0f64)),
                1..20),
            baseline in prop::option::of(0.0..=1.0f64),
        ) {
            let t = TrainingTrace {
                records: rows.iter().enumerate().map(|(i, r)| EpochRecord {
                    epoch: i + 1,
                    mse: r.0,
                    d_current: r.1,
                    d_hat: r.2,
                    l_a: r.3,
                    ratchet_best: r.4,
                    d_bar: r.5,
                }).collect(),
                baseline,
                ..Default::default()
            };
            let text = trace_csv(&t).unwrap();
            let back = parse_trace(&text, Path::new("t.csv")).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
