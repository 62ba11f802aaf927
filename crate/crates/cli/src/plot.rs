//! Standalone SVG line charts from the episode CSV files.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use uavbeam::{Error, Result};

use crate::report::{write_file, RATE_HEADER, TRAJECTORY_HEADER};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Rate,
    Trajectory,
}

/// Column-major numeric table read from a schema-conformant CSV.
#[derive(Debug, Clone)]
pub struct Table {
    pub kind: PlotKind,
    pub columns: Vec<Vec<f64>>,
}

fn parse_error(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_error(1, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let kind = if header == RATE_HEADER {
        PlotKind::Rate
    } else if header == TRAJECTORY_HEADER {
        PlotKind::Trajectory
    } else {
        return Err(parse_error(1, format!("unrecognized header {header:?}")));
    };
    let width = header.split(',').count();
    let mut columns = vec![Vec::new(); width];
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(parse_error(
                line,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        for (col, field) in columns.iter_mut().zip(row.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("non-finite value {field:?}")));
            }
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(parse_error(2, "no data rows"));
    }
    Ok(Table { kind, columns })
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN + (x - self.x0) * self.sx,
            HEIGHT - MARGIN - (y - self.y0) * self.sy,
        )
    }
}

/// Renders a rate or trajectory table as SVG text.
pub fn render_svg(table: &Table) -> String {
    let (series, labels, x_label, y_label): (Vec<(usize, usize)>, [&str; 3], &str, &str) = match table.kind {
        PlotKind::Rate => (
            vec![(0, 2), (0, 3), (0, 4)],
            ["genie", "lrnet", "kalman"],
            "slot k",
            "rate (bits/s/Hz)",
        ),
        PlotKind::Trajectory => (
            vec![(1, 2), (3, 4), (6, 7)],
            ["true", "lrnet", "kalman"],
            "x (m)",
            "y (m)",
        ),
    };
    let xs = series.iter().flat_map(|&(x, _)| table.columns[x].iter().copied());
    let ys = series.iter().flat_map(|&(_, y)| table.columns[y].iter().copied());
    let (x_lo, x_hi) = bounds(xs);
    let (y_lo, y_hi) = bounds(ys);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let (mut sx, mut sy) = (pw / (x_hi - x_lo), ph / (y_hi - y_lo));
    let aspect = if table.kind == PlotKind::Trajectory {
        // one metre is the same length on both axes
        let s = sx.min(sy);
        sx = s;
        sy = s;
        "equal"
    } else {
        "auto"
    };
    let frame = Frame {
        x0: x_lo,
        y0: y_lo,
        sx,
        sy,
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-aspect="{aspect}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (ax, ay) = frame.map(x_lo, y_lo);
    let (bx, _) = frame.map(x_hi, y_lo);
    let (_, by) = frame.map(x_lo, y_hi);
    writeln!(
        svg,
        r#"<path class="axes" d="M{ax:.2},{by:.2} L{ax:.2},{ay:.2} L{bx:.2},{ay:.2}" stroke="black" fill="none"/>"#
    )
    .unwrap();
    for (v, x, y, anchor) in [(x_lo, ax, ay + 16.0, "start"), (x_hi, bx, ay + 16.0, "end")] {
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="11" text-anchor="{anchor}">{v:.3}</text>"#
        )
        .unwrap();
    }
    for (v, y) in [(y_lo, ay), (y_hi, by)] {
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{y:.2}" font-size="11" text-anchor="end">{v:.3}</text>"#,
            ax - 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="15" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {:.2})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();

    for (i, &(xc, yc)) in series.iter().enumerate() {
        let points: Vec<String> = table.columns[xc]
            .iter()
            .zip(&table.columns[yc])
            .map(|(&x, &y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        writeln!(
            svg,
            r#"<polyline data-series="{}" points="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#,
            labels[i],
            points.join(" "),
            COLORS[i]
        )
        .unwrap();
        let ly = MARGIN + 18.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            WIDTH - MARGIN - 85.0,
            COLORS[i],
            WIDTH - MARGIN - 80.0,
            ly + 4.0,
            labels[i]
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn render_plot(csv_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<()> {
    let table = read_table(csv_path)?;
    write_file(out_path, &render_svg(&table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_episode;
    use crate::report::{rate_csv, trajectory_csv};
    use uavbeam::lrnet::LrnetModel;
    use uavbeam::scenario::ScenarioConfig;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn rate_plot_has_three_polylines() {
        let dir = tempfile::tempdir().unwrap();
        let recs = run_episode(&LrnetModel::new(20, 4, 5, 1), &ScenarioConfig::default(), 2).unwrap();
        let csv = write(&dir, "rate.csv", &rate_csv(&recs).unwrap());
        let out = dir.path().join("rate.svg");
        render_plot(&csv, &out).unwrap();
        let svg = std::fs::read_to_string(out).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn trajectory_plot_is_equal_aspect() {
        let dir = tempfile::tempdir().unwrap();
        let recs = run_episode(&LrnetModel::new(20, 4, 5, 1), &ScenarioConfig::default(), 2).unwrap();
        let csv = write(&dir, "traj.csv", &trajectory_csv(&recs).unwrap());
        let table = read_table(&csv).unwrap();
        assert_eq!(table.kind, PlotKind::Trajectory);
        let svg = render_svg(&table);
        assert!(svg.contains(r#"data-aspect="equal""#));
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn empty_data_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(&dir, "rate.csv", &format!("{RATE_HEADER}\n"));
        let err = read_table(&csv).unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.starts_with("line 2")), "{err}");
    }

    #[test]
    fn bad_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(&dir, "rate.csv", &format!("{RATE_HEADER}\n0,1,2,3,4\n1,1,two,3,4\n"));
        let err = read_table(&csv).unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.starts_with("line 3")), "{err}");
        let csv = write(&dir, "short.csv", &format!("{RATE_HEADER}\n0,1,2\n"));
        assert!(read_table(&csv).is_err());
        let csv = write(&dir, "other.csv", "a,b\n1,2\n");
        let err = read_table(&csv).unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.starts_with("line 1")), "{err}");
    }
}
