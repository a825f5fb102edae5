//! Dependency-free SVG line plots of sweep and scan CSV files.
//!
//! Output bytes depend only on the input text and the options, so rendered
//! plots can be compared against stored files.

use std::fmt::Write as _;

use crate::error::{ExplabError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotOptions {
    /// Column for the horizontal axis; defaults to `value`, then `phi_rad`.
    pub x: Option<String>,
    /// Column for the vertical axis; defaults to `min_db`, then `variance_snu`.
    pub y: Option<String>,
    pub title: Option<String>,
}

/// A header plus rows of raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    /// `(line number, cells)`.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or(ExplabError::Parse {
            line: 1,
            message: "no header row".into(),
        })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (line, l) in lines {
            let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != columns.len() {
                return Err(ExplabError::Parse {
                    line,
                    message: format!("expected {} fields, found {}", columns.len(), cells.len()),
                });
            }
            rows.push((line, cells));
        }
        if rows.is_empty() {
            return Err(ExplabError::Parse {
                line: 2,
                message: "no data rows".into(),
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| ExplabError::MissingColumn(name.into()))
    }

    /// Numeric `(x, y)` pairs; rows with an empty `y` cell (failed sweep
    /// points) are skipped.
    pub fn series(&self, x: usize, y: usize) -> Result<Vec<(usize, f64, f64)>> {
        let num = |line: usize, cell: &str, name: &str| {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ExplabError::Parse {
                    line,
                    message: format!("column `{name}`: `{cell}` is not a finite number"),
                })
        };
        let mut out = Vec::new();
        for (line, cells) in &self.rows {
            if cells[y].is_empty() {
                continue;
            }
            out.push((*line, num(*line, &cells[x], &self.columns[x])?, num(*line, &cells[y], &self.columns[y])?));
        }
        if out.is_empty() {
            return Err(ExplabError::Parse {
                line: 2,
                message: "no plottable rows".into(),
            });
        }
        Ok(out)
    }
}

fn pick(table: &Table, requested: &Option<String>, defaults: &[&str]) -> Result<String> {
    if let Some(name) = requested {
        table.column(name)?;
        return Ok(name.clone());
    }
    defaults
        .iter()
        .find(|d| table.column(d).is_ok())
        .map(|d| d.to_string())
        .ok_or_else(|| ExplabError::MissingColumn(defaults.join(" or ")))
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render CSV text as an SVG document.
///
/// A `variance_snu` column is drawn in dB so that shot noise sits on the
/// dashed 0 dB line.
pub fn plot_svg(csv: &str, opts: &PlotOptions) -> Result<String> {
    let table = Table::parse(csv)?;
    let x_name = pick(&table, &opts.x, &["value", "phi_rad"])?;
    let y_name = pick(&table, &opts.y, &["min_db", "variance_snu"])?;
    let series = table.series(table.column(&x_name)?, table.column(&y_name)?)?;
    let in_db = y_name == "variance_snu";
    if in_db {
        if let Some((line, _, _)) = series.iter().find(|p| p.2 <= 0.0) {
            return Err(ExplabError::Parse {
                line: *line,
                message: "variance must be positive".into(),
            });
        }
    }
    let data: Vec<(f64, f64)> = series
        .iter()
        .map(|&(_, x, y)| (x, if in_db { 10.0 * y.log10() } else { y }))
        .collect();
    let y_label = if in_db { "noise (dB re shot noise)".to_string() } else { y_name.clone() };
    let x_label = match table.column("param") {
        Ok(c) if x_name == "value" => table.rows[0].1[c].clone(),
        _ => x_name.clone(),
    };

    let (x0, x1) = padded_range(
        data.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        data.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded_range(
        data.iter().map(|p| p.1).fold(0.0, f64::min),
        data.iter().map(|p| p.1).fold(0.0, f64::max),
    );
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);
    let (left, right, top, bottom) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(title) = &opts.title {
        let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    }
    let _ = writeln!(s, r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}" stroke="black"/>"#);
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(s, r#"<line x1="{tx:.2}" y1="{bottom:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(s, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 18.0, label(xv));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ty:.2}" x2="{left:.2}" y2="{ty:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, ty + 4.0, label(yv));
    }
    let zero = py(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{left:.2}" y1="{zero:.2}" x2="{right:.2}" y2="{zero:.2}" stroke="#888888" stroke-dasharray="6 4"/>"##
    );
    let vertices: Vec<String> = data.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{}"/>"##,
        vertices.join(" ")
    );
    for &(x, y) in &data {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f5fa8"/>"##, px(x), py(y));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 8.0,
        escape(&x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(&y_label)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "param,value,min_db,max_db,angle_rad,error\nb_x_mG,0,-0.5,1.0,0.1,\nb_x_mG,100,-0.8,1.2,0.2,\n";

    #[test]
    fn one_polyline_two_vertices() {
        let svg = plot_svg(TWO, &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains(">b_x_mG</text>"));
        assert_eq!(svg, plot_svg(TWO, &PlotOptions::default()).unwrap());
    }

    #[test]
    fn failed_rows_are_skipped() {
        let csv = "param,value,min_db,max_db,angle_rad,error\np,0,,,,boom\np,1,-0.1,0.1,0,\np,2,-0.2,0.2,0,\n";
        let svg = plot_svg(csv, &PlotOptions::default()).unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            plot_svg("param,value,min_db,max_db,angle_rad,error\n", &PlotOptions::default()),
            Err(ExplabError::Parse { .. })
        ));
        assert!(matches!(
            plot_svg("a,b\n1,2\n", &PlotOptions::default()),
            Err(ExplabError::MissingColumn(_))
        ));
        assert!(matches!(
            plot_svg("value,min_db\n1,2\n3,x\n", &PlotOptions::default()),
            Err(ExplabError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            plot_svg("value,min_db\n1,2\n3\n", &PlotOptions::default()),
            Err(ExplabError::Parse { line: 3, .. })
        ));
        let opts = PlotOptions {
            y: Some("nope".into()),
            ..Default::default()
        };
        assert!(matches!(plot_svg(TWO, &opts), Err(ExplabError::MissingColumn(c)) if c == "nope"));
    }

    #[test]
    fn scans_plot_in_db() {
        let svg = plot_svg("phi_rad,variance_snu,samples\n0,1,0\n1,0.5,0\n", &PlotOptions::default()).unwrap();
        assert!(svg.contains("noise (dB re shot noise)"));
        assert!(plot_svg("phi_rad,variance_snu,samples\n0,1,0\n1,0,0\n", &PlotOptions::default()).is_err());
    }
}
