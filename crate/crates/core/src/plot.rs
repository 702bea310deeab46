//! Grouped-bar SVG rendering for the mean matrices in `fig6_*.csv`.
//!
//! The renderer is a pure function of the parsed matrices: fixed canvas,
//! fixed palette, fixed-precision coordinates. Identical input bytes
//! produce identical SVG bytes, which keeps charts diffable across
//! machines. No plotting library is used because the output must be
//! byte-stable and the chart is a single static figure.

use std::fmt::Write as _;

use thiserror::Error;

/// Chart rendering failure.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlotError {
    /// The input CSV is not a label column plus numeric matrix.
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

/// A parsed mean matrix: row labels (variants) by column labels
/// (scenarios).
#[derive(Debug, Clone, PartialEq)]
pub struct FigMatrix {
    /// Column labels from the header, in file order.
    pub col_labels: Vec<String>,
    /// One `(row label, values)` entry per data line, in file order.
    pub rows: Vec<(String, Vec<f64>)>,
}

/// Parses a matrix CSV of the shape `fig_matrix_csv` emits: a header of
/// `label,<col>...` and one row of `label,<value>...` per line.
pub fn parse_fig_csv(text: &str) -> Result<FigMatrix, PlotError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| PlotError::MalformedInput("empty file".into()))?;
    let mut cols: Vec<String> = header.split(',').map(str::to_string).collect();
    if cols.len() < 2 {
        return Err(PlotError::MalformedInput(
            "header needs a label column and at least one data column".into(),
        ));
    }
    cols.remove(0);
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or("").to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    PlotError::MalformedInput(format!("row {}: `{f}` is not a finite number", i + 2))
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != cols.len() {
            return Err(PlotError::MalformedInput(format!(
                "row {}: {} values for {} columns",
                i + 2,
                values.len(),
                cols.len()
            )));
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(PlotError::MalformedInput("no data rows".into()));
    }
    Ok(FigMatrix { col_labels: cols, rows })
}

const PALETTE: [&str; 6] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

const CANVAS_W: f64 = 860.0;
const PANEL_H: f64 = 330.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOT: f64 = 54.0;

// Smallest of {1, 2, 2.5, 5, 10} x 10^k at or above `v`; gives round
// axis maxima.
fn nice_ceil(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for f in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if f * mag >= v - 1e-12 * mag {
            return f * mag;
        }
    }
    10.0 * mag
}

fn fmt_val(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(svg: &mut String, top: f64, title: &str, m: &FigMatrix) {
    let plot_w = CANVAS_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_TOP - MARGIN_BOT;
    let base = top + MARGIN_TOP + plot_h;
    let y_max = nice_ceil(
        m.rows.iter().flat_map(|(_, v)| v.iter()).fold(0.0f64, |a, &b| a.max(b)),
    );

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="15" font-weight="bold" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        top + 20.0,
        escape(title)
    );

    // Horizontal gridlines and tick labels, five ticks including zero.
    for t in 0..=4 {
        let v = y_max * f64::from(t) / 4.0;
        let y = base - plot_h * f64::from(t) / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_L,
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_val(v)
        );
    }

    let groups = m.rows.len() as f64;
    let cols = m.col_labels.len() as f64;
    let group_w = plot_w / groups;
    let bar_w = group_w * 0.8 / cols;
    for (g, (label, values)) in m.rows.iter().enumerate() {
        let gx = MARGIN_L + group_w * g as f64;
        for (c, &v) in values.iter().enumerate() {
            let h = (v.max(0.0) / y_max) * plot_h;
            let x = gx + group_w * 0.1 + bar_w * c as f64;
            let _ = writeln!(
                svg,
                r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
                base - h,
                bar_w,
                PALETTE[c % PALETTE.len()]
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
                x + bar_w / 2.0,
                base - h - 3.0,
                fmt_val(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            base + 18.0,
            escape(label)
        );
    }

    // Axes over the gridlines.
    let _ = writeln!(
        svg,
        r##"<line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}" stroke="#333333"/>"##,
        l = MARGIN_L,
        t = top + MARGIN_TOP,
        b = base
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="#333333"/>"##,
        l = MARGIN_L,
        b = base,
        r = MARGIN_L + plot_w
    );

    // Legend in the top-right corner of the panel.
    for (c, col) in m.col_labels.iter().enumerate() {
        let x = MARGIN_L + plot_w - 70.0 * (cols - c as f64);
        let y = top + 14.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            PALETTE[c % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{y:.2}" font-size="11">{}</text>"#,
            x + 14.0,
            escape(col)
        );
    }
}

/// Renders one panel per `(title, matrix)` pair, stacked vertically, as
/// a self-contained SVG document.
pub fn render_grouped_bars(panels: &[(&str, &FigMatrix)]) -> Result<String, PlotError> {
    if panels.is_empty() {
        return Err(PlotError::MalformedInput("no panels to draw".into()));
    }
    let height = PANEL_H * panels.len() as f64 + 10.0;
    let mut svg = String::with_capacity(8192);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W}" height="{height}" viewBox="0 0 {CANVAS_W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (i, (title, m)) in panels.iter().enumerate() {
        render_panel(&mut svg, PANEL_H * i as f64, title, m);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
