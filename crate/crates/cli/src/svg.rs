//! Self-contained SVG charts: time-series line charts and heatmaps.

use std::fmt::Write;

use extrudesim_core::sweep::Surface;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs());
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// "Nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Line chart of several series sharing the axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = finite_range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = finite_range(series.iter().flat_map(|s| s.y.iter().copied()));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, title);
    for t in ticks(x0, x1, 8) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#ddd"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"##,
            sx(t),
            MARGIN_T,
            MARGIN_T + ph,
            MARGIN_T + ph + 16.0,
            label(t)
        );
    }
    for t in ticks(y0, y1, 6) {
        let _ = writeln!(
            out,
            r##"<line x1="{1}" y1="{0:.2}" x2="{2}" y2="{0:.2}" stroke="#ddd"/><text x="{3}" y="{4:.2}" text-anchor="end">{5}</text>"##,
            sy(t),
            MARGIN_L,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            sy(t) + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for (&x, &y) in s.x.iter().zip(s.y) {
            if !(x.is_finite() && y.is_finite()) {
                pen_up = true;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, sx(x), sy(y));
            pen_up = false;
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, d.trim_end());
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_L + pw + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn viridis_ish(f: f64) -> String {
    // blue -> green -> yellow
    let f = f.clamp(0.0, 1.0);
    let (r, g, b) = if f < 0.5 {
        let t = f / 0.5;
        (68.0 + t * (33.0 - 68.0), 1.0 + t * (145.0 - 1.0), 84.0 + t * (140.0 - 84.0))
    } else {
        let t = (f - 0.5) / 0.5;
        (33.0 + t * (253.0 - 33.0), 145.0 + t * (231.0 - 145.0), 140.0 + t * (37.0 - 140.0))
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

/// Heatmap of a surface's mean values; row axis vertical, column axis horizontal.
pub fn heatmap(surface: &Surface) -> String {
    let nr = surface.row_values.len();
    let nc = surface.col_values.len();
    let (lo, hi) = finite_range(surface.mean.iter().flatten().copied());
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let cw = pw / nc as f64;
    let ch = ph / nr as f64;

    let mut out = String::new();
    header(&mut out, &surface.metric);
    for (i, row) in surface.mean.iter().enumerate() {
        // first row at the bottom
        let y = MARGIN_T + ph - (i as f64 + 1.0) * ch;
        for (j, v) in row.iter().enumerate() {
            let x = MARGIN_L + j as f64 * cw;
            let fill = if v.is_finite() { viridis_ish((v - lo) / (hi - lo)) } else { "#999".to_string() };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}"><title>{}</title></rect>"#,
                label(*v)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="black">{}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                label(*v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            y + ch / 2.0 + 4.0,
            label(surface.row_values[i])
        );
    }
    for (j, c) in surface.col_values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_L + (j as f64 + 0.5) * cw,
            MARGIN_T + ph + 16.0,
            label(*c)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(&surface.col_axis)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        MARGIN_T + ph / 2.0,
        escape(&surface.row_axis)
    );
    // color bar
    let bx = MARGIN_L + pw + 30.0;
    for k in 0..50 {
        let f = k as f64 / 49.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            MARGIN_T + ph - (k as f64 + 1.0) * ph / 50.0,
            ph / 50.0 + 0.5,
            viridis_ish(f)
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bx + 20.0, MARGIN_T + 8.0, label(hi));
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bx + 20.0, MARGIN_T + ph, label(lo));
    out.push_str("</svg>\n");
    out
}
