//! Minimal SVG plotting: line charts, scatters, heatmaps, and dendrograms.
//! Everything is rendered from scratch into a fixed-size canvas with
//! deterministic formatting, so identical inputs give byte-identical files.

use nerd_core::numerics::{Dendrogram, Mat};
use std::fmt::Write as _;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#3b6fb6", "#d1495b", "#4f9d69", "#e0a458", "#7768ae", "#3aada8", "#a85751", "#70798c",
];

/// One named line or point set.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".to_string() } else { s }
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{x:.3}");
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        format!("{x:.2e}")
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x_min = f.x_min.min(*x);
            f.x_max = f.x_max.max(*x);
            f.y_min = f.y_min.min(*y);
            f.y_max = f.y_max.max(*y);
        }
        if !f.x_min.is_finite() {
            f = Frame { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        }
        // degenerate spans still need a drawable box
        if f.x_max - f.x_min < 1e-12 {
            f.x_min -= 0.5;
            f.x_max += 0.5;
        }
        if f.y_max - f.y_min < 1e-12 {
            f.y_min -= 0.5;
            f.y_max += 0.5;
        }
        let pad_x = 0.04 * (f.x_max - f.x_min);
        let pad_y = 0.06 * (f.y_max - f.y_min);
        Frame {
            x_min: f.x_min - pad_x,
            x_max: f.x_max + pad_x,
            y_min: f.y_min - pad_y,
            y_max: f.y_max + pad_y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#fcfcf9\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"28\" font-size=\"17\" fill=\"#20242c\">{}</text>",
        MARGIN_LEFT,
        escape(title)
    );
    s
}

fn axes(s: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#444\" stroke-width=\"1\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#444\" stroke-width=\"1\"/>"
    );
    for i in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let px = frame.px(fx);
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\"/>",
            fmt(px),
            fmt(px),
            fmt(y0 + 4.0)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333\" text-anchor=\"middle\">{}</text>",
            fmt(px),
            fmt(y0 + 18.0),
            fmt_tick(fx)
        );
        let fy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let py = frame.py(fy);
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\"/>",
            fmt(x0 - 4.0),
            fmt(py),
            fmt(x0),
            fmt(py)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333\" text-anchor=\"end\">{}</text>",
            fmt(x0 - 7.0),
            fmt(py + 4.0),
            fmt_tick(fy)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#20242c\" text-anchor=\"middle\">{}</text>",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 14.0),
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" fill=\"#20242c\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        fmt((y0 + y1) / 2.0),
        fmt((y0 + y1) / 2.0),
        escape(y_label)
    );
}

fn legend(s: &mut String, names: &[&str]) {
    let x = WIDTH - MARGIN_RIGHT + 14.0;
    for (i, name) in names.iter().enumerate().take(16) {
        let y = MARGIN_TOP + 8.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"11\" height=\"11\" fill=\"{color}\"/>",
            fmt(x),
            fmt(y - 9.0)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333\">{}</text>",
            fmt(x + 16.0),
            fmt(y + 1.0),
            escape(name)
        );
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline chart; one colored line per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = open_svg(title);
    let frame = Frame::from_points(series.iter().flat_map(|sr| sr.points.iter()));
    axes(&mut s, &frame, x_label, y_label);
    for (i, sr) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = sr
            .points
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(frame.px(*x)), fmt(frame.py(*y))))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>",
            pts.join(" ")
        );
    }
    let names: Vec<&str> = series.iter().map(|sr| sr.name.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Scatter plot; one colored point cloud per series.
pub fn scatter(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = open_svg(title);
    let frame = Frame::from_points(series.iter().flat_map(|sr| sr.points.iter()));
    axes(&mut s, &frame, x_label, y_label);
    for (i, sr) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (x, y) in &sr.points {
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3.2\" fill=\"{color}\" fill-opacity=\"0.85\"/>",
                fmt(frame.px(*x)),
                fmt(frame.py(*y))
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|sr| sr.name.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

fn heat_color(t: f64) -> String {
    // two-stop lerp: deep blue for low values, warm yellow for high
    let lo = (29.0, 53.0, 87.0);
    let hi = (244.0, 211.0, 94.0);
    let t = t.clamp(0.0, 1.0);
    let r = lo.0 + (hi.0 - lo.0) * t;
    let g = lo.1 + (hi.1 - lo.1) * t;
    let b = lo.2 + (hi.2 - lo.2) * t;
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Matrix heatmap with optional row/column labels (drawn only when they
/// fit).
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], m: &Mat) -> String {
    let mut s = open_svg(title);
    let rows = m.rows();
    let cols = m.cols();
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + 8.0;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - y0 - MARGIN_BOTTOM;
    let cw = plot_w / cols.max(1) as f64;
    let ch = plot_h / rows.max(1) as f64;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..rows {
        for j in 0..cols {
            lo = lo.min(m[(i, j)]);
            hi = hi.max(m[(i, j)]);
        }
    }
    if !lo.is_finite() || hi - lo < 1e-300 {
        hi = lo + 1.0;
    }

    for i in 0..rows {
        for j in 0..cols {
            let t = (m[(i, j)] - lo) / (hi - lo);
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                fmt(x0 + j as f64 * cw),
                fmt(y0 + i as f64 * ch),
                fmt(cw + 0.5),
                fmt(ch + 0.5),
                heat_color(t)
            );
        }
    }
    if rows <= 32 {
        for (i, label) in row_labels.iter().enumerate().take(rows) {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"9\" fill=\"#333\" text-anchor=\"end\">{}</text>",
                fmt(x0 - 5.0),
                fmt(y0 + (i as f64 + 0.5) * ch + 3.0),
                escape(label)
            );
        }
    }
    if cols <= 32 {
        for (j, label) in col_labels.iter().enumerate().take(cols) {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"9\" fill=\"#333\" text-anchor=\"middle\">{}</text>",
                fmt(x0 + (j as f64 + 0.5) * cw),
                fmt(y0 + rows as f64 * ch + 14.0),
                escape(label)
            );
        }
    }
    // color bar reference
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333\">low {} / high {}</text>",
        fmt(WIDTH - MARGIN_RIGHT + 10.0),
        fmt(MARGIN_TOP + 10.0),
        fmt_tick(lo),
        fmt_tick(hi)
    );
    s.push_str("</svg>\n");
    s
}

/// Bottom-up dendrogram with leaves labeled along the x axis.
pub fn dendrogram(title: &str, labels: &[String], dendro: &Dendrogram) -> String {
    let mut s = open_svg(title);
    let n = dendro.n_points;
    // children of every internal node id (original points are 0..n; the
    // merge created at step k has id n + k)
    let child = |id: usize| -> Option<(usize, usize)> {
        if id < n {
            None
        } else {
            let m = &dendro.merges[id - n];
            Some((m.a, m.b))
        }
    };

    // leaf display order from a depth-first walk of the final tree
    let mut order = Vec::with_capacity(n);
    if n > 0 {
        let root = if n == 1 { 0 } else { n + dendro.merges.len() - 1 };
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            match child(id) {
                None => order.push(id),
                Some((a, b)) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
    }
    let mut slot = vec![0usize; n];
    for (pos, leaf) in order.iter().enumerate() {
        slot[*leaf] = pos;
    }

    let x0 = MARGIN_LEFT;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let y_base = HEIGHT - MARGIN_BOTTOM;
    let plot_h = y_base - MARGIN_TOP - 12.0;
    let max_h = dendro.merges.iter().map(|m| m.height).fold(1e-12, f64::max);
    let leaf_x = |leaf: usize| x0 + (slot[leaf] as f64 + 0.5) / n as f64 * plot_w;
    let height_y = |h: f64| y_base - (h / max_h) * plot_h;

    // x position and current height of every node as the tree grows
    let mut node_x = vec![0.0; n + dendro.merges.len()];
    let mut node_y = vec![y_base; n + dendro.merges.len()];
    for leaf in 0..n {
        node_x[leaf] = leaf_x(leaf);
    }
    for (k, m) in dendro.merges.iter().enumerate() {
        let id = n + k;
        let y = height_y(m.height);
        let (xa, xb) = (node_x[m.a], node_x[m.b]);
        let _ = writeln!(
            s,
            "<path d=\"M {} {} V {} H {} V {}\" fill=\"none\" stroke=\"#3b6fb6\" stroke-width=\"1.4\"/>",
            fmt(xa),
            fmt(node_y[m.a]),
            fmt(y),
            fmt(xb),
            fmt(node_y[m.b])
        );
        node_x[id] = (xa + xb) / 2.0;
        node_y[id] = y;
    }
    for leaf in 0..n {
        let label = labels.get(leaf).map(|s| s.as_str()).unwrap_or("");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" fill=\"#333\" text-anchor=\"middle\">{}</text>",
            fmt(leaf_x(leaf)),
            fmt(y_base + 14.0),
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" fill=\"#20242c\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">distance</text>",
        fmt(y_base - plot_h / 2.0),
        fmt(y_base - plot_h / 2.0)
    );
    s.push_str("</svg>\n");
    s
}
