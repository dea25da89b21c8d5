use std::fmt::Write;

use crate::tensor::Tensor;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Scatter of the first two embedding coordinates, coloured by class, with
/// each point's opacity set to its KDE likelihood.
pub fn scatter(embeddings: &Tensor, labels: &[usize], likelihood: &[f64], title: &str) -> String {
    let d = embeddings.row_len();
    let coord = |b: usize, k: usize| if k < d { embeddings.row(b)[k] } else { 0.0 };
    let n = labels.len();
    let (x0, x1) = range((0..n).map(|b| coord(b, 0)));
    let (y0, y1) = range((0..n).map(|b| coord(b, 1)));
    let span = WIDTH - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * span;
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * span;

    let mut out = String::new();
    header(&mut out, title);
    for b in 0..n {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="{:.4}"/>"#,
            px(coord(b, 0)),
            py(coord(b, 1)),
            PALETTE[labels[b] % PALETTE.len()],
            likelihood[b]
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">e1 [{x0:.3}, {x1:.3}]</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {})">e2 [{y0:.3}, {y1:.3}]</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Overlaid step histograms of two densities over shared bin edges.
pub fn histogram(edges: &[f64], intra: &[f64], inter: &[f64], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let bins = intra.len();
    if bins > 0 && edges.len() == bins + 1 {
        let top = intra.iter().chain(inter).copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        let span = WIDTH - 2.0 * MARGIN;
        let (lo, hi) = (edges[0], edges[bins]);
        let px = |v: f64| if hi > lo { MARGIN + (v - lo) / (hi - lo) * span } else { MARGIN + span / 2.0 };
        let py = |v: f64| HEIGHT - MARGIN - v / top * span * 0.95;
        for (series, colour, name) in [(intra, "#1f77b4", "intra-class"), (inter, "#d62728", "inter-class")] {
            let mut path = format!("M {:.2} {:.2}", px(edges[0]), py(0.0));
            for (k, &v) in series.iter().enumerate() {
                let _ = write!(path, " L {:.2} {:.2} L {:.2} {:.2}", px(edges[k]), py(v), px(edges[k + 1]), py(v));
            }
            let _ = write!(path, " L {:.2} {:.2}", px(edges[bins]), py(0.0));
            let _ = writeln!(
                out,
                r#"<path d="{path}" fill="{colour}" fill-opacity="0.3" stroke="{colour}"><title>{name}</title></path>"#
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">distance [{lo:.3}, {hi:.3}]; blue intra-class, red inter-class</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        );
    }
    out.push_str("</svg>\n");
    out
}
