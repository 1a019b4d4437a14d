//! Minimal SVG renderers for the evaluation artifacts: histogram, heatmap,
//! dendrogram. No plotting dependency; the output is plain SVG text.

use crate::error::MemeError;
use crate::evaluation::DendrogramMerge;
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(
        s,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn histogram_svg(values: &[f64], bins: usize, title: &str) -> Result<String, MemeError> {
    if values.is_empty() || bins == 0 {
        return Err(MemeError::Data("empty histogram input".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / span) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let max = *counts.iter().max().unwrap() as f64;
    let mut s = svg_open(title);
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    for (i, &c) in counts.iter().enumerate() {
        let bh = plot_h * c as f64 / max;
        let x = MARGIN + plot_w * i as f64 / bins as f64;
        let y = H - MARGIN - bh;
        let _ = write!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="white"/>"#,
            x,
            y,
            plot_w / bins as f64,
            bh
        );
    }
    let _ = write!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="11">{:.3}</text><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text></svg>"#,
        H - MARGIN + 16.0,
        lo,
        W - MARGIN,
        H - MARGIN + 16.0,
        hi
    );
    Ok(s)
}

/// Heatmap of a matrix; NaN cells render grey. `sqrt_scale` plots the square
/// root of each entry (used for distance matrices stored as squared
/// distances) and is recorded in the figure subtitle.
pub fn heatmap_svg(
    matrix: &[Vec<f64>],
    title: &str,
    sqrt_scale: bool,
) -> Result<String, MemeError> {
    if matrix.is_empty() || matrix[0].is_empty() {
        return Err(MemeError::Data("empty heatmap input".into()));
    }
    let rows = matrix.len();
    let cols = matrix[0].len();
    let xform = |v: f64| if sqrt_scale { v.max(0.0).sqrt() } else { v };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in matrix {
        for &v in r {
            if v.is_finite() {
                let t = xform(v);
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = svg_open(title);
    if sqrt_scale {
        let _ = write!(
            s,
            r#"<text x="{}" y="40" font-family="sans-serif" font-size="11" text-anchor="middle">values shown on sqrt scale (matrix stores squared distances)</text>"#,
            W / 2.0
        );
    }
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let cw = plot_w / cols as f64;
    let ch = plot_h / rows as f64;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let fill = if v.is_finite() {
                let u = (xform(v) - lo) / span;
                // white → dark blue
                let c = (255.0 * (1.0 - u)) as u8;
                format!("rgb({c},{c},255)")
            } else {
                "rgb(160,160,160)".into()
            };
            let _ = write!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + cw * j as f64,
                MARGIN + ch * i as f64,
                cw,
                ch,
                fill
            );
        }
    }
    s.push_str("</svg>");
    Ok(s)
}

/// Classic dendrogram from an average-linkage merge list. Heights use the
/// square root of stored merge heights when `sqrt_scale` is set, mirroring
/// the heatmap convention for squared-distance matrices.
pub fn dendrogram_svg(
    merges: &[DendrogramMerge],
    leaf_labels: &[String],
    title: &str,
    sqrt_scale: bool,
) -> Result<String, MemeError> {
    let n = leaf_labels.len();
    if merges.len() + 1 != n {
        return Err(MemeError::Data(format!(
            "dendrogram expects {} merges for {} leaves, got {}",
            n.saturating_sub(1),
            n,
            merges.len()
        )));
    }
    let xform = |v: f64| if sqrt_scale { v.max(0.0).sqrt() } else { v };
    // leaf order: walk the final cluster tree left-to-right
    let mut children: Vec<Option<(usize, usize)>> = vec![None; 2 * n - 1];
    for (k, m) in merges.iter().enumerate() {
        children[n + k] = Some((m.left, m.right));
    }
    fn leaves(id: usize, children: &[Option<(usize, usize)>], out: &mut Vec<usize>) {
        match children[id] {
            None => out.push(id),
            Some((l, r)) => {
                leaves(l, children, out);
                leaves(r, children, out);
            }
        }
    }
    let mut order = Vec::new();
    leaves(2 * n - 2, &children, &mut order);
    let mut xpos = vec![0.0f64; 2 * n - 1];
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    for (slot, &leaf) in order.iter().enumerate() {
        xpos[leaf] = MARGIN + plot_w * (slot as f64 + 0.5) / n as f64;
    }
    let max_h = merges
        .iter()
        .map(|m| xform(m.height))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let y_of = |h: f64| H - MARGIN - plot_h * (xform(h) / max_h);
    let mut heights = vec![0.0f64; 2 * n - 1];
    let mut s = svg_open(title);
    for (k, m) in merges.iter().enumerate() {
        let id = n + k;
        xpos[id] = 0.5 * (xpos[m.left] + xpos[m.right]);
        heights[id] = m.height;
        let y = y_of(m.height);
        let yl = y_of(heights[m.left]);
        let yr = y_of(heights[m.right]);
        let _ = write!(
            s,
            r#"<path d="M {:.2} {:.2} V {:.2} H {:.2} V {:.2}" fill="none" stroke="black"/>"#,
            xpos[m.left], yl, y, xpos[m.right], yr
        );
    }
    for (slot, &leaf) in order.iter().enumerate() {
        let x = MARGIN + plot_w * (slot as f64 + 0.5) / n as f64;
        let _ = write!(
            s,
            r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x,
            H - MARGIN + 16.0,
            xml_escape(&leaf_labels[leaf])
        );
    }
    s.push_str("</svg>");
    Ok(s)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), MemeError> {
    std::fs::write(path, svg)?;
    Ok(())
}
