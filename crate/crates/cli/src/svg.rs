//! Standalone SVG figures written as text. Output depends only on the input
//! numbers, so repeated runs produce identical files.

use std::fmt::Write;

use uqpen::uncertainty::ThresholdRow;

use crate::bundle::{BinRow, ClassRow, LabeledMatrix};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(w: f64, h: f64, extra: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\"{extra}>\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, body: &str) {
    writeln!(s, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>", escape(body)).unwrap();
}

/// Linear map of `[d0, d1]` onto `[r0, r1]`.
fn lin(v: f64, d0: f64, d1: f64, r0: f64, r1: f64) -> f64 {
    if d1 == d0 {
        return r0;
    }
    r0 + (v - d0) / (d1 - d0) * (r1 - r0)
}

/// Accuracy bars against the bisector, with a confidence histogram below.
pub fn reliability(bins: &[BinRow], ece: f64) -> String {
    let (x0, y0, side, hist_h) = (60.0, 30.0, 360.0, 100.0);
    let hist_top = y0 + side + 40.0;
    let mut s = open(x0 + side + 30.0, hist_top + hist_h + 50.0, " class=\"reliability\"");
    text(&mut s, x0 + side / 2.0, 18.0, "middle", &format!("Reliability (ECE = {ece:.4})"));
    writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    for b in bins {
        let x = lin(b.lower, 0.0, 1.0, x0, x0 + side);
        let w = lin(b.upper, 0.0, 1.0, x0, x0 + side) - x;
        match (b.accuracy, b.confidence) {
            (Some(acc), Some(conf)) => {
                let top = lin(acc, 0.0, 1.0, y0 + side, y0);
                writeln!(
                    s,
                    "<rect class=\"bar\" data-lower=\"{}\" data-upper=\"{}\" data-accuracy=\"{acc}\" data-confidence=\"{conf}\" data-empty=\"false\" x=\"{x:.2}\" y=\"{top:.2}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"#4c72b0\" stroke=\"white\"/>",
                    b.lower,
                    b.upper,
                    y0 + side - top
                )
                .unwrap();
            }
            _ => {
                writeln!(
                    s,
                    "<rect class=\"bar\" data-lower=\"{}\" data-upper=\"{}\" data-empty=\"true\" x=\"{x:.2}\" y=\"{:.2}\" width=\"{w:.2}\" height=\"0\" fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"2,2\"/>",
                    b.lower,
                    b.upper,
                    y0 + side
                )
                .unwrap();
            }
        }
    }
    writeln!(
        s,
        "<line class=\"bisector\" x1=\"{x0}\" y1=\"{}\" x2=\"{}\" y2=\"{y0}\" stroke=\"#c44e52\" stroke-dasharray=\"6,4\"/>",
        y0 + side,
        x0 + side
    )
    .unwrap();
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let x = lin(v, 0.0, 1.0, x0, x0 + side);
        let y = lin(v, 0.0, 1.0, y0 + side, y0);
        text(&mut s, x, y0 + side + 14.0, "middle", &format!("{v:.1}"));
        text(&mut s, x0 - 6.0, y + 4.0, "end", &format!("{v:.1}"));
    }
    text(&mut s, x0 + side / 2.0, y0 + side + 30.0, "middle", "confidence");
    writeln!(
        s,
        "<text x=\"0\" y=\"0\" transform=\"translate(18,{:.2}) rotate(-90)\" text-anchor=\"middle\" {FONT}>accuracy</text>",
        y0 + side / 2.0
    )
    .unwrap();

    let max = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
    writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{hist_top}\" width=\"{side}\" height=\"{hist_h}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    for b in bins {
        let x = lin(b.lower, 0.0, 1.0, x0, x0 + side);
        let w = lin(b.upper, 0.0, 1.0, x0, x0 + side) - x;
        let h = b.count as f64 / max * hist_h;
        writeln!(
            s,
            "<rect class=\"hist\" data-count=\"{}\" x=\"{x:.2}\" y=\"{:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#8c8c8c\" stroke=\"white\"/>",
            b.count,
            hist_top + hist_h - h
        )
        .unwrap();
    }
    text(&mut s, x0 + side / 2.0, hist_top + hist_h + 16.0, "middle", "samples per confidence bin");
    s.push_str("</svg>\n");
    s
}

/// Symmetric color range shared by a set of heatmaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatScale {
    pub vmin: f64,
    pub vmax: f64,
}

impl HeatScale {
    pub fn shared(mats: &[&[Vec<f64>]]) -> Self {
        let v = mats
            .iter()
            .flat_map(|m| m.iter().flatten())
            .fold(0.0f64, |a, &x| a.max(x.abs()));
        let v = if v > 0.0 { v } else { 1.0 };
        Self { vmin: -v, vmax: v }
    }

    /// Blue through white to red.
    pub fn color(&self, v: f64) -> String {
        let t = lin(v, self.vmin, self.vmax, 0.0, 1.0).clamp(0.0, 1.0);
        let (lo, hi) = ((59.0, 76.0, 192.0), (180.0, 4.0, 38.0));
        let mix = |a: f64, b: f64, u: f64| (a + (b - a) * u).round() as u8;
        let (r, g, b) = if t < 0.5 {
            let u = t / 0.5;
            (mix(lo.0, 255.0, u), mix(lo.1, 255.0, u), mix(lo.2, 255.0, u))
        } else {
            let u = (t - 0.5) / 0.5;
            (mix(255.0, hi.0, u), mix(255.0, hi.1, u), mix(255.0, hi.2, u))
        };
        format!("rgb({r},{g},{b})")
    }
}

pub fn heatmap(title: &str, m: &LabeledMatrix, scale: HeatScale) -> String {
    let k = m.names.len();
    let cell = (420.0 / k.max(1) as f64).clamp(8.0, 40.0);
    let (x0, y0) = (50.0, 40.0);
    let side = cell * k as f64;
    let legend_x = x0 + side + 30.0;
    let mut s = open(
        legend_x + 90.0,
        y0 + side + 50.0,
        &format!(
            " class=\"heatmap\" data-vmin=\"{}\" data-vmax=\"{}\"",
            scale.vmin, scale.vmax
        ),
    );
    text(&mut s, x0 + side / 2.0, 20.0, "middle", title);
    for (i, row) in m.rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            writeln!(
                s,
                "<rect class=\"cell\" data-row=\"{i}\" data-col=\"{j}\" data-value=\"{v}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\"/>",
                x0 + j as f64 * cell,
                y0 + i as f64 * cell,
                scale.color(v)
            )
            .unwrap();
        }
    }
    for (i, name) in m.names.iter().enumerate() {
        let c = i as f64 * cell + cell / 2.0;
        text(&mut s, x0 - 6.0, y0 + c + 4.0, "end", name);
        text(&mut s, x0 + c, y0 + side + 14.0, "middle", name);
    }
    text(&mut s, x0 + side / 2.0, y0 + side + 32.0, "middle", "predicted / column class");
    let steps = 20;
    let lh = side.max(100.0);
    for i in 0..steps {
        let v = lin(i as f64 + 0.5, 0.0, steps as f64, scale.vmax, scale.vmin);
        writeln!(
            s,
            "<rect class=\"legend\" x=\"{legend_x:.2}\" y=\"{:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>",
            y0 + i as f64 * lh / steps as f64,
            lh / steps as f64,
            scale.color(v)
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text class=\"legend-max\" x=\"{:.2}\" y=\"{:.2}\" {FONT}>{:.4}</text>",
        legend_x + 20.0,
        y0 + 8.0,
        scale.vmax
    )
    .unwrap();
    writeln!(
        s,
        "<text class=\"legend-min\" x=\"{:.2}\" y=\"{:.2}\" {FONT}>{:.4}</text>",
        legend_x + 20.0,
        y0 + lh,
        scale.vmin
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Grouped TU/AU/EU bars per true class.
pub fn class_bars(rows: &[ClassRow]) -> String {
    let (x0, y0, h) = (50.0, 40.0, 260.0);
    let group = 36.0;
    let width = group * rows.len().max(1) as f64;
    let max = rows
        .iter()
        .flat_map(|r| [r.mean_tu, r.mean_au, r.mean_eu])
        .flatten()
        .fold(0.0f64, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };
    let mut s = open(x0 + width + 120.0, y0 + h + 50.0, " class=\"class-uncertainty\"");
    text(&mut s, x0 + width / 2.0, 20.0, "middle", "Mean uncertainty per true class (bits)");
    writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        y0 + h,
        x0 + width,
        y0 + h
    )
    .unwrap();
    let series = [("tu", "#4c72b0"), ("au", "#55a868"), ("eu", "#c44e52")];
    for (i, r) in rows.iter().enumerate() {
        let gx = x0 + i as f64 * group;
        for (j, ((name, color), v)) in series.iter().zip([r.mean_tu, r.mean_au, r.mean_eu]).enumerate() {
            if let Some(v) = v {
                let bh = v.max(0.0) / top * h;
                writeln!(
                    s,
                    "<rect class=\"{name}\" data-class=\"{}\" data-value=\"{v}\" x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"{bh:.2}\" fill=\"{color}\"/>",
                    escape(&r.name),
                    gx + 3.0 + j as f64 * 10.0,
                    y0 + h - bh
                )
                .unwrap();
            }
        }
        text(&mut s, gx + group / 2.0, y0 + h + 14.0, "middle", &r.name);
    }
    for i in 0..=4 {
        let v = top * i as f64 / 4.0;
        text(&mut s, x0 - 6.0, lin(v, 0.0, top, y0 + h, y0) + 4.0, "end", &format!("{v:.2}"));
    }
    for (k, (name, color)) in series.iter().enumerate() {
        let ly = y0 + 14.0 * k as f64;
        writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{ly:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            x0 + width + 20.0
        )
        .unwrap();
        text(&mut s, x0 + width + 36.0, ly + 9.0, "start", &name.to_uppercase());
    }
    s.push_str("</svg>\n");
    s
}

/// Accuracy of the confident (`TU < t`) and uncertain (`TU >= t`) sides over
/// the threshold grid, with the overall accuracy and a marker at 2 bits.
pub fn sweep(rows: &[ThresholdRow], overall: f64) -> String {
    let (x0, y0, w, h) = (60.0, 40.0, 420.0, 280.0);
    let tmax = rows.iter().map(|r| r.threshold).fold(0.0f64, f64::max);
    let tmax = if tmax > 0.0 { tmax } else { 1.0 };
    let px = |t: f64| lin(t, 0.0, tmax, x0, x0 + w);
    let py = |a: f64| lin(a, 0.0, 1.0, y0 + h, y0);
    let mut s = open(x0 + w + 150.0, y0 + h + 50.0, " class=\"sweep\"");
    text(&mut s, x0 + w / 2.0, 20.0, "middle", "Accuracy split by entropy threshold");
    writeln!(s, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"black\"/>").unwrap();
    writeln!(
        s,
        "<line class=\"overall\" data-value=\"{overall}\" x1=\"{x0}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"#8c8c8c\" stroke-dasharray=\"4,3\"/>",
        py(overall),
        x0 + w,
        py(overall)
    )
    .unwrap();
    if 2.0 <= tmax {
        writeln!(
            s,
            "<line class=\"threshold-marker\" data-threshold=\"2\" x1=\"{:.2}\" y1=\"{y0}\" x2=\"{:.2}\" y2=\"{}\" stroke=\"black\" stroke-dasharray=\"2,3\"/>",
            px(2.0),
            px(2.0),
            y0 + h
        )
        .unwrap();
    }
    let series: [(&str, &str, fn(&ThresholdRow) -> Option<f64>); 2] = [
        ("confident", "#4c72b0", |r| r.acc_confident),
        ("uncertain", "#c44e52", |r| r.acc_uncertain),
    ];
    for (name, color, get) in series {
        // undefined accuracies break the line into segments
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for r in rows {
            match get(r) {
                Some(a) => segments.last_mut().unwrap().push((px(r.threshold), py(a))),
                None if !segments.last().unwrap().is_empty() => segments.push(Vec::new()),
                None => {}
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(
                s,
                "<polyline class=\"{name}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            )
            .unwrap();
        }
        for r in rows {
            if let Some(a) = get(r) {
                writeln!(
                    s,
                    "<circle class=\"{name}-marker\" data-threshold=\"{}\" data-accuracy=\"{a}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>",
                    r.threshold,
                    px(r.threshold),
                    py(a)
                )
                .unwrap();
            }
        }
    }
    for i in 0..=5 {
        let a = i as f64 / 5.0;
        text(&mut s, x0 - 6.0, py(a) + 4.0, "end", &format!("{a:.1}"));
        let t = tmax * i as f64 / 5.0;
        text(&mut s, px(t), y0 + h + 14.0, "middle", &format!("{t:.2}"));
    }
    text(&mut s, x0 + w / 2.0, y0 + h + 32.0, "middle", "total uncertainty threshold (bits)");
    for (k, (label, color)) in [("TU < threshold", "#4c72b0"), ("TU >= threshold", "#c44e52"), ("overall", "#8c8c8c")]
        .iter()
        .enumerate()
    {
        let ly = y0 + 10.0 + 16.0 * k as f64;
        writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            x0 + w + 12.0,
            x0 + w + 30.0
        )
        .unwrap();
        text(&mut s, x0 + w + 36.0, ly + 4.0, "start", label);
    }
    s.push_str("</svg>\n");
    s
}
