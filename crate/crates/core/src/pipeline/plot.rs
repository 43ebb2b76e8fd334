//! Minimal static SVG charts for the report figures.

use std::fmt::Write;

use super::report::{Aggregate, KmStratum, LossTrace, ProjectionPoint};

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Linear map from data bounds into the plotting area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    fn from_points<'a>(pts: impl Iterator<Item = &'a (f64, f64)> + Clone) -> Self {
        let xs = pts.clone().map(|p| p.0);
        let ys = pts.map(|p| p.1);
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Frame::new(x0, x1, y0, y1)
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn bounds(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.filter(|x| x.is_finite())
        .fold(None, |acc: Option<(f64, f64)>, x| match acc {
            None => Some((x, x)),
            Some((a, b)) => Some((a.min(x), b.max(x))),
        })
        .unwrap_or((0.0, 1.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>", W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, "<path d=\"M{l} {t} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>");
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>", l - 4.0, fmt_tick(v));
    }
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>", b + 14.0, fmt_tick(v));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = MARGIN + 4.0 + 14.0 * i as f64;
        let x = W - MARGIN - 110.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{c}\"/>", y - 9.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 14.0, escape(l));
    }
}

fn close(mut s: String) -> String {
    s.push_str("</svg>\n");
    s
}

/// Kaplan-Meier step curves of the risk strata.
pub fn km_plot(strata: &[KmStratum]) -> String {
    let mut s = open("Kaplan-Meier by predicted risk");
    let t_max = strata.iter().flat_map(|st| st.curve.times.last()).fold(0.0f64, |a, &b| a.max(b));
    let f = Frame::new(0.0, t_max.max(1.0), 0.0, 1.0);
    axes(&mut s, &f, "time (6-month units)", "recurrence-free probability");
    for (i, st) in strata.iter().enumerate() {
        let c = &st.curve;
        let mut d = format!("M{:.2} {:.2}", f.px(0.0), f.py(1.0));
        for (t, sv) in c.times.iter().zip(&c.survival) {
            let _ = write!(d, " H{:.2} V{:.2}", f.px(*t), f.py(*sv));
        }
        let _ = write!(d, " H{:.2}", f.px(t_max.max(1.0)));
        let _ = writeln!(s, "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", PALETTE[i % PALETTE.len()]);
    }
    legend(&mut s, &strata.iter().map(|st| st.label.clone()).collect::<Vec<_>>());
    close(s)
}

/// Bars of `exp(beta)` per cluster on a log scale, with a reference line at 1.
pub fn hazard_ratio_plot(ratios: &[(usize, f64)]) -> String {
    let mut s = open("Cluster hazard ratios");
    let logs: Vec<f64> = ratios.iter().map(|(_, r)| r.ln()).collect();
    let (lo, hi) = bounds(logs.iter().copied().chain([0.0]));
    let f = Frame::new(0.0, ratios.len().max(1) as f64, lo, hi);
    axes(&mut s, &f, "cluster (sorted)", "log hazard ratio");
    let bw = (W - 2.0 * MARGIN) / ratios.len().max(1) as f64;
    for (i, ((c, _), l)) in ratios.iter().zip(&logs).enumerate() {
        let (y_top, y_bot) = (f.py(l.max(0.0)), f.py(l.min(0.0)));
        let color = if *l >= 0.0 { PALETTE[1] } else { PALETTE[0] };
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{y_top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"><title>cluster {c}</title></rect>",
            MARGIN + bw * i as f64 + 0.1 * bw,
            0.8 * bw,
            (y_bot - y_top).max(0.5)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" x2=\"{}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 2\"/>",
        W - MARGIN,
        f.py(0.0),
        f.py(0.0)
    );
    close(s)
}

/// Mean C-index per method with 95% CI whiskers.
pub fn method_plot(aggregates: &[Aggregate]) -> String {
    let mut s = open("Test C-index by method");
    let f = Frame::new(0.0, aggregates.len().max(1) as f64, 0.0, 1.0);
    axes(&mut s, &f, "method", "C-index");
    let bw = (W - 2.0 * MARGIN) / aggregates.len().max(1) as f64;
    for (i, a) in aggregates.iter().enumerate() {
        let x = MARGIN + bw * i as f64;
        let m = if a.c_index_mean.is_finite() { a.c_index_mean } else { 0.0 };
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            x + 0.15 * bw,
            f.py(m),
            0.7 * bw,
            f.py(0.0) - f.py(m),
            PALETTE[i % PALETTE.len()]
        );
        let ci = if a.c_index_ci95.is_finite() { a.c_index_ci95 } else { 0.0 };
        let cx = x + 0.5 * bw;
        let _ = writeln!(
            s,
            "<line x1=\"{cx:.2}\" x2=\"{cx:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            f.py((m - ci).max(0.0)),
            f.py((m + ci).min(1.0))
        );
        let _ = writeln!(
            s,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            H - MARGIN + 26.0,
            escape(&a.method)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" x2=\"{}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 2\"/>",
        W - MARGIN,
        f.py(0.5),
        f.py(0.5)
    );
    close(s)
}

/// Loss per epoch; one polyline per trace.
pub fn loss_plot(traces: &[LossTrace]) -> String {
    let mut s = open("Training loss");
    let pts: Vec<(f64, f64)> = traces
        .iter()
        .flat_map(|t| t.values.iter().enumerate().map(|(e, v)| ((e + 1) as f64, *v)))
        .collect();
    let f = Frame::from_points(pts.iter());
    axes(&mut s, &f, "epoch", "loss");
    let mut names: Vec<String> = Vec::new();
    for t in traces {
        if !names.contains(&t.name) {
            names.push(t.name.clone());
        }
        let color = PALETTE[names.iter().position(|n| *n == t.name).unwrap_or(0) % PALETTE.len()];
        let path: Vec<String> = t
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(e, v)| format!("{:.2},{:.2}", f.px((e + 1) as f64), f.py(*v)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-opacity=\"0.7\"/>",
            path.join(" ")
        );
    }
    legend(&mut s, &names);
    close(s)
}

/// Scatter of projected embeddings coloured by slide.
pub fn projection_plot(points: &[ProjectionPoint]) -> String {
    let mut s = open("Test embeddings, first two principal axes (colour = slide)");
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let f = Frame::from_points(xy.iter());
    axes(&mut s, &f, "PC1", "PC2");
    let mut slides: Vec<u64> = points.iter().map(|p| p.slide_id).collect();
    slides.sort_unstable();
    slides.dedup();
    for p in points {
        let idx = slides.binary_search(&p.slide_id).unwrap_or(0);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"{}\" fill-opacity=\"0.6\"/>",
            f.px(p.x),
            f.py(p.y),
            PALETTE[idx % PALETTE.len()]
        );
    }
    close(s)
}
