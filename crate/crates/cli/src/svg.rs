//! Minimal SVG plots: curvature gap on a log scale and `u` snapshots.

use phi_yamabe::flow::{Snapshot, TraceRecord};
use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

struct Panel {
    x0: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (a, b) = self.x_range;
        let (c, d) = self.y_range;
        let px = self.x0 + MARGIN + (x - a) / (b - a).max(f64::MIN_POSITIVE) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - c) / (d - c).max(f64::MIN_POSITIVE) * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    }

    fn frame(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (l, t) = (self.x0 + MARGIN, MARGIN);
        let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="black"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#,
            l + w / 2.0,
            t - 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#,
            l + w / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" transform="rotate(-90 {} {})" text-anchor="middle">{y_label}</text>"#,
            self.x0 + 14.0,
            t + h / 2.0,
            self.x0 + 14.0,
            t + h / 2.0
        );
        for (v, anchor, x, y) in [
            (self.x_range.0, "start", l, t + h + 14.0),
            (self.x_range.1, "end", l + w, t + h + 14.0),
        ] {
            let _ = writeln!(out, r#"<text x="{x}" y="{y}" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#);
        }
        for (v, y) in [(self.y_range.0, t + h), (self.y_range.1, t + 8.0)] {
            let _ = writeln!(out, r#"<text x="{}" y="{y}" font-size="10" text-anchor="end">{v:.3}</text>"#, l - 4.0);
        }
    }

    fn polyline(&self, out: &mut String, points: impl Iterator<Item = (f64, f64)>, color: &str) {
        let coords: Vec<String> = points
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Gap `S_sup - S_inf` against time (log10 axis) beside up to six `u`
/// snapshots against `x`.
pub fn render(records: &[TraceRecord], nodes: &[f64], snapshots: &[Snapshot], time_label: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{HEIGHT}" font-family="sans-serif">"#,
        2.0 * WIDTH
    );
    let log_gap: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.gap.max(1e-300).log10())).collect();
    let gap_panel = Panel {
        x0: 0.0,
        x_range: range(log_gap.iter().map(|p| p.0)),
        y_range: range(log_gap.iter().map(|p| p.1)),
    };
    gap_panel.frame(&mut out, "curvature gap", time_label, "log10(S_sup - S_inf)");
    gap_panel.polyline(&mut out, log_gap.iter().copied(), PALETTE[0]);

    let picked: Vec<&Snapshot> = if snapshots.len() <= PALETTE.len() {
        snapshots.iter().collect()
    } else {
        let last = snapshots.len() - 1;
        (0..PALETTE.len()).map(|k| &snapshots[k * last / (PALETTE.len() - 1)]).collect()
    };
    let u_panel = Panel {
        x0: WIDTH,
        x_range: range(nodes.iter().copied()),
        y_range: range(picked.iter().flat_map(|s| s.u.iter().copied())),
    };
    u_panel.frame(&mut out, "conformal factor snapshots", "x", "u");
    for (k, s) in picked.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        u_panel.polyline(&mut out, nodes.iter().copied().zip(s.u.iter().copied()), color);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{time_label} = {:.3}</text>"#,
            WIDTH + WIDTH - MARGIN - 70.0,
            MARGIN + 14.0 + 12.0 * k as f64,
            s.t
        );
    }
    out.push_str("</svg>\n");
    out
}
