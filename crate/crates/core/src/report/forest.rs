//! Forest plots as standalone SVG documents.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::meta_analysis::{Interval, MetaInput, MetaResult, LEVEL};

const ROW_HEIGHT: f64 = 22.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const LABEL_WIDTH: f64 = 230.0;
const RIGHT_WIDTH: f64 = 80.0;

/// One line of the plot, on the log-dose scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub interval: Interval,
    /// Share of the combined estimate; `None` for summary rows.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestPlotSpec {
    pub rows: Vec<ForestRow>,
    /// Drawn as a diamond.
    pub combined: ForestRow,
    /// Drawn as a bar.
    pub prediction: ForestRow,
    pub width: u32,
    pub height: u32,
}

impl ForestPlotSpec {
    /// Sizes the canvas to fit the rows.
    pub fn new(rows: Vec<ForestRow>, combined: ForestRow, prediction: ForestRow) -> Self {
        let height = TOP + ROW_HEIGHT * (rows.len() as f64 + 3.0) + BOTTOM;
        Self {
            rows,
            combined,
            prediction,
            width: 760,
            height: height.ceil() as u32,
        }
    }

    /// Study rows show `y ± z s` at the default level; summary rows show
    /// posterior medians with central intervals.
    pub fn from_meta(input: &MetaInput, result: &MetaResult, labels: &[String]) -> Self {
        let z = Normal::standard().inverse_cdf(0.5 + LEVEL / 2.0);
        let rows = input
            .estimates()
            .iter()
            .enumerate()
            .map(|(i, e)| ForestRow {
                label: labels.get(i).cloned().unwrap_or_else(|| e.study_id.clone()),
                estimate: e.estimate,
                interval: Interval {
                    lower: e.estimate - z * e.std_err,
                    upper: e.estimate + z * e.std_err,
                },
                weight: result.weights.get(i).copied(),
            })
            .collect();
        let summary = |label: &str, s: &crate::meta_analysis::Summary| ForestRow {
            label: label.into(),
            estimate: s.median,
            interval: s.central,
            weight: None,
        };
        Self::new(
            rows,
            summary("Combined estimate", &result.mu),
            summary("Prediction", &result.prediction),
        )
    }

    /// Study rows plus the two summary rows.
    pub fn row_count(&self) -> usize {
        self.rows.len() + 2
    }

    /// Log-dose range of the x axis. Intervals far wider than the spread of
    /// the estimates are clipped rather than allowed to squash the plot.
    pub fn x_range(&self) -> (f64, f64) {
        let all = || self.rows.iter().chain([&self.combined, &self.prediction]);
        let mut base: Vec<f64> = all().map(|r| r.estimate).collect();
        for r in [&self.combined, &self.prediction] {
            base.extend([r.interval.lower, r.interval.upper]);
        }
        let (blo, bhi) = finite_bounds(base.into_iter()).unwrap_or((0.0, 1.0));
        let span = if bhi > blo { bhi - blo } else { 1.0 };
        let (elo, ehi) = finite_bounds(
            all().flat_map(|r| [r.interval.lower, r.interval.upper]),
        )
        .unwrap_or((blo, bhi));
        let lo = elo.min(blo).max(blo - span);
        let hi = ehi.max(bhi).min(bhi + span);
        let pad = 0.05 * (hi - lo).max(1e-9);
        (lo - pad, hi + pad)
    }
}

fn finite_bounds(v: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    v.filter(|x| x.is_finite())
        .fold(None, |acc, x| match acc {
            None => Some((x, x)),
            Some((a, b)) => Some((a.min(x), b.max(x))),
        })
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Original-scale tick values inside `[exp(lo), exp(hi)]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.exp(), hi.exp());
    let decades = (a.log10().floor() as i32)..=(b.log10().ceil() as i32);
    let pick = |mults: &[f64]| -> Vec<f64> {
        decades
            .clone()
            .flat_map(|d| mults.iter().map(move |m| m * 10f64.powi(d)))
            .filter(|v| *v >= a * (1.0 - 1e-9) && *v <= b * (1.0 + 1e-9))
            .collect()
    };
    let mut t = pick(&[1.0, 2.0, 5.0]);
    if t.len() < 3 {
        t = pick(&[1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }
    if t.len() > 10 {
        t = pick(&[1.0]);
    }
    t
}

fn tick_label(v: f64) -> String {
    if v >= 1.0 {
        format!("{v:.0}")
    } else {
        let d = (-v.log10().floor()) as usize;
        format!("{v:.d$}")
    }
}

/// Renders the plot. Interval ends outside the axis range, or non-finite,
/// become arrowheads at the plot edge.
pub fn render_forest_svg(spec: &ForestPlotSpec) -> String {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let (x0, x1) = (LABEL_WIDTH, (w - RIGHT_WIDTH).max(LABEL_WIDTH + 50.0));
    let (lo, hi) = spec.x_range();
    let sx = |v: f64| x0 + (v - lo) / (hi - lo) * (x1 - x0);
    let max_weight = spec
        .rows
        .iter()
        .filter_map(|r| r.weight)
        .fold(0.0_f64, f64::max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="{:.2}" font-weight="bold">Study</text><text x="{:.2}" y="{:.2}" font-weight="bold" text-anchor="end">Weight</text>"#,
        TOP - 14.0,
        w - 10.0,
        TOP - 14.0
    );

    let row_y = |i: usize| TOP + ROW_HEIGHT * (i as f64 + 0.5);
    let whisker = |s: &mut String, y: f64, iv: &Interval| {
        let left_open = !(iv.lower.is_finite() && iv.lower >= lo);
        let right_open = !(iv.upper.is_finite() && iv.upper <= hi);
        let a = if left_open { x0 } else { sx(iv.lower) };
        let b = if right_open { x1 } else { sx(iv.upper) };
        let _ = writeln!(
            s,
            r#"<line class="ci" x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="black"/>"#
        );
        if left_open {
            let _ = writeln!(
                s,
                r#"<polygon class="arrow" points="{:.2},{y:.2} {:.2},{:.2} {:.2},{:.2}"/>"#,
                x0,
                x0 + 7.0,
                y - 4.0,
                x0 + 7.0,
                y + 4.0
            );
        }
        if right_open {
            let _ = writeln!(
                s,
                r#"<polygon class="arrow" points="{:.2},{y:.2} {:.2},{:.2} {:.2},{:.2}"/>"#,
                x1,
                x1 - 7.0,
                y - 4.0,
                x1 - 7.0,
                y + 4.0
            );
        }
    };

    for (i, r) in spec.rows.iter().enumerate() {
        let y = row_y(i);
        let _ = writeln!(s, r#"<g class="study" data-estimate="{}">"#, r.estimate);
        let _ = writeln!(s, r#"<text x="10" y="{:.2}">{}</text>"#, y + 4.0, escape(&r.label));
        whisker(&mut s, y, &r.interval);
        if r.estimate.is_finite() {
            let rel = match (r.weight, max_weight > 0.0) {
                (Some(wt), true) => (wt / max_weight).max(0.0).sqrt(),
                _ => 0.5,
            };
            let side = 4.0 + 10.0 * rel;
            let _ = writeln!(
                s,
                r#"<rect class="marker" x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="steelblue"/>"#,
                sx(r.estimate) - side / 2.0,
                y - side / 2.0
            );
        }
        if let Some(wt) = r.weight {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.1}%</text>"#,
                w - 10.0,
                y + 4.0,
                100.0 * wt
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let n = spec.rows.len();
    let sep = TOP + ROW_HEIGHT * (n as f64 + 0.25);
    let _ = writeln!(
        s,
        r##"<line x1="10" y1="{sep:.2}" x2="{:.2}" y2="{sep:.2}" stroke="#999"/>"##,
        w - 10.0
    );

    let c = &spec.combined;
    let y = row_y(n + 1);
    let _ = writeln!(s, r#"<g class="combined" data-estimate="{}">"#, c.estimate);
    let _ = writeln!(s, r#"<text x="10" y="{:.2}" font-weight="bold">{}</text>"#, y + 4.0, escape(&c.label));
    let (a, b) = (
        sx(c.interval.lower.clamp(lo, hi)),
        sx(c.interval.upper.clamp(lo, hi)),
    );
    let m = sx(c.estimate.clamp(lo, hi));
    let _ = writeln!(
        s,
        r#"<polygon class="diamond" points="{a:.2},{y:.2} {m:.2},{:.2} {b:.2},{y:.2} {m:.2},{:.2}" fill="firebrick"/>"#,
        y - 7.0,
        y + 7.0
    );
    let _ = writeln!(s, "</g>");

    let p = &spec.prediction;
    let y = row_y(n + 2);
    let _ = writeln!(s, r#"<g class="prediction" data-estimate="{}">"#, p.estimate);
    let _ = writeln!(s, r#"<text x="10" y="{:.2}" font-style="italic">{}</text>"#, y + 4.0, escape(&p.label));
    let (a, b) = (
        sx(p.interval.lower.clamp(lo, hi)),
        sx(p.interval.upper.clamp(lo, hi)),
    );
    let _ = writeln!(
        s,
        r#"<rect class="bar" x="{a:.2}" y="{:.2}" width="{:.2}" height="6" fill="gray"/>"#,
        y - 3.0,
        (b - a).max(0.5)
    );
    let _ = writeln!(s, "</g>");

    let axis_y = h - BOTTOM + 10.0;
    let _ = writeln!(s, r#"<g class="axis">"#);
    let _ = writeln!(
        s,
        r#"<line x1="{x0:.2}" y1="{axis_y:.2}" x2="{x1:.2}" y2="{axis_y:.2}" stroke="black"/>"#
    );
    for t in ticks(lo, hi) {
        let x = sx(t.ln());
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            axis_y + 5.0,
            axis_y + 18.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dose (log scale)</text>"#,
        (x0 + x1) / 2.0,
        axis_y + 36.0
    );
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, est: f64, lo: f64, hi: f64) -> ForestRow {
        ForestRow {
            label: label.into(),
            estimate: est,
            interval: Interval { lower: lo, upper: hi },
            weight: Some(0.5),
        }
    }

    #[test]
    fn wide_intervals_are_clipped() {
        let spec = ForestPlotSpec::new(
            vec![row("a", 6.0, 5.5, 6.5), row("b & c", 6.4, 6.4 - 200.0, 6.4 + 200.0)],
            row("mu", 6.2, 6.0, 6.4),
            row("new", 6.2, 5.8, 6.6),
        );
        let (lo, hi) = spec.x_range();
        assert!(lo > 4.0 && hi < 8.0, "{lo} {hi}");
        let svg = render_forest_svg(&spec);
        assert_eq!(svg.matches(r#"class="arrow""#).count(), 2);
        assert!(svg.contains("b &amp; c"));
    }

    #[test]
    fn tick_values() {
        assert_eq!(ticks(100f64.ln(), 1000f64.ln()), vec![100.0, 200.0, 500.0, 1000.0]);
        assert_eq!(tick_label(0.05), "0.05");
        assert_eq!(tick_label(500.0), "500");
    }
}
