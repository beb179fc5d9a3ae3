//! Forest plots of an [`AnalysisReport`], as SVG or as fixed-width text.
//!
//! Both renderers consume the same row model and the same 3-decimal number
//! strings, so they always carry identical numeric content. Each study gets
//! two rows (its own estimate, then its shrinkage estimate), followed by the
//! overall mean (diamond) and the prediction interval (bar); a footer line
//! reports `tau`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::report::AnalysisReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForestFormat {
    Svg,
    Text,
}

pub fn render_forest(report: &AnalysisReport, format: ForestFormat) -> String {
    let plot = Plot::new(report);
    match format {
        ForestFormat::Svg => plot.svg(),
        ForestFormat::Text => plot.text(),
    }
}

/// Fixed 3-decimal display; never prints `-0.000`.
pub fn fmt3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_owned()
    } else {
        s
    }
}

pub fn fmt_estimate(point: f64, lower: f64, upper: f64) -> String {
    format!("{} [{}, {}]", fmt3(point), fmt3(lower), fmt3(upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Study,
    Shrinkage { target: bool },
    Mean,
    Prediction,
}

#[derive(Debug, Clone)]
struct Row {
    kind: Kind,
    label: String,
    point: f64,
    lower: f64,
    upper: f64,
    numbers: String,
}

struct Plot {
    rows: Vec<Row>,
    lo: f64,
    hi: f64,
    ticks: Vec<f64>,
    tick_decimals: usize,
    footer: String,
    title: String,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

fn fmt_odds(x: f64) -> String {
    let or = x.exp();
    if or >= 100.0 {
        format!("{or:.0}")
    } else if or >= 10.0 {
        format!("{or:.1}")
    } else if or >= 1.0 {
        format!("{or:.2}")
    } else {
        format!("{or:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

impl Plot {
    fn new(report: &AnalysisReport) -> Self {
        let mut rows = Vec::with_capacity(2 * report.studies.len() + 2);
        for (i, (s, sh)) in report.studies.iter().zip(&report.shrinkage).enumerate() {
            let label = if s.label.is_empty() {
                (i + 1).to_string()
            } else {
                s.label.clone()
            };
            rows.push(Row {
                kind: Kind::Study,
                label: label.clone(),
                point: s.y,
                lower: s.quoted.lower,
                upper: s.quoted.upper,
                numbers: fmt_estimate(s.y, s.quoted.lower, s.quoted.upper),
            });
            rows.push(Row {
                kind: Kind::Shrinkage { target: s.is_target },
                label: format!("{label} (shrinkage)"),
                point: sh.mean,
                lower: sh.interval.lower,
                upper: sh.interval.upper,
                numbers: fmt_estimate(sh.mean, sh.interval.lower, sh.interval.upper),
            });
        }
        let summary = [
            (Kind::Mean, "mean effect", &report.mu),
            (Kind::Prediction, "prediction", &report.prediction),
        ];
        for (kind, label, r) in summary {
            rows.push(Row {
                kind,
                label: label.to_owned(),
                point: r.mean,
                lower: r.interval.lower,
                upper: r.interval.upper,
                numbers: fmt_estimate(r.mean, r.interval.lower, r.interval.upper),
            });
        }

        // Range covers every posterior interval and every point estimate;
        // study intervals reaching further are clipped.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &rows {
            let (a, b) = match r.kind {
                Kind::Study => (r.point, r.point),
                _ => (r.lower, r.upper),
            };
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if !(hi > lo) {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let step = nice_step(hi - lo);
        let tick_decimals = (-step.log10().floor()).max(0.0) as usize;
        let first = (lo / step).ceil() as i64;
        let last = (hi / step).floor() as i64;
        let ticks = (first..=last).map(|j| j as f64 * step).collect();

        let t = &report.tau.summary;
        let level_pct = fmt_fixed(100.0 * t.level, 0);
        let which = match report.config.tau_estimate {
            crate::tau::TauEstimate::Median => "median",
            crate::tau::TauEstimate::Mode => "mode",
            crate::tau::TauEstimate::Mean => "mean",
        };
        let footer = format!(
            "tau = {} ({which}, {level_pct}% interval)",
            fmt_estimate(report.tau.estimate, t.lower, t.upper)
        );
        let title = format!(
            "Forest plot: log odds ratio, {}% {} intervals",
            level_pct, report.config.interval.method
        );
        Plot {
            rows,
            lo,
            hi,
            ticks,
            tick_decimals,
            footer,
            title,
        }
    }

    fn svg(&self) -> String {
        const W: f64 = 1000.0;
        const ROW_H: f64 = 22.0;
        const TOP: f64 = 70.0;
        const PLOT_L: f64 = 230.0;
        const PLOT_R: f64 = 730.0;
        const NUM_X: f64 = 745.0;
        let n = self.rows.len();
        let study_rows = n - 2;
        // One blank row separates studies from the summary rows.
        let y_of = |j: usize| TOP + ROW_H * (j as f64 + if j >= study_rows { 1.5 } else { 0.5 });
        let plot_bottom = TOP + ROW_H * (n as f64 + 1.0);
        let h = plot_bottom + 70.0;
        let px = |x: f64| PLOT_L + (x - self.lo) / (self.hi - self.lo) * (PLOT_R - PLOT_L);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W:.0}" height="{h:.0}" viewBox="0 0 {W:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect x="0" y="0" width="{W:.0}" height="{h:.0}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="18" font-size="14" font-weight="bold">{}</text>"#,
            10.0,
            xml_escape(&self.title)
        );

        // Axes: log-OR below, odds ratio above.
        let axis_top = TOP - 8.0;
        let _ = writeln!(s, r#"<g class="axis">"#);
        let _ = writeln!(
            s,
            r#"<line x1="{PLOT_L:.2}" y1="{plot_bottom:.2}" x2="{PLOT_R:.2}" y2="{plot_bottom:.2}" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<line x1="{PLOT_L:.2}" y1="{axis_top:.2}" x2="{PLOT_R:.2}" y2="{axis_top:.2}" stroke="black"/>"#
        );
        for &t in &self.ticks {
            let x = px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{plot_bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                plot_bottom + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                plot_bottom + 18.0,
                fmt_fixed(t, self.tick_decimals)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{axis_top:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                axis_top - 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                axis_top - 9.0,
                fmt_odds(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log odds ratio</text>"#,
            0.5 * (PLOT_L + PLOT_R),
            plot_bottom + 34.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">odds ratio</text>"#,
            0.5 * (PLOT_L + PLOT_R),
            axis_top - 24.0
        );
        if self.lo < 0.0 && self.hi > 0.0 {
            let x = px(0.0);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{axis_top:.2}" x2="{x:.2}" y2="{plot_bottom:.2}" stroke="gray" stroke-dasharray="3,3"/>"#
            );
        }
        let _ = writeln!(s, "</g>");

        for (j, r) in self.rows.iter().enumerate() {
            let y = y_of(j);
            let (class, color) = match r.kind {
                Kind::Study => ("row study", "black"),
                Kind::Shrinkage { target: true } => ("row shrinkage target", "#d62728"),
                Kind::Shrinkage { target: false } => ("row shrinkage", "#1f77b4"),
                Kind::Mean => ("row summary mean", "black"),
                Kind::Prediction => ("row summary prediction", "#7f7f7f"),
            };
            let _ = writeln!(s, r#"<g class="{class}">"#);
            let _ = writeln!(
                s,
                r#"<text x="10.00" y="{:.2}" fill="{color}">{}</text>"#,
                y + 4.0,
                xml_escape(&r.label)
            );
            let _ = writeln!(
                s,
                r#"<text x="{NUM_X:.2}" y="{:.2}" fill="{color}" font-family="monospace">{}</text>"#,
                y + 4.0,
                r.numbers
            );
            let (a, b) = (px(r.lower.max(self.lo)), px(r.upper.min(self.hi)));
            match r.kind {
                Kind::Study | Kind::Shrinkage { .. } => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"/>"#
                    );
                    if r.lower < self.lo {
                        let _ = writeln!(
                            s,
                            r#"<path class="clip-arrow" d="M {a:.2} {y:.2} L {:.2} {:.2} L {:.2} {:.2} Z" fill="{color}"/>"#,
                            a + 6.0,
                            y - 4.0,
                            a + 6.0,
                            y + 4.0
                        );
                    }
                    if r.upper > self.hi {
                        let _ = writeln!(
                            s,
                            r#"<path class="clip-arrow" d="M {b:.2} {y:.2} L {:.2} {:.2} L {:.2} {:.2} Z" fill="{color}"/>"#,
                            b - 6.0,
                            y - 4.0,
                            b - 6.0,
                            y + 4.0
                        );
                    }
                    let x = px(r.point);
                    if r.kind == Kind::Study {
                        let _ = writeln!(
                            s,
                            r#"<rect x="{:.2}" y="{:.2}" width="8.00" height="8.00" fill="{color}"/>"#,
                            x - 4.0,
                            y - 4.0
                        );
                    } else {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4.50" fill="{color}"/>"#);
                    }
                }
                Kind::Mean => {
                    let x = px(r.point);
                    let _ = writeln!(
                        s,
                        r#"<polygon points="{a:.2},{y:.2} {x:.2},{:.2} {b:.2},{y:.2} {x:.2},{:.2}" fill="{color}"/>"#,
                        y - 7.0,
                        y + 7.0
                    );
                }
                Kind::Prediction => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="6.00" fill="{color}"/>"#,
                        y - 3.0,
                        (b - a).max(0.0)
                    );
                }
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(
            s,
            r#"<text class="tau" x="10.00" y="{:.2}">{}</text>"#,
            plot_bottom + 56.0,
            xml_escape(&self.footer)
        );
        s.push_str("</svg>\n");
        s
    }

    fn text(&self) -> String {
        const WIDTH: usize = 100;
        const LABEL: usize = 18;
        const PLOT: usize = 50;
        const NUMS: usize = WIDTH - LABEL - PLOT - 2;
        let col = |x: f64| -> usize {
            let f = (x - self.lo) / (self.hi - self.lo);
            ((f * (PLOT - 1) as f64).round().max(0.0) as usize).min(PLOT - 1)
        };
        let fit = |s: &str, w: usize| -> String {
            let mut out: String = s.chars().take(w).collect();
            let len = out.chars().count();
            out.extend(std::iter::repeat_n(' ', w - len));
            out
        };
        let line = |label: &str, plot: &str, nums: &str| {
            format!("{} {} {}\n", fit(label, LABEL), plot, fit(nums, NUMS))
        };
        let zero = (self.lo < 0.0 && self.hi > 0.0).then(|| col(0.0));

        let mut out = String::new();
        out.push_str(&fit(&self.title, WIDTH));
        out.push('\n');
        out.push_str(&line("study", &fit("", PLOT), "estimate [interval]"));
        out.push_str(&"-".repeat(WIDTH));
        out.push('\n');
        let n = self.rows.len();
        for (j, r) in self.rows.iter().enumerate() {
            if j == n - 2 {
                out.push_str(&"-".repeat(WIDTH));
                out.push('\n');
            }
            let mut cells = vec![' '; PLOT];
            if let Some(z) = zero {
                cells[z] = '|';
            }
            let (a, b) = (col(r.lower.max(self.lo)), col(r.upper.min(self.hi)));
            let fill = match r.kind {
                Kind::Mean => '=',
                Kind::Prediction => '~',
                _ => '-',
            };
            for c in &mut cells[a..=b] {
                *c = fill;
            }
            match r.kind {
                Kind::Mean => {
                    cells[a] = '<';
                    cells[b] = '>';
                }
                Kind::Prediction => {
                    cells[a] = '(';
                    cells[b] = ')';
                }
                _ => {
                    if r.lower < self.lo {
                        cells[a] = '<';
                    }
                    if r.upper > self.hi {
                        cells[b] = '>';
                    }
                }
            }
            cells[col(r.point)] = match r.kind {
                Kind::Study => 'o',
                Kind::Shrinkage { target: true } => '#',
                Kind::Shrinkage { target: false } => '*',
                Kind::Mean => 'M',
                Kind::Prediction => 'P',
            };
            let plot: String = cells.into_iter().collect();
            let label = match r.kind {
                Kind::Shrinkage { .. } => "  shrinkage".to_owned(),
                _ => r.label.clone(),
            };
            out.push_str(&line(&label, &plot, &r.numbers));
        }
        out.push_str(&"-".repeat(WIDTH));
        out.push('\n');

        // Tick labels placed under their columns where they fit.
        let mut axis = vec![' '; PLOT];
        let mut free_from = 0;
        for &t in &self.ticks {
            let label = fmt_fixed(t, self.tick_decimals);
            let c = col(t);
            let start = c.saturating_sub(label.len() / 2);
            if start < free_from || start + label.len() > PLOT {
                continue;
            }
            for (k, ch) in label.chars().enumerate() {
                axis[start + k] = ch;
            }
            free_from = start + label.len() + 1;
        }
        let axis: String = axis.into_iter().collect();
        out.push_str(&line("log odds ratio", &axis, ""));
        out.push_str(&fit(&self.footer, WIDTH));
        out.push('\n');
        out
    }
}
