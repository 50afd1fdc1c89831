//! Static SVG renderings of reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DriftReport, Report, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::metrics::ReliabilityBin;

const W: f64 = 420.0;
const H: f64 = 320.0;
const MARGIN: f64 = 45.0;
const PALETTE: [&str; 5] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e"];

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str) -> Canvas {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#,
            W / 2.0
        );
        let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN / 1.5);
        let _ = writeln!(
            body,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
        );
        let _ = writeln!(
            body,
            r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
        );
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
            (x0 + x1) / 2.0,
            H - 10.0
        );
        let _ = writeln!(
            body,
            r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{y_label}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
        Canvas { body }
    }

    /// Maps unit-square coordinates to pixels.
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN / 1.5);
        (x0 + x * (x1 - x0), y0 - y * (y0 - y1))
    }

    fn ticks(&mut self, x_max: f64, y_max: f64) {
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (x, y) = self.px(f, 0.0);
            let _ = writeln!(
                self.body,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y + 14.0,
                fmt_tick(f * x_max)
            );
            let (x, y) = self.px(0.0, f);
            let _ = writeln!(
                self.body,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x - 4.0,
                y + 4.0,
                fmt_tick(f * y_max)
            );
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Reliability diagram: one bar per occupied bin at its mean confidence,
/// with height equal to its accuracy.
pub(super) fn reliability_svg(method: &str, bins: &[ReliabilityBin]) -> String {
    let mut c = Canvas::new(&format!("Reliability: {method}"), "confidence", "accuracy");
    c.ticks(1.0, 1.0);
    let (ax, ay) = c.px(0.0, 0.0);
    let (bx, by) = c.px(1.0, 1.0);
    let _ = writeln!(
        c.body,
        r#"<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" stroke="grey" stroke-dasharray="4 3"/>"#
    );
    let half = 0.02;
    for b in bins.iter().filter(|b| b.count > 0) {
        let (x, top) = c.px((b.conf - half).max(0.0), b.acc);
        let (x2, base) = c.px((b.conf + half).min(1.0), 0.0);
        let _ = writeln!(
            c.body,
            r##"<rect class="bar" x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#4477aa" fill-opacity="0.8"><title>conf {:.3}, acc {:.3}, n {}</title></rect>"##,
            x2 - x,
            base - top,
            b.conf,
            b.acc,
            b.count
        );
    }
    c.finish()
}

pub(super) fn drift_svg(r: &DriftReport) -> String {
    let mut c = Canvas::new("Drift", "noise sd", "accuracy / mean confidence");
    let x_max = r.levels.last().map(|l| l.sd).filter(|&v| v > 0.0).unwrap_or(1.0);
    c.ticks(x_max, 1.0);
    let mut series: Vec<(String, Vec<f64>)> = vec![("accuracy".into(), r.levels.iter().map(|l| l.accuracy).collect())];
    for (i, m) in r.methods.iter().enumerate() {
        series.push((m.to_string(), r.levels.iter().map(|l| l.mean_confidence[i]).collect()));
    }
    for (si, (name, ys)) in series.iter().enumerate() {
        let colour = if si == 0 {
            "black"
        } else {
            PALETTE[(si - 1) % PALETTE.len()]
        };
        let points: Vec<String> = r
            .levels
            .iter()
            .zip(ys)
            .map(|(l, &y)| {
                let (px, py) = c.px(l.sd / x_max, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            c.body,
            r#"<polyline class="series" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let (lx, ly) = c.px(0.62, 0.98 - 0.06 * si as f64);
        let _ = writeln!(
            c.body,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 16.0
        );
        let _ = writeln!(
            c.body,
            r#"<text x="{:.1}" y="{:.1}">{name}</text>"#,
            lx + 20.0,
            ly + 4.0
        );
    }
    c.finish()
}

/// Overlaid confidence histograms on in-sample rows and on noise.
pub(super) fn histogram_svg(method: &str, in_sample: &[usize], noise: &[usize]) -> String {
    let mut c = Canvas::new(&format!("Confidence: {method}"), "confidence", "fraction of rows");
    let frac = |h: &[usize]| {
        let n = h.iter().sum::<usize>().max(1) as f64;
        h.iter().map(|&v| v as f64 / n).collect::<Vec<_>>()
    };
    let (a, b) = (frac(in_sample), frac(noise));
    let y_max = a.iter().chain(&b).copied().fold(0.0, f64::max).max(1e-9);
    c.ticks(1.0, y_max);
    let width = 1.0 / HISTOGRAM_BINS as f64;
    for (class, colour, values) in [("hist-in-sample", "#4477aa", &a), ("hist-noise", "#ee6677", &b)] {
        for (i, &v) in values.iter().enumerate().filter(|(_, &v)| v > 0.0) {
            let (x, top) = c.px(i as f64 * width, v / y_max);
            let (x2, base) = c.px((i + 1) as f64 * width, 0.0);
            let _ = writeln!(
                c.body,
                r#"<rect class="{class}" x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.5"/>"#,
                x2 - x,
                base - top
            );
        }
    }
    for (i, (name, colour)) in [("in-sample", "#4477aa"), ("noise", "#ee6677")].iter().enumerate() {
        let (lx, ly) = c.px(0.05, 0.98 - 0.07 * i as f64);
        let _ = writeln!(
            c.body,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{colour}" fill-opacity="0.5"/>"#,
            ly - 8.0
        );
        let _ = writeln!(c.body, r#"<text x="{:.1}" y="{ly:.1}">{name}</text>"#, lx + 14.0);
    }
    c.finish()
}

/// Writes the report's SVG figures into `dir`. Returns the written paths.
pub fn emit_plots(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    match report {
        Report::Aleatoric(r) => {
            for m in &r.methods {
                files.push((
                    format!("reliability_{}.svg", m.method),
                    reliability_svg(m.method.name(), &m.reliability),
                ));
            }
        }
        Report::Drift(r) => files.push(("drift.svg".into(), drift_svg(r))),
        Report::Ood(r) => {
            for m in &r.methods {
                files.push((
                    format!("confidence_{}.svg", m.method),
                    histogram_svg(m.method.name(), &m.histogram_in_sample, &m.histogram_noise),
                ));
            }
        }
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
