//! SVG figures: iterations-to-converge against θ, one file per problem setting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use modelopt::ProblemKind;

use crate::error::BenchError;
use crate::method::Method;
use crate::sweep::{read_results, Manifest, SweepRow, MANIFEST_FILE};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Fallback cap when no manifest is available: the default 400 epochs of 300 samples.
pub const FALLBACK_CAP: u64 = 400 * 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub theta: f64,
    pub iters: f64,
    /// Median run did not converge within the cap.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: Method,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub model: ProblemKind,
    pub cond_kappa: f64,
    pub p_fail: f64,
    pub cap: u64,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn file_name(&self) -> String {
        format!("{}_kappa{}_pfail{}.svg", self.model.name(), self.cond_kappa, self.p_fail)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups rows into panels; non-converged runs count as `cap(model, κ, p_fail)`.
pub fn panels(rows: &[SweepRow], cap: impl Fn(ProblemKind, f64, f64) -> u64) -> Vec<Panel> {
    type Key = (ProblemKind, u64, u64);
    let mut groups: BTreeMap<Key, BTreeMap<Method, BTreeMap<u64, Vec<f64>>>> = BTreeMap::new();
    for r in rows {
        let key = (r.model, r.cond_kappa.to_bits(), r.p_fail.to_bits());
        let k = cap(r.model, r.cond_kappa, r.p_fail) as f64;
        let it = r.iters_to_converge.map(|v| v as f64).unwrap_or(k);
        groups.entry(key).or_default().entry(r.method).or_default().entry(r.theta.to_bits()).or_default().push(it);
    }
    groups
        .into_iter()
        .map(|((model, kb, pb), methods)| {
            let (cond_kappa, p_fail) = (f64::from_bits(kb), f64::from_bits(pb));
            let c = cap(model, cond_kappa, p_fail);
            let series = methods
                .into_iter()
                .map(|(method, by_theta)| {
                    let mut points: Vec<Point> = by_theta
                        .into_iter()
                        .map(|(tb, mut its)| {
                            let iters = median(&mut its);
                            Point { theta: f64::from_bits(tb), iters, capped: iters >= c as f64 }
                        })
                        .collect();
                    points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
                    Series { method, points }
                })
                .collect();
            Panel { model, cond_kappa, p_fail, cap: c, series }
        })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn decade_range(lo: f64, hi: f64) -> (f64, f64) {
    let a = lo.log10().floor();
    let mut b = hi.log10().ceil();
    if b <= a {
        b = a + 1.0;
    }
    (a, b)
}

/// Renders a panel as a standalone SVG 1.1 document (log–log axes).
pub fn render_svg(panel: &Panel) -> String {
    let pts = panel.series.iter().flat_map(|s| s.points.iter());
    let (tmin, tmax) = pts.clone().fold((f64::INFINITY, 0f64), |(lo, hi), p| (lo.min(p.theta), hi.max(p.theta)));
    let ymax = (panel.cap as f64).max(pts.clone().fold(1.0, |m, p| m.max(p.iters)));
    let (xa, xb) = decade_range(tmin, tmax);
    let (ya, yb) = decade_range(1.0, ymax);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t.log10() - xa) / (xb - xa) * pw;
    let sy = |v: f64| TOP + ph - (v.max(1.0).log10() - ya) / (yb - ya) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let title = format!("{} (kappa = {}, p_fail = {})", panel.model.name(), panel.cond_kappa, panel.p_fail);
    let _ = writeln!(s, "<title>{}</title>", esc(&title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, esc(&title));

    // axes and decade ticks
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    for e in (xa as i32)..=(xb as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#, TOP + ph + 18.0);
    }
    for e in (ya as i32)..=(yb as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">theta</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">iterations to converge (median)</text>"#,
        TOP + ph / 2.0
    );
    let cap_y = sy(panel.cap as f64);
    let _ = writeln!(
        s,
        r##"<line class="cap" x1="{LEFT}" y1="{cap_y:.2}" x2="{}" y2="{cap_y:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
        LEFT + pw
    );

    for (i, ser) in panel.series.iter().enumerate() {
        let color = COLORS[(ser.method as usize) % COLORS.len()];
        let name = ser.method.name();
        let _ = writeln!(s, r#"<g class="series" data-method="{name}">"#);
        let coords: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.theta), sy(p.iters))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, coords.join(" "));
        for p in &ser.points {
            let (x, y) = (sx(p.theta), sy(p.iters));
            if p.capped {
                let d = 4.0;
                let _ = writeln!(
                    s,
                    r#"<path class="marker" data-capped="true" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="{color}" stroke-width="2" fill="none"/>"#,
                    x - d, y - d, x + d, y + d, x - d, y + d, x + d, y - d
                );
            } else {
                let _ = writeln!(s, r#"<circle class="marker" data-capped="false" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    let ly = TOP + 10.0 + 18.0 * panel.series.len() as f64 + 6.0;
    let _ = writeln!(
        s,
        r#"<text class="legend-note" x="{}" y="{ly}" font-size="10">x = not converged (cap {})</text>"#,
        WIDTH - RIGHT + 15.0,
        panel.cap
    );
    let _ = writeln!(s, "</svg>");
    s
}

fn manifest_caps(csv_path: &Path) -> Option<Manifest> {
    let path = csv_path.parent()?.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes one SVG per (model, κ, p_fail) found in the results file.
///
/// The iteration cap comes from the `manifest.json` next to the CSV when
/// present. A header-only CSV yields no files and a warning on stderr.
pub fn emit_plots(results_csv: &Path, output_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let rows = read_results(results_csv)?;
    if rows.is_empty() {
        eprintln!("warning: {} has no data rows; no plots written", results_csv.display());
        return Ok(Vec::new());
    }
    let man = manifest_caps(results_csv);
    let cap = |model: ProblemKind, kappa: f64, p_fail: f64| {
        man.as_ref()
            .and_then(|m| {
                m.problems
                    .iter()
                    .find(|p| p.spec.model == model && p.spec.cond_kappa == kappa && p.spec.p_fail == p_fail)
                    .map(|p| p.horizon)
            })
            .unwrap_or(FALLBACK_CAP)
    };
    std::fs::create_dir_all(output_dir).map_err(|e| BenchError::io(output_dir, e))?;
    let mut out = Vec::new();
    for panel in panels(&rows, cap) {
        let path = output_dir.join(panel.file_name());
        std::fs::write(&path, render_svg(&panel)).map_err(|e| BenchError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
