//! Static SVG figures rendered from run logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{median, RunLog};
use crate::ib::InfoCurve;

const LAYER_COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn layer_color(layer: usize) -> &'static str {
    LAYER_COLORS[(layer + LAYER_COLORS.len() - 1) % LAYER_COLORS.len()]
}

/// Blue to red on a log scale of the epoch.
fn epoch_color(epoch: usize, max_epoch: usize) -> String {
    let t = ((epoch as f64 + 1.0).ln() / (max_epoch as f64 + 1.0).ln()).clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * t) as u8;
    let b = (240.0 - 200.0 * t) as u8;
    format!("#{r:02x}40{b:02x}")
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn linear(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, log: false }
    }

    fn log(lo: f64, hi: f64) -> Self {
        Axis {
            lo: lo.max(f64::MIN_POSITIVE),
            hi: hi.max(lo * 10.0),
            log: true,
        }
    }

    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.max(self.lo).ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let a = self.lo.log10().ceil() as i32;
            let b = self.hi.log10().floor() as i32;
            (a..=b).map(|k| 10f64.powi(k)).collect()
        } else {
            (0..=4).map(|k| self.lo + (self.hi - self.lo) * k as f64 / 4.0).collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xa: Axis,
    ya: Axis,
}

impl Panel {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x0 + self.w * self.xa.unit(x),
            self.y0 + self.h * (1.0 - self.ya.unit(y)),
        )
    }

    fn frame(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{title}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 - 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{xlabel}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 32.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{ylabel}</text>"#,
            self.x0 - 38.0,
            self.y0 + self.h / 2.0,
            self.x0 - 38.0,
            self.y0 + self.h / 2.0
        );
        for t in self.xa.ticks() {
            let (x, _) = self.px(t, self.ya.lo);
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                self.y0 + self.h + 14.0,
                fmt_tick(t)
            );
        }
        for t in self.ya.ticks() {
            let (_, y) = self.px(self.xa.lo, t);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                self.x0 - 4.0,
                y + 3.0,
                fmt_tick(t)
            );
        }
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (a, b) = self.px(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn dot(&self, out: &mut String, x: f64, y: f64, r: f64, color: &str) {
        let (a, b) = self.px(x, y);
        let _ = writeln!(out, r#"<circle cx="{a:.2}" cy="{b:.2}" r="{r}" fill="{color}"/>"#);
    }
}

fn document(width: f64, height: f64, digest: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <desc>config_digest={digest}</desc>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn legend(out: &mut String, x: f64, y: f64, layers: usize) {
    for l in 1..=layers {
        let yy = y + 14.0 * (l - 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="10">layer {l}</text>"#,
            yy,
            layer_color(l),
            x + 14.0,
            yy + 9.0
        );
    }
}

/// Information-plane trajectories: one panel per log, one polyline per
/// layer through its mean positions, dots colored by epoch.
pub fn info_plane_svg(logs: &[RunLog], titles: &[String]) -> String {
    let (pw, ph) = (300.0, 240.0);
    let mut body = String::new();
    let max_layers = logs.iter().map(|l| l.output_layer()).max().unwrap_or(0);
    for (k, log) in logs.iter().enumerate() {
        let panel = Panel {
            x0: 60.0 + k as f64 * (pw + 70.0),
            y0: 40.0,
            w: pw,
            h: ph,
            xa: Axis::linear(0.0, 12.0),
            ya: Axis::linear(0.0, 1.0),
        };
        panel.frame(&mut body, &titles[k], "I(X;T) bits", "I(T;Y) bits");
        for layer in 1..=log.output_layer() {
            let pts: Vec<_> = log.aggregate.iter().filter(|p| p.layer == layer).collect();
            panel.polyline(&mut body, &pts.iter().map(|p| (p.i_x, p.i_y)).collect::<Vec<_>>(), layer_color(layer), false);
            for p in pts {
                panel.dot(&mut body, p.i_x, p.i_y, 2.0, &epoch_color(p.epoch, log.epochs));
            }
        }
    }
    let width = 60.0 + logs.len().max(1) as f64 * (pw + 70.0) + 60.0;
    legend(&mut body, width - 110.0, 50.0, max_layers);
    let digest = logs.first().map_or("", |l| l.config_digest.as_str());
    document(width, ph + 100.0, digest, &body)
}

/// Across-run mean of normalized gradient mean and std per layer against
/// epoch (log-log), with the median global transition marked.
pub fn gradients_svg(log: &RunLog) -> String {
    let mut by_epoch: std::collections::BTreeMap<usize, Vec<(f64, f64, usize)>> = Default::default();
    for run in &log.runs {
        for s in &run.gradient_stats {
            let e = by_epoch.entry(s.epoch).or_insert_with(|| vec![(0.0, 0.0, 0); s.layers.len()]);
            for (acc, l) in e.iter_mut().zip(&s.layers) {
                acc.0 += l.mean_norm;
                acc.1 += l.std_norm;
                acc.2 += 1;
            }
        }
    }
    let values = by_epoch
        .values()
        .flat_map(|v| v.iter().flat_map(|a| [a.0 / a.2.max(1) as f64, a.1 / a.2.max(1) as f64]))
        .filter(|&v| v > 0.0);
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1e-6, 1.0) };
    let panel = Panel {
        x0: 70.0,
        y0: 40.0,
        w: 520.0,
        h: 320.0,
        xa: Axis::log(1.0, log.epochs.max(10) as f64),
        ya: Axis::log(lo, hi),
    };
    let mut body = String::new();
    panel.frame(&mut body, &format!("gradient mean (solid) and std (dashed): {}", log.label), "epoch", "norm / |W|");
    for layer in 0..log.output_layer() {
        let mean: Vec<_> = by_epoch
            .iter()
            .filter_map(|(&e, v)| v.get(layer).map(|a| (e as f64, a.0 / a.2.max(1) as f64)))
            .filter(|p| p.1 > 0.0)
            .collect();
        let std: Vec<_> = by_epoch
            .iter()
            .filter_map(|(&e, v)| v.get(layer).map(|a| (e as f64, a.1 / a.2.max(1) as f64)))
            .filter(|p| p.1 > 0.0)
            .collect();
        panel.polyline(&mut body, &mean, layer_color(layer + 1), false);
        panel.polyline(&mut body, &std, layer_color(layer + 1), true);
    }
    let globals: Vec<f64> = log.runs.iter().filter_map(|r| r.phase.global.map(|e| e as f64)).collect();
    if let Some(t) = median(&globals) {
        let (x, _) = panel.px(t.max(1.0), lo);
        let _ = writeln!(
            body,
            r##"<line x1="{x:.2}" y1="{:.1}" x2="{x:.2}" y2="{:.1}" stroke="#888" stroke-width="2"/>"##,
            panel.y0,
            panel.y0 + panel.h
        );
    }
    legend(&mut body, 610.0, 50.0, log.output_layer());
    document(700.0, 420.0, &log.config_digest, &body)
}

/// Final mean layer positions against the IB curve, labeled by median
/// fitted trade-off parameter.
pub fn ib_svg(log: &RunLog, curve: &InfoCurve) -> String {
    let panel = Panel {
        x0: 70.0,
        y0: 40.0,
        w: 480.0,
        h: 320.0,
        xa: Axis::linear(0.0, 12.0),
        ya: Axis::linear(0.0, 1.0),
    };
    let mut body = String::new();
    panel.frame(&mut body, &format!("layers against the IB curve: {}", log.label), "I(X;T) bits", "I(T;Y) bits");
    let pts: Vec<_> = curve.points.iter().map(|p| (p.i_x, p.i_y)).collect();
    panel.polyline(&mut body, &pts, "#000", false);
    let last = log.aggregate.iter().map(|p| p.epoch).max().unwrap_or(0);
    for p in log.aggregate.iter().filter(|p| p.epoch == last) {
        panel.dot(&mut body, p.i_x, p.i_y, 4.0, layer_color(p.layer));
        let betas: Vec<f64> = log
            .runs
            .iter()
            .flat_map(|r| r.beta_fits.iter().filter(|f| f.layer == p.layer).map(|f| f.beta_star))
            .collect();
        if let Some(b) = median(&betas) {
            let (x, y) = panel.px(p.i_x, p.i_y);
            let _ = writeln!(
                body,
                r#"<text x="{:.1}" y="{:.1}" font-size="10">beta*={}</text>"#,
                x + 6.0,
                y + 12.0,
                fmt_tick(b)
            );
        }
    }
    legend(&mut body, 570.0, 50.0, log.output_layer());
    document(660.0, 420.0, &log.config_digest, &body)
}

/// Final mean position of every layer across sample fractions.
pub fn sample_size_svg(logs: &[RunLog]) -> String {
    let panel = Panel {
        x0: 70.0,
        y0: 40.0,
        w: 480.0,
        h: 320.0,
        xa: Axis::linear(0.0, 12.0),
        ya: Axis::linear(0.0, 1.0),
    };
    let mut body = String::new();
    panel.frame(&mut body, "converged layers by training fraction", "I(X;T) bits", "I(T;Y) bits");
    let layers = logs.iter().map(|l| l.output_layer()).max().unwrap_or(0);
    for layer in 1..=layers {
        let pts: Vec<(f64, f64)> = logs
            .iter()
            .filter_map(|log| {
                let last = log.aggregate.iter().filter(|p| p.layer == layer).max_by_key(|p| p.epoch)?;
                Some((last.i_x, last.i_y))
            })
            .collect();
        panel.polyline(&mut body, &pts, layer_color(layer), false);
        for (log, &(x, y)) in logs.iter().zip(&pts) {
            panel.dot(&mut body, x, y, 3.0, layer_color(layer));
            if layer == layers {
                let (a, b) = panel.px(x, y);
                let _ = writeln!(body, r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#, a + 5.0, b - 5.0, log.fraction);
            }
        }
    }
    legend(&mut body, 570.0, 50.0, layers);
    let digest = logs.first().map_or("", |l| l.config_digest.as_str());
    document(660.0, 420.0, digest, &body)
}

/// Files produced by [`render_reports`].
#[derive(Debug, Default)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
    pub failed: Vec<(PathBuf, String)>,
}

/// Renders every figure the given logs support. Logs are grouped by label:
/// `reference`, `fraction-*`, `depth-*`, `samples-*`.
pub fn render_reports(logs: &[RunLog], curve: Option<&InfoCurve>, dir: &Path) -> ReportOutput {
    let mut out = ReportOutput::default();
    if let Err(e) = std::fs::create_dir_all(dir) {
        out.failed.push((dir.to_path_buf(), e.to_string()));
        return out;
    }
    let emit = |name: &str, svg: String, out: &mut ReportOutput| {
        let path = dir.join(name);
        match std::fs::write(&path, svg) {
            Ok(()) => out.files.push(path),
            Err(e) => out.failed.push((path, e.to_string())),
        }
    };
    let group = |prefix: &str| -> Vec<RunLog> {
        logs.iter().filter(|l| l.label.starts_with(prefix)).cloned().collect()
    };

    for log in logs.iter().filter(|l| !l.label.contains('-')) {
        emit(&format!("info_plane_{}.svg", log.label), info_plane_svg(std::slice::from_ref(log), &[log.label.clone()]), &mut out);
        emit(&format!("gradients_{}.svg", log.label), gradients_svg(log), &mut out);
        if let Some(c) = curve {
            emit(&format!("ib_{}.svg", log.label), ib_svg(log, c), &mut out);
        }
    }
    let fractions = group("fraction-");
    if !fractions.is_empty() {
        let titles = fractions.iter().map(|l| format!("{}% of the data", l.fraction * 100.0)).collect::<Vec<_>>();
        emit("info_plane_fractions.svg", info_plane_svg(&fractions, &titles), &mut out);
    }
    let depths = group("depth-");
    if depths.is_empty() {
        out.notices.push("no depth sweep logs; depth plot skipped".into());
    } else {
        let titles = depths.iter().map(|l| format!("{} hidden", l.hidden_layers())).collect::<Vec<_>>();
        emit("info_plane_depth.svg", info_plane_svg(&depths, &titles), &mut out);
    }
    let samples = group("samples-");
    if samples.is_empty() {
        out.notices.push("no sample-size logs; sample-size plot skipped".into());
    } else {
        emit("sample_size.svg", sample_size_svg(&samples), &mut out);
    }
    out
}
