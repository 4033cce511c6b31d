//! Line charts as hand-written SVG: one mean curve per method with a band
//! spanning the per-seed minimum and maximum.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::Method;
use super::record::RunRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Reward,
    Interpretability,
}

impl PlotMetric {
    fn label(self) -> &'static str {
        match self {
            PlotMetric::Reward => "reward",
            PlotMetric::Interpretability => "interpretability",
        }
    }
}

/// Per method: checkpoint → values across seeds.
type Series = BTreeMap<Method, BTreeMap<usize, Vec<f64>>>;

fn collect(records: &[RunRecord], metric: PlotMetric) -> Series {
    let mut out: Series = BTreeMap::new();
    for r in records {
        for m in r.metrics() {
            let v = match metric {
                PlotMetric::Reward => Some(m.reward),
                PlotMetric::Interpretability => m.interpretability,
            };
            if let Some(v) = v {
                out.entry(r.method())
                    .or_default()
                    .entry(m.episode)
                    .or_default()
                    .push(v);
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum::<f64>() / s.len() as f64
}

/// Render one chart. Returns `None` when no record carries the metric.
pub fn render_svg(records: &[RunRecord], metric: PlotMetric) -> Option<String> {
    let series = collect(records, metric);
    if series.is_empty() {
        return None;
    }
    let x_max = records
        .iter()
        .map(|r| r.config().total_episodes())
        .chain(series.values().flat_map(|s| s.keys().copied()))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let all = series.values().flat_map(|s| s.values().flatten().copied());
    let (mut y_lo, mut y_hi) = all.fold((0.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if metric == PlotMetric::Interpretability {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        y_hi = y_lo + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + pw * x / x_max;
    let sy = |y: f64| TOP + ph * (1.0 - (y - y_lo) / (y_hi - y_lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{} vs episode</text>"#,
        LEFT + pw / 2.0,
        metric.label()
    );
    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" fill="none" stroke="black"/>"#,
        l = LEFT,
        t = TOP,
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=5 {
        let xv = x_max * i as f64 / 5.0;
        let yv = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            xv.round() as i64
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );

    for (k, (method, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let band_top: Vec<String> = points
            .iter()
            .map(|(x, v)| {
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                format!("{:.2},{:.2}", sx(*x as f64), sy(hi))
            })
            .collect();
        let band_bottom: Vec<String> = points
            .iter()
            .rev()
            .map(|(x, v)| {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                format!("{:.2},{:.2}", sx(*x as f64), sy(lo))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band_top.join(" "),
            band_bottom.join(" ")
        );
        let line: Vec<String> = points
            .iter()
            .map(|(x, v)| format!("{:.2},{:.2}", sx(*x as f64), sy(mean(v))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-method="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            method.as_str(),
            line.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            method.as_str()
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Write `reward.svg` and, when available, `interpretability.svg`.
pub fn emit_plots(records: &[RunRecord], out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for metric in [PlotMetric::Reward, PlotMetric::Interpretability] {
        if let Some(svg) = render_svg(records, metric) {
            let path = out_dir.join(format!("{}.svg", metric.label()));
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}
