//! Minimal hand-written SVG charts: score box plots and ROC curves.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let fence = 1.5 * (q3 - q1);
    let inside: Vec<f64> = v
        .iter()
        .copied()
        .filter(|x| *x >= q1 - fence && *x <= q3 + fence)
        .collect();
    Some(BoxStats {
        q1,
        median,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        outliers: v
            .iter()
            .copied()
            .filter(|x| *x < q1 - fence || *x > q3 + fence)
            .collect(),
    })
}

/// Box plots of score distributions per group; the mean is drawn as an X
/// and the median as a line.
pub fn box_plot(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut s = header(title);
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = H - TOP - BOTTOM;
    let plot_w = W - LEFT - RIGHT;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    let slot = plot_w / groups.len().max(1) as f64;
    for (i, (name, values)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{} (n={})</text>"#,
            H - BOTTOM + 18.0,
            escape(name),
            values.len()
        );
        let Some(b) = box_stats(values) else { continue };
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
            y(b.whisker_low),
            y(b.whisker_high)
        );
        for w in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        let (mx, my, r) = (cx, y(b.mean), 5.0);
        let _ = writeln!(
            s,
            r##"<path d="M{:.1},{:.1}L{:.1},{:.1}M{:.1},{:.1}L{:.1},{:.1}" stroke="#000" stroke-width="1.5"/>"##,
            mx - r,
            my - r,
            mx + r,
            my + r,
            mx - r,
            my + r,
            mx + r,
            my - r
        );
        for o in &b.outliers {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.1}" cy="{:.1}" r="2.5" fill="none" stroke="{color}"/>"#,
                y(*o)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">X = mean, line = median</text>"#,
        W - RIGHT,
        H - 8.0
    );
    s.push_str("</svg>\n");
    s
}

/// One curve on a ROC chart.
#[derive(Debug, Clone)]
pub struct RocSeries<'a> {
    pub label: String,
    pub points: &'a [(f64, f64)],
    /// Optional +/- band around `points`, one value per point.
    pub band: Option<&'a [f64]>,
}

pub fn roc_plot(title: &str, series: &[RocSeries<'_>]) -> String {
    let mut s = header(title);
    let plot_h = H - TOP - BOTTOM;
    let plot_w = plot_h;
    let px = |f: f64| LEFT + plot_w * f;
    let py = |t: f64| TOP + plot_h * (1.0 - t);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            H - BOTTOM + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">False positive rate</text>"#,
        px(0.5),
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">True positive rate</text>"#,
        py(0.5),
        py(0.5)
    );

    let path = |pts: &mut dyn Iterator<Item = (f64, f64)>| {
        pts.enumerate()
            .map(|(i, (f, t))| format!("{}{:.1},{:.1}", if i == 0 { 'M' } else { 'L' }, px(f), py(t)))
            .collect::<String>()
    };
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = ser.band {
            let upper: Vec<(f64, f64)> = ser
                .points
                .iter()
                .zip(band)
                .map(|(&(f, t), sd)| (f, (t + sd).min(1.0)))
                .collect();
            let lower: Vec<(f64, f64)> = ser
                .points
                .iter()
                .zip(band)
                .rev()
                .map(|(&(f, t), sd)| (f, (t - sd).max(0.0)))
                .collect();
            let d = path(&mut upper.into_iter().chain(lower));
            let _ = writeln!(
                s,
                r#"<path d="{d}Z" fill="{color}" fill-opacity="0.15" stroke="none"/>"#
            );
        }
        let d = path(&mut ser.points.iter().copied());
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#,
            lx + 20.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn outliers_fall_outside_fences() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 4.0);
        assert_eq!(b.mean, 22.0);
    }

    #[test]
    fn charts_are_well_formed_and_escaped() {
        let bp = box_plot(
            "BM <scores>",
            "score",
            &[("T0".into(), vec![40.0, 42.0]), ("M1".into(), vec![])],
        );
        assert!(bp.starts_with("<svg") && bp.trim_end().ends_with("</svg>"));
        assert!(bp.contains("BM &lt;scores&gt;"));
        let pts = [(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)];
        let sd = [0.0, 0.1, 0.0];
        let roc = roc_plot(
            "ROC",
            &[RocSeries {
                label: "RF (AUC 0.80)".into(),
                points: &pts,
                band: Some(&sd),
            }],
        );
        assert_eq!(roc.matches("<path").count(), 2);
    }
}
