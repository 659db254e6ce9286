//! CSV tables and hand-written SVG plots.

use std::fmt::Write;

use super::metrics::MetricsReport;
use crate::error::{Error, Result};

pub fn methods_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "name",
        "status",
        "mean_relative_mse_percent",
        "std_error",
        "hyperparameters",
    ])?;
    for r in &report.methods {
        let hyper: Vec<String> = r
            .hyperparameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        w.write_record([
            r.method.code().to_string(),
            r.name.clone(),
            if r.ok() { "ok".into() } else { "failed".into() },
            format_value(r.mean_relative_mse),
            format_value(r.std_error),
            hyper.join(";"),
        ])?;
    }
    into_string(w)
}

pub(crate) fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Four significant digits, or empty for NaN.
pub(crate) fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Bar chart on a log scale.
pub fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h, left, bottom, top) = (640.0, 360.0, 60.0, 40.0, 40.0);
    let plot_h = h - bottom - top;
    let positive: Vec<f64> = bars
        .iter()
        .map(|b| b.1)
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    let lo = positive
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .log10()
        .floor();
    let hi = positive
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .log10()
        .ceil();
    let (lo, hi) = if lo.is_finite() && hi.is_finite() {
        (lo, hi.max(lo + 1.0))
    } else {
        (0.0, 1.0)
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for d in (lo as i32)..=(hi as i32) {
        let y = top + plot_h * (1.0 - (d as f64 - lo) / (hi - lo));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            w - 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#,
            left - 4.0,
            y + 4.0
        );
    }
    let slot = (w - left - 10.0) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let frac = if *v > 0.0 {
            ((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let bh = plot_h * frac;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#4878a8"><title>{}: {v:.4e}</title></rect>"##,
            top + plot_h - bh,
            slot * 0.7,
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            h - bottom + 16.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[allow(clippy::too_many_arguments)]
fn polyline(
    values: &[f64],
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: f64,
    hi: f64,
    color: &str,
) -> String {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            format!(
                "{:.1},{:.1}",
                x0 + w * i as f64 / n as f64,
                y0 + h * (1.0 - (v - lo) / span)
            )
        })
        .collect();
    format!(
        r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
        pts.join(" ")
    )
}

/// One panel for the observation and one per reconstruction, each drawn
/// over the original signal.
pub fn signal_panels_svg(
    original: &[f64],
    observed: &[f64],
    panels: &[(String, Vec<f64>)],
) -> String {
    let (w, ph, gap) = (640.0, 120.0, 30.0);
    let all = std::iter::once(("Observation".to_string(), observed.to_vec()))
        .chain(panels.iter().cloned());
    let rows: Vec<(String, Vec<f64>)> = all.collect();
    let h = (ph + gap) * rows.len() as f64 + gap;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    for (i, (title, values)) in rows.iter().enumerate() {
        let y0 = gap + (ph + gap) * i as f64;
        let finite = original.iter().chain(values).filter(|v| v.is_finite());
        let lo = finite.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}">{}</text>"#,
            y0 - 6.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="10" y="{y0:.1}" width="{}" height="{ph}" fill="none" stroke="#ccc"/>"##,
            w - 20.0
        );
        s.push_str(&polyline(
            original,
            10.0,
            y0,
            w - 20.0,
            ph,
            lo,
            hi,
            "#e08030",
        ));
        s.push('\n');
        s.push_str(&polyline(values, 10.0, y0, w - 20.0, ph, lo, hi, "#3060c0"));
        s.push('\n');
    }
    s.push_str("</svg>\n");
    s
}
