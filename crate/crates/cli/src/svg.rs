//! Hand-rolled SVG emission for the training-curve plots: per metric a
//! mean polyline, +-std whisker bars, and the smoothed overlay. No
//! raster dependencies, no timestamps; output is byte-deterministic.

use cxrpipe::analytics::CurveStats;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub stats: &'a CurveStats,
}

struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 360.0;
const MARGIN_LEFT: f64 = 58.0;
const MARGIN_BOTTOM: f64 = 42.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_RIGHT: f64 = 16.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders side-by-side panels (one per metric group), each holding the
/// given series.
pub fn render_curves(title: &str, panels: &[(&str, Vec<Series>)]) -> String {
    let total_w = PANEL_W * panels.len() as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        fmt(total_w),
        fmt(PANEL_H),
        fmt(total_w),
        fmt(PANEL_H)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        fmt(total_w / 2.0),
        escape(title)
    ));
    for (i, (panel_title, series)) in panels.iter().enumerate() {
        let origin_x = PANEL_W * i as f64;
        render_panel(&mut out, origin_x, panel_title, series);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, origin_x: f64, title: &str, series: &[Series]) {
    let plot = Rect {
        x: origin_x + MARGIN_LEFT,
        y: MARGIN_TOP,
        w: PANEL_W - MARGIN_LEFT - MARGIN_RIGHT,
        h: PANEL_H - MARGIN_TOP - MARGIN_BOTTOM,
    };

    // Data ranges across every series, including whisker extent.
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (i, &step) in s.stats.grid.iter().enumerate() {
            x_min = x_min.min(step as f64);
            x_max = x_max.max(step as f64);
            y_min = y_min.min(s.stats.mean[i] - s.stats.std[i]);
            y_max = y_max.max(s.stats.mean[i] + s.stats.std[i]);
        }
    }
    if !x_min.is_finite() {
        return;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let to_x = |v: f64| plot.x + (v - x_min) / (x_max - x_min) * plot.w;
    let to_y = |v: f64| plot.y + plot.h - (v - y_min) / (y_max - y_min) * plot.h;

    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        fmt(plot.x + plot.w / 2.0),
        fmt(plot.y - 8.0),
        escape(title)
    ));
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        fmt(plot.x),
        fmt(plot.y),
        fmt(plot.w),
        fmt(plot.h)
    ));

    // Ticks: 5 per axis.
    for t in 0..=4 {
        let frac = t as f64 / 4.0;
        let xv = x_min + frac * (x_max - x_min);
        let xp = to_x(xv);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(xp),
            fmt(plot.y + plot.h),
            fmt(plot.y + plot.h + 4.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(xp),
            fmt(plot.y + plot.h + 16.0),
            fmt_tick(xv)
        ));
        let yv = y_min + frac * (y_max - y_min);
        let yp = to_y(yv);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(plot.x - 4.0),
            fmt(plot.x),
            fmt(yp)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(plot.x - 7.0),
            fmt(yp + 3.0),
            fmt_tick(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">step</text>\n",
        fmt(plot.x + plot.w / 2.0),
        fmt(plot.y + plot.h + 32.0)
    ));

    for (s_idx, s) in series.iter().enumerate() {
        // Whiskers: mean +- std at every grid point.
        for (i, &step) in s.stats.grid.iter().enumerate() {
            if s.stats.std[i] == 0.0 {
                continue;
            }
            let xp = to_x(step as f64);
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{3}\" stroke-opacity=\"0.45\"/>\n",
                fmt(xp),
                fmt(to_y(s.stats.mean[i] - s.stats.std[i])),
                fmt(to_y(s.stats.mean[i] + s.stats.std[i])),
                s.color
            ));
        }
        // Mean polyline (thin) and smoothed overlay (thick).
        out.push_str(&polyline(
            s.stats.grid.iter().map(|&g| g as f64),
            s.stats.mean.iter().copied(),
            &to_x,
            &to_y,
            s.color,
            1.0,
            Some("3,3"),
        ));
        if s.stats.smoothed.len() == s.stats.grid.len() {
            out.push_str(&polyline(
                s.stats.grid.iter().map(|&g| g as f64),
                s.stats.smoothed.iter().copied(),
                &to_x,
                &to_y,
                s.color,
                2.0,
                None,
            ));
        }
        // Legend entry.
        let ly = plot.y + 14.0 + 14.0 * s_idx as f64;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
            fmt(plot.x + plot.w - 96.0),
            fmt(plot.x + plot.w - 76.0),
            fmt(ly - 3.0),
            s.color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(plot.x + plot.w - 72.0),
            fmt(ly),
            escape(s.label)
        ));
    }
}

fn polyline(
    xs: impl Iterator<Item = f64>,
    ys: impl Iterator<Item = f64>,
    to_x: &dyn Fn(f64) -> f64,
    to_y: &dyn Fn(f64) -> f64,
    color: &str,
    width: f64,
    dash: Option<&str>,
) -> String {
    let points: Vec<String> = xs
        .zip(ys)
        .map(|(x, y)| format!("{},{}", fmt(to_x(x)), fmt(to_y(y))))
        .collect();
    let dash_attr = dash
        .map(|d| format!(" stroke-dasharray=\"{d}\""))
        .unwrap_or_default();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{}/>\n",
        points.join(" "),
        color,
        width,
        dash_attr
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cxrpipe::analytics::MetricKind;

    fn stats() -> CurveStats {
        CurveStats {
            metric: MetricKind::ValLoss,
            grid: vec![10, 20, 30],
            mean: vec![1.0, 0.6, 0.8],
            std: vec![0.1, 0.05, 0.2],
            smoothed: vec![0.95, 0.65, 0.78],
        }
    }

    #[test]
    fn renders_well_formed_panels() {
        let s = stats();
        let svg = render_curves(
            "training curves",
            &[(
                "loss",
                vec![Series {
                    label: "val",
                    color: "#d62728",
                    stats: &s,
                }],
            )],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // Mean + smoothed polylines, three whiskers.
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-opacity").count(), 3);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn output_is_deterministic() {
        let s = stats();
        let make = || {
            render_curves(
                "t",
                &[(
                    "p",
                    vec![Series {
                        label: "series",
                        color: "#1f77b4",
                        stats: &s,
                    }],
                )],
            )
        };
        assert_eq!(make(), make());
    }
}
