//! Self-contained SVG line plots for archived time series.
//!
//! No drawing dependency: the output is a small hand-assembled SVG
//! document with a framed plot area, linear autoscaled axes with nice
//! tick steps (1/2/5 decades), and the data as `<polyline>` elements.
//! Non-finite samples split the line: each finite run becomes its own
//! polyline, an isolated finite point becomes a small circle marker.

use std::fmt::Write;

pub const DEFAULT_WIDTH: u32 = 800;
pub const DEFAULT_HEIGHT: u32 = 480;

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 48.0;
const TICK_LEN: f64 = 5.0;
const TARGET_TICKS: usize = 6;

#[derive(Debug, Clone)]
pub struct PlotConfig {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            title: String::new(),
            x_label: "time [s]".to_string(),
            y_label: String::new(),
        }
    }
}

/// Tick step covering `span / TARGET_TICKS`, snapped up to the nearest
/// 1, 2, or 5 times a power of ten.
fn nice_step(span: f64) -> f64 {
    let rough = span / TARGET_TICKS as f64;
    let mag = 10f64.powf(rough.log10().floor());
    let frac = rough / mag;
    let snapped = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    snapped * mag
}

/// Tick positions across `[lo, hi]` at multiples of the nice step.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil();
    let last = (hi / step).floor();
    let mut out = Vec::new();
    let mut k = first;
    while k <= last {
        out.push(k * step);
        k += 1.0;
    }
    (out, step)
}

/// Tick labels print just enough decimals for the step, so a 0.2 step
/// yields "0.4" rather than the full float expansion.
fn format_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let text = format!("{v:.decimals$}");
    // Avoid the "-0" label.
    if text.starts_with('-') && text.trim_start_matches(['-', '0', '.']).is_empty() {
        text[1..].to_string()
    } else {
        text
    }
}

/// Pad a degenerate (constant) range so the scale stays finite.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if lo < hi {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render `(x, y)` samples as a complete SVG document.
pub fn render_xy(points: &[(f64, f64)], cfg: &PlotConfig) -> String {
    let w = cfg.width as f64;
    let h = cfg.height as f64;
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        cfg.width, cfg.height, cfg.width, cfg.height
    );
    let _ = writeln!(svg, "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>", cfg.width, cfg.height);
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>"
    );

    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();

    if finite.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">no data</text>",
            w / 2.0,
            h / 2.0
        );
        finish(&mut svg, cfg, w, h);
        return svg;
    }

    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &finite {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let (x_lo, x_hi) = padded(x_lo, x_hi);
    let (y_lo, y_hi) = padded(y_lo, y_hi);

    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w,
            // SVG y grows downward.
            MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h,
        )
    };

    let (x_ticks, x_step) = ticks(x_lo, x_hi);
    for &t in &x_ticks {
        let (px, _) = to_px(t, y_lo);
        let y0 = h - MARGIN_BOTTOM;
        let _ = writeln!(svg, "<line x1=\"{px:.2}\" y1=\"{y0}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", y0 + TICK_LEN);
        let _ = writeln!(
            svg,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            y0 + TICK_LEN + 12.0,
            format_tick(t, x_step)
        );
    }
    let (y_ticks, y_step) = ticks(y_lo, y_hi);
    for &t in &y_ticks {
        let (_, py) = to_px(x_lo, t);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{py:.2}\" stroke=\"black\"/>",
            MARGIN_LEFT - TICK_LEN
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            MARGIN_LEFT - TICK_LEN - 4.0,
            py + 4.0,
            format_tick(t, y_step)
        );
    }

    // Each finite run draws separately so gaps stay visible.
    let mut run: Vec<(f64, f64)> = Vec::new();
    let flush_run = |svg: &mut String, run: &mut Vec<(f64, f64)>| {
        match run.len() {
            0 => {}
            1 => {
                let (px, py) = run[0];
                let _ = writeln!(svg, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"#1f6fb2\"/>");
            }
            _ => {
                let coords: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    svg,
                    "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"{}\"/>",
                    coords.join(" ")
                );
            }
        }
        run.clear();
    };
    for &(x, y) in points {
        if x.is_finite() && y.is_finite() {
            run.push(to_px(x, y));
        } else {
            flush_run(&mut svg, &mut run);
        }
    }
    flush_run(&mut svg, &mut run);

    finish(&mut svg, cfg, w, h);
    svg
}

fn finish(svg: &mut String, cfg: &PlotConfig, w: f64, h: f64) {
    if !cfg.title.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
            w / 2.0,
            xml_escape(&cfg.title)
        );
    }
    if !cfg.x_label.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            MARGIN_LEFT + (w - MARGIN_LEFT - MARGIN_RIGHT) / 2.0,
            h - 10.0,
            xml_escape(&cfg.x_label)
        );
    }
    if !cfg.y_label.is_empty() {
        let y_mid = MARGIN_TOP + (h - MARGIN_TOP - MARGIN_BOTTOM) / 2.0;
        let _ = writeln!(
            svg,
            "<text x=\"14\" y=\"{y_mid:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {y_mid:.2})\">{}</text>",
            xml_escape(&cfg.y_label)
        );
    }
    svg.push_str("</svg>\n");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn two_points_make_one_polyline_of_two_points() {
        let svg = render_xy(&[(0.0, 1.0), (1.0, 2.0)], &PlotConfig::default());
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(count(&svg, "<polyline"), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 2);
    }

    #[test]
    fn nan_splits_the_line() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 4.0), (4.0, 5.0)];
        let svg = render_xy(&pts, &PlotConfig::default());
        assert_eq!(count(&svg, "<polyline"), 2);
    }

    #[test]
    fn isolated_point_becomes_marker() {
        let pts = [(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0), (3.0, 4.0)];
        let svg = render_xy(&pts, &PlotConfig::default());
        assert_eq!(count(&svg, "<circle"), 1);
        assert_eq!(count(&svg, "<polyline"), 1);
    }

    #[test]
    fn empty_input_is_still_valid_svg() {
        let svg = render_xy(&[], &PlotConfig::default());
        assert!(svg.contains("no data"));
        assert_eq!(count(&svg, "<polyline"), 0);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn constant_series_produces_finite_coordinates() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 7.0)).collect();
        let svg = render_xy(&pts, &PlotConfig::default());
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert_eq!(count(&svg, "<polyline"), 1);
    }

    #[test]
    fn corners_map_to_plot_frame() {
        // With padding disabled by a proper spread, the extreme points
        // must land exactly on the frame edges.
        let svg = render_xy(&[(0.0, 0.0), (1.0, 1.0)], &PlotConfig::default());
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let coords: Vec<&str> = points.split(' ').collect();
        assert_eq!(coords[0], format!("{:.2},{:.2}", 64.0, 480.0 - 48.0));
        assert_eq!(coords[1], format!("{:.2},{:.2}", 800.0 - 16.0, 32.0));
    }

    #[test]
    fn labels_and_title_are_escaped() {
        let cfg = PlotConfig {
            title: "a < b & c".to_string(),
            y_label: "T [K]".to_string(),
            ..PlotConfig::default()
        };
        let svg = render_xy(&[(0.0, 1.0), (1.0, 2.0)], &cfg);
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("T [K]"));
        assert!(svg.contains("time [s]"));
    }

    #[test]
    fn nice_steps_snap_to_decades() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(7.0), 2.0);
        assert_eq!(nice_step(100.0), 20.0);
        // Sub-unity decades go through powf; allow rounding slack.
        assert!((nice_step(1.0) - 0.2).abs() < 1e-15);
        assert!((nice_step(0.03) - 0.005).abs() < 1e-17);
    }

    #[test]
    fn tick_labels_trim_to_step_precision() {
        assert_eq!(format_tick(0.4, 0.2), "0.4");
        assert_eq!(format_tick(0.6000000000000001, 0.2), "0.6");
        assert_eq!(format_tick(4.0, 2.0), "4");
        assert_eq!(format_tick(-0.0, 0.5), "0.0");
        assert_eq!(format_tick(0.005, 0.005), "0.005");
    }

    #[test]
    fn ticks_stay_inside_the_domain() {
        for (lo, hi) in [(0.0, 10.0), (-3.0, 7.0), (0.25, 0.26), (1e6, 2e6)] {
            let (ts, _) = ticks(lo, hi);
            assert!(!ts.is_empty());
            assert!(ts.iter().all(|&t| t >= lo - 1e-9 && t <= hi + 1e-9), "{lo}..{hi}: {ts:?}");
        }
    }
}
