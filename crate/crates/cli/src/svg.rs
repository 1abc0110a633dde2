//! Static SVG rendering of a metric distribution: histogram bars, one
//! vertical line per VaR level, and a shaded exceedance region whose left
//! edge sits exactly at the reported VaR value.
//!
//! Every element that a test might want to grade carries the underlying
//! numbers in `data-*` attributes, printed with full float precision; the
//! pixel coordinates are derived from those.

use injury_surrogate::uq::{DistributionSummary, Histogram};
use injury_surrogate::Metric;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

pub fn histogram_svg(metric: Metric, hist: &Histogram, summary: &DistributionSummary) -> String {
    let bins = hist.bins();
    let mut lo = bins.first().map(|b| b.lo).unwrap_or(0.0);
    let mut hi = bins.last().map(|b| b.hi).unwrap_or(1.0);
    for level in &summary.var_levels {
        lo = lo.min(level.value);
        hi = hi.max(level.value);
    }
    // Pad the data range so edge bars and VaR lines are not glued to the
    // frame; guard against a degenerate (near-zero width) distribution.
    let mut span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        span = lo.abs().max(1.0) * 1e-6;
    }
    let pad = span * 0.04;
    let (x_lo, x_hi) = (lo - pad, hi + pad);
    let y_hi = bins
        .iter()
        .map(|b| b.density)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |v: f64| MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |d: f64| MARGIN_T + plot_h - (d / y_hi) * plot_h;

    let mut s = String::with_capacity(16 * 1024);
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "  <title>{metric} distribution, {} samples</title>\n",
        hist.n_samples()
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Bars. Degenerate single-sliver bins still get one visible pixel.
    s.push_str("  <g class=\"bins\" fill=\"#4878a8\">\n");
    for b in bins {
        let x = px(b.lo);
        let w = (px(b.hi) - x).max(1.0);
        let y = py(b.density);
        let h = MARGIN_T + plot_h - y;
        s.push_str(&format!(
            "    <rect class=\"bin\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             data-lo=\"{}\" data-hi=\"{}\" data-density=\"{}\"/>\n",
            b.lo, b.hi, b.density
        ));
    }
    s.push_str("  </g>\n");

    // Exceedance regions: everything to the right of each VaR level.
    s.push_str("  <g class=\"exceedance\" fill=\"#c0392b\">\n");
    for (i, level) in summary.var_levels.iter().enumerate() {
        let x = px(level.value);
        let w = px(x_hi) - x;
        let opacity = 0.12 + 0.08 * i as f64;
        s.push_str(&format!(
            "    <rect class=\"exceedance\" x=\"{x:.2}\" y=\"{MARGIN_T}\" width=\"{w:.2}\" \
             height=\"{plot_h}\" fill-opacity=\"{opacity:.2}\" \
             data-percentile=\"{}\" data-from=\"{}\" data-to=\"{}\"/>\n",
            level.percentile, level.value, x_hi
        ));
    }
    s.push_str("  </g>\n");

    // VaR threshold lines with labels above the frame.
    s.push_str("  <g class=\"var-lines\" stroke=\"#c0392b\" stroke-width=\"1.5\">\n");
    for level in &summary.var_levels {
        let x = px(level.value);
        s.push_str(&format!(
            "    <line class=\"var\" x1=\"{x:.2}\" y1=\"{MARGIN_T}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             data-percentile=\"{}\" data-value=\"{}\"/>\n",
            MARGIN_T + plot_h,
            level.percentile,
            level.value
        ));
    }
    s.push_str("  </g>\n");
    for (i, level) in summary.var_levels.iter().enumerate() {
        let x = px(level.value);
        // Stagger labels so stacked levels stay readable.
        let y = MARGIN_T - 8.0 - 14.0 * (i % 2) as f64;
        s.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{y:.2}\" fill=\"#c0392b\" text-anchor=\"middle\">\
             VaR{} = {:.3}</text>\n",
            level.percentile, level.value
        ));
    }

    // Frame and axis labels.
    s.push_str(&format!(
        "  <rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333333\"/>\n"
    ));
    for i in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let x = px(v);
        s.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333333\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        ));
        s.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 20.0,
            format_tick(v)
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{metric}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    s.push_str(&format!(
        "  <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">density</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use injury_surrogate::uq::{empirical_pdf, summarize};

    #[test]
    fn ticks_drop_trailing_zeros() {
        assert_eq!(format_tick(2.500), "2.5");
        assert_eq!(format_tick(3.0), "3");
        assert_eq!(format_tick(-0.0004), "0");
        assert_eq!(format_tick(14.125), "14.125");
    }

    #[test]
    fn shaded_regions_carry_the_exact_var_values() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let summary = summarize(Metric::Hic15, &values, &[90.0, 95.0]).unwrap();
        let hist = empirical_pdf(&values, 20).unwrap();
        let svg = histogram_svg(Metric::Hic15, &hist, &summary);
        for level in &summary.var_levels {
            let needle = format!("data-from=\"{}\"", level.value);
            assert!(svg.contains(&needle), "missing {needle}");
        }
        assert_eq!(svg.matches("<svg").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn a_constant_sample_still_renders() {
        let values = vec![5.0; 50];
        let summary = summarize(Metric::AT1Max, &values, &[90.0]).unwrap();
        let hist = empirical_pdf(&values, 100).unwrap();
        let svg = histogram_svg(Metric::AT1Max, &hist, &summary);
        assert!(svg.contains("class=\"bin\""));
        assert!(svg.contains("data-percentile=\"90\""));
        for token in ["NaN", "inf"] {
            assert!(!svg.contains(token), "degenerate geometry leaked {token}");
        }
    }
}
