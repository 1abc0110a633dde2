//! Uncertainty propagation: space-filling sampling, surrogate pushforward,
//! and distribution summaries for the injury metrics.
//!
//! The pushforward uses the posterior mean only. That is a deliberate,
//! documented choice: the resulting spread measures how the metric varies
//! across the design space, not the surrogate's own epistemic uncertainty,
//! matching how the screening results are reported.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::campaign::{DesignBox, InputPoint, Metric};
use crate::gp::{GpError, GpModel};

/// Bin count used when extracting a mode from a sample.
pub const MODE_BINS: usize = 100;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("need at least one sample")]
    NoSamples,
    #[error("percentile {0} is outside the open interval (0, 100)")]
    BadPercentile(f64),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("values contain a non-finite entry")]
    NonFiniteValue,
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Latin hypercube sample of `n` design points.
///
/// Each axis is cut into `n` equal strata and every stratum receives exactly
/// one point, placed uniformly within it; the strata are paired across axes
/// by a seeded shuffle. Deterministic for a given `n` and `seed`.
pub fn lhs_sample(n: usize, box_: &DesignBox, seed: u64) -> Result<Vec<InputPoint>, UqError> {
    if n == 0 {
        return Err(UqError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = vec![[0.0f64; 2]; n];
    for dim in 0..2 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (point, stratum) in coords.iter_mut().zip(&strata) {
            let u: f64 = rng.gen();
            point[dim] = (*stratum as f64 + u) / n as f64;
        }
    }
    Ok(coords.into_iter().map(|c| box_.denormalize(c)).collect())
}

/// Evaluate the surrogate's posterior mean at each sample point.
pub fn pushforward(model: &GpModel, samples: &[InputPoint]) -> Result<Vec<f64>, UqError> {
    if samples.is_empty() {
        return Err(UqError::NoSamples);
    }
    samples
        .iter()
        .map(|p| Ok(model.predict(*p)?.mean))
        .collect()
}

/// Value-at-risk: the `percentile`-th percentile of `values` using the
/// linear-interpolation convention h = (n-1)p/100 on the sorted sample.
/// `percentile` must lie strictly between 0 and 100.
pub fn value_at_risk(values: &[f64], percentile: f64) -> Result<f64, UqError> {
    check_values(values)?;
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(UqError::BadPercentile(percentile));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("values checked finite"));
    let n = sorted.len();
    let h = (n as f64 - 1.0) * percentile / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    } else {
        Ok(sorted[n - 1])
    }
}

/// One reported tail level of a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarLevel {
    pub percentile: f64,
    pub value: f64,
}

/// Summary statistics of a pushforward sample for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub metric: Metric,
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator); zero for a single sample.
    pub std: f64,
    /// Midpoint of the tallest bin of a 100-bin histogram.
    pub mode: f64,
    pub min: f64,
    pub max: f64,
    pub var_levels: Vec<VarLevel>,
}

impl DistributionSummary {
    /// Flat `key = value` rendering, one line per statistic, suitable for
    /// both human reading and machine diffing.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("metric = {}\n", self.metric));
        out.push_str(&format!("n_samples = {}\n", self.n_samples));
        out.push_str(&format!("mean = {}\n", self.mean));
        out.push_str(&format!("std = {}\n", self.std));
        out.push_str(&format!("mode = {}\n", self.mode));
        out.push_str(&format!("min = {}\n", self.min));
        out.push_str(&format!("max = {}\n", self.max));
        for level in &self.var_levels {
            out.push_str(&format!("var_{} = {}\n", level.percentile, level.value));
        }
        out
    }
}

/// Summarize a sample: moments, range, histogram mode, and tail levels at the
/// requested percentiles (each strictly between 0 and 100).
pub fn summarize(
    metric: Metric,
    values: &[f64],
    percentiles: &[f64],
) -> Result<DistributionSummary, UqError> {
    check_values(values)?;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mode = empirical_pdf(values, MODE_BINS)?.mode();
    let mut var_levels = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        var_levels.push(VarLevel {
            percentile: p,
            value: value_at_risk(values, p)?,
        });
    }
    Ok(DistributionSummary {
        metric,
        n_samples: n,
        mean,
        std,
        mode,
        min,
        max,
        var_levels,
    })
}

/// One histogram bin over `[lo, hi)` (the last bin is closed on the right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

/// Equal-width density histogram; densities integrate to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: Vec<HistogramBin>,
    n_samples: usize,
}

impl Histogram {
    pub fn bins(&self) -> &[HistogramBin] {
        &self.bins
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Index of the tallest bin; ties resolve to the leftmost.
    pub fn tallest_bin(&self) -> usize {
        let mut best = 0;
        for (i, b) in self.bins.iter().enumerate() {
            if b.density > self.bins[best].density {
                best = i;
            }
        }
        best
    }

    /// Midpoint of the tallest bin.
    pub fn mode(&self) -> f64 {
        let b = &self.bins[self.tallest_bin()];
        0.5 * (b.lo + b.hi)
    }

    /// CSV rendering with a `bin_lo,bin_hi,density` header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,density\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.density));
        }
        out
    }
}

/// Empirical density over `bins` equal-width bins spanning the sample range.
///
/// An all-identical sample has no usable range; it collapses to a single
/// sliver bin centered on the value so the density still integrates to one.
pub fn empirical_pdf(values: &[f64], bins: usize) -> Result<Histogram, UqError> {
    check_values(values)?;
    if bins == 0 {
        return Err(UqError::NoBins);
    }
    let n = values.len();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    if min == max {
        let width = 1e-9 * min.abs().max(1.0);
        let lo = min - width / 2.0;
        let hi = min + width / 2.0;
        // Density from the stored bounds, not the ideal width, so the
        // integral over the bin as written is one.
        return Ok(Histogram {
            bins: vec![HistogramBin {
                lo,
                hi,
                density: 1.0 / (hi - lo),
            }],
            n_samples: n,
        });
    }

    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - min) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let bins_out = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| HistogramBin {
            lo: min + k as f64 * width,
            hi: if k + 1 == bins {
                max
            } else {
                min + (k + 1) as f64 * width
            },
            density: c as f64 / (n as f64 * width),
        })
        .collect();
    Ok(Histogram {
        bins: bins_out,
        n_samples: n,
    })
}

fn check_values(values: &[f64]) -> Result<(), UqError> {
    if values.is_empty() {
        return Err(UqError::NoSamples);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(UqError::NonFiniteValue);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_levels_interpolate_between_order_statistics() {
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((value_at_risk(&hundred, 90.0).unwrap() - 90.1).abs() < 1e-12);

        let four = [4.0, 2.0, 1.0, 3.0];
        assert!((value_at_risk(&four, 90.0).unwrap() - 3.7).abs() < 1e-12);
        assert!((value_at_risk(&four, 50.0).unwrap() - 2.5).abs() < 1e-12);

        let one = [5.0];
        assert_eq!(value_at_risk(&one, 37.5).unwrap(), 5.0);
    }

    #[test]
    fn percentiles_must_be_strictly_inside_the_open_interval() {
        let v = [1.0, 2.0];
        for p in [0.0, 100.0, -5.0, 120.0] {
            assert!(matches!(
                value_at_risk(&v, p),
                Err(UqError::BadPercentile(_))
            ));
        }
        assert!(value_at_risk(&v, 0.0001).is_ok());
        assert!(value_at_risk(&v, 99.9999).is_ok());
    }

    #[test]
    fn histogram_densities_integrate_to_one() {
        let values: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let hist = empirical_pdf(&values, 40).unwrap();
        assert_eq!(hist.bins().len(), 40);
        let mass: f64 = hist.bins().iter().map(|b| b.density * (b.hi - b.lo)).sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass = {mass}");
        let first = hist.bins().first().unwrap();
        let last = hist.bins().last().unwrap();
        assert_eq!(first.lo, values.iter().cloned().fold(f64::INFINITY, f64::min));
        assert_eq!(last.hi, values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn identical_values_collapse_to_a_sliver_bin() {
        let hist = empirical_pdf(&[3.0; 7], 25).unwrap();
        assert_eq!(hist.bins().len(), 1);
        let b = hist.bins()[0];
        assert!((b.hi - b.lo - 3.0e-9).abs() < 1e-15);
        assert!((b.density * (b.hi - b.lo) - 1.0).abs() < 1e-9);
        assert!((hist.mode() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mode_ties_resolve_to_the_leftmost_bin() {
        // Two equally tall bins; the lower one wins.
        let values = [0.5, 0.5, 9.5, 9.5, 5.0];
        let hist = empirical_pdf(&values, 10).unwrap();
        assert_eq!(hist.tallest_bin(), 0);
        assert!((hist.mode() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn summary_of_a_single_sample_is_degenerate_but_defined() {
        let s = summarize(Metric::Hic15, &[12.5], &[90.0]).unwrap();
        assert_eq!(s.n_samples, 1);
        assert_eq!(s.mean, 12.5);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.min, 12.5);
        assert_eq!(s.max, 12.5);
        assert!((s.mode - 12.5).abs() < 1e-9);
        assert_eq!(s.var_levels[0].value, 12.5);
    }

    #[test]
    fn summary_statistics_sit_inside_the_sample_range() {
        let values: Vec<f64> = (0..1000)
            .map(|i| 20.0 + 8.0 * ((i as f64) * 0.11).sin() + 0.002 * i as f64)
            .collect();
        let s = summarize(Metric::AT1Max, &values, &[50.0, 90.0, 95.0]).unwrap();
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert!(s.min <= s.mode && s.mode <= s.max);
        let mut prev = f64::NEG_INFINITY;
        for level in &s.var_levels {
            assert!(level.value >= prev, "tail levels must be non-decreasing");
            assert!(level.value >= s.min && level.value <= s.max);
            prev = level.value;
        }
    }

    #[test]
    fn kv_rendering_is_stable_and_complete() {
        let s = summarize(Metric::Hic15, &[1.0, 2.0, 3.0, 4.0], &[90.0]).unwrap();
        let text = s.to_kv_string();
        assert!(text.starts_with("metric = hic15\n"));
        assert!(text.contains("n_samples = 4\n"));
        assert!(text.contains("mean = 2.5\n"));
        assert!(text.contains("var_90 = 3.7"));
        assert_eq!(text, s.to_kv_string());
    }

    #[test]
    fn lhs_fills_every_stratum_once_per_axis() {
        let box_ = DesignBox::new((-10.0, 10.0), (-5.0, 5.0)).unwrap();
        for n in [1usize, 4, 25] {
            let pts = lhs_sample(n, &box_, 7).unwrap();
            assert_eq!(pts.len(), n);
            for dim in 0..2 {
                let mut seen = vec![false; n];
                for p in &pts {
                    let u = box_.normalize(*p)[dim];
                    assert!((0.0..1.0).contains(&u));
                    let stratum = (u * n as f64) as usize;
                    assert!(!seen[stratum], "stratum {stratum} hit twice on axis {dim}");
                    seen[stratum] = true;
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn lhs_is_deterministic_per_seed_and_varies_across_seeds() {
        let box_ = DesignBox::default();
        let a = lhs_sample(50, &box_, 42).unwrap();
        let b = lhs_sample(50, &box_, 42).unwrap();
        assert_eq!(a, b);
        let c = lhs_sample(50, &box_, 43).unwrap();
        assert_ne!(a, c);
        assert!(matches!(lhs_sample(0, &box_, 1), Err(UqError::NoSamples)));
    }
}
