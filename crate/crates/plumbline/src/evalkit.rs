//! Evaluation protocol: angular-error summaries, tilt-binned
//! breakdowns, gate diagnostics, the assume-upright baseline, and a
//! direction-density grid for external plotting.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom3::{angle_deg, arkit_to_euroc, UnitVec3};
use crate::labels::tilt_deg;

/// Distribution summary of angular errors in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub count: usize,
}

/// Percentile by linear interpolation between closest ranks with
/// inclusive endpoints, over an ascending-sorted slice.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean, median, P90 and P95 of a set of angular errors.
pub fn summarize(errors_deg: &[f64]) -> Result<ErrorSummary> {
    if errors_deg.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = errors_deg.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(ErrorSummary {
        mean,
        median: percentile_sorted(&sorted, 50.0),
        p90: percentile_sorted(&sorted, 90.0),
        p95: percentile_sorted(&sorted, 95.0),
        count: sorted.len(),
    })
}

/// Per-bin error summaries over camera tilt.
#[derive(Debug, Clone, Serialize)]
pub struct TiltBinReport {
    /// Bin edges partitioning [0, 180]; bin i covers
    /// [edges[i], edges[i+1]), with the final bin closed.
    pub edges: Vec<f64>,
    pub bins: Vec<Option<ErrorSummary>>,
    pub counts: Vec<usize>,
}

/// Default edges matching the six 30-degree breakdown bins.
pub fn tilt_edges_30() -> Vec<f64> {
    vec![0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0]
}

/// Default edges matching the three-bin orientation split.
pub fn tilt_edges_60() -> Vec<f64> {
    vec![0.0, 60.0, 120.0, 180.0]
}

fn validate_tilt_edges(edges: &[f64]) -> Result<()> {
    let ok = edges.len() >= 2
        && edges[0] == 0.0
        && edges[edges.len() - 1] == 180.0
        && edges.windows(2).all(|w| w[0] < w[1]);
    if !ok {
        return Err(Error::InvalidConfig(format!(
            "tilt edges must partition [0, 180], got {edges:?}"
        )));
    }
    Ok(())
}

/// Bin index under the right-open rule with the final bin closed.
fn bin_index(edges: &[f64], value: f64) -> usize {
    let last = edges.len() - 2;
    for i in 0..=last {
        if (value < edges[i + 1] || i == last) && (value >= edges[i] || i == 0) {
            return i;
        }
    }
    last
}

/// Bin frames by the tilt of the ground-truth gravity and summarize
/// the prediction error inside each bin.
pub fn tilt_breakdown(
    frames: &[(UnitVec3, UnitVec3)],
    edges: &[f64],
) -> Result<TiltBinReport> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    validate_tilt_edges(edges)?;
    let n_bins = edges.len() - 1;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (pred, g_gt) in frames {
        per_bin[bin_index(edges, tilt_deg(*g_gt))].push(angle_deg(*pred, *g_gt));
    }
    let counts: Vec<usize> = per_bin.iter().map(|b| b.len()).collect();
    let bins = per_bin
        .iter()
        .map(|b| {
            if b.is_empty() {
                None
            } else {
                Some(summarize(b).expect("non-empty bin"))
            }
        })
        .collect();
    Ok(TiltBinReport { edges: edges.to_vec(), bins, counts })
}

/// Which camera convention the upright constant is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UprightFrame {
    /// (0, 1, 0) in the ARKit camera frame, converted to the EuRoC
    /// convention for comparison.
    #[default]
    Arkit,
    /// (0, 1, 0) used directly in the EuRoC convention.
    Euroc,
}

/// The constant-prediction baseline: every frame gets the "camera is
/// upright" gravity direction.
pub fn assume_upright(n: usize, frame: UprightFrame) -> Vec<UnitVec3> {
    let y = UnitVec3::new(0.0, 1.0, 0.0).expect("unit");
    let g = match frame {
        UprightFrame::Arkit => arkit_to_euroc(y),
        UprightFrame::Euroc => y,
    };
    vec![g; n]
}

/// Mean gate value per bin over some per-frame quantity.
#[derive(Debug, Clone, Serialize)]
pub struct GateBinReport {
    /// Inner thresholds; bin 0 is below the first threshold, the last
    /// bin is at or above the final one (right-open rule throughout).
    pub thresholds: Vec<f64>,
    pub mean_tau: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Prior-error bin thresholds used by the gate diagnostics.
pub fn prior_error_thresholds() -> Vec<f64> {
    vec![10.0, 20.0, 30.0, 45.0, 60.0]
}

/// Non-gravity-ratio bin thresholds used by the gate diagnostics.
pub fn nongravity_thresholds() -> Vec<f64> {
    vec![0.05, 0.10, 0.20, 0.50]
}

/// One frame's gate value with the two quality proxies it is binned by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateFrame {
    pub tau: f64,
    pub prior_error_deg: f64,
    pub nongravity_ratio: f64,
}

fn gate_bins(
    frames: &[GateFrame],
    thresholds: &[f64],
    key: impl Fn(&GateFrame) -> f64,
) -> GateBinReport {
    let n_bins = thresholds.len() + 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for f in frames {
        let v = key(f);
        let idx = thresholds.partition_point(|&t| t <= v);
        sums[idx] += f.tau;
        counts[idx] += 1;
    }
    let mean_tau = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    GateBinReport { thresholds: thresholds.to_vec(), mean_tau, counts }
}

/// Mean gate value binned by prior error and by non-gravity ratio,
/// with the standard diagnostic edges.
pub fn gate_diagnostics(frames: &[GateFrame]) -> Result<(GateBinReport, GateBinReport)> {
    gate_diagnostics_with(frames, &prior_error_thresholds(), &nongravity_thresholds())
}

/// Same as [`gate_diagnostics`] with custom thresholds.
pub fn gate_diagnostics_with(
    frames: &[GateFrame],
    prior_thresholds: &[f64],
    ratio_thresholds: &[f64],
) -> Result<(GateBinReport, GateBinReport)> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((
        gate_bins(frames, prior_thresholds, |f| f.prior_error_deg),
        gate_bins(frames, ratio_thresholds, |f| f.nongravity_ratio),
    ))
}

/// Direction counts over an (tilt x azimuth) grid on the sphere, the
/// plottable stand-in for a sphere heatmap.
#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub tilt_bins: usize,
    pub azimuth_bins: usize,
    /// Row-major counts, tilt rows from 0 to 180 degrees, azimuth
    /// columns from -180 to 180.
    pub counts: Vec<usize>,
}

/// Histogram directions over the sphere grid.
pub fn direction_density(
    dirs: &[UnitVec3],
    tilt_bins: usize,
    azimuth_bins: usize,
) -> Result<DensityGrid> {
    if dirs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tilt_bins == 0 || azimuth_bins == 0 {
        return Err(Error::InvalidConfig("density grid needs positive bins".into()));
    }
    let mut counts = vec![0usize; tilt_bins * azimuth_bins];
    for d in dirs {
        let tilt = tilt_deg(*d); // [0, 180]
        let az = d.y.atan2(d.x); // [-pi, pi]
        let ti = (((tilt / 180.0) * tilt_bins as f64) as usize).min(tilt_bins - 1);
        let ai_raw = (az + std::f64::consts::PI) / std::f64::consts::TAU;
        let ai = ((ai_raw * azimuth_bins as f64) as usize).min(azimuth_bins - 1);
        counts[ti * azimuth_bins + ai] += 1;
    }
    Ok(DensityGrid { tilt_bins, azimuth_bins, counts })
}

// ---------------------------------------------------------------------------
// Table rendering

/// Fixed-width rows for the method-comparison table.
pub fn render_summary_table(rows: &[(&str, ErrorSummary)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>8} {:>8} {:>8} {:>8}\n",
        "method", "mean", "median", "p90", "p95"
    ));
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<18} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            name, s.mean, s.median, s.p90, s.p95
        ));
    }
    out
}

/// Fixed-width rendering of a tilt breakdown.
pub fn render_tilt_table(report: &TiltBinReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "tilt bin", "count", "mean", "median", "p90", "p95"
    ));
    for (i, (bin, count)) in report.bins.iter().zip(&report.counts).enumerate() {
        let label = format!("{:.0}-{:.0} deg", report.edges[i], report.edges[i + 1]);
        match bin {
            Some(s) => out.push_str(&format!(
                "{:<14} {:>8} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                label, count, s.mean, s.median, s.p90, s.p95
            )),
            None => out.push_str(&format!("{label:<14} {count:>8} {:>8}\n", "-")),
        }
    }
    out
}

/// Fixed-width rendering of a gate diagnostic.
pub fn render_gate_table(report: &GateBinReport, quantity: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<16} {:>8} {:>8}\n", quantity, "count", "mean tau"));
    let n = report.thresholds.len();
    for i in 0..=n {
        let label = if i == 0 {
            format!("< {}", report.thresholds[0])
        } else if i == n {
            format!(">= {}", report.thresholds[n - 1])
        } else {
            format!("{} - {}", report.thresholds[i - 1], report.thresholds[i])
        };
        match report.mean_tau[i] {
            Some(t) => out.push_str(&format!(
                "{:<16} {:>8} {:>8.3}\n",
                label, report.counts[i], t
            )),
            None => out.push_str(&format!("{:<16} {:>8} {:>8}\n", label, report.counts[i], "-")),
        }
    }
    out
}
