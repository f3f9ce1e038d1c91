//! Spatial median filtering of network slices and error metrics.
//!
//! Filtering is applied per time slice along x only. Indices within the
//! margin at either end are copied through untouched.

use serde::{Deserialize, Serialize};

use crate::diffcore::evaluate_batch;
use crate::error::{Error, Result};
use crate::model::PinnModel;
use crate::problems::AdvectionProblem;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_MARGIN: usize = 2;
pub const DEFAULT_NX: usize = 401;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianFilterConfig {
    #[serde(default = "default_window")]
    pub k: usize,
    #[serde(default = "default_margin")]
    pub margin: usize,
    /// Grid spacing for the slices; overrides `n_x` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_spacing: Option<f64>,
    #[serde(default = "default_nx")]
    pub n_x: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_margin() -> usize {
    DEFAULT_MARGIN
}

fn default_nx() -> usize {
    DEFAULT_NX
}

impl Default for MedianFilterConfig {
    fn default() -> Self {
        Self { k: DEFAULT_WINDOW, margin: DEFAULT_MARGIN, probe_spacing: None, n_x: DEFAULT_NX }
    }
}

impl MedianFilterConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.k)?;
        if let Some(h) = self.probe_spacing {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("probe spacing must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Number of slice points over `[a, b]`.
    pub fn points(&self, problem: &AdvectionProblem) -> usize {
        match self.probe_spacing {
            Some(h) => ((problem.x_max() - problem.x_min()) / h).round() as usize + 1,
            None => self.n_x,
        }
    }
}

fn check_window(k: usize) -> Result<()> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("median window must be odd and at least 3, got {k}")));
    }
    Ok(())
}

/// Replaces each interior value with the median of the `k` values centred on
/// it. The first and last `margin` entries are copied unchanged, as are any
/// indices whose window would run off the end.
pub fn median_filter_1d(values: &[f64], k: usize, margin: usize) -> Result<Vec<f64>> {
    check_window(k)?;
    if values.len() <= k {
        return Err(Error::InvalidArgument(format!("window {k} too large for {} values", values.len())));
    }
    let m = (k - 1) / 2;
    let n = values.len();
    let start = margin.max(m);
    let end = n.saturating_sub(margin.max(m));
    let mut out = values.to_vec();
    let mut window = vec![0.0; k];
    for i in start..end {
        window.copy_from_slice(&values[i - m..=i + m]);
        window.sort_by(f64::total_cmp);
        out[i] = window[m];
    }
    Ok(out)
}

/// One time slice of the network solution, before and after filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSlice {
    pub t: f64,
    pub x: Vec<f64>,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
    pub margin: usize,
}

impl SolutionSlice {
    /// Rows `t,x,raw,filtered` without a header.
    pub fn csv_rows(&self, out: &mut String) {
        use std::fmt::Write;
        for i in 0..self.x.len() {
            let _ = writeln!(out, "{},{},{},{}", self.t, self.x[i], self.raw[i], self.filtered[i]);
        }
    }
}

pub fn slice_grid(problem: &AdvectionProblem, n_x: usize) -> Vec<f64> {
    let (a, b) = (problem.x_min(), problem.x_max());
    let last = (n_x - 1).max(1) as f64;
    (0..n_x).map(|i| a + (b - a) * i as f64 / last).collect()
}

/// Evaluates the model on an equispaced x grid at each time and filters each
/// slice independently.
pub fn filter_solution(
    model: &PinnModel,
    problem: &AdvectionProblem,
    times: &[f64],
    cfg: &MedianFilterConfig,
) -> Result<Vec<SolutionSlice>> {
    cfg.validate()?;
    let n_x = cfg.points(problem);
    if n_x <= cfg.k {
        return Err(Error::InvalidArgument(format!("need more than {} slice points, got {n_x}", cfg.k)));
    }
    let x = slice_grid(problem, n_x);
    times
        .iter()
        .map(|&t| {
            let points: Vec<(f64, f64)> = x.iter().map(|&xi| (xi, t)).collect();
            let raw = evaluate_batch(model, &points)?;
            let filtered = median_filter_1d(&raw, cfg.k, cfg.margin)?;
            Ok(SolutionSlice { t, x: x.clone(), raw, filtered, margin: cfg.margin })
        })
        .collect()
}

/// Mean absolute difference.
pub fn mae(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "mae needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    Ok(predicted.iter().zip(reference).map(|(p, r)| (p - r).abs()).sum::<f64>() / predicted.len() as f64)
}

/// MAE over indices outside the first and last `margin` entries.
pub fn mae_interior(predicted: &[f64], reference: &[f64], margin: usize) -> Result<f64> {
    let n = predicted.len();
    if 2 * margin >= n {
        return Err(Error::InvalidArgument(format!("margin {margin} leaves no interior in {n} values")));
    }
    mae(&predicted[margin..n - margin], reference.get(margin..n - margin).unwrap_or(&[]))
}

/// Count of sign changes in the discrete second difference, ignoring exact
/// zeros. A rough oscillation measure.
pub fn second_difference_sign_changes(values: &[f64]) -> usize {
    let d2: Vec<f64> = values.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).filter(|d| d.abs() > 1e-12).collect();
    d2.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}
