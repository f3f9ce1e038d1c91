//! Reference solutions: exact and RK4 characteristic backtraces for
//! u-independent speeds, and self-converged upwind finite differences for
//! everything else.

mod characteristics;
mod fd;

pub use characteristics::{backtrace_rk4, characteristics_rk4, exact_constant_speed, Landing, MAX_ODE_STEPS};
pub use fd::{upwind_fd, upwind_fd_at, DEFAULT_CFL};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{AdvectionProblem, SpeedSpec};

pub const DEFAULT_DT_ODE: f64 = 1e-3;
pub const DEFAULT_FD_DX: f64 = 1.0 / 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Exact,
    CharacteristicsRk4,
    UpwindFd,
}

impl OracleMethod {
    pub fn name(self) -> &'static str {
        match self {
            OracleMethod::Exact => "exact",
            OracleMethod::CharacteristicsRk4 => "characteristics-rk4",
            OracleMethod::UpwindFd => "upwind-fd",
        }
    }
}

/// Solution values on an `x × t` grid; `values[k][i]` is at `(x[i], t[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub method: OracleMethod,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub dx: f64,
    /// Largest FD step, or the ODE step for backtraces; 0 for the exact method.
    pub dt: f64,
    pub cfl: Option<f64>,
}

#[derive(Serialize)]
struct CsvHeader<'a> {
    method: &'a str,
    dx: f64,
    dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cfl: Option<f64>,
}

impl ReferenceSolution {
    /// Linear interpolation in `x` on the slice at `t[k]`.
    pub fn interpolate(&self, k: usize, x: f64) -> f64 {
        let xs = &self.x;
        let vals = &self.values[k];
        if x <= xs[0] {
            return vals[0];
        }
        if x >= xs[xs.len() - 1] {
            return vals[vals.len() - 1];
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
        if w == 0.0 {
            vals[i]
        } else {
            vals[i] + w * (vals[i + 1] - vals[i])
        }
    }

    /// Index of the recorded time equal to `t`, if any.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.t.iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// `# {json metadata}` followed by `config_hash,t,x,value` rows.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let header = CsvHeader { method: self.method.name(), dx: self.dx, dt: self.dt, cfl: self.cfl };
        let mut out = format!("# {}\nconfig_hash,t,x,value\n", serde_json::to_string(&header).expect("header"));
        for (k, &t) in self.t.iter().enumerate() {
            for (i, &x) in self.x.iter().enumerate() {
                let _ = writeln!(out, "{config_hash},{t},{x},{}", self.values[k][i]);
            }
        }
        out
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// How to compute a reference solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Oracle {
    Exact,
    CharacteristicsRk4 { dt_ode: f64 },
    UpwindFd { dx: f64, cfl: f64 },
}

impl Oracle {
    /// Exact for constant speeds, RK4 backtrace for other u-independent
    /// speeds, upwind FD at dx = 1/2000 otherwise or with a source.
    pub fn auto(problem: &AdvectionProblem) -> Self {
        if problem.has_source() || problem.speed.depends_on_u() {
            return Oracle::UpwindFd { dx: DEFAULT_FD_DX, cfl: DEFAULT_CFL };
        }
        match problem.speed {
            SpeedSpec::Constant { .. } => Oracle::Exact,
            _ => Oracle::CharacteristicsRk4 { dt_ode: DEFAULT_DT_ODE },
        }
    }

    pub fn method(&self) -> OracleMethod {
        match self {
            Oracle::Exact => OracleMethod::Exact,
            Oracle::CharacteristicsRk4 { .. } => OracleMethod::CharacteristicsRk4,
            Oracle::UpwindFd { .. } => OracleMethod::UpwindFd,
        }
    }

    /// Reference values at every `(xs[i], times[k])`.
    pub fn solve(&self, problem: &AdvectionProblem, xs: &[f64], times: &[f64]) -> Result<ReferenceSolution> {
        let dx = if xs.len() > 1 { xs[1] - xs[0] } else { 0.0 };
        let pointwise = |f: &dyn Fn(f64, f64) -> Result<f64>| -> Result<Vec<Vec<f64>>> {
            times.iter().map(|&t| xs.iter().map(|&x| f(x, t)).collect()).collect()
        };
        match *self {
            Oracle::Exact => Ok(ReferenceSolution {
                method: OracleMethod::Exact,
                x: xs.to_vec(),
                t: times.to_vec(),
                values: pointwise(&|x, t| exact_constant_speed(problem, x, t))?,
                dx,
                dt: 0.0,
                cfl: None,
            }),
            Oracle::CharacteristicsRk4 { dt_ode } => Ok(ReferenceSolution {
                method: OracleMethod::CharacteristicsRk4,
                x: xs.to_vec(),
                t: times.to_vec(),
                values: pointwise(&|x, t| characteristics_rk4(problem, x, t, dt_ode))?,
                dx,
                dt: dt_ode,
                cfl: None,
            }),
            Oracle::UpwindFd { dx: h, cfl } => {
                let fine = upwind_fd_at(problem, h, cfl, times)?;
                let values = (0..times.len()).map(|k| xs.iter().map(|&x| fine.interpolate(k, x)).collect()).collect();
                Ok(ReferenceSolution { x: xs.to_vec(), values, ..fine })
            }
        }
    }
}

/// Total variation of the initial data over `[a, b]` plus the boundary data
/// over `[0, T]`, including the corner mismatch at `t = 0`.
pub fn data_total_variation(problem: &AdvectionProblem) -> f64 {
    const SAMPLES: usize = 200_000;
    let mut tv = problem.ic.total_variation(problem.x_min(), problem.x_max(), SAMPLES);
    for bc in &problem.bc {
        tv += bc.data.total_variation(0.0, problem.t_max(), SAMPLES);
        tv += (bc.data.eval(0.0) - problem.ic.eval(problem.side_x(bc.side))).abs();
    }
    tv
}

/// `∫ |p − q| dx` over a shared equispaced grid (trapezoid rule).
pub fn l1_distance(xs: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    xs.windows(2).zip(d.windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum()
}

/// Range of the initial and boundary data, the bounds the homogeneous
/// equation's solution must respect.
pub fn data_range(problem: &AdvectionProblem) -> (f64, f64) {
    const SAMPLES: usize = 20_000;
    let (a, b) = (problem.x_min(), problem.x_max());
    let (mut lo, mut hi) = problem.ic.range_on((0..=SAMPLES).map(|i| a + (b - a) * i as f64 / SAMPLES as f64));
    for bc in &problem.bc {
        let (l, h) = bc.data.range_on((0..=SAMPLES).map(|i| problem.t_max() * i as f64 / SAMPLES as f64));
        lo = lo.min(l);
        hi = hi.max(h);
    }
    (lo, hi)
}

/// Positions where a slice crosses `level`, by linear interpolation.
pub fn level_crossings(xs: &[f64], values: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        let (a, b) = (values[i] - level, values[i + 1] - level);
        if a == 0.0 {
            out.push(xs[i]);
        } else if a * b < 0.0 {
            out.push(xs[i] + (xs[i + 1] - xs[i]) * a / (a - b));
        }
    }
    out
}

/// L1 distance between the upwind and backtrace solutions at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleGap {
    pub t: f64,
    pub l1: f64,
    /// `5 · dx · TV(data)`.
    pub bound: f64,
}

/// Compares upwind FD at `dx` with the RK4 backtrace on the FD grid at each
/// of `times`. Needs a u-independent speed and no source.
pub fn cross_oracle_gap(
    problem: &AdvectionProblem,
    dx: f64,
    cfl: f64,
    dt_ode: f64,
    times: &[f64],
) -> Result<Vec<OracleGap>> {
    let fd = upwind_fd_at(problem, dx, cfl, times)?;
    let ch = Oracle::CharacteristicsRk4 { dt_ode }.solve(problem, &fd.x, times)?;
    let bound = 5.0 * fd.dx * data_total_variation(problem);
    Ok((0..times.len())
        .map(|k| OracleGap { t: times[k], l1: l1_distance(&fd.x, &fd.values[k], &ch.values[k]), bound })
        .collect())
}

/// Whether every value lies within the range of the initial and boundary data.
pub fn respects_data_range(problem: &AdvectionProblem, solution: &ReferenceSolution) -> bool {
    let (lo, hi) = data_range(problem);
    let (min, max) = solution.min_max();
    lo <= min && max <= hi
}

/// Comparison of the upwind solution at `dx` with the one at `dx/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfConvergence {
    pub t: f64,
    pub dx: f64,
    /// L1 distance between the two resolutions at `t`.
    pub l1_diff: f64,
    /// Largest shift of a half-level crossing between the resolutions.
    pub max_front_shift: f64,
    pub fronts_coarse: Vec<f64>,
    pub fronts_fine: Vec<f64>,
}

pub fn self_convergence(problem: &AdvectionProblem, dx: f64, cfl: f64, t: f64) -> Result<SelfConvergence> {
    let coarse = upwind_fd_at(problem, dx, cfl, &[t])?;
    let fine = upwind_fd_at(problem, dx / 2.0, cfl, &[t])?;
    let fine_on_coarse: Vec<f64> = coarse.x.iter().map(|&x| fine.interpolate(0, x)).collect();
    let l1_diff = l1_distance(&coarse.x, &coarse.values[0], &fine_on_coarse);
    let (lo, hi) = data_range(problem);
    let level = 0.5 * (lo + hi);
    let fc = level_crossings(&coarse.x, &coarse.values[0], level);
    let ff = level_crossings(&fine.x, &fine.values[0], level);
    if fc.len() != ff.len() {
        return Err(Error::Oracle(format!(
            "front count differs under refinement: {} at dx, {} at dx/2",
            fc.len(),
            ff.len()
        )));
    }
    let max_front_shift = fc.iter().zip(&ff).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(SelfConvergence { t, dx: coarse.dx, l1_diff, max_front_shift, fronts_coarse: fc, fronts_fine: ff })
}
