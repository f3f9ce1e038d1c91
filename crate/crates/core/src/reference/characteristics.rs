//! Backtracing characteristics of u-independent speeds.

use crate::error::{Error, Result};
use crate::problems::{AdvectionProblem, Side, SpeedSpec};

pub const MAX_ODE_STEPS: usize = 10_000_000;

fn constant_speed(problem: &AdvectionProblem) -> Result<f64> {
    match problem.speed {
        SpeedSpec::Constant { value } => Ok(value),
        _ => Err(Error::Oracle("exact backtrace needs a constant speed".into())),
    }
}

fn no_source(problem: &AdvectionProblem) -> Result<()> {
    if problem.has_source() {
        return Err(Error::Oracle("characteristic oracles assume a zero source".into()));
    }
    Ok(())
}

fn boundary_value(problem: &AdvectionProblem, side: Side, t: f64, x: f64) -> Result<f64> {
    match problem.boundary(side) {
        Some(bc) => Ok(bc.data.eval(t)),
        None => Err(Error::CharacteristicExit { x, t }),
    }
}

/// Value at `(x, t)` for a constant speed: the initial value at `x − a t`,
/// or the inflow data at the time the characteristic entered.
pub fn exact_constant_speed(problem: &AdvectionProblem, x: f64, t: f64) -> Result<f64> {
    let a = constant_speed(problem)?;
    no_source(problem)?;
    let foot = x - a * t;
    if problem.x_min() <= foot && foot <= problem.x_max() {
        return Ok(problem.ic.eval(foot));
    }
    let (side, dist) =
        if foot < problem.x_min() { (Side::Left, x - problem.x_min()) } else { (Side::Right, problem.x_max() - x) };
    let t0 = t - dist / a.abs();
    if t0 < 0.0 {
        return Err(Error::CharacteristicExit { x, t });
    }
    boundary_value(problem, side, t0, x)
}

fn rk4_back(problem: &AdvectionProblem, x: f64, s: f64, h: f64) -> f64 {
    let a = |x: f64, s: f64| problem.speed.eval_f64(x, s, 0.0);
    let k1 = a(x, s);
    let k2 = a(x - 0.5 * h * k1, s - 0.5 * h);
    let k3 = a(x - 0.5 * h * k2, s - 0.5 * h);
    let k4 = a(x - h * k3, s - h);
    x - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Where a backward characteristic ends up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Landing {
    Initial { x: f64 },
    Boundary { side: Side, t: f64 },
}

/// Inflow through a side means the speed points into the domain there.
fn is_inflow(problem: &AdvectionProblem, side: Side, t: f64) -> bool {
    let a = problem.speed.eval_f64(problem.side_x(side), t, 0.0);
    match side {
        Side::Left => a > 0.0,
        Side::Right => a < 0.0,
    }
}

/// Integrates `dX/ds = a(X, s)` backward from `(x, t)` with classical RK4.
///
/// On a side with declared data the trace stops at the crossing. On a side
/// without data, the boundary value is held while that side is inflow, which
/// matches a zero-gradient ghost cell; the trace resumes from the last time
/// the side was not inflow.
pub fn backtrace_rk4(problem: &AdvectionProblem, x: f64, t: f64, dt_ode: f64) -> Result<Landing> {
    if problem.speed.depends_on_u() {
        return Err(Error::Oracle("characteristic backtrace needs a u-independent speed".into()));
    }
    if !(dt_ode > 0.0) {
        return Err(Error::InvalidArgument("dt_ode must be positive".into()));
    }
    let (lo, hi) = (problem.x_min(), problem.x_max());
    let (mut xc, mut s) = (x.clamp(lo, hi), t);
    let mut steps = 0usize;
    while s > 0.0 {
        steps += 1;
        if steps > MAX_ODE_STEPS {
            return Err(Error::StepLimit(MAX_ODE_STEPS));
        }
        let h = dt_ode.min(s);
        let xn = rk4_back(problem, xc, s, h);
        if lo <= xn && xn <= hi {
            xc = xn;
            s = if h == s { 0.0 } else { s - h };
            continue;
        }
        let (side, wall) = if xn < lo { (Side::Left, lo) } else { (Side::Right, hi) };
        // Bisect the sub-step length at which the trace reaches the wall.
        let (mut a, mut b) = (0.0, h);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let xm = rk4_back(problem, xc, s, m);
            if (lo..=hi).contains(&xm) {
                a = m;
            } else {
                b = m;
            }
        }
        let s_cross = (s - 0.5 * (a + b)).max(0.0);
        if problem.boundary(side).is_some() {
            return Ok(Landing::Boundary { side, t: s_cross });
        }
        let mut s_hold = s_cross;
        while s_hold > 0.0 && is_inflow(problem, side, s_hold) {
            steps += 1;
            if steps > MAX_ODE_STEPS {
                return Err(Error::StepLimit(MAX_ODE_STEPS));
            }
            let next = (s_hold - dt_ode).max(0.0);
            if !is_inflow(problem, side, next) {
                let (mut a, mut b) = (next, s_hold);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if is_inflow(problem, side, m) {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                s_hold = a;
                break;
            }
            s_hold = next;
        }
        xc = wall;
        s = s_hold;
    }
    Ok(Landing::Initial { x: xc })
}

/// Solution value at `(x, t)` for a u-independent speed and zero source.
pub fn characteristics_rk4(problem: &AdvectionProblem, x: f64, t: f64, dt_ode: f64) -> Result<f64> {
    no_source(problem)?;
    match backtrace_rk4(problem, x, t, dt_ode)? {
        Landing::Initial { x } => Ok(problem.ic.eval(x)),
        Landing::Boundary { side, t: tb } => boundary_value(problem, side, tb, x),
    }
}
