//! First-order upwind finite differences with an adaptive CFL step.

use crate::error::{Error, Result};
use crate::problems::{AdvectionProblem, BoundaryOperator, Side};

use super::{OracleMethod, ReferenceSolution};

pub const DEFAULT_CFL: f64 = 0.9;

fn boundary_node(problem: &AdvectionProblem, side: Side, t: f64, inner: f64, dx: f64) -> Option<f64> {
    let bc = problem.boundary(side)?;
    let g = bc.data.eval(t);
    Some(match bc.operator {
        BoundaryOperator::Dirichlet => g,
        // α u_b + β ∂ₙu = g with a one-sided difference towards the interior.
        BoundaryOperator::Robin { alpha, beta } => (g + beta * inner / dx) / (alpha + beta / dx),
    })
}

/// Solves on a grid of spacing close to `dx` (adjusted to divide `[a, b]`)
/// and records the solution at each of `times`, which must be sorted and
/// lie in `[0, T]`. `dt` in the result is the largest step taken.
pub fn upwind_fd_at(problem: &AdvectionProblem, dx: f64, cfl: f64, times: &[f64]) -> Result<ReferenceSolution> {
    if !(dx > 0.0) || !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("need dx > 0 and cfl in (0, 1], got dx={dx}, cfl={cfl}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > problem.t_max()) {
        return Err(Error::InvalidArgument("output times must be sorted and within [0, T]".into()));
    }
    let (lo, hi) = (problem.x_min(), problem.x_max());
    let n = ((hi - lo) / dx).round().max(1.0) as usize;
    let dx = (hi - lo) / n as f64;
    let x: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();

    let mut u: Vec<f64> = x.iter().map(|&xi| problem.ic.eval(xi)).collect();
    let mut next = u.clone();
    let mut speed = vec![0.0; n + 1];
    let mut values = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut dt_max = 0.0f64;
    let source = problem.has_source();

    for &t_out in times {
        while t < t_out {
            let mut amax = 0.0f64;
            for i in 0..=n {
                speed[i] = problem.speed.eval_f64(x[i], t, u[i]);
                amax = amax.max(speed[i].abs());
            }
            if !amax.is_finite() {
                return Err(Error::Oracle(format!("non-finite speed at t = {t}")));
            }
            // The unit floor keeps a momentarily still field (sin(6xt) at t = 0)
            // from being jumped over in a single step.
            let mut dt = cfl * dx / amax.max(1.0);
            let mut t_new = t + dt;
            if t_new >= t_out || t_out - t_new < 1e-12 * problem.t_max() {
                dt = t_out - t;
                t_new = t_out;
            }
            dt_max = dt_max.max(dt);
            let nu = dt / dx;
            for i in 0..=n {
                let a = speed[i];
                // Ghost values repeat the end nodes (zero gradient).
                let diff = if a > 0.0 { u[i] - u[i.saturating_sub(1)] } else { u[(i + 1).min(n)] - u[i] };
                next[i] = u[i] - nu * a * diff;
                if source {
                    next[i] += dt * problem.source(x[i], t, u[i]);
                }
            }
            if let Some(v) = boundary_node(problem, Side::Left, t_new, next[1.min(n)], dx) {
                next[0] = v;
            }
            if let Some(v) = boundary_node(problem, Side::Right, t_new, next[n.saturating_sub(1)], dx) {
                next[n] = v;
            }
            std::mem::swap(&mut u, &mut next);
            t = t_new;
        }
        values.push(u.clone());
    }
    Ok(ReferenceSolution {
        method: OracleMethod::UpwindFd,
        x,
        t: times.to_vec(),
        values,
        dx,
        dt: dt_max,
        cfl: Some(cfl),
    })
}

/// Upwind solution recorded at 11 equispaced times over `[0, T]`.
pub fn upwind_fd(problem: &AdvectionProblem, dx: f64, cfl: f64) -> Result<ReferenceSolution> {
    let times: Vec<f64> = (0..=10).map(|k| problem.t_max() * k as f64 / 10.0).collect();
    upwind_fd_at(problem, dx, cfl, &times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::problems::{catalog, PiecewiseFunction};

    fn smooth_problem() -> AdvectionProblem {
        let mut p = catalog("linear-pulses").unwrap();
        p.ic = PiecewiseFunction { default: Expr::parse("sin(pi*x/2)").unwrap(), pieces: vec![] };
        p.bc[0].data = PiecewiseFunction { default: Expr::parse("-sin(pi*t)").unwrap(), pieces: vec![] };
        p.bounds = None;
        p
    }

    fn l1_error(p: &AdvectionProblem, dx: f64) -> f64 {
        let s = upwind_fd_at(p, dx, DEFAULT_CFL, &[0.5]).unwrap();
        let exact = |x: f64| (std::f64::consts::PI * (x - 1.0) / 2.0).sin();
        s.values[0].iter().zip(&s.x).map(|(v, &x)| (v - exact(x)).abs()).sum::<f64>() * s.dx
    }

    #[test]
    fn first_order_convergence_on_smooth_data() {
        let p = smooth_problem();
        let e1 = l1_error(&p, 1.0 / 100.0);
        let e2 = l1_error(&p, 1.0 / 200.0);
        let ratio = e1 / e2;
        assert!((1.6..=2.4).contains(&ratio), "{e1} {e2} {ratio}");
    }

    #[test]
    fn constant_state_is_preserved() {
        let mut p = catalog("nonlinear-single-pulse").unwrap();
        p.ic = PiecewiseFunction::constant(0.3);
        p.bc[0].data = PiecewiseFunction::constant(0.3);
        let s = upwind_fd(&p, 0.01, DEFAULT_CFL).unwrap();
        assert!(s.values.iter().flatten().all(|&v| v == 0.3));
    }

    #[test]
    fn zero_speed_is_a_pure_time_advance() {
        let mut p = catalog("linear-pulses").unwrap();
        p.speed = crate::problems::SpeedSpec::Constant { value: 0.0 };
        let s = upwind_fd(&p, 0.01, DEFAULT_CFL).unwrap();
        assert_eq!(s.values[10], s.values[0]);
    }

    #[test]
    fn robin_boundary_node() {
        let mut p = smooth_problem();
        p.bc[0].operator = BoundaryOperator::Robin { alpha: 1.0, beta: 0.0 };
        let d = upwind_fd_at(&p, 0.01, DEFAULT_CFL, &[0.3]).unwrap();
        let mut q = smooth_problem();
        q.bc[0].operator = BoundaryOperator::Dirichlet;
        let e = upwind_fd_at(&q, 0.01, DEFAULT_CFL, &[0.3]).unwrap();
        assert_eq!(d.values, e.values);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = catalog("linear-pulses").unwrap();
        assert!(upwind_fd(&p, 0.0, 0.9).is_err());
        assert!(upwind_fd(&p, 0.01, 1.5).is_err());
        assert!(upwind_fd_at(&p, 0.01, 0.9, &[0.5, 0.2]).is_err());
    }
}
