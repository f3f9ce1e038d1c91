//! The five benchmark problems.

use super::{
    AdvectionProblem, BoundaryCondition, BoundaryOperator, Bounds, Domain, PiecewiseFunction, Side, SpeedSpec,
};
use crate::error::{Error, Result};
use crate::expr::Expr;

pub const CATALOG_NAMES: [&str; 5] =
    ["linear-pulses", "linear-pulses-bc-jump", "sin-speed", "nonlinear-single-pulse", "nonlinear-three-pulse"];

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

fn e(src: &str) -> Expr {
    Expr::parse(src).expect("catalog expression")
}

/// Five pulses of heights 0.6, 0.8, 1.0, 0.8, 0.6 and half-width 0.1.
fn five_pulses() -> PiecewiseFunction {
    PiecewiseFunction::constant(0.0)
        .with_pulse(0.2, 0.1, c(0.6))
        .with_pulse(0.55, 0.1, c(0.8))
        .with_pulse(0.9, 0.1, c(1.0))
        .with_pulse(1.25, 0.1, c(0.8))
        .with_pulse(1.6, 0.1, c(0.6))
}

fn left_dirichlet(data: PiecewiseFunction) -> Vec<BoundaryCondition> {
    vec![BoundaryCondition { side: Side::Left, operator: BoundaryOperator::Dirichlet, data }]
}

fn unit_domain() -> Domain {
    Domain { x: [0.0, 2.0], t_max: 1.0 }
}

pub fn catalog(name: &str) -> Result<AdvectionProblem> {
    let problem = match name {
        "linear-pulses" => AdvectionProblem {
            name: Some(name.into()),
            domain: unit_domain(),
            speed: SpeedSpec::Constant { value: 2.0 },
            source: None,
            ic: five_pulses(),
            bc: left_dirichlet(PiecewiseFunction::constant(0.0)),
            bounds: Some(Bounds { min: 0.0, max: 1.0 }),
        },
        "linear-pulses-bc-jump" => AdvectionProblem {
            name: Some(name.into()),
            domain: unit_domain(),
            speed: SpeedSpec::Constant { value: 2.0 },
            source: None,
            ic: five_pulses(),
            bc: left_dirichlet(PiecewiseFunction::constant(0.0).with_interval(0.5, f64::INFINITY, c(0.5))),
            bounds: Some(Bounds { min: 0.0, max: 1.0 }),
        },
        "sin-speed" => AdvectionProblem {
            name: Some(name.into()),
            domain: unit_domain(),
            speed: SpeedSpec::Spacetime { expr: e("0.6*sin(6*x*t)") },
            source: None,
            ic: five_pulses(),
            bc: left_dirichlet(PiecewiseFunction::constant(0.0)),
            bounds: Some(Bounds { min: 0.0, max: 1.0 }),
        },
        "nonlinear-single-pulse" => AdvectionProblem {
            name: Some(name.into()),
            domain: unit_domain(),
            speed: SpeedSpec::Factored { expr: e("(1-x)*(1.5+t)") },
            source: None,
            ic: PiecewiseFunction::constant(0.0).with_pulse(1.0, 0.1, c(1.0)),
            bc: left_dirichlet(PiecewiseFunction::constant(0.0)),
            bounds: Some(Bounds { min: 0.0, max: 1.0 }),
        },
        // The polynomial factor times u is the coefficient of u_x.
        "nonlinear-three-pulse" => AdvectionProblem {
            name: Some(name.into()),
            domain: unit_domain(),
            speed: SpeedSpec::Factored { expr: e("(0.4-x)*(1-x)*(1.6-x)*(1.5+t)") },
            source: None,
            ic: PiecewiseFunction::constant(0.0)
                .with_pulse(0.4, 0.1, c(1.0))
                .with_pulse(1.0, 0.2, e("-sin((x-0.8)*pi/0.4)"))
                .with_pulse(1.6, 0.1, c(1.0)),
            bc: left_dirichlet(PiecewiseFunction::constant(0.0)),
            bounds: Some(Bounds { min: -1.0, max: 1.0 }),
        },
        _ => {
            return Err(Error::UnknownProblem {
                name: name.into(),
                valid: CATALOG_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(problem)
}
