//! Advection problems `u_t + a(x,t,u) u_x = f(x,t,u)` on `[a,b] × [0,T]`
//! with piecewise initial and boundary data.

mod catalog;
mod collocation;

pub use catalog::{catalog, CATALOG_NAMES};
pub use collocation::{sample_collocation, CollocationSet, Strategy};

use serde::{Deserialize, Serialize};

use crate::diffcore::Real;
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};

/// One closed interval `[lo, hi]` carrying a constant or an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub value: Expr,
}

/// Piecewise data on one axis. The first piece whose closed interval
/// contains the argument wins; otherwise `default` applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFunction {
    #[serde(default = "zero_expr")]
    pub default: Expr,
    #[serde(default)]
    pub pieces: Vec<Piece>,
}

fn zero_expr() -> Expr {
    Expr::constant(0.0)
}

impl PiecewiseFunction {
    pub fn constant(c: f64) -> Self {
        Self { default: Expr::constant(c), pieces: Vec::new() }
    }

    /// Piece for `|s − center| ≤ radius`.
    pub fn with_pulse(mut self, center: f64, radius: f64, value: Expr) -> Self {
        self.pieces.push(Piece { lo: center - radius, hi: center + radius, value });
        self
    }

    pub fn with_interval(mut self, lo: f64, hi: f64, value: Expr) -> Self {
        self.pieces.push(Piece { lo, hi, value });
        self
    }

    /// Evaluates at `s`; expressions see `s` through their axis variable.
    pub fn eval(&self, s: f64) -> f64 {
        self.eval_generic(s)
    }

    pub(crate) fn eval_generic<T: Real>(&self, s: f64) -> T {
        let expr = self.pieces.iter().find(|p| p.lo <= s && s <= p.hi).map_or(&self.default, |p| &p.value);
        let v = T::cst(s);
        expr.eval(v, v, T::cst(0.0))
    }

    /// `(min, max)` over the supplied sample positions.
    pub fn range_on(&self, samples: impl Iterator<Item = f64>) -> (f64, f64) {
        samples.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let v = self.eval(s);
            (lo.min(v), hi.max(v))
        })
    }

    /// Sum of jumps at piece edges plus variation inside expression pieces,
    /// estimated on `samples` points over `[lo, hi]`.
    pub fn total_variation(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let step = (hi - lo) / samples as f64;
        let mut tv = 0.0;
        let mut prev = self.eval(lo);
        for i in 1..=samples {
            let v = self.eval(lo + i as f64 * step);
            tv += (v - prev).abs();
            prev = v;
        }
        tv
    }

    fn check_vars(&self, allowed: Var, what: &str) -> Result<()> {
        let exprs = std::iter::once(&self.default).chain(self.pieces.iter().map(|p| &p.value));
        for e in exprs {
            for v in [Var::X, Var::T, Var::U] {
                if v != allowed && e.uses(v) {
                    return Err(Error::InvalidConfig(format!("{what} expression `{e}` may only use {allowed:?}")));
                }
            }
        }
        for p in &self.pieces {
            if !(p.lo <= p.hi) {
                return Err(Error::InvalidConfig(format!("{what} piece has lo > hi ({} > {})", p.lo, p.hi)));
            }
        }
        Ok(())
    }
}

/// The coefficient of `u_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpeedSpec {
    Constant {
        value: f64,
    },
    /// `a(x, t)`.
    Spacetime {
        expr: Expr,
    },
    /// `u · a(x, t)`; `expr` is the factor `a(x, t)`.
    Factored {
        expr: Expr,
    },
    /// `a(x, t, u)`.
    General {
        expr: Expr,
    },
}

impl SpeedSpec {
    pub fn eval<T: Real>(&self, x: f64, t: f64, u: T) -> T {
        let (xv, tv) = (T::cst(x), T::cst(t));
        match self {
            SpeedSpec::Constant { value } => T::cst(*value),
            SpeedSpec::Spacetime { expr } => expr.eval(xv, tv, T::cst(0.0)),
            SpeedSpec::Factored { expr } => u * expr.eval(xv, tv, T::cst(0.0)),
            SpeedSpec::General { expr } => expr.eval(xv, tv, u),
        }
    }

    pub fn eval_f64(&self, x: f64, t: f64, u: f64) -> f64 {
        self.eval(x, t, u)
    }

    /// `a(x, t)` of a factored speed `u · a(x, t)`.
    pub fn factor(&self, x: f64, t: f64) -> Option<f64> {
        match self {
            SpeedSpec::Factored { expr } => Some(expr.eval_f64(x, t, 0.0)),
            _ => None,
        }
    }

    pub fn depends_on_u(&self) -> bool {
        match self {
            SpeedSpec::Constant { .. } | SpeedSpec::Spacetime { .. } => false,
            SpeedSpec::Factored { .. } => true,
            SpeedSpec::General { expr } => expr.uses(Var::U),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpeedSpec::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidConfig("constant speed must be finite".into()))
            }
            SpeedSpec::Spacetime { expr } | SpeedSpec::Factored { expr } if expr.uses(Var::U) => {
                Err(Error::InvalidConfig(format!("speed factor `{expr}` must not depend on u; use kind = \"general\"")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// `B[u] = u` or `B[u] = α u + β ∂ₙu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BoundaryOperator {
    #[default]
    Dirichlet,
    Robin {
        alpha: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub side: Side,
    #[serde(default)]
    pub operator: BoundaryOperator,
    /// Boundary data `g(t)`.
    pub data: PiecewiseFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    /// `[a, b]`.
    pub x: [f64; 2],
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvectionProblem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: Domain,
    pub speed: SpeedSpec,
    /// `f(x, t, u)`; absent means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Expr>,
    pub ic: PiecewiseFunction,
    #[serde(default)]
    pub bc: Vec<BoundaryCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl AdvectionProblem {
    pub fn x_min(&self) -> f64 {
        self.domain.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.domain.x[1]
    }

    pub fn t_max(&self) -> f64 {
        self.domain.t_max
    }

    pub fn side_x(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.x_min(),
            Side::Right => self.x_max(),
        }
    }

    pub fn boundary(&self, side: Side) -> Option<&BoundaryCondition> {
        self.bc.iter().find(|b| b.side == side)
    }

    pub fn source<T: Real>(&self, x: f64, t: f64, u: T) -> T {
        match &self.source {
            Some(f) => f.eval(T::cst(x), T::cst(t), u),
            None => T::cst(0.0),
        }
    }

    pub fn has_source(&self) -> bool {
        self.source.as_ref().is_some_and(|f| f.as_constant() != Some(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.domain.x;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidConfig(format!("domain requires a < b, got [{a}, {b}]")));
        }
        if !(self.domain.t_max > 0.0 && self.domain.t_max.is_finite()) {
            return Err(Error::InvalidConfig("t_max must be positive".into()));
        }
        self.speed.validate()?;
        self.ic.check_vars(Var::X, "initial condition")?;
        for bc in &self.bc {
            bc.data.check_vars(Var::T, "boundary")?;
        }
        if self.bc.is_empty() {
            return Err(Error::InvalidConfig("at least one boundary condition is required".into()));
        }
        let mut sides: Vec<_> = self.bc.iter().map(|b| b.side).collect();
        sides.dedup();
        if sides.len() != self.bc.len() {
            return Err(Error::InvalidConfig("duplicate boundary side".into()));
        }
        if let SpeedSpec::Constant { value } = self.speed {
            let inflow = if value > 0.0 {
                Some(Side::Left)
            } else if value < 0.0 {
                Some(Side::Right)
            } else {
                None
            };
            if let Some(side) = inflow {
                if self.boundary(side).is_none() {
                    return Err(Error::InvalidConfig(format!("missing boundary condition on inflow side {side:?}")));
                }
            }
        }
        if let Some(bd) = self.bounds {
            if !(bd.min < bd.max) {
                return Err(Error::InvalidBounds { m: bd.min, big_m: bd.max });
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::from_toml(text, e))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("problem serialization is infallible")
    }
}
