use super::{smooth_max, smooth_r, total_loss, LossBreakdown, LossWeights, PdeLoss, UpwindConfig, UpwindVariant};
use crate::diffcore::{BatchId, Derivs, Dual, EvalRecord, Graph, ParamGroup, ParamVector, Real};
use crate::error::{Error, Result};
use crate::model::PinnModel;
use crate::problems::{AdvectionProblem, BoundaryCondition, BoundaryOperator, CollocationSet, Side, SpeedSpec};

/// Probes per collocation point when estimating `max |∂û/∂x|` on `[x−h, x+h]`.
pub const BOUND_PROBES: usize = 11;

/// PDE residual `u_t + A·u_x − f` from `[û, û_x, û_t, û(x+h), û(x−h)]`,
/// where `A` is the speed the chosen loss substitutes.
pub fn pde_residual<T: Real>(problem: &AdvectionProblem, loss: &PdeLoss, x: f64, t: f64, vals: [T; 5]) -> T {
    let [u, ux, ut, v, w] = vals;
    let speed = match loss {
        PdeLoss::Standard => problem.speed.eval(x, t, u),
        PdeLoss::Upwind(cfg) => match cfg.variant {
            UpwindVariant::MaxNonneg => problem.speed.eval(x, t, smooth_max(u, v, cfg.alpha)),
            UpwindVariant::AbsSelect => {
                let g = problem.speed.factor(x, t).expect("factored speed checked up front");
                smooth_r(v, w, cfg.alpha).scale(g)
            }
            UpwindVariant::General => smooth_r(problem.speed.eval(x, t, v), problem.speed.eval(x, t, w), cfg.alpha),
        },
    };
    ut + speed * ux - problem.source(x, t, u)
}

/// `B[û] − g` at one boundary point, from `(û, û_x)`.
pub fn bc_residual<T: Real>(bc: &BoundaryCondition, t: f64, u: T, ux: T) -> T {
    let g = T::cst(bc.data.eval(t));
    match bc.operator {
        BoundaryOperator::Dirichlet => u - g,
        BoundaryOperator::Robin { alpha, beta } => {
            let dn = match bc.side {
                Side::Left => -ux,
                Side::Right => ux,
            };
            u.scale(alpha) + dn.scale(beta) - g
        }
    }
}

pub fn check_pde_loss(problem: &AdvectionProblem, loss: &PdeLoss) -> Result<()> {
    if let PdeLoss::Upwind(cfg) = loss {
        cfg.validate()?;
        let needs_factor = matches!(cfg.variant, UpwindVariant::MaxNonneg | UpwindVariant::AbsSelect);
        if needs_factor && !matches!(problem.speed, SpeedSpec::Factored { .. }) {
            return Err(Error::InvalidConfig(format!(
                "{} loss requires a factored speed u·a(x,t); use variant = \"general\"",
                loss.label()
            )));
        }
    }
    Ok(())
}

fn shifted(points: &[(f64, f64)], dx: f64) -> Vec<(f64, f64)> {
    points.iter().map(|&(x, t)| (x + dx, t)).collect()
}

fn non_empty<T>(points: &[T], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!("no {what} points")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct TermValue {
    loss: f64,
    residual_max: f64,
}

/// Evaluates the PDE term on `g`; when `scale ≠ 0`, seeds `scale · ∂L/∂(·)`.
fn pde_term(
    g: &mut Graph<'_>,
    problem: &AdvectionProblem,
    points: &[(f64, f64)],
    loss: &PdeLoss,
    scale: f64,
) -> Result<TermValue> {
    non_empty(points, "PDE")?;
    let n = points.len();
    let main = g.eval(points, Derivs::Input);
    let (plus, minus): (Option<BatchId>, Option<BatchId>) = match loss {
        PdeLoss::Standard => (None, None),
        PdeLoss::Upwind(cfg) => {
            let plus = g.eval(&shifted(points, cfg.h), Derivs::ValueOnly);
            let minus = match cfg.variant {
                UpwindVariant::MaxNonneg => None,
                _ => Some(g.eval(&shifted(points, -cfg.h), Derivs::ValueOnly)),
            };
            (Some(plus), minus)
        }
    };
    let rec: Vec<EvalRecord> = g.records(main).to_vec();
    let shifted_u = |id: Option<BatchId>, g: &Graph<'_>| -> Vec<f64> {
        id.map_or_else(|| rec.iter().map(|r| r.u).collect(), |id| g.records(id).iter().map(|r| r.u).collect())
    };
    let v = shifted_u(plus, g);
    let w = shifted_u(minus, g);

    let mut sum = 0.0;
    let mut rmax = 0.0f64;
    for (i, &(x, t)) in points.iter().enumerate() {
        let r = &rec[i];
        let res = if scale == 0.0 {
            pde_residual(problem, loss, x, t, [r.u, r.du_dx, r.du_dt, v[i], w[i]])
        } else {
            let vals = [r.u, r.du_dx, r.du_dt, v[i], w[i]];
            let d: Dual<5> = pde_residual(problem, loss, x, t, std::array::from_fn(|k| Dual::var(vals[k], k)));
            let c = scale * 2.0 * d.v / n as f64;
            g.seed(main, i, [c * d.d[0], c * d.d[1], c * d.d[2]]);
            if let Some(p) = plus {
                g.seed(p, i, [c * d.d[3], 0.0, 0.0]);
            }
            if let Some(m) = minus {
                g.seed(m, i, [c * d.d[4], 0.0, 0.0]);
            }
            d.v
        };
        sum += res * res;
        rmax = rmax.max(res.abs());
    }
    Ok(TermValue { loss: sum / n as f64, residual_max: rmax })
}

fn ic_term(g: &mut Graph<'_>, problem: &AdvectionProblem, xs: &[f64], scale: f64) -> Result<TermValue> {
    non_empty(xs, "initial")?;
    let n = xs.len() as f64;
    let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 0.0)).collect();
    let id = g.eval(&pts, Derivs::ValueOnly);
    let res: Vec<f64> = g.records(id).iter().zip(xs).map(|(r, &x)| r.u - problem.ic.eval(x)).collect();
    let mut sum = 0.0;
    let mut rmax = 0.0f64;
    for (i, r) in res.into_iter().enumerate() {
        if scale != 0.0 {
            g.seed(id, i, [scale * 2.0 * r / n, 0.0, 0.0]);
        }
        sum += r * r;
        rmax = rmax.max(r.abs());
    }
    Ok(TermValue { loss: sum / n, residual_max: rmax })
}

fn bc_term(g: &mut Graph<'_>, problem: &AdvectionProblem, pts: &[(Side, f64)], scale: f64) -> Result<TermValue> {
    non_empty(pts, "boundary")?;
    let n = pts.len() as f64;
    let conds: Vec<&BoundaryCondition> = pts
        .iter()
        .map(|&(side, _)| {
            problem
                .boundary(side)
                .ok_or_else(|| Error::InvalidArgument(format!("boundary point on undeclared side {side:?}")))
        })
        .collect::<Result<_>>()?;
    let robin = conds.iter().any(|c| matches!(c.operator, BoundaryOperator::Robin { .. }));
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(side, t)| (problem.side_x(side), t)).collect();
    let id = g.eval(&xy, if robin { Derivs::Input } else { Derivs::ValueOnly });
    let rec: Vec<EvalRecord> = g.records(id).to_vec();
    let mut sum = 0.0;
    let mut rmax = 0.0f64;
    for (i, (&(_, t), bc)) in pts.iter().zip(&conds).enumerate() {
        let d: Dual<2> = bc_residual(bc, t, Dual::var(rec[i].u, 0), Dual::var(rec[i].du_dx, 1));
        if scale != 0.0 {
            let c = scale * 2.0 * d.v / n;
            g.seed(id, i, [c * d.d[0], c * d.d[1], 0.0]);
        }
        sum += d.v * d.v;
        rmax = rmax.max(d.v.abs());
    }
    Ok(TermValue { loss: sum / n, residual_max: rmax })
}

fn with_graph<R>(model: &PinnModel, f: impl FnOnce(&mut Graph<'_>) -> Result<R>) -> Result<R> {
    let mut g = Graph::new(model)?;
    f(&mut g)
}

pub fn pde_loss(model: &PinnModel, problem: &AdvectionProblem, points: &[(f64, f64)], loss: &PdeLoss) -> Result<f64> {
    check_pde_loss(problem, loss)?;
    with_graph(model, |g| pde_term(g, problem, points, loss, 0.0)).map(|v| v.loss)
}

pub fn pde_loss_standard(model: &PinnModel, problem: &AdvectionProblem, points: &[(f64, f64)]) -> Result<f64> {
    pde_loss(model, problem, points, &PdeLoss::Standard)
}

fn with_variant(cfg: &UpwindConfig, variant: UpwindVariant) -> PdeLoss {
    PdeLoss::Upwind(UpwindConfig { variant, ..*cfg })
}

pub fn pde_loss_upwind_max(
    model: &PinnModel,
    problem: &AdvectionProblem,
    points: &[(f64, f64)],
    cfg: &UpwindConfig,
) -> Result<f64> {
    pde_loss(model, problem, points, &with_variant(cfg, UpwindVariant::MaxNonneg))
}

pub fn pde_loss_upwind_r(
    model: &PinnModel,
    problem: &AdvectionProblem,
    points: &[(f64, f64)],
    cfg: &UpwindConfig,
) -> Result<f64> {
    pde_loss(model, problem, points, &with_variant(cfg, UpwindVariant::AbsSelect))
}

pub fn pde_loss_upwind_general(
    model: &PinnModel,
    problem: &AdvectionProblem,
    points: &[(f64, f64)],
    cfg: &UpwindConfig,
) -> Result<f64> {
    pde_loss(model, problem, points, &with_variant(cfg, UpwindVariant::General))
}

pub fn ic_loss(model: &PinnModel, problem: &AdvectionProblem, xs: &[f64]) -> Result<f64> {
    with_graph(model, |g| ic_term(g, problem, xs, 0.0)).map(|v| v.loss)
}

pub fn bc_loss(model: &PinnModel, problem: &AdvectionProblem, pts: &[(Side, f64)]) -> Result<f64> {
    with_graph(model, |g| bc_term(g, problem, pts, 0.0)).map(|v| v.loss)
}

/// A problem, its training points and the PDE loss variant: everything needed
/// to evaluate and differentiate the total loss of a model.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub problem: &'a AdvectionProblem,
    pub collocation: &'a CollocationSet,
    pub pde: PdeLoss,
}

impl<'a> LossContext<'a> {
    pub fn new(problem: &'a AdvectionProblem, collocation: &'a CollocationSet, pde: PdeLoss) -> Result<Self> {
        check_pde_loss(problem, &pde)?;
        Ok(Self { problem, collocation, pde })
    }

    fn terms(&self, g: &mut Graph<'_>, scales: [f64; 3]) -> Result<[TermValue; 3]> {
        let c = self.collocation;
        Ok([
            pde_term(g, self.problem, &c.pde_points, &self.pde, scales[0])?,
            ic_term(g, self.problem, &c.ic_points, scales[1])?,
            bc_term(g, self.problem, &c.bc_points, scales[2])?,
        ])
    }

    fn breakdown(terms: &[TermValue; 3], weights: LossWeights) -> LossBreakdown {
        total_loss(terms[0].loss, terms[1].loss, terms[2].loss, terms[0].residual_max, weights)
    }

    pub fn evaluate(&self, model: &PinnModel, weights: LossWeights) -> Result<LossBreakdown> {
        let terms = with_graph(model, |g| self.terms(g, [0.0; 3]))?;
        Ok(Self::breakdown(&terms, weights))
    }

    /// Weighted total loss and its gradient restricted to `group`.
    pub fn value_and_grad(
        &self,
        model: &PinnModel,
        weights: LossWeights,
        group: ParamGroup,
    ) -> Result<(LossBreakdown, ParamVector)> {
        let mut g = Graph::new(model)?;
        let terms = self.terms(&mut g, weights.as_array())?;
        let b = Self::breakdown(&terms, weights);
        if !b.total.is_finite() {
            return Err(Error::DivergedLoss(b.total));
        }
        let grad = g.backward(group);
        if let Some(seg) = grad.first_non_finite() {
            return Err(Error::NonFiniteGradient(seg.to_string()));
        }
        Ok((b, grad))
    }

    /// Separate gradients of the unweighted PDE, IC and BC terms.
    pub fn term_gradients(&self, model: &PinnModel, group: ParamGroup) -> Result<[ParamVector; 3]> {
        let one = |k: usize| -> Result<ParamVector> {
            let mut scales = [0.0; 3];
            scales[k] = 1.0;
            let mut g = Graph::new(model)?;
            self.terms(&mut g, scales)?;
            let grad = g.backward(group);
            match grad.first_non_finite() {
                Some(seg) => Err(Error::NonFiniteGradient(seg.to_string())),
                None => Ok(grad),
            }
        };
        Ok([one(0)?, one(1)?, one(2)?])
    }
}

/// Both sides of `ℓ_PDE − ℓ̃_PDE ≤ h · maxᵢ |a(xᵢ,tᵢ) Mᵢ²|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// `max |residual|` with the standard speed.
    pub l_standard_max: f64,
    /// `max |residual|` with the upwind speed.
    pub l_upwind_max: f64,
    pub bound_rhs: f64,
    /// `Mᵢ` comes from this many probes per point, so it can only underestimate.
    pub probes: usize,
}

impl BoundCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.l_standard_max - self.l_upwind_max <= self.bound_rhs + tol
    }
}

pub fn upwind_bound_check(
    model: &PinnModel,
    problem: &AdvectionProblem,
    points: &[(f64, f64)],
    cfg: &UpwindConfig,
) -> Result<BoundCheck> {
    if !matches!(problem.speed, SpeedSpec::Factored { .. }) {
        return Err(Error::InvalidConfig("the residual-gap bound needs a factored speed".into()));
    }
    if cfg.variant == UpwindVariant::General {
        return Err(Error::InvalidConfig("the residual-gap bound applies to the factored variants".into()));
    }
    let upwind = PdeLoss::Upwind(*cfg);
    check_pde_loss(problem, &upwind)?;
    let (std_max, up_max) = with_graph(model, |g| {
        let s = pde_term(g, problem, points, &PdeLoss::Standard, 0.0)?;
        let u = pde_term(g, problem, points, &upwind, 0.0)?;
        Ok((s.residual_max, u.residual_max))
    })?;

    let mut probes = Vec::with_capacity(points.len() * BOUND_PROBES);
    for &(x, t) in points {
        for k in 0..BOUND_PROBES {
            let s = -cfg.h + 2.0 * cfg.h * k as f64 / (BOUND_PROBES - 1) as f64;
            probes.push((x + s, t));
        }
    }
    let rec = crate::diffcore::evaluate_with_input_derivs(model, &probes)?;
    let mut rhs = 0.0f64;
    for (i, &(x, t)) in points.iter().enumerate() {
        let m = rec[i * BOUND_PROBES..(i + 1) * BOUND_PROBES].iter().fold(0.0f64, |acc, r| acc.max(r.du_dx.abs()));
        let a = problem.speed.factor(x, t).expect("factored");
        rhs = rhs.max((a * m * m).abs());
    }
    Ok(BoundCheck { l_standard_max: std_max, l_upwind_max: up_max, bound_rhs: cfg.h * rhs, probes: BOUND_PROBES })
}
