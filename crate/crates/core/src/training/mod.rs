//! Full-batch training: stage 1 fits the Fourier frequencies with the network
//! frozen, stage 2 fits the network with the frequencies frozen.

mod optim;

pub use optim::{adam_step, AdamConfig, AdamState, Lbfgs, LbfgsConfig, LbfgsOutcome, ARMIJO_C1, BACKTRACK};

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffcore::ParamGroup;
use crate::error::{Error, Result};
use crate::losses::{gradnorm_weights, LossBreakdown, LossContext, LossWeights};
use crate::model::{PinnModel, THETA1, THETA2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Lbfgs(LbfgsConfig),
}

/// Which loss term carries the discontinuity and gets the stage-1 boost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Discontinuous {
    #[default]
    Ic,
    Bc,
    Both,
}

impl Discontinuous {
    /// `factor` on the flagged terms, 1 elsewhere.
    pub fn weights(self, factor: f64) -> LossWeights {
        match self {
            Discontinuous::Ic => LossWeights::new(1.0, factor, 1.0),
            Discontinuous::Bc => LossWeights::new(1.0, 1.0, factor),
            Discontinuous::Both => LossWeights::new(1.0, factor, factor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightScheme {
    Fixed(LossWeights),
    /// Gradient-norm weights, recomputed every `refresh_every` Adam iterations.
    Gradnorm {
        #[serde(default)]
        initial: LossWeights,
        refresh_every: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BWatch {
    MaxAbs,
    MeanAbs,
}

/// Stops a stage once the watched statistic of `B` stops moving or grows too large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BStopRule {
    pub watch: BWatch,
    pub plateau_window: usize,
    pub plateau_rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_cap: Option<f64>,
}

impl BStopRule {
    pub fn validate(&self) -> Result<()> {
        if self.plateau_window < 2 {
            return Err(Error::InvalidConfig("B stop rule window must be at least 2".into()));
        }
        if !(self.plateau_rel_tol >= 0.0) {
            return Err(Error::InvalidConfig("B stop rule tolerance must be non-negative".into()));
        }
        Ok(())
    }

    fn stat(&self, model: &PinnModel) -> f64 {
        let (max_abs, mean_abs) = model.b_stats();
        match self.watch {
            BWatch::MaxAbs => max_abs,
            BWatch::MeanAbs => mean_abs,
        }
    }

    /// `history[0]` is the value before the first update.
    fn check(&self, history: &[f64]) -> Option<Termination> {
        let now = *history.last()?;
        if self.hard_cap.is_some_and(|cap| now > cap) {
            return Some(Termination::HardCap);
        }
        let k = history.len() - 1;
        if k >= self.plateau_window {
            let then = history[k - self.plateau_window];
            let rel = (now - then).abs() / then.abs().max(f64::MIN_POSITIVE);
            if rel < self.plateau_rel_tol {
                return Some(Termination::Plateau);
            }
        }
        None
    }
}

/// L-BFGS run after the main optimizer with the weights frozen at their last value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polish {
    #[serde(flatten)]
    pub lbfgs: LbfgsConfig,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub target: ParamGroup,
    pub optimizer: OptimizerConfig,
    /// Zero skips the stage.
    pub max_iters: usize,
    pub weights: WeightScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<BStopRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<Polish>,
}

impl StageConfig {
    /// Adam 1e−3 for 2000 iterations on `B`, 10× weight on the discontinuous
    /// term, stopping when mean |B| plateaus.
    pub fn stage1_default(discontinuous: Discontinuous) -> Self {
        Self {
            target: ParamGroup::Theta1,
            optimizer: OptimizerConfig::Adam(AdamConfig::with_lr(1e-3)),
            max_iters: 2000,
            weights: WeightScheme::Fixed(discontinuous.weights(10.0)),
            stop: Some(BStopRule {
                watch: BWatch::MeanAbs,
                plateau_window: 200,
                plateau_rel_tol: 1e-3,
                hard_cap: None,
            }),
            polish: None,
        }
    }

    /// Adam 1e−3 for 10000 iterations with gradient-norm weights refreshed
    /// every 100, then up to 2000 L-BFGS iterations.
    pub fn stage2_default() -> Self {
        Self {
            target: ParamGroup::Theta2,
            optimizer: OptimizerConfig::Adam(AdamConfig::with_lr(1e-3)),
            max_iters: 10_000,
            weights: WeightScheme::Gradnorm { initial: LossWeights::default(), refresh_every: 100 },
            stop: None,
            polish: Some(Polish { lbfgs: LbfgsConfig::default(), max_iters: 2000 }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.optimizer {
            OptimizerConfig::Adam(a) => a.validate()?,
            OptimizerConfig::Lbfgs(l) => {
                l.validate()?;
                if matches!(self.weights, WeightScheme::Gradnorm { .. }) {
                    return Err(Error::InvalidConfig(
                        "gradient-norm weights need Adam; L-BFGS requires a fixed objective".into(),
                    ));
                }
            }
        }
        match &self.weights {
            WeightScheme::Fixed(w) => w.validate()?,
            WeightScheme::Gradnorm { initial, refresh_every } => {
                initial.validate()?;
                if *refresh_every == 0 {
                    return Err(Error::InvalidConfig("gradnorm refresh_every must be at least 1".into()));
                }
            }
        }
        if let Some(s) = &self.stop {
            s.validate()?;
        }
        if let Some(p) = &self.polish {
            p.lbfgs.validate()?;
        }
        Ok(())
    }

    fn initial_weights(&self) -> LossWeights {
        match self.weights {
            WeightScheme::Fixed(w) => w,
            WeightScheme::Gradnorm { initial, .. } => initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIters,
    Skipped,
    Plateau,
    HardCap,
    LineSearchFailure,
    Stationary,
    Diverged(String),
}

impl Termination {
    pub fn is_divergence(&self) -> bool {
        matches!(self, Termination::Diverged(_))
    }

    pub fn label(&self) -> String {
        match self {
            Termination::MaxIters => "max-iters".into(),
            Termination::Skipped => "skipped".into(),
            Termination::Plateau => "plateau".into(),
            Termination::HardCap => "hard-cap".into(),
            Termination::LineSearchFailure => "line-search failure".into(),
            Termination::Stationary => "stationary".into(),
            Termination::Diverged(why) => format!("diverged: {why}"),
        }
    }
}

/// One logged iteration. The loss is the one evaluated at the parameters
/// before that iteration's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub stage: usize,
    pub iter: usize,
    /// `"adam"` or `"lbfgs"`.
    pub optimizer: &'static str,
    pub breakdown: LossBreakdown,
    pub b_max_abs: f64,
    pub b_mean_abs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<IterRecord>,
    pub terminations: Vec<(usize, Termination)>,
    pub wall_time_s: f64,
    pub model: PinnModel,
}

impl TrainReport {
    pub fn diverged(&self) -> Option<&Termination> {
        self.terminations.iter().map(|(_, t)| t).find(|t| t.is_divergence())
    }

    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.history.last().map(|r| &r.breakdown)
    }
}

/// Called after every logged iteration with the parameters that produced it.
pub type Observer<'o> = dyn FnMut(&IterRecord, &PinnModel) + 'o;

fn target_range(model: &PinnModel, group: ParamGroup) -> Result<Range<usize>> {
    let name = match group {
        ParamGroup::Theta1 => THETA1,
        ParamGroup::Theta2 => THETA2,
        ParamGroup::All => return Ok(0..model.params.len()),
    };
    model.params.range(name).ok_or_else(|| Error::InvalidConfig(format!("model has no segment `{name}`")))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn record(stage: usize, iter: usize, optimizer: &'static str, breakdown: LossBreakdown, m: &PinnModel) -> IterRecord {
    let (b_max_abs, b_mean_abs) = m.b_stats();
    IterRecord { stage, iter, optimizer, breakdown, b_max_abs, b_mean_abs }
}

fn divergence(e: Error) -> Result<Termination> {
    match e {
        Error::DivergedLoss(_) | Error::NonFiniteGradient(_) | Error::NonFiniteModel(_) => {
            Ok(Termination::Diverged(e.to_string()))
        }
        other => Err(other),
    }
}

struct StageRun<'a, 'o> {
    stage: usize,
    ctx: &'a LossContext<'a>,
    cfg: &'a StageConfig,
    range: Range<usize>,
    history: &'a mut Vec<IterRecord>,
    observer: &'a mut Observer<'o>,
}

impl StageRun<'_, '_> {
    fn log(&mut self, optimizer: &'static str, breakdown: LossBreakdown, model: &PinnModel) {
        let r = record(self.stage, self.history.len(), optimizer, breakdown, model);
        (self.observer)(&r, model);
        self.history.push(r);
    }

    fn adam(&mut self, model: &mut PinnModel, adam: &AdamConfig, weights: &mut LossWeights) -> Result<Termination> {
        let group = self.cfg.target;
        let mut state = AdamState::new(self.range.len());
        let mut b_hist = Vec::new();
        if let Some(rule) = &self.cfg.stop {
            b_hist.push(rule.stat(model));
        }
        for it in 0..self.cfg.max_iters {
            if let WeightScheme::Gradnorm { refresh_every, .. } = self.cfg.weights {
                if it % refresh_every == 0 {
                    let grads = match self.ctx.term_gradients(model, group) {
                        Ok(g) => g,
                        Err(e) => return divergence(e),
                    };
                    let norms = grads.map(|g| norm(&g.values[self.range.clone()]));
                    *weights = gradnorm_weights(norms, Some(weights))?;
                }
            }
            let (b, grad) = match self.ctx.value_and_grad(model, *weights, group) {
                Ok(v) => v,
                Err(e) => return divergence(e),
            };
            self.log("adam", b, model);
            adam_step(
                &mut state,
                &mut model.params.values[self.range.clone()],
                &grad.values[self.range.clone()],
                adam,
            )?;
            if let Some(seg) = model.params.first_non_finite() {
                return Ok(Termination::Diverged(format!("non-finite parameters in `{seg}`")));
            }
            if let Some(rule) = &self.cfg.stop {
                b_hist.push(rule.stat(model));
                if let Some(t) = rule.check(&b_hist) {
                    return Ok(t);
                }
            }
        }
        Ok(Termination::MaxIters)
    }

    fn lbfgs(
        &mut self,
        model: &mut PinnModel,
        cfg: &LbfgsConfig,
        iters: usize,
        weights: LossWeights,
    ) -> Result<Termination> {
        let group = self.cfg.target;
        let range = self.range.clone();
        let (b, grad) = match self.ctx.value_and_grad(model, weights, group) {
            Ok(v) => v,
            Err(e) => return divergence(e),
        };
        let mut opt = Lbfgs::new(*cfg);
        let mut x = model.params.values[range.clone()].to_vec();
        let mut f = b.total;
        let mut g = grad.values[range.clone()].to_vec();
        let mut breakdown = b;
        let mut b_hist = Vec::new();
        if let Some(rule) = &self.cfg.stop {
            b_hist.push(rule.stat(model));
        }
        for _ in 0..iters {
            self.log("lbfgs", breakdown, model);
            let ctx = self.ctx;
            let mut trial_model = model.clone();
            let mut last = breakdown;
            let outcome = opt.step(&mut x, &mut f, &mut g, |p| {
                trial_model.params.values[range.clone()].copy_from_slice(p);
                let (b, grad) = ctx.value_and_grad(&trial_model, weights, group)?;
                last = b;
                Ok((b.total, grad.values[range.clone()].to_vec()))
            })?;
            match outcome {
                LbfgsOutcome::Stepped => {
                    model.params.values[range.clone()].copy_from_slice(&x);
                    breakdown = last;
                }
                LbfgsOutcome::Stationary => return Ok(Termination::Stationary),
                LbfgsOutcome::LineSearchFailure => return Ok(Termination::LineSearchFailure),
            }
            if let Some(rule) = &self.cfg.stop {
                b_hist.push(rule.stat(model));
                if let Some(t) = rule.check(&b_hist) {
                    return Ok(t);
                }
            }
        }
        Ok(Termination::MaxIters)
    }
}

fn run_stage(
    stage: usize,
    model: &mut PinnModel,
    ctx: &LossContext<'_>,
    cfg: &StageConfig,
    history: &mut Vec<IterRecord>,
    observer: &mut Observer<'_>,
) -> Result<Vec<(usize, Termination)>> {
    cfg.validate()?;
    let range = target_range(model, cfg.target)?;
    if cfg.max_iters == 0 && cfg.polish.is_none() {
        return Ok(vec![(stage, Termination::Skipped)]);
    }
    let mut run = StageRun { stage, ctx, cfg, range, history, observer };
    let mut weights = cfg.initial_weights();
    let main = match &cfg.optimizer {
        OptimizerConfig::Adam(a) => run.adam(model, a, &mut weights)?,
        OptimizerConfig::Lbfgs(l) => run.lbfgs(model, l, cfg.max_iters, weights)?,
    };
    let mut out = vec![(stage, main.clone())];
    if let (Some(p), Termination::MaxIters) = (&cfg.polish, &main) {
        out.push((stage, run.lbfgs(model, &p.lbfgs, p.max_iters, weights)?));
    }
    Ok(out)
}

/// Trains the target segment of `model` in place and returns the log.
pub fn train_stage(
    model: &PinnModel,
    ctx: &LossContext<'_>,
    cfg: &StageConfig,
    observer: &mut Observer<'_>,
) -> Result<TrainReport> {
    let start = Instant::now();
    let mut m = model.clone();
    let mut history = Vec::new();
    let terminations = run_stage(1, &mut m, ctx, cfg, &mut history, observer)?;
    Ok(TrainReport { history, terminations, wall_time_s: start.elapsed().as_secs_f64(), model: m })
}

/// Stage 1 on `theta1`, then stage 2 on `theta2`, on the same points.
pub fn train_two_stage(
    model: &PinnModel,
    ctx: &LossContext<'_>,
    stage1: &StageConfig,
    stage2: &StageConfig,
    observer: &mut Observer<'_>,
) -> Result<TrainReport> {
    if stage1.target != ParamGroup::Theta1 || stage2.target != ParamGroup::Theta2 {
        return Err(Error::InvalidConfig("two-stage training needs stage 1 on theta1 and stage 2 on theta2".into()));
    }
    let start = Instant::now();
    let mut m = model.clone();
    let mut history = Vec::new();
    let mut terminations = run_stage(1, &mut m, ctx, stage1, &mut history, observer)?;
    if !terminations.iter().any(|(_, t)| t.is_divergence()) {
        terminations.extend(run_stage(2, &mut m, ctx, stage2, &mut history, observer)?);
    }
    Ok(TrainReport { history, terminations, wall_time_s: start.elapsed().as_secs_f64(), model: m })
}

/// Observer that ignores everything.
pub fn no_observer() -> impl FnMut(&IterRecord, &PinnModel) {
    |_, _| {}
}
