//! Adam and L-BFGS on flat parameter slices.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::diffcore::powi;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "AdamConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamConfig::default_eps")]
    pub eps: f64,
}

impl AdamConfig {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }

    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it freezes the parameters, which is useful for controls.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("Adam lr must be non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("Adam requires β₁, β₂ in [0, 1) and ε > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != params.len() || grad.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "Adam state has {} entries, parameters {}, gradient {}",
            state.m.len(),
            params.len(),
            grad.len()
        )));
    }
    state.step += 1;
    let c1 = 1.0 - powi(cfg.beta1, state.step as i32);
    let c2 = 1.0 - powi(cfg.beta2, state.step as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    #[serde(default = "LbfgsConfig::default_memory")]
    pub memory: usize,
    #[serde(default = "LbfgsConfig::default_max_line_search")]
    pub max_line_search: usize,
}

impl LbfgsConfig {
    fn default_memory() -> usize {
        10
    }
    fn default_max_line_search() -> usize {
        25
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_line_search == 0 {
            return Err(Error::InvalidConfig("L-BFGS memory and max_line_search must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: Self::default_memory(), max_line_search: Self::default_max_line_search() }
    }
}

pub const ARMIJO_C1: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsOutcome {
    Stepped,
    /// The gradient is exactly zero.
    Stationary,
    LineSearchFailure,
}

/// L-BFGS with a two-loop recursion and backtracking Armijo search.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    cfg: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Lbfgs {
    pub fn new(cfg: LbfgsConfig) -> Self {
        Self { cfg, s: VecDeque::new(), y: VecDeque::new() }
    }

    pub fn memory_len(&self) -> usize {
        self.s.len()
    }

    /// Search direction `−H g`. With empty memory this is `−g / max(1, ‖g‖)`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        if self.s.is_empty() {
            let scale = 1.0 / dot(g, g).sqrt().max(1.0);
            return q.iter().map(|v| -v * scale).collect();
        }
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&self.y[i], &self.s[i])).collect();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter().map(|v| -v).collect()
    }

    /// One iteration from `(x, f, g)`; on success all three are updated.
    /// `eval` returns `(f, ∇f)`; a non-finite value counts as a failed trial.
    pub fn step<F>(&mut self, x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>, mut eval: F) -> Result<LbfgsOutcome>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        if g.iter().all(|v| *v == 0.0) {
            return Ok(LbfgsOutcome::Stationary);
        }
        let mut d = self.direction(g);
        let mut slope = dot(g, &d);
        if !(slope < 0.0) {
            self.s.clear();
            self.y.clear();
            d = self.direction(g);
            slope = dot(g, &d);
        }
        let mut step = 1.0;
        for _ in 0..self.cfg.max_line_search {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = match eval(&trial) {
                Ok(v) => v,
                Err(Error::DivergedLoss(_) | Error::NonFiniteGradient(_)) => (f64::INFINITY, Vec::new()),
                Err(e) => return Err(e),
            };
            if ft.is_finite() && ft <= *f + ARMIJO_C1 * step * slope {
                let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if self.s.len() == self.cfg.memory {
                        self.s.pop_front();
                        self.y.pop_front();
                    }
                    self.s.push_back(s);
                    self.y.push_back(y);
                }
                *x = trial;
                *f = ft;
                *g = gt;
                return Ok(LbfgsOutcome::Stepped);
            }
            step *= BACKTRACK;
        }
        Ok(LbfgsOutcome::LineSearchFailure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.2, 4.0];
        let orig = p.clone();
        let mut s = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut s, &mut p, &[0.0; 3], &AdamConfig::with_lr(0.1)).unwrap();
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = AdamConfig::with_lr(0.01);
        let g = 0.37;
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut s, &mut p, &[g], &cfg).unwrap();
        // m̂ = g and v̂ = g² after bias correction.
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_steps_at_lr() {
        let cfg = AdamConfig::with_lr(1e-3);
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        let mut prev = p.clone();
        for _ in 0..2000 {
            adam_step(&mut s, &mut p, &[2.5, -0.01], &cfg).unwrap();
            let d0 = prev[0] - p[0];
            let d1 = p[1] - prev[1];
            assert!((d0 - 1e-3).abs() < 1e-8 && (d1 - 1e-3).abs() < 1e-6, "{d0} {d1}");
            prev = p.clone();
        }
    }

    #[test]
    fn adam_rejects_mismatched_lengths() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut s, &mut [0.0; 3], &[0.0; 3], &AdamConfig::with_lr(0.1)).is_err());
    }

    fn run_lbfgs<F: Fn(&[f64]) -> (f64, Vec<f64>)>(f: F, x0: Vec<f64>, iters: usize, tol: f64) -> (usize, f64) {
        let mut opt = Lbfgs::new(LbfgsConfig::default());
        let mut x = x0;
        let (mut fx, mut g) = f(&x);
        for it in 0..iters {
            if fx < tol {
                return (it, fx);
            }
            let out = opt.step(&mut x, &mut fx, &mut g, |p| Ok(f(p))).unwrap();
            if out != LbfgsOutcome::Stepped {
                return (it, fx);
            }
        }
        (iters, fx)
    }

    #[test]
    fn lbfgs_solves_spd_quadratic() {
        let a = [[3.0, 1.2], [1.2, 0.8]];
        let f = |x: &[f64]| {
            let ax = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
            (0.5 * (x[0] * ax[0] + x[1] * ax[1]), ax.to_vec())
        };
        let (it, fx) = run_lbfgs(f, vec![1.5, -2.0], 20, 1e-20);
        assert!(fx < 1e-10, "{fx} after {it}");
    }

    #[test]
    fn lbfgs_first_direction_is_scaled_negative_gradient() {
        let opt = Lbfgs::new(LbfgsConfig::default());
        let d = opt.direction(&[3.0, 4.0]);
        assert!((d[0] + 0.6).abs() < 1e-15 && (d[1] + 0.8).abs() < 1e-15);
        assert_eq!(opt.direction(&[0.3, 0.4]), vec![-0.3, -0.4]);
    }

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let (it, fx) = run_lbfgs(f, vec![-1.2, 1.0], 200, 1e-8);
        assert!(fx < 1e-8, "f = {fx} after {it} iterations");
    }

    #[test]
    fn lbfgs_reports_line_search_failure() {
        // A "loss" that never decreases along any direction.
        let mut opt = Lbfgs::new(LbfgsConfig { memory: 3, max_line_search: 4 });
        let mut x = vec![0.0];
        let (mut f, mut g) = (0.0, vec![1.0]);
        let out = opt.step(&mut x, &mut f, &mut g, |_| Ok((1.0, vec![1.0]))).unwrap();
        assert_eq!(out, LbfgsOutcome::LineSearchFailure);
        assert_eq!(x, vec![0.0]);
    }
}
