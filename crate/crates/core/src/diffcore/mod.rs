//! Differentiable evaluation of [`PinnModel`]s.
//!
//! Input derivatives `(u_x, u_t)` are propagated forward as tangents of the
//! two input directions; parameter gradients of any scalar built from
//! `(u, u_x, u_t)` at any set of points come from one reverse sweep over the
//! recorded batches. Losses build on a [`Graph`]: evaluate batches, compute
//! the scalar together with its partial derivatives in each record entry,
//! seed those, then call [`Graph::backward`].

mod dual;
mod engine;
mod params;

pub use dual::{cos, powi, sin, sin_cos, Dual, Real};
pub use engine::{Derivs, EvalRecord, ParamGroup};
pub use params::{ParamVector, Segment};

use crate::error::{Error, Result};
use crate::model::PinnModel;
use engine::Trace;

/// `û(x, t)`.
pub fn evaluate(model: &PinnModel, x: f64, t: f64) -> Result<f64> {
    engine::check_model(model)?;
    Ok(engine::forward(model, &[(x, t)], Derivs::ValueOnly).records[0].u)
}

/// `(û, ∂û/∂x, ∂û/∂t)` at every point.
pub fn evaluate_with_input_derivs(model: &PinnModel, points: &[(f64, f64)]) -> Result<Vec<EvalRecord>> {
    engine::check_model(model)?;
    Ok(engine::forward(model, points, Derivs::Input).records)
}

/// Values only, for dense output grids.
pub fn evaluate_batch(model: &PinnModel, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    engine::check_model(model)?;
    Ok(engine::forward(model, points, Derivs::ValueOnly).records.iter().map(|r| r.u).collect())
}

/// Handle to a batch recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchId(usize);

struct Batch {
    trace: Trace,
    adjoint: Vec<[f64; 3]>,
}

/// Recorded evaluations of one model, awaiting adjoint seeds.
pub struct Graph<'m> {
    model: &'m PinnModel,
    batches: Vec<Batch>,
}

impl<'m> Graph<'m> {
    pub fn new(model: &'m PinnModel) -> Result<Self> {
        engine::check_model(model)?;
        Ok(Self { model, batches: Vec::new() })
    }

    pub fn model(&self) -> &PinnModel {
        self.model
    }

    pub fn eval(&mut self, points: &[(f64, f64)], derivs: Derivs) -> BatchId {
        let trace = engine::forward(self.model, points, derivs);
        let adjoint = vec![[0.0; 3]; points.len()];
        self.batches.push(Batch { trace, adjoint });
        BatchId(self.batches.len() - 1)
    }

    pub fn records(&self, id: BatchId) -> &[EvalRecord] {
        &self.batches[id.0].trace.records
    }

    /// Adds `∂loss/∂(u, u_x, u_t)` for point `i` of batch `id`.
    pub fn seed(&mut self, id: BatchId, i: usize, adj: [f64; 3]) {
        let slot = &mut self.batches[id.0].adjoint[i];
        slot[0] += adj[0];
        slot[1] += adj[1];
        slot[2] += adj[2];
    }

    /// Parameter gradient of the seeded scalar. Entries outside `group` are zero.
    pub fn backward(&self, group: ParamGroup) -> ParamVector {
        let mut grad = ParamVector::zeros_like(&self.model.params);
        for batch in &self.batches {
            engine::backward(self.model, &batch.trace, &batch.adjoint, &mut grad, group);
        }
        grad
    }
}

/// Runs `build` on a fresh graph and returns the loss with its exact gradient.
pub fn loss_gradient<F>(model: &PinnModel, group: ParamGroup, build: F) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&mut Graph<'_>) -> Result<f64>,
{
    let mut graph = Graph::new(model)?;
    let loss = build(&mut graph)?;
    if !loss.is_finite() {
        return Err(Error::DivergedLoss(loss));
    }
    let grad = graph.backward(group);
    if let Some(seg) = grad.first_non_finite() {
        return Err(Error::NonFiniteGradient(seg.to_string()));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, Activation, Architecture, OutputMap, THETA1, THETA2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture { fourier_features: 3, hidden: vec![5, 4], sigma: 1.3, activation: Activation::Tanh }
    }

    fn random_model(seed: u64, output: OutputMap) -> PinnModel {
        let mut m = init_model(&arch(), output, seed).unwrap();
        // Non-zero biases so every path is exercised.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for v in m.params.values.iter_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        m
    }

    /// Straight-line forward pass with plain loops, no shared code.
    fn reference_forward(m: &PinnModel, x: f64, t: f64) -> f64 {
        let d = m.arch.fourier_features;
        let b = m.b_matrix();
        let mut h: Vec<f64> = (0..d).map(|k| (b[2 * k] * x + b[2 * k + 1] * t).cos()).collect();
        h.extend((0..d).map(|k| (b[2 * k] * x + b[2 * k + 1] * t).sin()));
        let widths = m.arch.widths();
        for l in 1..widths.len() {
            let (w, bias) = (m.weights(l), m.bias(l));
            let mut next = vec![0.0; widths[l]];
            for j in 0..widths[l] {
                let mut acc = bias[j];
                for i in 0..widths[l - 1] {
                    acc += w[j * widths[l - 1] + i] * h[i];
                }
                next[j] = if l + 1 < widths.len() { acc.tanh() } else { acc };
            }
            h = next;
        }
        match m.output {
            OutputMap::Identity => h[0],
            OutputMap::Bounded { min, max } => 0.5 * ((max - min) * h[0].sin() + max + min),
        }
    }

    #[test]
    fn zero_weights_give_the_output_bias() {
        let mut m = init_model(&arch(), OutputMap::Identity, 1).unwrap();
        m.params.slice_mut(THETA2).iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(evaluate(&m, 0.4, 0.9).unwrap(), 0.0);
        let last = m.layer_count();
        m.params.slice_mut(&format!("theta2.b{last}"))[0] = 0.25;
        assert_eq!(evaluate(&m, -3.0, 7.0).unwrap(), 0.25);
        let recs = evaluate_with_input_derivs(&m, &[(0.1, 0.2), (1.5, 0.3)]).unwrap();
        for r in recs {
            assert_eq!((r.u, r.du_dx, r.du_dt), (0.25, 0.0, 0.0));
        }
    }

    #[test]
    fn bounded_zero_network_is_midpoint() {
        let mut m = init_model(&arch(), OutputMap::Bounded { min: 0.0, max: 1.0 }, 1).unwrap();
        m.params.slice_mut(THETA2).iter_mut().for_each(|v| *v = 0.0);
        for &(x, t) in &[(0.0, 0.0), (1.3, 0.7), (-4.0, 2.0)] {
            assert_eq!(evaluate(&m, x, t).unwrap(), 0.5);
        }
    }

    #[test]
    fn single_fourier_pair_linear_readout() {
        let a = Architecture { fourier_features: 1, hidden: vec![], sigma: 1.0, activation: Activation::Tanh };
        let mut m = init_model(&a, OutputMap::Identity, 0).unwrap();
        m.params.slice_mut(THETA1).copy_from_slice(&[1.0, 0.0]);
        m.params.slice_mut("theta2.W1").copy_from_slice(&[1.0, 0.0]);
        let r = evaluate_with_input_derivs(&m, &[(0.0, 0.4), (0.7, 0.1)]).unwrap();
        assert_eq!(r[0].u, 1.0);
        assert_eq!(r[0].du_dx, 0.0);
        assert!((r[1].du_dx + 0.7f64.sin()).abs() < 1e-15);
        assert_eq!(r[1].du_dt, 0.0);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        for output in [OutputMap::Identity, OutputMap::Bounded { min: -0.5, max: 2.0 }] {
            let m = random_model(42, output);
            let got = evaluate(&m, 0.3, 0.2).unwrap();
            let want = reference_forward(&m, 0.3, 0.2);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn input_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for output in [OutputMap::Identity, OutputMap::Bounded { min: 0.0, max: 1.0 }] {
            let m = random_model(3, output);
            let pts: Vec<(f64, f64)> = (0..20).map(|_| (rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0))).collect();
            let recs = evaluate_with_input_derivs(&m, &pts).unwrap();
            let h = 1e-6;
            for (&(x, t), r) in pts.iter().zip(&recs) {
                let fx = (evaluate(&m, x + h, t).unwrap() - evaluate(&m, x - h, t).unwrap()) / (2.0 * h);
                let ft = (evaluate(&m, x, t + h).unwrap() - evaluate(&m, x, t - h).unwrap()) / (2.0 * h);
                for (exact, approx) in [(r.du_dx, fx), (r.du_dt, ft)] {
                    let rel = (exact - approx).abs() / exact.abs().max(1e-3);
                    assert!(rel < 1e-6, "{exact} vs {approx}");
                }
            }
        }
    }

    #[test]
    fn batch_equals_pointwise_bit_exact() {
        let m = random_model(5, OutputMap::Bounded { min: 0.0, max: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64)> = (0..37).map(|_| (rng.gen_range(-1.0..3.0), rng.gen_range(0.0..1.0))).collect();
        let batch = evaluate_with_input_derivs(&m, &pts).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let reversed = evaluate_with_input_derivs(&m, &rev).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            let single = evaluate_with_input_derivs(&m, &[p]).unwrap()[0];
            assert_eq!(single, batch[i]);
            assert_eq!(reversed[pts.len() - 1 - i], batch[i]);
            assert_eq!(evaluate(&m, p.0, p.1).unwrap().to_bits(), batch[i].u.to_bits());
        }
    }

    #[test]
    fn non_finite_parameters_are_reported() {
        let mut m = random_model(5, OutputMap::Identity);
        m.params.slice_mut("theta2.b2")[1] = f64::INFINITY;
        assert!(matches!(evaluate(&m, 0.0, 0.0), Err(Error::NonFiniteModel(s)) if s == "theta2.b2"));
    }

    /// Loss mixing values, both input derivatives and a shifted evaluation.
    fn mixed_loss(g: &mut Graph<'_>) -> Result<f64> {
        let pts = [(0.2, 0.1), (0.9, 0.5), (1.7, 0.8)];
        let shifted: Vec<_> = pts.iter().map(|&(x, t)| (x + 0.05, t)).collect();
        let base = g.eval(&pts, Derivs::Input);
        let plus = g.eval(&shifted, Derivs::ValueOnly);
        let mut loss = 0.0;
        for i in 0..pts.len() {
            let r = g.records(base)[i];
            let v = g.records(plus)[i].u;
            let res = r.du_dt + (r.u * v) * r.du_dx - 0.3 * r.u;
            loss += res * res;
            let c = 2.0 * res;
            g.seed(base, i, [c * (v * r.du_dx - 0.3), c * r.u * v, c]);
            g.seed(plus, i, [c * r.u * r.du_dx, 0.0, 0.0]);
        }
        Ok(loss)
    }

    fn plain_loss(m: &PinnModel) -> f64 {
        let mut g = Graph::new(m).unwrap();
        mixed_loss(&mut g).unwrap()
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        for output in [OutputMap::Identity, OutputMap::Bounded { min: -1.0, max: 1.0 }] {
            let m = random_model(17, output);
            let (_, grad) = loss_gradient(&m, ParamGroup::All, mixed_loss).unwrap();
            let h = 1e-6;
            for i in 0..m.params.len() {
                let mut p = m.clone();
                p.params.values[i] += h;
                let up = plain_loss(&p);
                p.params.values[i] -= 2.0 * h;
                let down = plain_loss(&p);
                let fd = (up - down) / (2.0 * h);
                let (abs, rel) = ((grad.values[i] - fd).abs(), (grad.values[i] - fd).abs() / fd.abs().max(1e-300));
                assert!(abs < 1e-8 || rel < 1e-5, "param {i}: {} vs {fd}", grad.values[i]);
            }
        }
    }

    #[test]
    fn frozen_groups_get_zero_gradient() {
        let m = random_model(2, OutputMap::Identity);
        let (_, g1) = loss_gradient(&m, ParamGroup::Theta1, mixed_loss).unwrap();
        let (_, g2) = loss_gradient(&m, ParamGroup::Theta2, mixed_loss).unwrap();
        let (_, all) = loss_gradient(&m, ParamGroup::All, mixed_loss).unwrap();
        assert!(g1.slice(THETA2).iter().all(|&v| v == 0.0));
        assert!(g2.slice(THETA1).iter().all(|&v| v == 0.0));
        assert_eq!(g1.slice(THETA1), all.slice(THETA1));
        assert_eq!(g2.slice(THETA2), all.slice(THETA2));
    }

    #[test]
    fn zero_output_kills_multiplicative_paths() {
        let mut m = random_model(4, OutputMap::Identity);
        m.params.slice_mut(THETA2).iter_mut().for_each(|v| *v = 0.0);
        let (loss, grad) = loss_gradient(&m, ParamGroup::All, |g| {
            let id = g.eval(&[(0.4, 0.3)], Derivs::ValueOnly);
            let u = g.records(id)[0].u;
            g.seed(id, 0, [2.0 * u, 0.0, 0.0]);
            Ok(u * u)
        })
        .unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diverged_loss_is_reported() {
        let m = random_model(4, OutputMap::Identity);
        let err = loss_gradient(&m, ParamGroup::All, |_| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::DivergedLoss(_)));
    }

    #[test]
    fn repeated_evaluation_is_bit_exact() {
        let m = random_model(8, OutputMap::Identity);
        let (l1, g1) = loss_gradient(&m, ParamGroup::All, mixed_loss).unwrap();
        let (l2, g2) = loss_gradient(&m, ParamGroup::All, mixed_loss).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }
}
