//! Batched forward pass with input tangents, and the matching reverse pass.
//!
//! A batch of `n` points is pushed through the network as a stacked matrix
//! of `nb · n` rows: the value rows, then (when input derivatives are
//! requested) the `∂/∂x` tangent rows and the `∂/∂t` tangent rows. Affine
//! layers act on all rows with one GEMM; the nonlinearities couple value and
//! tangent rows pointwise. The reverse pass walks the same structure, so the
//! parameter gradient of any scalar built from `(u, u_x, u_t)` is exact.

use crate::diffcore::{cos, sin_cos, ParamVector};
use crate::error::{Error, Result};
use crate::model::{bounded_unchecked, OutputMap, PinnModel, B_SEGMENT, THETA2};

/// Network output and its input derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalRecord {
    pub u: f64,
    pub du_dx: f64,
    pub du_dt: f64,
}

/// Whether a batch carries input tangents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivs {
    ValueOnly,
    Input,
}

impl Derivs {
    fn blocks(self) -> usize {
        match self {
            Derivs::ValueOnly => 1,
            Derivs::Input => 3,
        }
    }
}

/// Which parameter groups receive gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Theta1,
    Theta2,
    #[default]
    All,
}

impl ParamGroup {
    pub fn theta1(self) -> bool {
        matches!(self, ParamGroup::Theta1 | ParamGroup::All)
    }

    pub fn theta2(self) -> bool {
        matches!(self, ParamGroup::Theta2 | ParamGroup::All)
    }

    pub fn name(self) -> Option<&'static str> {
        match self {
            ParamGroup::Theta1 => Some("theta1"),
            ParamGroup::Theta2 => Some("theta2"),
            ParamGroup::All => None,
        }
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    debug_assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the strides above describe in-bounds row/column-major views of
    // `a`, `b` and `c`, and `c` does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

struct LayerTrace {
    /// Stacked layer input, `nb·n × width_in`.
    input: Vec<f64>,
    /// Tangent rows of the pre-activation, `(nb−1)·n × width_out` (hidden layers only).
    pre_tangent: Vec<f64>,
}

/// Everything the reverse pass needs for one batch.
pub(crate) struct Trace {
    n: usize,
    nb: usize,
    points: Vec<(f64, f64)>,
    /// Fourier arguments `B m`, `n × D`.
    z: Vec<f64>,
    layers: Vec<LayerTrace>,
    /// Stacked raw network output, `nb·n`.
    net: Vec<f64>,
    pub(crate) records: Vec<EvalRecord>,
}

pub(crate) fn forward(model: &PinnModel, points: &[(f64, f64)], derivs: Derivs) -> Trace {
    let n = points.len();
    let nb = derivs.blocks();
    let d = model.arch.fourier_features;
    let widths = model.arch.widths();
    let b = model.b_matrix();

    let mut z = vec![0.0; n * d];
    let mut feat = vec![0.0; nb * n * 2 * d];
    for (i, &(x, t)) in points.iter().enumerate() {
        let zi = &mut z[i * d..(i + 1) * d];
        for k in 0..d {
            let (bx, bt) = (b[2 * k], b[2 * k + 1]);
            let arg = bx * x + bt * t;
            zi[k] = arg;
            let (s, c) = sin_cos(arg);
            let row = &mut feat[i * 2 * d..(i + 1) * 2 * d];
            row[k] = c;
            row[d + k] = s;
            if nb == 3 {
                let rx = &mut feat[(n + i) * 2 * d..(n + i + 1) * 2 * d];
                rx[k] = -s * bx;
                rx[d + k] = c * bx;
                let rt = &mut feat[(2 * n + i) * 2 * d..(2 * n + i + 1) * 2 * d];
                rt[k] = -s * bt;
                rt[d + k] = c * bt;
            }
        }
    }

    let layer_count = widths.len() - 1;
    let mut layers = Vec::with_capacity(layer_count);
    let mut input = feat;
    let mut net = Vec::new();
    for l in 1..=layer_count {
        let (w_in, w_out) = (widths[l - 1], widths[l]);
        let w = model.weights(l);
        let bias = model.bias(l);
        let mut a = vec![0.0; nb * n * w_out];
        gemm(nb * n, w_in, w_out, &input, w_in, 1, w, 1, w_in, 0.0, &mut a, w_out);
        for row in a[..n * w_out].chunks_exact_mut(w_out) {
            for (v, bj) in row.iter_mut().zip(bias) {
                *v += bj;
            }
        }
        if l < layer_count {
            let pre_tangent = a[n * w_out..].to_vec();
            let (vals, tans) = a.split_at_mut(n * w_out);
            for v in vals.iter_mut() {
                *v = v.tanh();
            }
            for blk in tans.chunks_exact_mut(n * w_out) {
                for (tv, h) in blk.iter_mut().zip(vals.iter()) {
                    *tv *= 1.0 - h * h;
                }
            }
            layers.push(LayerTrace { input, pre_tangent });
            input = a;
        } else {
            layers.push(LayerTrace { input: std::mem::take(&mut input), pre_tangent: Vec::new() });
            net = a;
        }
    }

    let records = (0..n)
        .map(|i| {
            let raw = net[i];
            let (rx, rt) = if nb == 3 { (net[n + i], net[2 * n + i]) } else { (0.0, 0.0) };
            match model.output {
                OutputMap::Identity => EvalRecord { u: raw, du_dx: rx, du_dt: rt },
                OutputMap::Bounded { min, max } => {
                    let k = 0.5 * (max - min) * cos(raw);
                    EvalRecord { u: bounded_unchecked(raw, min, max), du_dx: k * rx, du_dt: k * rt }
                }
            }
        })
        .collect();

    Trace { n, nb, points: points.to_vec(), z, layers, net, records }
}

/// Accumulates `Σ_i adj_i · ∂(u_i, u_x,i, u_t,i)/∂θ` into `grad`.
pub(crate) fn backward(model: &PinnModel, trace: &Trace, adj: &[[f64; 3]], grad: &mut ParamVector, group: ParamGroup) {
    let (n, nb) = (trace.n, trace.nb);
    debug_assert_eq!(adj.len(), n);
    let widths = model.arch.widths();
    let layer_count = widths.len() - 1;

    // Adjoint of the stacked raw output.
    let mut g = vec![0.0; nb * n];
    for (i, a) in adj.iter().enumerate() {
        debug_assert!(nb == 3 || (a[1] == 0.0 && a[2] == 0.0), "tangent adjoint on a value-only batch");
        match model.output {
            OutputMap::Identity => {
                g[i] = a[0];
                if nb == 3 {
                    g[n + i] = a[1];
                    g[2 * n + i] = a[2];
                }
            }
            OutputMap::Bounded { min, max } => {
                let half = 0.5 * (max - min);
                let raw = trace.net[i];
                let (s, c) = sin_cos(raw);
                let mut gu = a[0] * half * c;
                if nb == 3 {
                    let (rx, rt) = (trace.net[n + i], trace.net[2 * n + i]);
                    g[n + i] = a[1] * half * c;
                    g[2 * n + i] = a[2] * half * c;
                    gu -= half * s * (a[1] * rx + a[2] * rt);
                }
                g[i] = gu;
            }
        }
    }

    for l in (1..=layer_count).rev() {
        let (w_in, w_out) = (widths[l - 1], widths[l]);
        let layer = &trace.layers[l - 1];
        let rows = nb * n;

        if group.theta2() {
            let (w_range, b_range) = {
                let w = grad.range(&format!("{THETA2}.W{l}")).expect("weight segment");
                let b = grad.range(&format!("{THETA2}.b{l}")).expect("bias segment");
                (w, b)
            };
            gemm(w_out, rows, w_in, &g, 1, w_out, &layer.input, w_in, 1, 1.0, &mut grad.values[w_range], w_in);
            let gb = &mut grad.values[b_range];
            for row in g[..n * w_out].chunks_exact(w_out) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }

        if l == 1 && !group.theta1() {
            break;
        }

        let mut gs = vec![0.0; rows * w_in];
        gemm(rows, w_out, w_in, &g, w_out, 1, model.weights(l), w_in, 1, 0.0, &mut gs, w_in);

        if l > 1 {
            // `layer.input` holds tanh outputs of layer l−1; turn gs into the
            // adjoint of that layer's pre-activation.
            let h = &layer.input[..n * w_in];
            let pre_t = &trace.layers[l - 2].pre_tangent;
            if nb == 3 {
                let (gv, gt) = gs.split_at_mut(n * w_in);
                let (gx, gtt) = gt.split_at_mut(n * w_in);
                let (ax, at) = pre_t.split_at(n * w_in);
                for j in 0..n * w_in {
                    let hv = h[j];
                    let s = 1.0 - hv * hv;
                    let g_s = gx[j] * ax[j] + gtt[j] * at[j];
                    gv[j] = (gv[j] - 2.0 * hv * g_s) * s;
                    gx[j] *= s;
                    gtt[j] *= s;
                }
            } else {
                for (gv, hv) in gs.iter_mut().zip(h) {
                    *gv *= 1.0 - hv * hv;
                }
            }
            g = gs;
        } else {
            fourier_backward(model, trace, &gs, grad);
        }
    }
}

fn fourier_backward(model: &PinnModel, trace: &Trace, gs: &[f64], grad: &mut ParamVector) {
    let (n, nb) = (trace.n, trace.nb);
    let d = model.arch.fourier_features;
    let b = model.b_matrix();
    let range = grad.range(B_SEGMENT).expect("frequency segment");
    let gb = &mut grad.values[range];
    let w = 2 * d;
    for (i, &(x, t)) in trace.points.iter().enumerate() {
        let row = &gs[i * w..(i + 1) * w];
        for k in 0..d {
            let (s, c) = sin_cos(trace.z[i * d + k]);
            let (gc, gsn) = (row[k], row[d + k]);
            let mut gz = -s * gc + c * gsn;
            let (mut gbx, mut gbt) = (0.0, 0.0);
            if nb == 3 {
                let (bx, bt) = (b[2 * k], b[2 * k + 1]);
                let rx = &gs[(n + i) * w..(n + i + 1) * w];
                let rt = &gs[(2 * n + i) * w..(2 * n + i + 1) * w];
                let (gcx, gsx, gct, gst) = (rx[k], rx[d + k], rt[k], rt[d + k]);
                gz += -c * bx * gcx - s * bx * gsx - c * bt * gct - s * bt * gst;
                gbx = -s * gcx + c * gsx;
                gbt = -s * gct + c * gst;
            }
            gb[2 * k] += gz * x + gbx;
            gb[2 * k + 1] += gz * t + gbt;
        }
    }
}

pub(crate) fn check_model(model: &PinnModel) -> Result<()> {
    match model.params.first_non_finite() {
        Some(seg) => Err(Error::NonFiniteModel(seg.to_string())),
        None => Ok(()),
    }
}
