//! The network function class: a trainable Fourier feature layer
//! `γ(x,t) = [cos(B m), sin(B m)]`, a tanh MLP and an output map that is
//! either the identity or the sine-bounded map onto `[m, M]`.
//!
//! Parameters live in a single [`ParamVector`]. `theta1.B` holds the
//! `D × 2` frequency matrix (row `k` is `(b_kx, b_kt)`); every MLP weight and
//! bias lives under `theta2.*`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{sin, sin_cos, ParamVector};
use crate::error::{Error, Result};

pub const THETA1: &str = "theta1";
pub const THETA2: &str = "theta2";
pub const B_SEGMENT: &str = "theta1.B";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Number of sine/cosine pairs `D`.
    pub fourier_features: usize,
    pub hidden: Vec<usize>,
    /// Standard deviation of the Gaussian used to draw `B`.
    pub sigma: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { fourier_features: 128, hidden: vec![128, 128, 128], sigma: 1.0, activation: Activation::Tanh }
    }
}

impl Architecture {
    /// Layer widths from the feature layer to the scalar output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(2 * self.fourier_features);
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.fourier_features == 0 {
            return Err(Error::InvalidArchitecture("at least one Fourier pair is required".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn param_shape(&self) -> Vec<(String, usize)> {
        let widths = self.widths();
        let mut shape = vec![(B_SEGMENT.to_string(), 2 * self.fourier_features)];
        for l in 1..widths.len() {
            shape.push((format!("{THETA2}.W{l}"), widths[l] * widths[l - 1]));
            shape.push((format!("{THETA2}.b{l}"), widths[l]));
        }
        shape
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutputMap {
    #[default]
    Identity,
    Bounded {
        min: f64,
        max: f64,
    },
}

impl OutputMap {
    pub fn bounded(min: f64, max: f64) -> Result<Self> {
        if min < max {
            Ok(Self::Bounded { min, max })
        } else {
            Err(Error::InvalidBounds { m: min, big_m: max })
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OutputMap::Identity => Ok(()),
            OutputMap::Bounded { min, max } => Self::bounded(min, max).map(|_| ()),
        }
    }
}

/// `½[(M − m) sin(raw) + M + m]`, clamped against rounding past the bounds.
pub fn bounded_output(raw: f64, m: f64, big_m: f64) -> Result<f64> {
    if !(m < big_m) {
        return Err(Error::InvalidBounds { m, big_m });
    }
    Ok(bounded_unchecked(raw, m, big_m))
}

#[inline]
pub(crate) fn bounded_unchecked(raw: f64, m: f64, big_m: f64) -> f64 {
    (0.5 * ((big_m - m) * sin(raw) + big_m + m)).clamp(m, big_m)
}

/// Fourier feature layer, detached from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    /// Row-major `D × 2`.
    pub b: Vec<f64>,
    pub sigma: f64,
    pub trainable: bool,
}

impl FourierFeatures {
    pub fn pairs(&self) -> usize {
        self.b.len() / 2
    }

    /// `[cos(B m), sin(B m)]` for `m = (x, t)`.
    pub fn map(&self, x: f64, t: f64) -> Vec<f64> {
        let d = self.pairs();
        let mut out = vec![0.0; 2 * d];
        for k in 0..d {
            let z = self.b[2 * k] * x + self.b[2 * k + 1] * t;
            (out[d + k], out[k]) = sin_cos(z);
        }
        out
    }
}

pub fn fourier_map(features: &FourierFeatures, x: f64, t: f64) -> Vec<f64> {
    features.map(x, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub arch: Architecture,
    pub output: OutputMap,
    pub seed: u64,
    pub params: ParamVector,
}

/// Draws `B ~ N(0, σ²)`, Glorot-normal weights and zero biases.
pub fn init_model(arch: &Architecture, output: OutputMap, seed: u64) -> Result<PinnModel> {
    arch.validate()?;
    output.validate()?;
    let mut params = ParamVector::zeros(&arch.param_shape());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let freq = Normal::new(0.0, arch.sigma).map_err(|e| Error::InvalidArchitecture(e.to_string()))?;
    for b in params.slice_mut(B_SEGMENT) {
        *b = freq.sample(&mut rng);
    }

    let widths = arch.widths();
    for l in 1..widths.len() {
        let (fan_in, fan_out) = (widths[l - 1], widths[l]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let glorot = Normal::new(0.0, std).map_err(|e| Error::InvalidArchitecture(e.to_string()))?;
        for w in params.slice_mut(&format!("{THETA2}.W{l}")) {
            *w = glorot.sample(&mut rng);
        }
    }

    Ok(PinnModel { arch: arch.clone(), output, seed, params })
}

impl PinnModel {
    pub fn layer_count(&self) -> usize {
        self.arch.hidden.len() + 1
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        self.params.slice(&format!("{THETA2}.W{layer}"))
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        self.params.slice(&format!("{THETA2}.b{layer}"))
    }

    pub fn b_matrix(&self) -> &[f64] {
        self.params.slice(B_SEGMENT)
    }

    pub fn features(&self) -> FourierFeatures {
        FourierFeatures { b: self.b_matrix().to_vec(), sigma: self.arch.sigma, trainable: true }
    }

    /// `(max |B_ij|, mean |B_ij|)`.
    pub fn b_stats(&self) -> (f64, f64) {
        let b = self.b_matrix();
        let max = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mean = b.iter().map(|v| v.abs()).sum::<f64>() / b.len() as f64;
        (max, mean)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_string())?;
        Ok(())
    }

    /// Byte-stable JSON dump: header fields followed by the flat parameters.
    pub fn checkpoint_string(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            arch: self.arch.clone(),
            output: self.output,
            seed: self.seed,
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serialization is infallible")
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint_str(&text)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        ck.arch.validate()?;
        ck.output.validate()?;
        ck.params.validate_layout()?;
        let expected: usize = ck.arch.param_shape().iter().map(|(_, n)| n).sum();
        if expected != ck.params.len() {
            return Err(Error::InvalidConfig("checkpoint parameter count does not match architecture".into()));
        }
        Ok(Self { arch: ck.arch, output: ck.output, seed: ck.seed, params: ck.params })
    }
}

const CHECKPOINT_FORMAT: &str = "advect-pinn-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    arch: Architecture,
    output: OutputMap,
    seed: u64,
    params: ParamVector,
}
