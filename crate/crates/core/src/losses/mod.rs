//! Loss terms: the PDE residual (standard and upwind-modified), initial and
//! boundary mismatch, their weighting, and the residual-gap diagnostic.

mod surrogate;
mod terms;

pub use surrogate::{select_r, sigmoid, smooth_abs, smooth_max, smooth_r};
pub use terms::{
    bc_loss, bc_residual, check_pde_loss, ic_loss, pde_loss, pde_loss_standard, pde_loss_upwind_general,
    pde_loss_upwind_max, pde_loss_upwind_r, pde_residual, upwind_bound_check, BoundCheck, LossContext, BOUND_PROBES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 100.0;
pub const DEFAULT_H: f64 = 0.01;

pub const GRADNORM_EMA: f64 = 0.9;
pub const GRADNORM_MIN: f64 = 1e-2;
pub const GRADNORM_MAX: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_pde: f64,
    pub lambda_ic: f64,
    pub lambda_bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

impl LossWeights {
    pub const fn new(lambda_pde: f64, lambda_ic: f64, lambda_bc: f64) -> Self {
        Self { lambda_pde, lambda_ic, lambda_bc }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda_pde, self.lambda_ic, self.lambda_bc]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidConfig("loss weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpwindVariant {
    /// `max{û, û(x+h)}` as the u-argument of a factored speed.
    MaxNonneg,
    /// `r(û(x+h), û(x−h)) · a(x,t)` for a factored speed.
    AbsSelect,
    /// `r(a(x,t,û(x+h)), a(x,t,û(x−h)))` for any speed.
    General,
}

fn default_h() -> f64 {
    DEFAULT_H
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpwindConfig {
    pub variant: UpwindVariant,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl UpwindConfig {
    pub fn new(variant: UpwindVariant) -> Self {
        Self { variant, h: DEFAULT_H, alpha: DEFAULT_ALPHA }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!("upwind h must be positive, got {}", self.h)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("upwind alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Which PDE residual the loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PdeLoss {
    #[default]
    Standard,
    Upwind(UpwindConfig),
}

impl PdeLoss {
    pub fn label(&self) -> &'static str {
        match self {
            PdeLoss::Standard => "standard",
            PdeLoss::Upwind(c) => match c.variant {
                UpwindVariant::MaxNonneg => "upwind-max",
                UpwindVariant::AbsSelect => "upwind-r",
                UpwindVariant::General => "upwind-general",
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pde: f64,
    pub l_ic: f64,
    pub l_bc: f64,
    pub weights: LossWeights,
    pub total: f64,
    /// Largest absolute PDE residual over the collocation points.
    pub residual_max: f64,
}

pub fn total_loss(l_pde: f64, l_ic: f64, l_bc: f64, residual_max: f64, weights: LossWeights) -> LossBreakdown {
    let total = weights.lambda_pde * l_pde + weights.lambda_ic * l_ic + weights.lambda_bc * l_bc;
    LossBreakdown { l_pde, l_ic, l_bc, weights, total, residual_max }
}

/// `λ_k = Σ_j ‖∇L_j‖ / (K ‖∇L_k‖)`, clipped to `[GRADNORM_MIN, GRADNORM_MAX]`.
pub fn gradnorm_raw(norms: [f64; 3]) -> Result<[f64; 3]> {
    if norms.iter().any(|n| !n.is_finite() || *n < 0.0) {
        return Err(Error::NonFiniteGradient(format!("gradient norms {norms:?}")));
    }
    let sum: f64 = norms.iter().sum();
    if sum == 0.0 {
        return Err(Error::InvalidArgument("all gradient norms are zero".into()));
    }
    Ok(norms.map(|n| {
        let lambda = if n == 0.0 { f64::INFINITY } else { sum / (3.0 * n) };
        lambda.clamp(GRADNORM_MIN, GRADNORM_MAX)
    }))
}

/// Gradient-norm weights with `λ_PDE` pinned to 1. With `previous`, the raw
/// weights are blended in as `λ ← 0.9 λ + 0.1 λ̂`.
pub fn gradnorm_weights(norms: [f64; 3], previous: Option<&LossWeights>) -> Result<LossWeights> {
    let raw = gradnorm_raw(norms)?;
    let [_, ic, bc] = match previous {
        None => raw,
        Some(p) => {
            let prev = p.as_array();
            [0, 1, 2].map(|k| GRADNORM_EMA * prev[k] + (1.0 - GRADNORM_EMA) * raw[k])
        }
    };
    Ok(LossWeights::new(1.0, ic, bc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_the_weighted_sum() {
        let b = total_loss(0.1, 0.2, 0.3, 0.5, LossWeights::default());
        assert!((b.total - 0.6).abs() < 1e-15);
        let b = total_loss(0.1, 0.2, 0.3, 0.5, LossWeights::new(1.0, 10.0, 1.0));
        assert_eq!(b.total, 0.1 + 10.0 * 0.2 + 0.3);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, LossWeights::default()).total, 0.0);
    }

    #[test]
    fn gradnorm_balanced_and_skewed() {
        let w = gradnorm_weights([2.0, 2.0, 2.0], None).unwrap();
        assert_eq!(w, LossWeights::new(1.0, 1.0, 1.0));
        // Σ = 2.5, K·‖∇L_IC‖ = 1.5.
        let raw = gradnorm_raw([1.0, 0.5, 1.0]).unwrap();
        assert!((raw[1] - 5.0 / 3.0).abs() < 1e-15);
        assert!(raw[1] > 1.0);
        let w = gradnorm_weights([1.0, 0.0, 1.0], None).unwrap();
        assert_eq!(w.lambda_ic, GRADNORM_MAX);
        assert!(gradnorm_raw([0.0; 3]).is_err());
    }

    #[test]
    fn gradnorm_smoothing_pins_pde() {
        let prev = LossWeights::new(1.0, 2.0, 3.0);
        let w = gradnorm_weights([1.0, 1.0, 1.0], Some(&prev)).unwrap();
        assert_eq!(w.lambda_pde, 1.0);
        assert!((w.lambda_ic - (0.9 * 2.0 + 0.1)).abs() < 1e-15);
        assert!((w.lambda_bc - (0.9 * 3.0 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).validate().is_err());
        assert!(LossWeights::new(-1.0, 1.0, 1.0).validate().is_err());
        assert!(LossWeights::new(1.0, f64::NAN, 1.0).validate().is_err());
        assert!(LossWeights::new(0.0, 1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn pde_loss_config_text() {
        let l: PdeLoss = toml::from_str("kind = \"upwind\"\nvariant = \"abs-select\"\n").unwrap();
        assert_eq!(l, PdeLoss::Upwind(UpwindConfig::new(UpwindVariant::AbsSelect)));
        let s: PdeLoss = toml::from_str("kind = \"standard\"").unwrap();
        assert_eq!(s, PdeLoss::Standard);
        assert_eq!(l.label(), "upwind-r");
    }
}
