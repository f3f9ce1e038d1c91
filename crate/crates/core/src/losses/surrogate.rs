//! Smooth surrogates for `|·|`, `max` and the larger-magnitude selector.

use crate::diffcore::Real;

pub fn sigmoid(x: f64) -> f64 {
    x.sigmoid()
}

/// `SA(b) = σ(2αb)b − σ(−2αb)b`.
pub fn smooth_abs<T: Real>(b: T, alpha: f64) -> T {
    let z = b.scale(2.0 * alpha);
    (z.sigmoid() - (-z).sigmoid()) * b
}

/// `σ(α(b−c))b + σ(−α(b−c))c`.
pub fn smooth_max<T: Real>(b: T, c: T, alpha: f64) -> T {
    let z = (b - c).scale(alpha);
    z.sigmoid() * b + (-z).sigmoid() * c
}

/// `b` if `|b| ≥ |c|`, else `c`.
pub fn select_r(b: f64, c: f64) -> f64 {
    if b.abs() >= c.abs() {
        b
    } else {
        c
    }
}

/// `σ(α(SA(b)−SA(c)))b + σ(−α(SA(b)−SA(c)))c`.
pub fn smooth_r<T: Real>(b: T, c: T, alpha: f64) -> T {
    let z = (smooth_abs(b, alpha) - smooth_abs(c, alpha)).scale(alpha);
    z.sigmoid() * b + (-z).sigmoid() * c
}
