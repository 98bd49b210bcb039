//! Shape-preserving piecewise-cubic interpolation.
//!
//! Tabulated DN curves must stay strictly increasing between samples —
//! downstream code inverts them and differentiates them — so plain cubic
//! splines (which overshoot) are ruled out. This is the classic monotone
//! Hermite scheme: Fritsch–Butland weighted-harmonic slopes in the interior,
//! one-sided three-point slopes at the ends clipped so no interval's cubic
//! can lose monotonicity.

use crate::error::{Error, Result};

/// A C¹ piecewise-cubic interpolant that preserves the monotonicity of its
/// data on every interval.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Endpoint derivative per knot.
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Fits the interpolant to `(x, y)` pairs with strictly increasing,
    /// finite `x` (at least two points).
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid_argument("y", format!("length {} does not match x length {}", y.len(), x.len())));
        }
        if x.len() < 2 {
            return Err(Error::invalid_argument("x", "need at least two points"));
        }
        for (i, w) in x.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::invalid_argument("x", format!("abscissae must be strictly increasing, x[{}] = {} after {}", i + 1, w[1], w[0])));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("x", "data must be finite"));
        }

        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                // Weighted harmonic mean of adjacent secants; zero at local
                // extrema or sign changes so the cubic cannot overshoot.
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }

        Ok(MonotoneCubic { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Evaluates at `xq`, which must lie inside the fitted domain.
    pub fn eval(&self, xq: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(xq >= lo && xq <= hi) {
            return Err(Error::OutOfDomain { x: xq, a: lo, b: hi });
        }
        // Interval index: last knot strictly below xq (clamped for xq = hi).
        let i = self.x.partition_point(|&k| k <= xq).saturating_sub(1).min(self.x.len() - 2);
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        Ok(h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1])
    }
}

/// Cubic Hermite basis at parameter `t ∈ [0, 1]`.
fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// Non-centered three-point slope for a boundary knot, clipped to keep the
/// boundary interval monotone: the sign must match the adjacent secant and
/// the magnitude may not exceed three times it.
fn edge_slope(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
    if d * delta0 <= 0.0 {
        0.0
    } else if delta0 * delta1 < 0.0 && d.abs() > 3.0 * delta0.abs() {
        3.0 * delta0
    } else {
        d
    }
}
