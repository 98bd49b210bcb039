//! Bracketed scalar root finding for strictly monotone maps.
//!
//! Everything the crate inverts — K ↦ m(K), m ↦ Λ(m) − m — is continuous
//! with a single sign change, so a bracket plus the Illinois variant of
//! false position (with a bisection safeguard) is unconditionally convergent
//! and needs no derivatives.

use crate::error::{Error, Result};

/// Upper bound on bracket-growth doublings. 2^1200 overflows f64, so the
/// growth loop is guaranteed to either bracket the root or detect failure
/// well before this.
const MAX_DOUBLINGS: usize = 1200;

const MAX_ITER: usize = 200;

/// Root of `f` inside `[lo, hi]` given `f(lo) ≤ 0 ≤ f(hi)`.
///
/// Returns as soon as `stop(x, f(x))` approves an iterate or the bracket
/// collapses to adjacent floating-point numbers (further refinement is
/// impossible); errors only if the bracket is invalid or the iteration cap
/// is exhausted without meeting either condition.
pub(crate) fn bracketed_root<F, S>(f: F, lo: f64, f_lo: f64, hi: f64, f_hi: f64, stop: S) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    S: Fn(f64, f64) -> bool,
{
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(lo < hi) || f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Bracket {
            context: format!("invalid bracket [{lo}, {hi}] with f = [{f_lo}, {f_hi}]"),
        });
    }

    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    // +1 / −1: which endpoint the previous iterate replaced (Illinois memory).
    let mut side = 0i8;

    for _ in 0..MAX_ITER {
        // False-position point, replaced by the midpoint whenever rounding
        // pushes it onto (or past) an endpoint.
        let mut x = (fa * b - fb * a) / (fa - fb);
        if !(a < x && x < b) {
            x = 0.5 * (a + b);
        }
        if x <= a || x >= b {
            // Bracket is two adjacent floats; pick the endpoint with the
            // smaller residual.
            return Ok(if fa.abs() <= fb.abs() { a } else { b });
        }
        let fx = f(x)?;
        if stop(x, fx) || fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Bracket { context: format!("no convergence in {MAX_ITER} iterations on [{a}, {b}]") })
}

/// Solves `f(x) = target` for strictly increasing `f` with `f(0) = 0` and
/// `target > 0`, growing a geometric bracket upward from `hint_hi` (and
/// shrinking it downward for small targets) before refining.
///
/// Convergence criterion: relative residual `|f(x) − target| ≤ rel_tol·target`.
pub(crate) fn solve_increasing<F>(f: F, target: f64, hint_hi: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    debug_assert!(target > 0.0 && hint_hi > 0.0 && rel_tol > 0.0);
    let mut hi = hint_hi;
    let mut f_hi = f(hi)?;

    let mut grow = 0;
    while f_hi < target {
        hi *= 2.0;
        if !hi.is_finite() || grow == MAX_DOUBLINGS {
            return Err(Error::Bracket {
                context: format!("f({hi:e}) = {f_hi:e} still below target {target:e} after {grow} doublings"),
            });
        }
        f_hi = f(hi)?;
        grow += 1;
    }

    // Tighten from below: halve while the midpoint still overshoots.
    let mut lo = 0.0;
    let mut f_lo = -target;
    let mut shrink = 0;
    loop {
        let half = 0.5 * hi;
        if half == 0.0 || shrink == MAX_DOUBLINGS {
            break;
        }
        let f_half = f(half)?;
        if f_half >= target {
            hi = half;
            f_hi = f_half;
            shrink += 1;
        } else {
            lo = half;
            f_lo = f_half - target;
            break;
        }
    }

    bracketed_root(|x| Ok(f(x)? - target), lo, f_lo, hi, f_hi - target, |_, fx| fx.abs() <= rel_tol * target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_linear_map() {
        let x = solve_increasing(|x| Ok(3.0 * x), 6.0, 1.0, 1e-14).unwrap();
        assert!((x - 2.0).abs() <= 1e-13);
    }

    #[test]
    fn solves_power_map_over_wide_range() {
        for &target in &[1e-9, 1e-3, 1.0, 1e4, 1e9] {
            let x = solve_increasing(|x| Ok(x.powf(0.31)), target, 1.0, 1e-13).unwrap();
            let back: f64 = x.powf(0.31);
            assert!((back - target).abs() <= 1e-12 * target, "target {target}: got {back}");
        }
    }

    #[test]
    fn bracketed_root_handles_flat_then_steep() {
        // Root of x³ − 1e−6 near 0.01 inside a very lopsided bracket.
        let f = |x: f64| Ok(x * x * x - 1e-6);
        let r = bracketed_root(f, 0.0, -1e-6, 10.0, 999.999999, |_, fx: f64| fx.abs() <= 1e-20).unwrap();
        assert!((r - 0.01).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid_bracket() {
        let r = bracketed_root(Ok, 1.0, 1.0, 2.0, 2.0, |_, _| true);
        assert!(matches!(r, Err(Error::Bracket { .. })));
    }

    #[test]
    fn accepts_root_at_endpoint() {
        let r = bracketed_root(Ok, 0.0, 0.0, 1.0, 1.0, |_, _| false).unwrap();
        assert_eq!(r, 0.0);
    }
}
