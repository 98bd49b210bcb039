//! Shared helpers for the integration suites: seeded random profile
//! generation, independent quadrature oracles (deliberately written as plain
//! sums, not through the library's integration helpers), and exact i128
//! power-series arithmetic for the combinatorial identities.

#![allow(dead_code)]

use pxcald::forward::DnCurve;
use pxcald::profiles::{merge_grids, CommonGrid, ConductivityProfile, ExponentProfile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Random profiles
// ---------------------------------------------------------------------------

/// Sorted interior breakpoints over (0, 1) with a minimum cell width, so
/// random profiles never have degenerate cells.
pub fn random_breaks(rng: &mut ChaCha8Rng, n_cells: usize) -> Vec<f64> {
    loop {
        let mut pts: Vec<f64> = (0..n_cells - 1).map(|_| rng.gen_range(0.05..0.95)).collect();
        pts.sort_by(f64::total_cmp);
        let mut breaks = vec![0.0];
        breaks.extend(pts);
        breaks.push(1.0);
        if breaks.windows(2).all(|w| w[1] - w[0] >= 0.03) {
            return breaks;
        }
    }
}

/// Random piecewise pair on (0, 1): up to 4 cells each (≤ 8 merged),
/// p ∈ [1.2, 6], γ log-uniform in [0.1, 10].
pub fn random_profile_pair(rng: &mut ChaCha8Rng) -> (ExponentProfile, ConductivityProfile) {
    let n_p = rng.gen_range(1..=4usize);
    let n_g = rng.gen_range(1..=4usize);
    let p_breaks = random_breaks(rng, n_p);
    let g_breaks = random_breaks(rng, n_g);
    let p_vals: Vec<f64> = (0..n_p).map(|_| rng.gen_range(1.2..6.0)).collect();
    let g_vals: Vec<f64> = (0..n_g).map(|_| (rng.gen_range(0.1f64.ln()..10f64.ln())).exp()).collect();
    (
        ExponentProfile::new(p_breaks, p_vals).unwrap(),
        ConductivityProfile::new(g_breaks, g_vals).unwrap(),
    )
}

/// Random pair whose exponent has at most `max_levels` distinct values.
/// The levels are separated in g = 1/(p−1) (pairwise gaps ≥ 0.2, g ∈
/// [0.3, 3.3], so p = 1 + 1/g ∈ [1.3, 4.3]) because the g-values are the
/// Vandermonde nodes of the moment solve — separation there keeps the
/// system well conditioned. γ has up to 6 cells in [0.3, 3].
pub fn random_level_pair(rng: &mut ChaCha8Rng, max_levels: usize) -> (ExponentProfile, ConductivityProfile) {
    let n_levels = rng.gen_range(1..=max_levels);
    let levels: Vec<f64> = loop {
        let mut gs: Vec<f64> = (0..n_levels).map(|_| rng.gen_range(0.3..3.3)).collect();
        gs.sort_by(f64::total_cmp);
        if gs.windows(2).all(|w| w[1] - w[0] >= 0.2) {
            break gs.iter().map(|&g| 1.0 + 1.0 / g).collect();
        }
    };
    // Assign each p-cell one of the level values, using every level at
    // least once.
    let n_p = rng.gen_range(n_levels..=(n_levels + 2).min(5));
    let p_breaks = random_breaks(rng, n_p);
    let mut assignment: Vec<usize> = (0..n_levels).collect();
    while assignment.len() < n_p {
        assignment.push(rng.gen_range(0..n_levels));
    }
    // Deterministic shuffle.
    for i in (1..assignment.len()).rev() {
        let j = rng.gen_range(0..=i);
        assignment.swap(i, j);
    }
    let p_vals: Vec<f64> = assignment.iter().map(|&l| levels[l]).collect();

    let n_g = rng.gen_range(1..=6usize);
    let g_breaks = random_breaks(rng, n_g);
    let g_vals: Vec<f64> = (0..n_g).map(|_| rng.gen_range(0.3..3.0)).collect();
    (
        ExponentProfile::new(p_breaks, p_vals).unwrap(),
        ConductivityProfile::new(g_breaks, g_vals).unwrap(),
    )
}

pub fn merged(p: &ExponentProfile, gamma: &ConductivityProfile) -> CommonGrid {
    merge_grids(p, gamma).unwrap()
}

pub fn exact_curve(p: &ExponentProfile, gamma: &ConductivityProfile) -> DnCurve {
    DnCurve::exact(merged(p, gamma))
}

/// 50 log-spaced gaps spanning [1e−6, 1e6].
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (la, lb) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count as f64 - 1.0)).exp())
        .collect()
}

// ---------------------------------------------------------------------------
// Quadrature oracles (plain sums, independent of library integrators)
// ---------------------------------------------------------------------------

/// μ_n = Σ_cells γ^{−1/(p−1)}·(1/(p−1))ⁿ·len.
pub fn quadrature_moment(grid: &CommonGrid, n: u32) -> f64 {
    grid.cells()
        .map(|c| {
            let g = 1.0 / (c.p - 1.0);
            c.gamma.powf(-g) * g.powi(n as i32) * c.len
        })
        .sum()
}

/// ∫γ^{−1/(p−1)}dx — the fixed point of the DN map.
pub fn quadrature_weight_integral(grid: &CommonGrid) -> f64 {
    quadrature_moment(grid, 0)
}

/// Average of f = γ^{−1/(p−1)} over the cells where p equals `p_level`
/// (exact match).
pub fn average_f_on_level(grid: &CommonGrid, p_level: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in grid.cells() {
        if c.p == p_level {
            num += c.gamma.powf(-1.0 / (c.p - 1.0)) * c.len;
            den += c.len;
        }
    }
    num / den
}

/// m(K) evaluated directly: Σ (K/γ)^{1/(p−1)}·len.
pub fn gap_of_flux(grid: &CommonGrid, k: f64) -> f64 {
    grid.cells().map(|c| (k / c.gamma).powf(1.0 / (c.p - 1.0)) * c.len).sum()
}

// ---------------------------------------------------------------------------
// Exact truncated power series over i128 (coefficient index = degree)
// ---------------------------------------------------------------------------

/// c = a·b truncated at degree `deg`.
pub fn series_mul(a: &[i128], b: &[i128], deg: usize) -> Vec<i128> {
    let mut c = vec![0i128; deg + 1];
    for (i, &ai) in a.iter().enumerate().take(deg + 1) {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(deg + 1 - i) {
            c[i + j] += ai * bj;
        }
    }
    c
}

/// outer(inner(x)) truncated at degree `deg`; requires inner[0] == 0.
pub fn series_compose(outer: &[i128], inner: &[i128], deg: usize) -> Vec<i128> {
    assert_eq!(inner.first().copied().unwrap_or(0), 0, "inner series must have no constant term");
    let mut result = vec![0i128; deg + 1];
    if let Some(&c0) = outer.first() {
        result[0] = c0;
    }
    let mut power = vec![0i128; deg + 1];
    power[0] = 1;
    for &coeff in outer.iter().skip(1) {
        power = series_mul(&power, inner, deg);
        if coeff != 0 {
            for (r, p) in result.iter_mut().zip(&power) {
                *r += coeff * p;
            }
        }
    }
    result
}

/// Compositional inverse of `m` (m[0] = 0, m[1] = 1): the unique series K
/// with m(K(x)) = x, truncated at degree `deg`. Fixed-point iteration
/// K ← x − Σ_{j≥2} m_j·Kʲ gains one exact coefficient per pass.
pub fn series_revert(m: &[i128], deg: usize) -> Vec<i128> {
    assert_eq!(m[0], 0);
    assert_eq!(m[1], 1);
    let mut k = vec![0i128; deg + 1];
    if deg >= 1 {
        k[1] = 1;
    }
    for _ in 0..deg {
        let tail = {
            // Σ_{j≥2} m_j·Kʲ via Horner on the reversed coefficients.
            let mut acc = vec![0i128; deg + 1];
            for &mj in m.iter().skip(2).rev() {
                acc = series_mul(&acc, &k, deg);
                acc[0] += mj;
            }
            acc = series_mul(&acc, &k, deg);
            series_mul(&acc, &k, deg)
        };
        let mut next = vec![0i128; deg + 1];
        if deg >= 1 {
            next[1] = 1;
        }
        for (n, t) in next.iter_mut().zip(&tail) {
            *n -= t;
        }
        k = next;
    }
    k
}

/// n!·(coefficient of xⁿ): the n-th derivative at 0 of an integer series.
pub fn derivative_at_zero(series: &[i128], n: usize) -> i128 {
    let mut fact = 1i128;
    for i in 1..=n as i128 {
        fact *= i;
    }
    fact * series[n]
}

#[cfg(test)]
mod sanity {
    use super::*;

    #[test]
    fn series_tools_agree_with_hand_calculations() {
        // (1 + x)² = 1 + 2x + x².
        let sq = series_mul(&[1, 1], &[1, 1], 3);
        assert_eq!(sq, vec![1, 2, 1, 0]);
        // Revert m = x + x²: K = x − x² + 2x³ − 5x⁴ (Catalan signs).
        let k = series_revert(&[0, 1, 1], 4);
        assert_eq!(k, vec![0, 1, -1, 2, -5]);
        // Compose y² with y = x + x³: x² + 2x⁴ + x⁶.
        let c = series_compose(&[0, 0, 1], &[0, 1, 0, 1], 6);
        assert_eq!(c, vec![0, 0, 1, 0, 2, 0, 1]);
    }
}
