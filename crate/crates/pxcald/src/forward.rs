//! The 1-D forward problem.
//!
//! On an interval with piecewise-constant exponent p and conductivity γ, the
//! weighted p(x)-Laplace equation with boundary values u(a) = A, u(b) = B has
//! a flux γ|u′|^{p−2}u′ that is constant in x. Writing K for that constant
//! and m = B − A ≥ 0 for the boundary gap, everything reduces to exact cell
//! sums:
//!
//! - boundary gap:  m(K) = ∫ (K/γ)^{1/(p−1)} dx, a strictly increasing
//!   bijection of K ≥ 0 (inverted numerically by [`solve_flux`]);
//! - potential:     u(x) = A + ∫_a^x (K/γ)^{1/(p−1)} ds, piecewise linear;
//! - boundary flux: Λ(m) = ∫ γ^{−1/(p−1)} K_m^{p/(p−1)} dx, the
//!   Dirichlet-to-Neumann (DN) map queried through [`DnCurve`];
//! - interior power data γ|u′|^{r(x)}, from which γ is recoverable wherever
//!   p − r ≠ 1.
//!
//! Only the orientation A ≤ B (m ≥ 0) is implemented; by odd symmetry of the
//! equation the opposite sign carries no extra information.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::profiles::{g_of, integrate_cellwise, merge_grids, q_of, CommonGrid, ConductivityProfile, ExponentProfile};
use crate::rootfind;

/// Default relative tolerance for [`solve_flux`].
pub const DEFAULT_TOL: f64 = 1e-12;

/// Internal tolerance used when an exact-mode [`DnCurve`] is evaluated.
/// Deliberately much tighter than [`DEFAULT_TOL`]: curve values feed
/// numerical differentiation, which amplifies evaluation noise by h^{−n},
/// so the root solve is pushed to the floating-point floor.
const EXACT_EVAL_TOL: f64 = 1e-15;

/// A flux constant K together with the boundary gap m it corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxConstant {
    /// The constant value of γ|u′|^{p−2}u′ across the interval.
    pub k: f64,
    /// The Dirichlet gap m = B − A that produces this flux.
    pub m: f64,
}

/// The boundary gap m(K) = ∫ (K/γ)^{1/(p−1)} dx produced by flux constant K.
///
/// Strictly increasing and continuous in K with m(0) = 0.
pub fn dirichlet_gap(k: f64, grid: &CommonGrid) -> Result<f64> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::invalid_argument("K", format!("flux constant must be finite and >= 0, got {k}")));
    }
    integrate_cellwise(grid, |p, gamma, len| (k / gamma).powf(g_of(p)) * len)
}

/// Inverts K ↦ m(K): finds the flux constant whose boundary gap is `m`.
///
/// Converges to relative residual |m(K) − m| ≤ tol·m (which also satisfies
/// the looser absolute-relative mix tol·max(1, m)); m = 0 returns K = 0
/// exactly.
pub fn solve_flux(m: f64, grid: &CommonGrid, tol: f64) -> Result<FluxConstant> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::invalid_argument("m", format!("boundary gap must be finite and >= 0, got {m}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid_argument("tol", format!("tolerance must be positive, got {tol}")));
    }
    if m == 0.0 {
        return Ok(FluxConstant { k: 0.0, m: 0.0 });
    }
    let k = rootfind::solve_increasing(|k| dirichlet_gap(k, grid), m, 1.0, tol)?;
    Ok(FluxConstant { k, m })
}

/// The potential u(x) = A + ∫_a^x (K/γ)^{1/(p−1)} ds for a solved flux.
///
/// Piecewise linear on the grid, nondecreasing, with u(a) = A and
/// u(b) = A + m.
pub fn potential(x: f64, flux: &FluxConstant, grid: &CommonGrid, a_value: f64) -> Result<f64> {
    let cell_idx = grid.locate(x)?;
    let breaks = grid.breaks();
    let mut u = a_value;
    for i in 0..=cell_idx {
        let cell = grid.cell(i);
        let span = if i == cell_idx { x - breaks[i] } else { cell.len };
        u += (flux.k / cell.gamma).powf(g_of(cell.p)) * span;
    }
    Ok(u)
}

/// The DN map as a function of the flux constant:
/// Λ(K) = ∫ γ^{−1/(p−1)} K^{p/(p−1)} dx = ∫ f·K^{q} dx.
pub fn dn_map_of_flux(k: f64, grid: &CommonGrid) -> Result<f64> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::invalid_argument("K", format!("flux constant must be finite and >= 0, got {k}")));
    }
    integrate_cellwise(grid, |p, gamma, len| {
        let g = g_of(p);
        gamma.powf(-g) * k.powf(q_of(p)) * len
    })
}

/// The DN map Λ(m) evaluated through a [`DnCurve`].
pub fn dn_map(m: f64, curve: &DnCurve) -> Result<f64> {
    curve.eval(m)
}

/// The unit-conductivity flux constant K̄_m: the solution of
/// ∫ K̄^{1/(p−1)} dx = m. Computable from the exponent alone — no γ — which
/// is what makes it usable as a scaling factor on measured data.
pub fn unit_flux(m: f64, p: &ExponentProfile, tol: f64) -> Result<f64> {
    let unit = ConductivityProfile::constant(p.interval(), 1.0)?;
    let grid = merge_grids(p, &unit)?;
    Ok(solve_flux(m, &grid, tol)?.k)
}

/// Interior power data γ|u′|^{r(x)} per cell, given per-cell exponents `r`.
///
/// Since |u′| = (K/γ)^{1/(p−1)} on each cell, the data equals
/// γ^{(p−r−1)/(p−1)} · K^{r/(p−1)}.
pub fn interior_power_data(r: &[f64], flux: &FluxConstant, grid: &CommonGrid) -> Result<Vec<f64>> {
    check_cell_exponents(r, grid)?;
    let mut out = Vec::with_capacity(grid.n_cells());
    for (i, cell) in grid.cells().enumerate() {
        let g = g_of(cell.p);
        let v = cell.gamma.powf((cell.p - r[i] - 1.0) * g) * flux.k.powf(r[i] * g);
        if !v.is_finite() {
            return Err(Error::NonFiniteCell { cell: i, p: cell.p, gamma: cell.gamma, len: cell.len });
        }
        out.push(v);
    }
    Ok(out)
}

/// Recovers the conductivity from interior power data: on each cell
/// γ = (data·K^{−r/(p−1)})^{(p−1)/(p−r−1)}, defined wherever p − r ≠ 1.
///
/// Cells with |p − r − 1| < `eps` are reported as non-recoverable — there the
/// data γ^{(p−r−1)/(p−1)}K^{r/(p−1)} loses all dependence on γ.
pub fn recover_from_interior(
    data: &[f64],
    r: &[f64],
    flux: &FluxConstant,
    grid: &CommonGrid,
    eps: f64,
) -> Result<ConductivityProfile> {
    check_cell_exponents(r, grid)?;
    if data.len() != grid.n_cells() {
        return Err(Error::invalid_argument("data", format!("expected {} cell values, got {}", grid.n_cells(), data.len())));
    }
    if !(flux.k > 0.0) {
        return Err(Error::invalid_argument("flux", format!("recovery needs a positive flux constant, got {}", flux.k)));
    }
    let bad: Vec<usize> = grid
        .cells()
        .enumerate()
        .filter(|(i, cell)| (cell.p - r[*i] - 1.0).abs() < eps)
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonRecoverableCells { cells: bad, eps });
    }
    let mut values = Vec::with_capacity(grid.n_cells());
    for (i, cell) in grid.cells().enumerate() {
        if !(data[i] > 0.0) || !data[i].is_finite() {
            return Err(Error::invalid_argument("data", format!("data[{i}] must be finite and positive, got {}", data[i])));
        }
        let g = g_of(cell.p);
        let gamma = (data[i] * flux.k.powf(-r[i] * g)).powf((cell.p - 1.0) / (cell.p - r[i] - 1.0));
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::NonFiniteCell { cell: i, p: cell.p, gamma, len: cell.len });
        }
        values.push(gamma);
    }
    ConductivityProfile::new(grid.breaks().to_vec(), values)
}

fn check_cell_exponents(r: &[f64], grid: &CommonGrid) -> Result<()> {
    if r.len() != grid.n_cells() {
        return Err(Error::invalid_argument("r", format!("expected {} cell values, got {}", grid.n_cells(), r.len())));
    }
    if let Some((i, &v)) = r.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid_argument("r", format!("r[{i}] must be finite, got {v}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// DN curves
// ---------------------------------------------------------------------------

/// A queryable DN map m ↦ Λ(m).
///
/// `Exact` simulates the map from a known profile pair (each query solves the
/// forward problem to near machine precision). `Tabulated` interpolates
/// measured samples with a monotone cubic in (log m, log Λ) — log-log because
/// the map is exactly a power law whenever p is constant, and monotone
/// because Λ is strictly increasing and the interpolant must stay invertible.
#[derive(Debug, Clone)]
pub enum DnCurve {
    Exact { grid: CommonGrid },
    Tabulated(TabulatedDnCurve),
}

impl DnCurve {
    /// Exact-simulation curve over a known (p, γ) pair.
    pub fn exact(grid: CommonGrid) -> Self {
        DnCurve::Exact { grid }
    }

    /// Tabulated curve from measured (m, Λ) samples.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        Ok(DnCurve::Tabulated(TabulatedDnCurve::new(samples)?))
    }

    /// Λ(m). For m = 0 this is exactly 0 in both modes.
    pub fn eval(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::invalid_argument("m", format!("boundary gap must be finite and >= 0, got {m}")));
        }
        match self {
            DnCurve::Exact { grid } => {
                let flux = solve_flux(m, grid, EXACT_EVAL_TOL)?;
                dn_map_of_flux(flux.k, grid)
            }
            DnCurve::Tabulated(tab) => tab.eval(m),
        }
    }

    /// The m-range on which the curve is evaluable: `None` means unbounded
    /// (exact mode).
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            DnCurve::Exact { .. } => None,
            DnCurve::Tabulated(tab) => Some(tab.domain()),
        }
    }

    pub fn grid(&self) -> Option<&CommonGrid> {
        match self {
            DnCurve::Exact { grid } => Some(grid),
            DnCurve::Tabulated(_) => None,
        }
    }

    pub fn samples(&self) -> Option<&[(f64, f64)]> {
        match self {
            DnCurve::Exact { .. } => None,
            DnCurve::Tabulated(tab) => Some(tab.samples()),
        }
    }

    /// Evaluates the curve on an m-grid, producing (m, Λ) pairs.
    pub fn sample(&self, ms: &[f64]) -> Result<Vec<(f64, f64)>> {
        ms.iter().map(|&m| Ok((m, self.eval(m)?))).collect()
    }
}

/// Measured DN samples with a monotone log-log interpolant.
#[derive(Debug, Clone)]
pub struct TabulatedDnCurve {
    samples: Vec<(f64, f64)>,
    interp: MonotoneCubic,
}

impl TabulatedDnCurve {
    /// Validates and fits samples: m strictly increasing, Λ strictly
    /// increasing, both positive (a single leading (0, 0) row is accepted
    /// and dropped — the curve passes through the origin by definition).
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.first() == Some(&(0.0, 0.0)) {
            samples.remove(0);
        }
        if samples.len() < 2 {
            return Err(Error::InvalidCurveTable { message: format!("need at least two positive samples, got {}", samples.len()) });
        }
        for (i, &(m, l)) in samples.iter().enumerate() {
            if !m.is_finite() || !l.is_finite() || m <= 0.0 || l <= 0.0 {
                return Err(Error::InvalidCurveTable { message: format!("sample {i} = ({m}, {l}) must be positive and finite") });
            }
        }
        for i in 1..samples.len() {
            if samples[i].0 <= samples[i - 1].0 {
                return Err(Error::InvalidCurveTable {
                    message: format!("m must be strictly increasing, sample {i} has m = {} after {}", samples[i].0, samples[i - 1].0),
                });
            }
            if samples[i].1 <= samples[i - 1].1 {
                return Err(Error::InvalidCurveTable {
                    message: format!("lambda must be strictly increasing, sample {i} has {} after {}", samples[i].1, samples[i - 1].1),
                });
            }
        }
        let log_m: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
        let log_l: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
        let interp = MonotoneCubic::new(log_m, log_l)?;
        Ok(TabulatedDnCurve { samples, interp })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Covered m-range (positive part; m = 0 is always evaluable).
    pub fn domain(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn eval(&self, m: f64) -> Result<f64> {
        if m == 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = self.domain();
        if m < lo || m > hi {
            return Err(Error::Extrapolation { m, lo, hi });
        }
        Ok(self.interp.eval(m.ln())?.exp())
    }
}

// ---------------------------------------------------------------------------
// CSV import/export
// ---------------------------------------------------------------------------

/// Serializes curve samples as CSV with header `m,lambda` (16 significant
/// digits, ascending in m). `ms` must be strictly increasing and nonnegative.
pub fn dn_curve_to_csv(curve: &DnCurve, ms: &[f64]) -> Result<String> {
    for i in 0..ms.len() {
        if !(ms[i] >= 0.0) || !ms[i].is_finite() {
            return Err(Error::invalid_argument("ms", format!("ms[{i}] must be finite and >= 0, got {}", ms[i])));
        }
        if i > 0 && ms[i] <= ms[i - 1] {
            return Err(Error::invalid_argument("ms", format!("ms must be strictly increasing, ms[{i}] = {} after {}", ms[i], ms[i - 1])));
        }
    }
    let mut out = String::from("m,lambda\n");
    for &(m, l) in &curve.sample(ms)? {
        writeln!(out, "{m:.15e},{l:.15e}").expect("string write cannot fail");
    }
    Ok(out)
}

/// Parses the CSV produced by [`dn_curve_to_csv`] into a tabulated curve.
pub fn dn_curve_from_csv(text: &str) -> Result<DnCurve> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some("m,lambda") => {}
        other => {
            return Err(Error::InvalidCurveTable { message: format!("expected header `m,lambda`, got {other:?}") });
        }
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let (m_str, l_str) = match (fields.next(), fields.next(), fields.next()) {
            (Some(m), Some(l), None) => (m, l),
            _ => {
                return Err(Error::InvalidCurveTable { message: format!("row {}: expected two comma-separated fields, got `{line}`", i + 1) });
            }
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidCurveTable { message: format!("row {}: bad {what} `{s}`: {e}", i + 1) })
        };
        samples.push((parse(m_str, "m")?, parse(l_str, "lambda")?));
    }
    DnCurve::tabulated(samples)
}
