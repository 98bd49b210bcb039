//! Piecewise-constant coefficient profiles on an interval.
//!
//! The exponent p(x) and the conductivity γ(x) are both modeled as piecewise-
//! constant functions over a finite partition of a common interval `[a, b]`.
//! This is a deliberate modeling choice: with simple functions every integral
//! that appears in the forward and inverse solvers reduces to an exact finite
//! sum over cells, and the algebra of sets generated by the exponent has
//! finitely many atoms, which is what makes the level-set machinery in
//! [`crate::projection`] constructive. A genuinely continuous exponent must be
//! approximated by a piecewise-constant one before this crate can ingest it;
//! that approximation step (and the change in the generated algebra it
//! entails) is up to the caller.

use serde::Deserialize;
use std::path::Path;

use crate::error::{Error, Result};

/// The auxiliary exponent g = 1/(p − 1) attached to an exponent value p.
#[inline]
pub fn g_of(p: f64) -> f64 {
    1.0 / (p - 1.0)
}

/// The conjugate-type exponent q = p/(p − 1) = 1 + g attached to p.
#[inline]
pub fn q_of(p: f64) -> f64 {
    p / (p - 1.0)
}

/// A bounded open interval `(a, b)`, the domain of every profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    /// Builds an interval, rejecting `a >= b` and non-finite endpoints.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid_argument("interval", format!("endpoints must be finite, got [{a}, {b}]")));
        }
        if a >= b {
            return Err(Error::invalid_argument("interval", format!("left endpoint must be below right, got [{a}, {b}]")));
        }
        Ok(Interval { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Length `b − a`.
    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }
}

/// Validates a breakpoint/value pair for a piecewise-constant function.
///
/// `path` is the field prefix used in error messages (`"p"` or `"gamma"`).
pub(crate) fn validate_breaks(path: &str, breaks: &[f64], n_values: usize) -> Result<()> {
    if breaks.len() < 2 {
        return Err(Error::invalid_profile(format!("{path}.breaks"), "need at least two breakpoints"));
    }
    for (i, &x) in breaks.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::invalid_profile(format!("{path}.breaks[{i}]"), format!("breakpoint must be finite, got {x}")));
        }
    }
    for i in 1..breaks.len() {
        if breaks[i] <= breaks[i - 1] {
            return Err(Error::invalid_profile(
                format!("{path}.breaks[{i}]"),
                format!("breakpoints must be strictly increasing, got {} after {}", breaks[i], breaks[i - 1]),
            ));
        }
    }
    if n_values != breaks.len() - 1 {
        return Err(Error::invalid_profile(
            format!("{path}.values"),
            format!("expected {} cell values for {} breakpoints, got {}", breaks.len() - 1, breaks.len(), n_values),
        ));
    }
    Ok(())
}

/// Piecewise-constant exponent p(x) with every value strictly above 1.
///
/// Breakpoints run from the left endpoint to the right endpoint of the
/// interval; `values[i]` is the exponent on the cell
/// `(breaks[i], breaks[i+1])`. The bounds `p⁻ = min p_i` and `p⁺ = max p_i`
/// are computed from the stored values rather than declared by the caller, so
/// they can never disagree with the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
    p_min: f64,
    p_max: f64,
}

impl ExponentProfile {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breaks("p", &breaks, values.len())?;
        for (i, &p) in values.iter().enumerate() {
            if !p.is_finite() || p <= 1.0 {
                return Err(Error::invalid_profile(format!("p.values[{i}]"), format!("exponent must be finite and > 1, got {p}")));
            }
        }
        let p_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let p_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(ExponentProfile { breaks, values, p_min, p_max })
    }

    /// Constant exponent on the whole interval.
    pub fn constant(interval: Interval, p: f64) -> Result<Self> {
        Self::new(vec![interval.a(), interval.b()], vec![p])
    }

    pub fn interval(&self) -> Interval {
        Interval { a: self.breaks[0], b: *self.breaks.last().unwrap() }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest exponent value p⁻.
    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// Largest exponent value p⁺.
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Per-cell view of g = 1/(p − 1).
    pub fn g_values(&self) -> Vec<f64> {
        self.values.iter().map(|&p| g_of(p)).collect()
    }

    /// Per-cell view of q = p/(p − 1).
    pub fn q_values(&self) -> Vec<f64> {
        self.values.iter().map(|&p| q_of(p)).collect()
    }
}

/// Piecewise-constant conductivity γ(x) with every value strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl ConductivityProfile {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breaks("gamma", &breaks, values.len())?;
        for (i, &g) in values.iter().enumerate() {
            if !g.is_finite() || g <= 0.0 {
                return Err(Error::invalid_profile(format!("gamma.values[{i}]"), format!("conductivity must be finite and > 0, got {g}")));
            }
        }
        Ok(ConductivityProfile { breaks, values })
    }

    /// Constant conductivity on the whole interval.
    pub fn constant(interval: Interval, gamma: f64) -> Result<Self> {
        Self::new(vec![interval.a(), interval.b()], vec![gamma])
    }

    pub fn interval(&self) -> Interval {
        Interval { a: self.breaks[0], b: *self.breaks.last().unwrap() }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest conductivity value (essential lower bound).
    pub fn gamma_min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// One cell of a [`CommonGrid`]: constant exponent, conductivity, and length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub p: f64,
    pub gamma: f64,
    pub len: f64,
}

/// The common refinement of an exponent grid and a conductivity grid.
///
/// Every cell carries a single (p, γ) pair, so any integrand built from the
/// two coefficients is constant per cell and integrates exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonGrid {
    breaks: Vec<f64>,
    p: Vec<f64>,
    gamma: Vec<f64>,
}

/// Merges the breakpoint grids of an exponent and a conductivity profile.
///
/// Both profiles must live on the same interval; the result is the union of
/// the two breakpoint sets with each source value copied onto the refined
/// cells it covers.
pub fn merge_grids(p: &ExponentProfile, gamma: &ConductivityProfile) -> Result<CommonGrid> {
    let ip = p.interval();
    let ig = gamma.interval();
    if ip.a() != ig.a() || ip.b() != ig.b() {
        return Err(Error::DomainMismatch { pa: ip.a(), pb: ip.b(), ga: ig.a(), gb: ig.b() });
    }

    // Sorted union of the two strictly-increasing breakpoint lists.
    let mut breaks = Vec::with_capacity(p.breaks.len() + gamma.breaks.len());
    let (mut i, mut j) = (0, 0);
    while i < p.breaks.len() || j < gamma.breaks.len() {
        let next = match (p.breaks.get(i), gamma.breaks.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        breaks.push(next);
    }

    // Copy source values onto the refined cells by locating each cell midpoint.
    let locate = |src: &[f64], x: f64| -> usize {
        // partition_point returns the first break above x; the cell index is one less.
        src.partition_point(|&b| b <= x).saturating_sub(1).min(src.len() - 2)
    };
    let mut pv = Vec::with_capacity(breaks.len() - 1);
    let mut gv = Vec::with_capacity(breaks.len() - 1);
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        pv.push(p.values[locate(&p.breaks, mid)]);
        gv.push(gamma.values[locate(&gamma.breaks, mid)]);
    }
    Ok(CommonGrid { breaks, p: pv, gamma: gv })
}

impl CommonGrid {
    pub fn interval(&self) -> Interval {
        Interval { a: self.breaks[0], b: *self.breaks.last().unwrap() }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn n_cells(&self) -> usize {
        self.p.len()
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell { p: self.p[i], gamma: self.gamma[i], len: self.breaks[i + 1] - self.breaks[i] }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(|i| self.cell(i))
    }

    pub fn p_values(&self) -> &[f64] {
        &self.p
    }

    pub fn gamma_values(&self) -> &[f64] {
        &self.gamma
    }

    /// Smallest exponent value p⁻ on the grid.
    pub fn p_min(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest exponent value p⁺ on the grid.
    pub fn p_max(&self) -> f64 {
        self.p.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-cell view of the transformed weight f = γ^{−1/(p−1)}.
    ///
    /// Composing with γ = f^{−(p−1)} recovers the stored conductivity values
    /// up to floating rounding.
    pub fn f_values(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.gamma)
            .map(|(&p, &gamma)| gamma.powf(-g_of(p)))
            .collect()
    }

    /// Index of the cell containing `x`, or an error when `x` is outside the
    /// interval. Breakpoints resolve to the cell on their right (the last
    /// breakpoint resolves left) — irrelevant for integrals, convenient for
    /// point evaluation.
    pub fn locate(&self, x: f64) -> Result<usize> {
        let iv = self.interval();
        if !x.is_finite() || !iv.contains(x) {
            return Err(Error::OutOfDomain { x, a: iv.a(), b: iv.b() });
        }
        Ok(self.breaks.partition_point(|&b| b <= x).saturating_sub(1).min(self.n_cells() - 1))
    }
}

/// Sums `cell_fn(p_i, γ_i, len_i)` over all cells of the grid.
///
/// Because the coefficients are constant per cell, this evaluates
/// ∫ F(p(x), γ(x)) dx exactly whenever `cell_fn(p, γ, len) = F(p, γ)·len`;
/// there is no quadrature error, only floating rounding.
pub fn integrate_cellwise<F>(grid: &CommonGrid, cell_fn: F) -> Result<f64>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut total = 0.0;
    for (i, cell) in grid.cells().enumerate() {
        let v = cell_fn(cell.p, cell.gamma, cell.len);
        if !v.is_finite() {
            return Err(Error::NonFiniteCell { cell: i, p: cell.p, gamma: cell.gamma, len: cell.len });
        }
        total += v;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// JSON loading
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RawPiecewise {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct RawProfileSet {
    interval: [f64; 2],
    p: RawPiecewise,
    gamma: RawPiecewise,
}

/// A validated (interval, p, γ) triple loaded from a JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub interval: Interval,
    pub p: ExponentProfile,
    pub gamma: ConductivityProfile,
}

impl ProfileSet {
    pub fn new(p: ExponentProfile, gamma: ConductivityProfile) -> Result<Self> {
        let interval = p.interval();
        let ig = gamma.interval();
        if interval != ig {
            return Err(Error::DomainMismatch { pa: interval.a(), pb: interval.b(), ga: ig.a(), gb: ig.b() });
        }
        Ok(ProfileSet { interval, p, gamma })
    }

    /// Parses and validates the document
    /// `{"interval":[a,b], "p":{"breaks":[...],"values":[...]}, "gamma":{...}}`.
    ///
    /// Each profile's breakpoints must start and end exactly at the declared
    /// interval endpoints; validation errors name the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawProfileSet = serde_json::from_str(text)?;
        let interval = Interval::new(raw.interval[0], raw.interval[1])
            .map_err(|_| Error::invalid_profile("interval", format!("expected finite a < b, got {:?}", raw.interval)))?;
        let p = ExponentProfile::new(raw.p.breaks, raw.p.values)?;
        let gamma = ConductivityProfile::new(raw.gamma.breaks, raw.gamma.values)?;
        for (path, prof_iv) in [("p", p.interval()), ("gamma", gamma.interval())] {
            if prof_iv.a() != interval.a() {
                return Err(Error::invalid_profile(
                    format!("{path}.breaks[0]"),
                    format!("first breakpoint {} must equal interval start {}", prof_iv.a(), interval.a()),
                ));
            }
            if prof_iv.b() != interval.b() {
                return Err(Error::invalid_profile(
                    format!("{path}.breaks[last]"),
                    format!("last breakpoint {} must equal interval end {}", prof_iv.b(), interval.b()),
                ));
            }
        }
        Ok(ProfileSet { interval, p, gamma })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Same document schema as [`Self::from_json_str`], already parsed —
    /// used for profile sets embedded inside larger JSON documents.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        Self::from_json_str(&value.to_string())
    }

    /// Merged common grid of the pair.
    pub fn grid(&self) -> Result<CommonGrid> {
        merge_grids(&self.p, &self.gamma)
    }
}
