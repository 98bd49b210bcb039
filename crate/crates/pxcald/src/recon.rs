//! Inverse-problem algorithms: everything that recovers information about γ
//! from a DN curve.
//!
//! Four routes are implemented, in increasing order of ambition:
//!
//! 1. [`fixed_point`]: the unique m > 0 with Λ(m) = m equals
//!    k = ∫ γ^{−1/(p−1)} dx — the zeroth moment of the weight f, available
//!    from boundary data by a sign-change search.
//! 2. [`extremal_recovery`]: as m → ∞ (resp. m → 0), a rescaled Λ recovers
//!    the average of f over the level set where p is minimal (resp.
//!    maximal). The scaling constant K̄_m is computable from p alone.
//! 3. Moment extraction ([`extract_moments`]): derivatives of Λ at the fixed
//!    point determine all moments μ_n = ∫ f·gⁿ dx with g = 1/(p−1), through
//!    an order-by-order recursion that combines the inverse-function
//!    derivative formula with Faà di Bruno's formula. This is the honest,
//!    ill-posed route; an "oracle" derivative source isolates its
//!    combinatorics from differentiation error.
//! 4. [`reconstruct`]: the full pipeline — fixed point, derivatives, moments,
//!    a Vandermonde solve from moments to per-level averages of f, and the
//!    final transform avg^{−(p−1)} per level, which equals the nonlinear
//!    projection P̃(γ) computed by [`crate::projection`] when the data is
//!    consistent.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    binomial, fdb_coefficient, fdb_tuples, inverse_coefficient, inverse_tuples, stirling_row, IndexTuple,
};
use crate::diff::{derivatives_up_to, DerivativeEstimate, FdScheme};
use crate::error::{Error, Result};
use crate::forward::{dn_map, unit_flux, DnCurve};
use crate::profiles::{g_of, integrate_cellwise, CommonGrid, ExponentProfile};
use crate::projection::{level_sets, LevelSetPartition, ProjectedFunction};
use crate::rootfind;

/// Default residual tolerance for [`fixed_point`].
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Default initial upper bracket for [`fixed_point`].
pub const FIXED_POINT_BRACKET_HI: f64 = 1.0;

/// Condition-estimate threshold above which the level-set solve is flagged.
pub const CONDITION_WARN_THRESHOLD: f64 = 1e12;

const MAX_BRACKET_STEPS: usize = 1200;

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

/// The unique positive fixed point of the DN map, Λ(k) = k.
///
/// Returns k with residual |Λ(k) − k| ≤ `tol`; the bracket is grown/shrunk
/// geometrically from `bracket_hi` using the sign of Λ(m) − m, which is
/// negative below the fixed point and positive above it. The result
/// estimates ∫ γ^{−1/(p−1)} dx, the zeroth moment μ₀.
///
/// For tabulated curves the search is confined to the table's m-range; if
/// the sign never changes there, the fixed point is not bracketed and an
/// error is returned.
pub fn fixed_point(curve: &DnCurve, tol: f64, bracket_hi: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid_argument("tol", format!("tolerance must be positive, got {tol}")));
    }
    if !(bracket_hi > 0.0) || !bracket_hi.is_finite() {
        return Err(Error::invalid_argument("bracket_hi", format!("must be positive and finite, got {bracket_hi}")));
    }
    let h = |m: f64| Ok(dn_map(m, curve)? - m);
    let (dom_lo, dom_hi) = match curve.domain() {
        Some((lo, hi)) => (lo, hi),
        None => (f64::MIN_POSITIVE, f64::MAX),
    };

    let mut hi = bracket_hi.clamp(dom_lo, dom_hi);
    let mut f_hi = h(hi)?;
    if f_hi == 0.0 {
        return Ok(hi);
    }

    if f_hi < 0.0 {
        // Below the fixed point: grow until the sign flips.
        for _ in 0..MAX_BRACKET_STEPS {
            let next = (hi * 2.0).min(dom_hi);
            if next == hi {
                return Err(Error::Bracket {
                    context: format!("DN map stays below the diagonal up to m = {hi:e}; fixed point not bracketed"),
                });
            }
            let f_next = h(next)?;
            if f_next >= 0.0 {
                return rootfind::bracketed_root(h, hi, f_hi, next, f_next, |_, fx| fx.abs() <= tol);
            }
            hi = next;
            f_hi = f_next;
        }
        Err(Error::Bracket { context: "bracket growth cap exhausted".into() })
    } else {
        // Above the fixed point: shrink until the sign flips.
        let mut lo = hi;
        let mut f_lo = f_hi;
        for _ in 0..MAX_BRACKET_STEPS {
            let next = (lo * 0.5).max(dom_lo);
            if next == lo {
                return Err(Error::Bracket {
                    context: format!("DN map stays above the diagonal down to m = {lo:e}; fixed point not bracketed"),
                });
            }
            let f_next = h(next)?;
            if f_next <= 0.0 {
                return rootfind::bracketed_root(h, next, f_next, lo, f_lo, |_, fx| fx.abs() <= tol);
            }
            lo = next;
            f_lo = f_next;
        }
        Err(Error::Bracket { context: "bracket shrink cap exhausted".into() })
    }
}

// ---------------------------------------------------------------------------
// Extremal recovery
// ---------------------------------------------------------------------------

/// Which extreme of q = p/(p−1) an extremal limit targets.
///
/// `MaxQ` is the m → ∞ limit and sees the level set where p = p⁻ (q is
/// decreasing in p, so minimal p means maximal q); `MinQ` is the m → 0 limit
/// and sees the level set where p = p⁺.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremalSide {
    #[serde(rename = "max-q")]
    MaxQ,
    #[serde(rename = "min-q")]
    MinQ,
}

/// Result of an extremal-limit evaluation along an m-schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremalEstimate {
    pub side: ExtremalSide,
    /// Last schedule entry actually evaluated.
    pub m_used: f64,
    /// K̄_m^{−q±}·Λ(m)/|Q±| at `m_used`.
    pub scaled_value: f64,
    /// (scaled limit)^{−1/(p∓−1)}: the estimated average of f over Q±.
    pub recovered_average: f64,
    /// Upper-bound-style estimate of the constant c_m that controls
    /// K_m/K̄_m: (max(1, sup f)/min(1, inf f))^{p⁺−1}, with the f-bounds
    /// supplied by the caller or — lacking any better information from
    /// boundary data alone — both defaulted to the recovered average, which
    /// makes the bound merely indicative.
    pub diagnostic_bound: f64,
    /// The full schedule and the scaled value at each entry, for
    /// convergence diagnostics.
    pub m_schedule: Vec<f64>,
    pub scaled_sequence: Vec<f64>,
}

/// Default geometric schedule for a side: 10¹..10⁶ (MaxQ) or 10⁻¹..10⁻⁶
/// (MinQ).
pub fn default_extremal_schedule(side: ExtremalSide) -> Vec<f64> {
    match side {
        ExtremalSide::MaxQ => (1..=6).map(|e| 10f64.powi(e)).collect(),
        ExtremalSide::MinQ => (1..=6).map(|e| 10f64.powi(-e)).collect(),
    }
}

/// Evaluates the extremal limit of the rescaled DN map along `m_schedule`.
///
/// For side `MaxQ` (schedule increasing toward ∞):
/// K̄_m^{−q⁺}·Λ(m)/|Q₊| → (⨍_{Q₊} f)^{−(p⁻−1)}, where Q₊ is the level set
/// of p⁻ and q⁺ = p⁻/(p⁻−1); for `MinQ` (schedule decreasing toward 0) the
/// same with p⁺, q⁻ and Q₋. The returned `recovered_average` inverts the
/// power so it estimates ⨍_{Q±} f directly. Only p is needed for the
/// scaling — the conductivity stays unknown.
///
/// `f_bounds` optionally supplies (essinf f, esssup f) for the diagnostic
/// bound.
pub fn extremal_recovery(
    curve: &DnCurve,
    p: &ExponentProfile,
    side: ExtremalSide,
    m_schedule: &[f64],
    f_bounds: Option<(f64, f64)>,
) -> Result<ExtremalEstimate> {
    if m_schedule.is_empty() {
        return Err(Error::invalid_argument("m_schedule", "schedule must not be empty"));
    }
    for (i, &m) in m_schedule.iter().enumerate() {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::invalid_argument("m_schedule", format!("entry {i} must be positive and finite, got {m}")));
        }
        if i > 0 {
            let ok = match side {
                ExtremalSide::MaxQ => m > m_schedule[i - 1],
                ExtremalSide::MinQ => m < m_schedule[i - 1],
            };
            if !ok {
                return Err(Error::invalid_argument(
                    "m_schedule",
                    format!("schedule must move toward the {side:?} limit, entry {i} = {m} after {}", m_schedule[i - 1]),
                ));
            }
        }
    }

    let part = level_sets(p, 0.0)?;
    let (level, inversion_p) = match side {
        ExtremalSide::MaxQ => (part.min_p_level(), part.min_p_level().p),
        ExtremalSide::MinQ => (part.max_p_level(), part.max_p_level().p),
    };
    let q_extreme = level.q;
    let measure = level.measure;

    let mut scaled_sequence = Vec::with_capacity(m_schedule.len());
    for &m in m_schedule {
        let lambda = dn_map(m, curve)?;
        let k_bar = unit_flux(m, p, 1e-14)?;
        let scaled = k_bar.powf(-q_extreme) * lambda / measure;
        if !scaled.is_finite() || scaled <= 0.0 {
            return Err(Error::InconsistentData { message: format!("scaled extremal value at m = {m:e} is {scaled}; curve data invalid") });
        }
        scaled_sequence.push(scaled);
    }

    let scaled_value = *scaled_sequence.last().unwrap();
    let recovered_average = scaled_value.powf(-1.0 / (inversion_p - 1.0));
    let (inf_f, sup_f) = f_bounds.unwrap_or((recovered_average, recovered_average));
    if !(inf_f > 0.0) || !(sup_f >= inf_f) {
        return Err(Error::invalid_argument("f_bounds", format!("need 0 < inf <= sup, got ({inf_f}, {sup_f})")));
    }
    let diagnostic_bound = (sup_f.max(1.0) / inf_f.min(1.0)).powf(p.p_max() - 1.0);

    Ok(ExtremalEstimate {
        side,
        m_used: *m_schedule.last().unwrap(),
        scaled_value,
        recovered_average,
        diagnostic_bound,
        m_schedule: m_schedule.to_vec(),
        scaled_sequence,
    })
}

// ---------------------------------------------------------------------------
// Derivative sources
// ---------------------------------------------------------------------------

/// dⁿΛ/dmⁿ at m = `k` for n = 0..=`n_max`, by Richardson-extrapolated
/// central differences on the curve (the "measured" route).
pub fn dn_derivatives(curve: &DnCurve, k: f64, n_max: usize, scheme: &FdScheme) -> Result<Vec<DerivativeEstimate>> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::invalid_argument("k", format!("expansion point must be positive and finite, got {k}")));
    }
    derivatives_up_to(&|m: f64| dn_map(m, curve), k, n_max, scheme)
}

/// Exact derivatives with respect to the flux constant at K = 1, for a known
/// profile pair (testing/simulation only):
///
/// ```text
/// dʲm/dKʲ = ∫ f ∏_{l=0}^{j−1} (g − l) dx,   dʲΛ/dKʲ = ∫ f ∏_{l=0}^{j−1} (q − l) dx,
/// ```
///
/// with f = γ^{−1/(p−1)}, g = 1/(p−1), q = p/(p−1). Index = order; order 0
/// gives m(1) = Λ(1) = ∫ f dx for both.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDerivatives {
    /// dʲm/dKʲ at K = 1, j = 0..=N.
    pub m_derivs: Vec<f64>,
    /// dʲΛ/dKʲ at K = 1, j = 0..=N.
    pub lambda_derivs: Vec<f64>,
}

pub fn dn_oracle_derivatives(grid: &CommonGrid, n_max: usize) -> Result<OracleDerivatives> {
    let mut m_derivs = Vec::with_capacity(n_max + 1);
    let mut lambda_derivs = Vec::with_capacity(n_max + 1);
    for j in 0..=n_max {
        let m_j = integrate_cellwise(grid, |p, gamma, len| {
            let g = g_of(p);
            gamma.powf(-g) * falling_product(g, j) * len
        })?;
        let l_j = integrate_cellwise(grid, |p, gamma, len| {
            let g = g_of(p);
            let q = 1.0 + g;
            gamma.powf(-g) * falling_product(q, j) * len
        })?;
        m_derivs.push(m_j);
        lambda_derivs.push(l_j);
    }
    Ok(OracleDerivatives { m_derivs, lambda_derivs })
}

/// ∏_{l=0}^{j−1} (x − l); empty product (j = 0) is 1.
fn falling_product(x: f64, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, l| acc * (x - l as f64))
}

// ---------------------------------------------------------------------------
// Inverse-function derivatives and Faà di Bruno
// ---------------------------------------------------------------------------

/// ∏_j (derivs[j])^{s_j} over the tuple's nonzero multiplicities.
fn tuple_product(derivs: &[f64], tuple: &IndexTuple) -> f64 {
    let mut acc = 1.0;
    for j in 1..=tuple.order() {
        let s = tuple.get(j);
        if s > 0 {
            acc *= derivs[j].powi(s as i32);
        }
    }
    acc
}

/// Derivatives of the inverse function K(m) from derivatives of m(K):
///
/// ```text
/// dⁿK/dmⁿ = (−1)^{n−1}/(m′)^{2n−1} Σ (−1)^{s₁}(2n−s₁−2)! ∏_j (m^{(j)})^{s_j} / ∏_{j≥2}(j!)^{s_j} s_j!
/// ```
///
/// summed over tuples with Σ s_j = n−1 and Σ j·s_j = 2n−2.
///
/// `m_derivs[j]` must hold dʲm/dKʲ for j = 1..=`n_max` (slot 0 is ignored).
/// The returned vector is indexed the same way; its slot 0 is a NaN
/// placeholder, since the inverse's *value* is not determined by
/// derivatives.
pub fn inverse_derivatives(m_derivs: &[f64], n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::invalid_argument("n_max", "need at least order 1"));
    }
    if m_derivs.len() < n_max + 1 {
        return Err(Error::invalid_argument(
            "m_derivs",
            format!("need orders 0..={n_max} (length {}), got length {}", n_max + 1, m_derivs.len()),
        ));
    }
    let m1 = m_derivs[1];
    if m1 == 0.0 || !m1.is_finite() {
        return Err(Error::InconsistentData { message: format!("dm/dK = {m1}; the map is not invertible there") });
    }
    let mut out = vec![f64::NAN; n_max + 1];
    for n in 1..=n_max {
        let mut sum = 0.0;
        for tuple in inverse_tuples(n)? {
            sum += inverse_coefficient(&tuple)? as f64 * tuple_product(m_derivs, &tuple);
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        out[n] = sign / m1.powi(2 * n as i32 - 1) * sum;
    }
    Ok(out)
}

/// dⁿ(Λ∘K)/dmⁿ by Faà di Bruno's formula:
///
/// ```text
/// Σ n!/(k₁!⋯k_n!·(1!)^{k₁}⋯(n!)^{k_n}) · Λ^{(k₁+⋯+k_n)}(K) · ∏_j (K^{(j)})^{k_j}
/// ```
///
/// over tuples with Σ j·k_j = n; the (j!)^{k_j} divisors live inside the
/// integer coefficient. `outer_derivs[i]` holds dⁱΛ/dKⁱ and
/// `inner_derivs[j]` holds dʲK/dmʲ, both for indices ≥ 1 (slot 0 ignored).
pub fn faa_di_bruno(outer_derivs: &[f64], inner_derivs: &[f64], n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid_argument("n", "need at least order 1"));
    }
    if outer_derivs.len() < n + 1 || inner_derivs.len() < n + 1 {
        return Err(Error::invalid_argument(
            "outer_derivs",
            format!("need orders 0..={n} of both derivative lists, got lengths {} and {}", outer_derivs.len(), inner_derivs.len()),
        ));
    }
    let mut sum = 0.0;
    for tuple in fdb_tuples(n)? {
        let total = tuple.total();
        sum += fdb_coefficient(&tuple)? as f64 * outer_derivs[total] * tuple_product(inner_derivs, &tuple);
    }
    Ok(sum)
}

// ---------------------------------------------------------------------------
// Moment extraction
// ---------------------------------------------------------------------------

/// The moment sequence μ_n = ∫ f·gⁿ dx, g = 1/(p−1), f = γ^{−1/(p−1)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Self {
        MomentVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest order held (len − 1).
    pub fn max_order(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Checks the structural bounds μ₀·g_minⁿ ≤ μ_n ≤ μ₀·g_maxⁿ (all true
    /// moments satisfy them since f > 0), within a relative slack.
    pub fn within_bounds(&self, g_min: f64, g_max: f64, rel_slack: f64) -> bool {
        if self.values.is_empty() || self.values[0] <= 0.0 {
            return false;
        }
        let mu0 = self.values[0];
        self.values.iter().enumerate().all(|(n, &mu)| {
            let lo = mu0 * g_min.powi(n as i32);
            let hi = mu0 * g_max.powi(n as i32);
            mu >= lo * (1.0 - rel_slack) - rel_slack && mu <= hi * (1.0 + rel_slack) + rel_slack
        })
    }
}

/// Recovers μ₀..μ_N from the derivatives of the DN map at its fixed point.
///
/// `dn_derivs_in_m[n]` holds dⁿΛ/dmⁿ at m = k (slot 0 = Λ(k) = k); `mu0` is
/// the fixed point itself. The recursion:
///
/// - μ₁ = μ₀ / (Λ′(k) − 1), from dΛ/dm(k) = ∫f·q / ∫f·g and q = 1 + g.
/// - For n ≥ 2 the only unknown in Faà di Bruno's expansion of dⁿΛ/dmⁿ is
///   the pair (L_n, K⁽ⁿ⁾), where L_n = dⁿΛ/dKⁿ|₁ and K⁽ⁿ⁾ = dⁿK/dmⁿ|_k.
///   The inverse-derivative formula expresses K⁽ⁿ⁾ through
///   M_n = dⁿm/dKⁿ|₁ plus known lower orders, and L_n − M_n is a known
///   combination of μ₀..μ_{n−1} (both are ∫f·(falling factorial) integrals,
///   expanded by signed Stirling numbers). Solving the resulting linear
///   equation for M_n and converting falling-factorial moments to monomial
///   ones yields μ_n.
///
/// Errors: Λ′(k) ≤ 1 contradicts p > 1 and is rejected as inconsistent data.
pub fn extract_moments(dn_derivs_in_m: &[f64], mu0: f64, n_max: usize) -> Result<MomentVector> {
    if dn_derivs_in_m.len() < n_max + 1 {
        return Err(Error::invalid_argument(
            "dn_derivs_in_m",
            format!("need orders 0..={n_max} (length {}), got length {}", n_max + 1, dn_derivs_in_m.len()),
        ));
    }
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return Err(Error::InconsistentData { message: format!("μ₀ = {mu0} must be positive") });
    }
    let mut mu = vec![mu0];
    if n_max == 0 {
        return Ok(MomentVector::new(mu));
    }

    let lambda1 = dn_derivs_in_m[1];
    if !(lambda1 > 1.0) {
        return Err(Error::InconsistentData {
            message: format!("dΛ/dm at the fixed point is {lambda1} ≤ 1, impossible for exponents p > 1"),
        });
    }
    let mu1 = mu0 / (lambda1 - 1.0);
    mu.push(mu1);

    // Order-indexed work arrays at K = 1 / m = k. Slot 0 of k_derivs is a
    // placeholder (never read by the sums).
    let mut m_derivs = vec![mu0, mu1];
    let mut l_derivs = vec![mu0, mu0 + mu1];
    let mut k_derivs = vec![f64::NAN, 1.0 / mu1];
    let m1 = mu1;

    for n in 2..=n_max {
        // S₂: inverse-derivative sum at order n without the distinguished
        // tuple (n−2, 0, …, 0, 1) — the only one referencing the unknown M_n.
        let mut s2 = 0.0;
        for tuple in inverse_tuples(n)? {
            if tuple.get(n) != 0 {
                continue;
            }
            s2 += inverse_coefficient(&tuple)? as f64 * tuple_product(&m_derivs, &tuple);
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        s2 *= sign / m1.powi(2 * n as i32 - 1);

        // S₁: Faà di Bruno sum at order n without the two tuples that
        // reference unknowns: (n, 0, …, 0) carries L_n and (0, …, 0, 1)
        // carries K⁽ⁿ⁾.
        let mut s1 = 0.0;
        for tuple in fdb_tuples(n)? {
            let total = tuple.total();
            if total == n || tuple.get(n) != 0 {
                continue;
            }
            s1 += fdb_coefficient(&tuple)? as f64 * l_derivs[total] * tuple_product(&k_derivs, &tuple);
        }

        // C_n = L_n − M_n expressed through μ₀..μ_{n−1}: expand both falling
        // factorials by Stirling numbers and use (1+g)ʲ = Σ C(j,t) gᵗ.
        let s_row = stirling_row(n)?;
        let mut c_n = 0.0;
        for (t, &mu_t) in mu.iter().enumerate().take(n) {
            let mut coeff = -(s_row[t] as f64);
            for (j, &s_nj) in s_row.iter().enumerate().skip(t) {
                coeff += s_nj as f64 * binomial(j, t)? as f64;
            }
            c_n += coeff * mu_t;
        }

        // dⁿΛ/dmⁿ = S₁ + L_n·M₁^{−n} + L₁·K⁽ⁿ⁾ with L_n = M_n + C_n and
        // K⁽ⁿ⁾ = S₂ − M₁^{−(n+1)}·M_n; solving for M_n the coefficient is
        // M₁^{−(n+1)}(M₁ − L₁) = −M₁^{−(n+1)}·μ₀.
        let lambda_n = dn_derivs_in_m[n];
        let l1 = l_derivs[1];
        let known = s1 + c_n * m1.powi(-(n as i32)) + l1 * s2;
        let m_n = -(lambda_n - known) * m1.powi(n as i32 + 1) / mu0;

        // μ_n from M_n = Σ_t s(n,t)·μ_t with s(n,n) = 1.
        let mut mu_n = m_n;
        for (t, &mu_t) in mu.iter().enumerate().take(n) {
            mu_n -= s_row[t] as f64 * mu_t;
        }

        let l_n = m_n + c_n;
        let k_n = s2 - m1.powi(-(n as i32 + 1)) * m_n;
        mu.push(mu_n);
        m_derivs.push(m_n);
        l_derivs.push(l_n);
        k_derivs.push(k_n);
    }

    Ok(MomentVector::new(mu))
}

// ---------------------------------------------------------------------------
// Moments → per-level averages of f
// ---------------------------------------------------------------------------

/// Solution of the level-set moment system, with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelAverages {
    /// ⨍_{L_ℓ} f per level, ordered like the partition's levels.
    pub averages: Vec<f64>,
    /// ∫_{L_ℓ} f = measure·average per level (the raw Vandermonde unknowns).
    pub level_integrals: Vec<f64>,
    /// ‖Vᵀw − μ‖₂ over all supplied moments.
    pub residual: f64,
    /// Gautschi-style upper bound on the ∞-condition number of the
    /// Vandermonde matrix in the level g-values.
    pub condition_estimate: f64,
    /// True when `condition_estimate` exceeds [`CONDITION_WARN_THRESHOLD`];
    /// a warning, not a failure.
    pub ill_conditioned: bool,
}

/// Solves Σ_ℓ w_ℓ·g_ℓⁿ = μ_n for the level integrals w_ℓ = ∫_{L_ℓ} f.
///
/// With exactly L moments this is a dual Vandermonde system solved by the
/// Björck–Pereyra elimination (far more accurate than generic LU on these
/// matrices); with more moments than levels the overdetermined system is
/// solved in least squares by Householder QR and the residual reported.
/// Fewer moments than levels is refused — the system is underdetermined and
/// a least-squares answer would fabricate structure.
pub fn moments_to_level_averages(mu: &MomentVector, part: &LevelSetPartition) -> Result<LevelAverages> {
    let levels = part.n_levels();
    let n_mu = mu.len();
    if n_mu < levels {
        return Err(Error::InsufficientMomentOrder { levels, moments: n_mu });
    }
    let g: Vec<f64> = part.g_values();
    let mu_vals = mu.values();

    let w = if n_mu == levels {
        bjorck_pereyra_dual(&g, mu_vals)
    } else {
        // Rows n = 0..n_mu, columns ℓ: A[n][ℓ] = g_ℓⁿ.
        let a: Vec<Vec<f64>> = (0..n_mu).map(|n| g.iter().map(|&x| x.powi(n as i32)).collect()).collect();
        householder_least_squares(&a, mu_vals)?
    };

    let mut residual = 0.0;
    for (n, &mu_n) in mu_vals.iter().enumerate() {
        let fit: f64 = w.iter().zip(&g).map(|(&wl, &gl)| wl * gl.powi(n as i32)).sum();
        residual += (fit - mu_n) * (fit - mu_n);
    }
    let residual = residual.sqrt();

    let condition_estimate = vandermonde_condition_bound(&g);
    let averages = w.iter().zip(part.levels()).map(|(&wl, level)| wl / level.measure).collect();

    Ok(LevelAverages {
        averages,
        level_integrals: w,
        residual,
        condition_estimate,
        ill_conditioned: condition_estimate > CONDITION_WARN_THRESHOLD,
    })
}

/// Björck–Pereyra elimination for the dual Vandermonde system
/// Σ_ℓ w_ℓ·x_ℓⁿ = b_n (distinct nodes `x`, square).
fn bjorck_pereyra_dual(x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = b.to_vec();
    for k in 0..n.saturating_sub(1) {
        for j in (k + 1..n).rev() {
            w[j] -= x[k] * w[j - 1];
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        for j in k + 1..n {
            w[j] /= x[j] - x[j - k - 1];
        }
        for j in k..n - 1 {
            w[j] -= w[j + 1];
        }
    }
    w
}

/// Dense Householder QR least squares for a small tall system A·x ≈ b.
fn householder_least_squares(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    debug_assert!(rows >= cols && b.len() == rows);
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();

    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InconsistentData { message: "rank-deficient moment system".into() });
        }
        let alpha = if r[k][k] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|t| t * t).sum();
        if v_norm2 > 0.0 {
            for j in k..cols {
                let dot: f64 = (k..rows).map(|i| v[i - k] * r[i][j]).sum();
                let scale = 2.0 * dot / v_norm2;
                for i in k..rows {
                    r[i][j] -= scale * v[i - k];
                }
            }
            let dot: f64 = (k..rows).map(|i| v[i - k] * rhs[i]).sum();
            let scale = 2.0 * dot / v_norm2;
            for i in k..rows {
                rhs[i] -= scale * v[i - k];
            }
        }
        r[k][k] = alpha;
        for i in k + 1..rows {
            r[i][k] = 0.0;
        }
    }

    // Back substitution on the upper-triangular block.
    let mut x = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = rhs[i];
        for j in i + 1..cols {
            s -= r[i][j] * x[j];
        }
        x[i] = s / r[i][i];
    }
    Ok(x)
}

/// Gautschi's bound: κ_∞(V) ≤ ‖V‖_∞ · max_ℓ ∏_{j≠ℓ} (1+|x_j|)/|x_ℓ−x_j|
/// for the Vandermonde matrix V in nodes `x`.
fn vandermonde_condition_bound(x: &[f64]) -> f64 {
    let n = x.len();
    if n == 1 {
        return 1.0;
    }
    let norm_v = (0..n)
        .map(|row| x.iter().map(|&xi| xi.abs().powi(row as i32)).sum::<f64>())
        .fold(0.0f64, f64::max);
    let inv_bound = (0..n)
        .map(|l| {
            (0..n)
                .filter(|&j| j != l)
                .map(|j| (1.0 + x[j].abs()) / (x[l] - x[j]).abs())
                .product::<f64>()
        })
        .fold(0.0f64, f64::max);
    norm_v * inv_bound
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Where the m-derivatives of the DN map come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMode {
    /// Finite differences on the curve — the honest route, available for
    /// tabulated data, ill-posed at high orders.
    Measured,
    /// Exact product-formula integrals chained through the inverse-function
    /// and Faà di Bruno formulas — requires an exact-mode curve; isolates
    /// the recursion's correctness from differentiation error.
    Oracle,
}

/// Per-level summary attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub p: f64,
    pub g: f64,
    pub q: f64,
    pub measure: f64,
}

/// Everything the reconstruction pipeline produced, serializable to JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// The DN fixed point k = μ₀.
    pub fixed_point: f64,
    pub mode: DerivativeMode,
    /// Recovered moments μ₀..μ_N.
    pub moments: MomentVector,
    /// Step-based error indicator per derivative order (zeros in oracle mode).
    pub derivative_error_indicators: Vec<f64>,
    /// The level sets of p the reconstruction lives on.
    pub levels: Vec<LevelSummary>,
    /// ⨍_L f per level.
    pub f_averages: Vec<f64>,
    /// The reconstructed conductivity projection: avg^{−(p−1)} per level.
    pub reconstructed: ProjectedFunction,
    /// ‖Vᵀw − μ‖₂ of the level-set solve.
    pub moment_residual: f64,
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

/// Runs the full inverse pipeline on a DN curve with known exponent profile:
/// fixed point → m-derivatives (per `mode`) → moments → level averages of
/// f → per-level conductivity values avg^{−(p_ℓ−1)}.
///
/// `n_max` bounds the derivative order; the partition of p must not have
/// more levels than n_max+1 moments. On consistent data the result equals
/// the nonlinear projection P̃(γ) of the true conductivity.
pub fn reconstruct(
    curve: &DnCurve,
    p: &ExponentProfile,
    n_max: usize,
    mode: DerivativeMode,
    scheme: &FdScheme,
    merge_tol: f64,
) -> Result<ReconstructionReport> {
    let part = level_sets(p, merge_tol)?;
    if part.n_levels() > n_max + 1 {
        return Err(Error::InsufficientMomentOrder { levels: part.n_levels(), moments: n_max + 1 });
    }

    let k = fixed_point(curve, FIXED_POINT_TOL, FIXED_POINT_BRACKET_HI)?;

    let (lambda_derivs_m, indicators): (Vec<f64>, Vec<f64>) = match mode {
        DerivativeMode::Measured => {
            let ests = dn_derivatives(curve, k, n_max, scheme)?;
            (ests.iter().map(|e| e.value).collect(), ests.iter().map(|e| e.error_indicator).collect())
        }
        DerivativeMode::Oracle => {
            let grid = curve.grid().ok_or_else(|| {
                Error::invalid_argument("mode", "oracle derivatives need an exact-mode curve with a known profile pair")
            })?;
            let oracle = dn_oracle_derivatives(grid, n_max)?;
            let k_derivs = inverse_derivatives(&oracle.m_derivs, n_max.max(1))?;
            let mut lm = vec![oracle.lambda_derivs[0]];
            for n in 1..=n_max {
                lm.push(faa_di_bruno(&oracle.lambda_derivs, &k_derivs, n)?);
            }
            (lm, vec![0.0; n_max + 1])
        }
    };

    let moments = extract_moments(&lambda_derivs_m, k, n_max)?;
    let solve = moments_to_level_averages(&moments, &part)?;

    let mut reconstructed = Vec::with_capacity(part.n_levels());
    for (level, &avg) in part.levels().iter().zip(&solve.averages) {
        if !(avg > 0.0) {
            return Err(Error::InconsistentData {
                message: format!("recovered average of f on the level p = {} is {avg}; conductivity would not be positive", level.p),
            });
        }
        reconstructed.push(avg.powf(-(level.p - 1.0)));
    }

    Ok(ReconstructionReport {
        fixed_point: k,
        mode,
        moments,
        derivative_error_indicators: indicators,
        levels: part
            .levels()
            .iter()
            .map(|l| LevelSummary { p: l.p, g: l.g, q: l.q, measure: l.measure })
            .collect(),
        f_averages: solve.averages,
        reconstructed: ProjectedFunction::new(reconstructed),
        moment_residual: solve.residual,
        condition_estimate: solve.condition_estimate,
        ill_conditioned: solve.ill_conditioned,
    })
}
