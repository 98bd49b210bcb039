//! Level sets of the exponent, conditional expectation, and the nonlinear
//! conductivity projection.
//!
//! Boundary measurements determine the conductivity only through averages
//! over the level sets of p, so the natural "ground truth" for any
//! reconstruction is a projection: P, the orthogonal projection of L² onto
//! functions measurable with respect to the algebra generated by p
//! (concretely, the measure-weighted average over each level set), and its
//! conjugated nonlinear counterpart
//!
//! ```text
//! P̃(γ) = (P(γ^{−1/(p−1)}))^{−(p−1)},
//! ```
//!
//! i.e. average the transformed weight f = γ^{−1/(p−1)}, then transform
//! back. For piecewise-constant p the algebra is finite and everything here
//! is exact cell arithmetic.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::profiles::{g_of, merge_grids, q_of, CommonGrid, ConductivityProfile, ExponentProfile};

/// Absolute-scale tolerance used by [`kernel_test`].
pub const KERNEL_TOL: f64 = 1e-12;

/// One level set of the exponent: its p-value, the derived exponents
/// g = 1/(p−1) and q = p/(p−1), the grid cells it comprises, and its measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub p: f64,
    pub g: f64,
    pub q: f64,
    pub cells: Vec<usize>,
    pub measure: f64,
}

/// The finite partition of the interval into level sets of p, ordered by
/// ascending p (hence descending g and q).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetPartition {
    breaks: Vec<f64>,
    /// Level index of each grid cell.
    cell_level: Vec<usize>,
    levels: Vec<Level>,
}

impl LevelSetPartition {
    /// Partition induced by an exponent profile on its own cells.
    ///
    /// `merge_tol` identifies p-values closer than the tolerance as a single
    /// level (single-linkage on the sorted values; the representative is the
    /// measure-weighted mean). Zero means exact equality only.
    pub fn new(p: &ExponentProfile, merge_tol: f64) -> Result<Self> {
        Self::from_cells(p.breaks().to_vec(), p.values(), merge_tol)
    }

    /// Partition over the cells of a merged grid.
    pub fn from_grid(grid: &CommonGrid, merge_tol: f64) -> Result<Self> {
        Self::from_cells(grid.breaks().to_vec(), grid.p_values(), merge_tol)
    }

    fn from_cells(breaks: Vec<f64>, p_per_cell: &[f64], merge_tol: f64) -> Result<Self> {
        if !(merge_tol >= 0.0) {
            return Err(Error::invalid_argument("merge_tol", format!("must be >= 0, got {merge_tol}")));
        }
        let n_cells = p_per_cell.len();
        let lengths: Vec<f64> = breaks.windows(2).map(|w| w[1] - w[0]).collect();

        // Sort cells by p-value, then group runs whose consecutive gaps stay
        // within merge_tol (single linkage).
        let mut order: Vec<usize> = (0..n_cells).collect();
        order.sort_by(|&a, &b| p_per_cell[a].total_cmp(&p_per_cell[b]));

        let mut levels: Vec<Level> = Vec::new();
        let mut cell_level = vec![0usize; n_cells];
        let mut group: Vec<usize> = Vec::new();
        let flush = |group: &mut Vec<usize>, levels: &mut Vec<Level>, cell_level: &mut Vec<usize>| {
            if group.is_empty() {
                return;
            }
            let measure: f64 = group.iter().map(|&c| lengths[c]).sum();
            // A group of identical p-values keeps the value exactly; only
            // genuinely merged near-duplicates get the measure-weighted mean.
            let p_lo = group.iter().map(|&c| p_per_cell[c]).fold(f64::INFINITY, f64::min);
            let p_hi = group.iter().map(|&c| p_per_cell[c]).fold(f64::NEG_INFINITY, f64::max);
            let p_rep: f64 = if p_lo == p_hi {
                p_lo
            } else {
                group.iter().map(|&c| p_per_cell[c] * lengths[c]).sum::<f64>() / measure
            };
            let idx = levels.len();
            for &c in group.iter() {
                cell_level[c] = idx;
            }
            group.sort_unstable();
            levels.push(Level { p: p_rep, g: g_of(p_rep), q: q_of(p_rep), cells: std::mem::take(group), measure });
        };
        for &c in &order {
            if let Some(&last) = group.last() {
                if p_per_cell[c] - p_per_cell[last] > merge_tol {
                    flush(&mut group, &mut levels, &mut cell_level);
                }
            }
            group.push(c);
        }
        flush(&mut group, &mut levels, &mut cell_level);

        Ok(LevelSetPartition { breaks, cell_level, levels })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_level.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Level index of a grid cell.
    pub fn level_of_cell(&self, cell: usize) -> usize {
        self.cell_level[cell]
    }

    pub fn cell_length(&self, cell: usize) -> f64 {
        self.breaks[cell + 1] - self.breaks[cell]
    }

    /// Total measure |I| (sum of level measures).
    pub fn total_measure(&self) -> f64 {
        self.levels.iter().map(|l| l.measure).sum()
    }

    /// The level where p attains its minimum (equivalently q its maximum).
    pub fn min_p_level(&self) -> &Level {
        &self.levels[0]
    }

    /// The level where p attains its maximum (equivalently q its minimum).
    pub fn max_p_level(&self) -> &Level {
        self.levels.last().unwrap()
    }

    /// Distinct per-level g-values, ordered like `levels()`.
    pub fn g_values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.g).collect()
    }

    fn check_cell_data(&self, h: &[f64], name: &'static str) -> Result<()> {
        if h.len() != self.n_cells() {
            return Err(Error::invalid_argument(name, format!("expected {} cell values, got {}", self.n_cells(), h.len())));
        }
        if let Some((i, &v)) = h.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid_argument(name, format!("{name}[{i}] must be finite, got {v}")));
        }
        Ok(())
    }
}

/// Shorthand for [`LevelSetPartition::new`], the finite realization of the
/// algebra generated by p.
pub fn level_sets(p: &ExponentProfile, merge_tol: f64) -> Result<LevelSetPartition> {
    LevelSetPartition::new(p, merge_tol)
}

/// A function constant on each level set: one value per level of a
/// [`LevelSetPartition`]. Measurable with respect to the algebra generated
/// by p, by construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectedFunction {
    values: Vec<f64>,
}

impl ProjectedFunction {
    pub fn new(values: Vec<f64>) -> Self {
        ProjectedFunction { values }
    }

    /// Per-level values, ordered like the partition's levels.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value on a given grid cell.
    pub fn value_on_cell(&self, part: &LevelSetPartition, cell: usize) -> f64 {
        self.values[part.level_of_cell(cell)]
    }

    /// Expands to one value per grid cell.
    pub fn to_cellwise(&self, part: &LevelSetPartition) -> Vec<f64> {
        (0..part.n_cells()).map(|c| self.value_on_cell(part, c)).collect()
    }

    /// CSV export with header `level_p,measure,value` (16 significant
    /// digits, levels in ascending p).
    pub fn to_csv(&self, part: &LevelSetPartition) -> Result<String> {
        if self.values.len() != part.n_levels() {
            return Err(Error::invalid_argument(
                "part",
                format!("function has {} levels but partition has {}", self.values.len(), part.n_levels()),
            ));
        }
        let mut out = String::from("level_p,measure,value\n");
        for (level, v) in part.levels().iter().zip(&self.values) {
            writeln!(out, "{:.15e},{:.15e},{:.15e}", level.p, level.measure, v).expect("string write cannot fail");
        }
        Ok(out)
    }
}

/// The conditional expectation P: replaces `h` on each level set by its
/// measure-weighted average. Integrals over every union of level sets are
/// preserved, which characterizes P among functions constant on levels.
pub fn project(h: &[f64], part: &LevelSetPartition) -> Result<ProjectedFunction> {
    part.check_cell_data(h, "h")?;
    let values = part
        .levels()
        .iter()
        .map(|level| level.cells.iter().map(|&c| h[c] * part.cell_length(c)).sum::<f64>() / level.measure)
        .collect();
    Ok(ProjectedFunction::new(values))
}

/// The nonlinear projection P̃(γ) = (P(γ^{−1/(p−1)}))^{−(p−1)} evaluated per
/// level, together with the partition it lives on (built over the merged
/// grid of the two profiles).
///
/// The output always lies between the essential bounds of γ; that holds
/// mathematically, so it is asserted in tests rather than clamped here.
pub fn project_conductivity(
    gamma: &ConductivityProfile,
    p: &ExponentProfile,
    merge_tol: f64,
) -> Result<(LevelSetPartition, ProjectedFunction)> {
    let grid = merge_grids(p, gamma)?;
    let part = LevelSetPartition::from_grid(&grid, merge_tol)?;
    let f = grid.f_values();
    let pf = project(&f, &part)?;
    let values = part
        .levels()
        .iter()
        .zip(pf.values())
        .map(|(level, &avg_f)| avg_f.powf(-(level.p - 1.0)))
        .collect();
    Ok((part, ProjectedFunction::new(values)))
}

/// True iff `h` integrates to zero over every level set (within
/// `KERNEL_TOL · ‖h‖_∞ · |I|`) — equivalently, iff `project(h)` vanishes.
pub fn kernel_test(h: &[f64], part: &LevelSetPartition) -> Result<bool> {
    part.check_cell_data(h, "h")?;
    let scale = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) * part.total_measure();
    for level in part.levels() {
        let integral: f64 = level.cells.iter().map(|&c| h[c] * part.cell_length(c)).sum();
        if integral.abs() > KERNEL_TOL * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Interval;
    use approx::assert_relative_eq;

    fn iv01() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    /// p = {2 on (0,0.3), 3 on (0.3,0.6), 2 on (0.6,1)}.
    fn split_level_profile() -> ExponentProfile {
        ExponentProfile::new(vec![0.0, 0.3, 0.6, 1.0], vec![2.0, 3.0, 2.0]).unwrap()
    }

    #[test]
    fn constant_exponent_gives_one_level() {
        let p = ExponentProfile::constant(iv01(), 2.0).unwrap();
        let part = level_sets(&p, 0.0).unwrap();
        assert_eq!(part.n_levels(), 1);
        assert_relative_eq!(part.levels()[0].measure, 1.0, max_relative = 1e-15);
        assert_eq!(part.levels()[0].cells, vec![0]);
    }

    #[test]
    fn two_values_give_two_levels_with_half_measures() {
        let p = ExponentProfile::new(vec![0.0, 0.5, 1.0], vec![2.0, 3.0]).unwrap();
        let part = level_sets(&p, 0.0).unwrap();
        assert_eq!(part.n_levels(), 2);
        assert_eq!(part.levels()[0].p, 2.0);
        assert_eq!(part.levels()[1].p, 3.0);
        assert_relative_eq!(part.levels()[0].measure, 0.5, max_relative = 1e-15);
        assert_relative_eq!(part.levels()[1].measure, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn level_set_can_be_a_union_of_disjoint_cells() {
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        assert_eq!(part.n_levels(), 2);
        let p2 = &part.levels()[0];
        assert_eq!(p2.p, 2.0);
        assert_eq!(p2.cells, vec![0, 2]);
        assert_relative_eq!(p2.measure, 0.7, max_relative = 1e-15);
        assert_eq!(part.level_of_cell(0), 0);
        assert_eq!(part.level_of_cell(1), 1);
        assert_eq!(part.level_of_cell(2), 0);
    }

    #[test]
    fn merge_tol_groups_near_equal_exponents() {
        let p = ExponentProfile::new(vec![0.0, 0.25, 0.5, 1.0], vec![2.0, 2.0 + 1e-9, 3.0]).unwrap();
        assert_eq!(level_sets(&p, 0.0).unwrap().n_levels(), 3);
        let part = level_sets(&p, 1e-6).unwrap();
        assert_eq!(part.n_levels(), 2);
        // Representative is the measure-weighted mean of the merged values.
        let rep = part.levels()[0].p;
        assert_relative_eq!(rep, (0.25 * 2.0 + 0.25 * (2.0 + 1e-9)) / 0.5, max_relative = 1e-15);
    }

    #[test]
    fn levels_are_sorted_with_decreasing_g_and_q() {
        let p = ExponentProfile::new(vec![0.0, 0.2, 0.4, 0.7, 1.0], vec![4.0, 1.5, 2.5, 1.8]).unwrap();
        let part = level_sets(&p, 0.0).unwrap();
        let ps: Vec<f64> = part.levels().iter().map(|l| l.p).collect();
        assert_eq!(ps, vec![1.5, 1.8, 2.5, 4.0]);
        for w in part.levels().windows(2) {
            assert!(w[0].g > w[1].g);
            assert!(w[0].q > w[1].q);
        }
        assert_eq!(part.min_p_level().p, 1.5);
        assert_eq!(part.max_p_level().p, 4.0);
    }

    #[test]
    fn projecting_a_measurable_function_is_identity() {
        let p = ExponentProfile::new(vec![0.0, 0.5, 1.0], vec![2.0, 3.0]).unwrap();
        let part = level_sets(&p, 0.0).unwrap();
        let h = vec![1.0, 3.0];
        let ph = project(&h, &part).unwrap();
        assert_eq!(ph.values(), &[1.0, 3.0]);
    }

    #[test]
    fn constant_exponent_projects_to_global_average() {
        // One level: P h is the plain average over the interval. To express
        // h with two different values under a constant p we refine the grid.
        let grid = merge_grids(
            &ExponentProfile::constant(iv01(), 2.0).unwrap(),
            &ConductivityProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, 3.0]).unwrap(),
        )
        .unwrap();
        let part = LevelSetPartition::from_grid(&grid, 0.0).unwrap();
        assert_eq!(part.n_levels(), 1);
        let ph = project(&[1.0, 3.0], &part).unwrap();
        assert_relative_eq!(ph.values()[0], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn projection_weights_by_cell_measure() {
        // Level p = 2 has cells of lengths 0.3 and 0.4 carrying h = 1 and 2:
        // average (0.3·1 + 0.4·2)/0.7 = 11/7.
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        let ph = project(&[1.0, 5.0, 2.0], &part).unwrap();
        assert_relative_eq!(ph.values()[0], 11.0 / 7.0, max_relative = 1e-14);
        assert_relative_eq!(ph.values()[1], 5.0, max_relative = 1e-15);
    }

    #[test]
    fn projection_preserves_level_integrals() {
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        let h = vec![0.3, -2.0, 5.5];
        let ph = project(&h, &part).unwrap();
        for level in part.levels() {
            let raw: f64 = level.cells.iter().map(|&c| h[c] * part.cell_length(c)).sum();
            let projected: f64 = level.cells.iter().map(|&c| ph.value_on_cell(&part, c) * part.cell_length(c)).sum();
            assert_relative_eq!(raw, projected, max_relative = 1e-14, epsilon = 1e-14);
        }
    }

    #[test]
    fn nonlinear_projection_fixes_measurable_conductivity() {
        // γ constant on each level of p ⇒ P̃(γ) = γ.
        let p = split_level_profile();
        let gamma = ConductivityProfile::new(vec![0.0, 0.3, 0.6, 1.0], vec![4.0, 2.5, 4.0]).unwrap();
        let (part, pg) = project_conductivity(&gamma, &p, 0.0).unwrap();
        assert_eq!(part.n_levels(), 2);
        assert_relative_eq!(pg.values()[0], 4.0, max_relative = 1e-12);
        assert_relative_eq!(pg.values()[1], 2.5, max_relative = 1e-12);
    }

    #[test]
    fn nonlinear_projection_is_harmonic_mean_in_quadratic_case() {
        // p ≡ 2 on a unit interval: P̃(γ) = (mean of 1/γ)^{−1} = 1.6 for
        // γ = {1, 4} on halves.
        let p = ExponentProfile::constant(iv01(), 2.0).unwrap();
        let gamma = ConductivityProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, 4.0]).unwrap();
        let (_, pg) = project_conductivity(&gamma, &p, 0.0).unwrap();
        assert_eq!(pg.values().len(), 1);
        assert_relative_eq!(pg.values()[0], 1.6, max_relative = 1e-12);
    }

    #[test]
    fn nonlinear_projection_constant_exponent_general_average() {
        // Constant p: P̃(γ) = ((1/|I|)∫γ^{−1/(p−1)})^{−(p−1)}.
        let p = ExponentProfile::constant(iv01(), 3.5).unwrap();
        let gamma = ConductivityProfile::new(vec![0.0, 0.2, 0.9, 1.0], vec![0.4, 6.0, 1.3]).unwrap();
        let (_, pg) = project_conductivity(&gamma, &p, 0.0).unwrap();
        let mean_f = 0.2 * 0.4f64.powf(-1.0 / 2.5) + 0.7 * 6.0f64.powf(-1.0 / 2.5) + 0.1 * 1.3f64.powf(-1.0 / 2.5);
        assert_relative_eq!(pg.values()[0], mean_f.powf(-2.5), max_relative = 1e-12);
    }

    #[test]
    fn nonlinear_projection_is_idempotent() {
        let p = split_level_profile();
        let gamma = ConductivityProfile::new(vec![0.0, 0.45, 1.0], vec![0.7, 5.0]).unwrap();
        let (part, pg) = project_conductivity(&gamma, &p, 0.0).unwrap();
        // Re-express P̃(γ) as a profile on the partition's grid and project again.
        let cellwise = pg.to_cellwise(&part);
        let gamma2 = ConductivityProfile::new(part.breaks().to_vec(), cellwise).unwrap();
        let (_, pg2) = project_conductivity(&gamma2, &p, 0.0).unwrap();
        for (a, b) in pg.values().iter().zip(pg2.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn projection_bounds_hold() {
        let p = split_level_profile();
        let gamma = ConductivityProfile::new(vec![0.0, 0.5, 1.0], vec![0.3, 8.0]).unwrap();
        let (_, pg) = project_conductivity(&gamma, &p, 0.0).unwrap();
        for v in pg.values() {
            assert!(*v >= 0.3 - 1e-12 && *v <= 8.0 + 1e-12, "P̃ value {v} outside [0.3, 8]");
        }
    }

    #[test]
    fn kernel_test_accepts_zero_and_odd_functions() {
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        assert!(kernel_test(&[0.0, 0.0, 0.0], &part).unwrap());

        // Symmetric exponent on (−1, 1), odd h: every level integral cancels.
        let p = ExponentProfile::new(vec![-1.0, -0.5, 0.5, 1.0], vec![2.0, 3.0, 2.0]).unwrap();
        let sym = level_sets(&p, 0.0).unwrap();
        let odd = vec![-4.0, 0.0, 4.0];
        assert!(kernel_test(&odd, &sym).unwrap());
        // And the projection of such h is zero.
        let ph = project(&odd, &sym).unwrap();
        for v in ph.values() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_test_rejects_constants() {
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        assert!(!kernel_test(&[1.0, 1.0, 1.0], &part).unwrap());
    }

    #[test]
    fn csv_export_lists_levels() {
        let part = level_sets(&split_level_profile(), 0.0).unwrap();
        let pf = ProjectedFunction::new(vec![1.5, 2.5]);
        let csv = pf.to_csv(&part).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("level_p,measure,value"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("2.000000000000000e0,"), "got {first}");
        assert_eq!(lines.count(), 1);
    }
}
