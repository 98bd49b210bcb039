//! Exact integer combinatorial kernels for the derivative recursions.
//!
//! Three ingredients are needed by [`crate::recon`]: the constrained index
//! tuples of the inverse-function derivative formula, the multiplicity tuples
//! of Faà di Bruno's formula, and signed Stirling numbers of the first kind
//! (coefficients of the falling factorial). Everything here is computed in
//! integer arithmetic with overflow checks; coefficients only become floats
//! at the point where they multiply measured data.

use crate::error::{Error, Result};

/// Hard ceiling on the derivative order supported by the exact integer
/// kernels. `(2n − 2)!` must fit in an `i128` with slack; order 20 is far
/// beyond anything numerically recoverable from a DN curve anyway.
pub const MAX_ORDER: usize = 20;

/// A multiplicity tuple (s₁, …, s_n): entry `j` counts how many times the
/// j-th derivative of the inner function appears in one term of a
/// derivative-of-composition formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexTuple {
    s: Vec<usize>,
}

impl IndexTuple {
    pub fn new(s: Vec<usize>) -> Self {
        IndexTuple { s }
    }

    /// The order n (tuple length).
    pub fn order(&self) -> usize {
        self.s.len()
    }

    /// Multiplicity s_j (1-indexed); zero beyond the stored length.
    pub fn get(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.s.get(j - 1).copied().unwrap_or(0)
        }
    }

    pub fn entries(&self) -> &[usize] {
        &self.s
    }

    /// Σ_j s_j — the total number of factors.
    pub fn total(&self) -> usize {
        self.s.iter().sum()
    }

    /// Σ_j j·s_j — the derivative weight.
    pub fn weight(&self) -> usize {
        self.s.iter().enumerate().map(|(i, &s)| (i + 1) * s).sum()
    }
}

/// Exact factorial as `i128`, with an overflow guard.
pub fn factorial(n: usize) -> Result<i128> {
    let mut acc: i128 = 1;
    for k in 2..=n as i128 {
        acc = acc.checked_mul(k).ok_or(Error::CombinatorialOverflow { what: "factorial", order: n })?;
    }
    Ok(acc)
}

/// Exact binomial coefficient C(n, k) as `i128`.
pub fn binomial(n: usize, k: usize) -> Result<i128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul((n - i) as i128)
            .ok_or(Error::CombinatorialOverflow { what: "binomial", order: n })?
            / (i as i128 + 1);
    }
    Ok(acc)
}

fn check_order(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid_argument("n", "order must be at least 1"));
    }
    if n > MAX_ORDER {
        return Err(Error::UnsupportedOrder { requested: n, max: MAX_ORDER });
    }
    Ok(())
}

/// Enumerates, in ascending lexicographic order, all tuples (s₁, …, s_n)
/// of nonnegative integers with
///
/// ```text
/// s₁ + s₂ + ⋯ + s_n = n − 1   and   1·s₁ + 2·s₂ + ⋯ + n·s_n = 2n − 2.
/// ```
///
/// These index the terms of the inverse-function derivative formula of order
/// n. For every n ≥ 2 the list contains the distinguished tuple
/// (n−2, 0, …, 0, 1), the only one with s_n ≠ 0; it carries the sole
/// occurrence of the n-th inner derivative, which is what makes the moment
/// recursion solvable order by order.
pub fn inverse_tuples(n: usize) -> Result<Vec<IndexTuple>> {
    check_order(n)?;
    let mut out = Vec::new();
    let mut tuple = vec![0usize; n];
    enumerate_constrained(&mut tuple, 0, n - 1, 2 * n - 2, &mut out);
    Ok(out)
}

/// Enumerates, in ascending lexicographic order, all tuples (k₁, …, k_n)
/// with Σ_j j·k_j = n: the multiplicity encodings of the partitions of n,
/// indexing the terms of Faà di Bruno's formula of order n.
pub fn fdb_tuples(n: usize) -> Result<Vec<IndexTuple>> {
    check_order(n)?;
    let mut out = Vec::new();
    let mut tuple = vec![0usize; n];
    enumerate_weight_only(&mut tuple, 0, n, &mut out);
    Ok(out)
}

/// Fills positions `pos..` of `tuple` with all completions whose remaining
/// entry sum is `rem_total` and remaining weight Σ j·s_j is `rem_weight`.
fn enumerate_constrained(tuple: &mut Vec<usize>, pos: usize, rem_total: usize, rem_weight: usize, out: &mut Vec<IndexTuple>) {
    let n = tuple.len();
    if pos == n {
        if rem_total == 0 && rem_weight == 0 {
            out.push(IndexTuple::new(tuple.clone()));
        }
        return;
    }
    let j = pos + 1;
    let max_here = rem_total.min(rem_weight / j);
    for s in 0..=max_here {
        tuple[pos] = s;
        enumerate_constrained(tuple, pos + 1, rem_total - s, rem_weight - j * s, out);
    }
    tuple[pos] = 0;
}

fn enumerate_weight_only(tuple: &mut Vec<usize>, pos: usize, rem_weight: usize, out: &mut Vec<IndexTuple>) {
    let n = tuple.len();
    if pos == n {
        if rem_weight == 0 {
            out.push(IndexTuple::new(tuple.clone()));
        }
        return;
    }
    let j = pos + 1;
    for s in 0..=(rem_weight / j) {
        tuple[pos] = s;
        enumerate_weight_only(tuple, pos + 1, rem_weight - j * s, out);
    }
    tuple[pos] = 0;
}

/// The exact integer coefficient of an inverse-derivative tuple:
///
/// ```text
/// (−1)^{s₁} (2n − s₁ − 2)! / ∏_{j≥2} (j!)^{s_j} s_j!
/// ```
///
/// The division is always exact; a nonzero remainder would indicate a
/// corrupted tuple and is reported as an error rather than truncated.
pub fn inverse_coefficient(tuple: &IndexTuple) -> Result<i128> {
    let n = tuple.order();
    check_order(n)?;
    let s1 = tuple.get(1);
    let mut num = factorial(2 * n - s1 - 2)?;
    let mut den: i128 = 1;
    for j in 2..=n {
        let sj = tuple.get(j);
        if sj == 0 {
            continue;
        }
        let jf = factorial(j)?;
        for _ in 0..sj {
            den = den.checked_mul(jf).ok_or(Error::CombinatorialOverflow { what: "inverse coefficient", order: n })?;
        }
        den = den
            .checked_mul(factorial(sj)?)
            .ok_or(Error::CombinatorialOverflow { what: "inverse coefficient", order: n })?;
    }
    if num % den != 0 {
        return Err(Error::invalid_argument("tuple", format!("coefficient {num}/{den} is not an integer; tuple violates the order-{n} constraints")));
    }
    num /= den;
    if s1 % 2 == 1 {
        num = -num;
    }
    Ok(num)
}

/// The exact integer coefficient of a Faà di Bruno tuple:
/// n! / (∏_j k_j! · ∏_j (j!)^{k_j}) — the number of set partitions of
/// {1, …, n} with k_j blocks of size j.
pub fn fdb_coefficient(tuple: &IndexTuple) -> Result<i128> {
    let n = tuple.order();
    check_order(n)?;
    let mut num = factorial(n)?;
    let mut den: i128 = 1;
    for j in 1..=n {
        let kj = tuple.get(j);
        if kj == 0 {
            continue;
        }
        den = den
            .checked_mul(factorial(kj)?)
            .ok_or(Error::CombinatorialOverflow { what: "fdb coefficient", order: n })?;
        let jf = factorial(j)?;
        for _ in 0..kj {
            den = den.checked_mul(jf).ok_or(Error::CombinatorialOverflow { what: "fdb coefficient", order: n })?;
        }
    }
    if num % den != 0 {
        return Err(Error::invalid_argument("tuple", format!("coefficient {num}/{den} is not an integer; tuple violates Σ j·k_j = {n}")));
    }
    num /= den;
    Ok(num)
}

/// Signed Stirling number of the first kind s(n, j), defined by the falling
/// factorial expansion ∏_{l=0}^{n−1} (x − l) = Σ_j s(n, j) xʲ and computed
/// via the recurrence s(n+1, j) = s(n, j−1) − n·s(n, j).
pub fn stirling_first(n: usize, j: usize) -> Result<i128> {
    if j > n {
        return Err(Error::invalid_argument("j", format!("need 0 <= j <= n, got j = {j}, n = {n}")));
    }
    if n > MAX_ORDER {
        return Err(Error::UnsupportedOrder { requested: n, max: MAX_ORDER });
    }
    Ok(stirling_row(n)?[j])
}

/// The full row s(n, 0..=n).
pub fn stirling_row(n: usize) -> Result<Vec<i128>> {
    if n > MAX_ORDER {
        return Err(Error::UnsupportedOrder { requested: n, max: MAX_ORDER });
    }
    let mut row: Vec<i128> = vec![1]; // s(0, 0) = 1
    for m in 0..n {
        let mut next = vec![0i128; m + 2];
        for j in 0..=m + 1 {
            let from_prev = if j >= 1 { row[j - 1] } else { 0 };
            let carry = if j <= m { row[j] } else { 0 };
            let scaled = carry
                .checked_mul(m as i128)
                .ok_or(Error::CombinatorialOverflow { what: "stirling number", order: n })?;
            next[j] = from_prev
                .checked_sub(scaled)
                .ok_or(Error::CombinatorialOverflow { what: "stirling number", order: n })?;
        }
        row = next;
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Brute force: every tuple with entries bounded by the weight budget.
    fn brute_force_inverse(n: usize) -> HashSet<Vec<usize>> {
        // Independent enumeration: try every count per slot, abandoning a
        // branch once either running sum overshoots its target.
        fn rec(n: usize, pos: usize, total: usize, weight: usize, cur: &mut Vec<usize>, out: &mut HashSet<Vec<usize>>) {
            if total > n - 1 || weight > 2 * n - 2 {
                return;
            }
            if pos == n {
                if total == n - 1 && weight == 2 * n - 2 {
                    out.insert(cur.clone());
                }
                return;
            }
            for s in 0..=(2 * n) {
                cur.push(s);
                rec(n, pos + 1, total + s, weight + (pos + 1) * s, cur, out);
                cur.pop();
            }
        }
        let mut out = HashSet::new();
        rec(n, 0, 0, 0, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn inverse_tuples_order_one_is_the_zero_tuple() {
        let t = inverse_tuples(1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].entries(), &[0]);
        assert_eq!(inverse_coefficient(&t[0]).unwrap(), 1);
    }

    #[test]
    fn inverse_tuples_order_two_forces_s2() {
        // Σ s_j = 1 and Σ j·s_j = 2 leave (0, 1) as the only solution: the
        // second-derivative term of K″ = −m″/(m′)³, whose minus sign comes
        // from the (−1)^{n−1} prefactor, not the coefficient itself:
        // (−1)^{s₁}·(2n−s₁−2)!/(2!·1!) = 2!/2! = 1.
        let t = inverse_tuples(2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].entries(), &[0, 1]);
        assert_eq!(inverse_coefficient(&t[0]).unwrap(), 1);
    }

    #[test]
    fn inverse_tuples_order_three() {
        let t = inverse_tuples(3).unwrap();
        let entries: Vec<&[usize]> = t.iter().map(|t| t.entries()).collect();
        assert_eq!(entries, vec![&[0, 2, 0][..], &[1, 0, 1][..]]);
        // K‴ = (3 (m″)² − m′ m‴) / (m′)⁵ after the (−1)^{n−1} prefactor.
        assert_eq!(inverse_coefficient(&t[0]).unwrap(), 3);
        assert_eq!(inverse_coefficient(&t[1]).unwrap(), -1);
    }

    #[test]
    fn inverse_tuples_order_four_coefficients() {
        let t = inverse_tuples(4).unwrap();
        let got: Vec<(Vec<usize>, i128)> =
            t.iter().map(|t| (t.entries().to_vec(), inverse_coefficient(t).unwrap())).collect();
        assert_eq!(
            got,
            vec![
                (vec![0, 3, 0, 0], 15),
                (vec![1, 1, 1, 0], -10),
                (vec![2, 0, 0, 1], 1),
            ]
        );
    }

    #[test]
    fn inverse_tuples_match_brute_force_up_to_eight() {
        for n in 1..=8 {
            let fast: HashSet<Vec<usize>> = inverse_tuples(n).unwrap().iter().map(|t| t.entries().to_vec()).collect();
            assert_eq!(fast, brute_force_inverse(n), "order {n}");
        }
    }

    #[test]
    fn inverse_tuples_are_sorted_and_duplicate_free() {
        for n in 1..=8 {
            let ts = inverse_tuples(n).unwrap();
            let entries: Vec<Vec<usize>> = ts.iter().map(|t| t.entries().to_vec()).collect();
            let mut sorted = entries.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(entries, sorted, "order {n} not in sorted duplicate-free lexicographic order");
        }
    }

    #[test]
    fn distinguished_tuple_present_and_unique_in_last_slot() {
        for n in 2..=8 {
            let ts = inverse_tuples(n).unwrap();
            let mut expected = vec![0usize; n];
            expected[0] = n - 2;
            expected[n - 1] = 1;
            let with_sn: Vec<_> = ts.iter().filter(|t| t.get(n) != 0).collect();
            assert_eq!(with_sn.len(), 1, "order {n}: s_n ≠ 0 must single out one tuple");
            assert_eq!(with_sn[0].entries(), &expected[..]);
            // Its coefficient collapses to (−1)^{n−2}·n!/n! = ±1.
            let c = inverse_coefficient(with_sn[0]).unwrap();
            assert_eq!(c.unsigned_abs(), 1, "distinguished coefficient is ±1");
        }
    }

    #[test]
    fn fdb_tuple_counts_are_partition_numbers() {
        let partition_numbers = [1usize, 2, 3, 5, 7, 11];
        for (n, &count) in (1..=6).zip(&partition_numbers) {
            assert_eq!(fdb_tuples(n).unwrap().len(), count, "p({n})");
        }
    }

    #[test]
    fn fdb_tuples_order_two_golden() {
        let t = fdb_tuples(2).unwrap();
        let entries: Vec<&[usize]> = t.iter().map(|t| t.entries()).collect();
        // Partitions 2 = 2 and 2 = 1 + 1, in ascending lexicographic order.
        assert_eq!(entries, vec![&[0, 1][..], &[2, 0][..]]);
    }

    #[test]
    fn fdb_coefficients_sum_to_bell_numbers() {
        let bell = [1i128, 2, 5, 15, 52, 203];
        for (n, &b) in (1..=6).zip(&bell) {
            let total: i128 = fdb_tuples(n).unwrap().iter().map(|t| fdb_coefficient(t).unwrap()).sum();
            assert_eq!(total, b, "Bell({n})");
        }
    }

    #[test]
    fn fdb_weight_constraint_holds() {
        for n in 1..=8 {
            for t in fdb_tuples(n).unwrap() {
                assert_eq!(t.weight(), n);
            }
        }
    }

    #[test]
    fn stirling_row_three() {
        // x(x−1)(x−2) = x³ − 3x² + 2x.
        assert_eq!(stirling_row(3).unwrap(), vec![0, 2, -3, 1]);
        assert_eq!(stirling_first(3, 1).unwrap(), 2);
        assert_eq!(stirling_first(3, 2).unwrap(), -3);
        assert_eq!(stirling_first(3, 3).unwrap(), 1);
    }

    #[test]
    fn stirling_diagonal_is_one() {
        for n in 0..=12 {
            assert_eq!(stirling_first(n, n).unwrap(), 1, "s({n},{n})");
        }
    }

    #[test]
    fn falling_factorial_identity_exact_at_integers() {
        for n in 0..=9usize {
            let row = stirling_row(n).unwrap();
            for x in 0..=n as i128 {
                let direct: i128 = (0..n as i128).map(|l| x - l).product();
                let mut horner = 0i128;
                for &c in row.iter().rev() {
                    horner = horner * x + c;
                }
                assert_eq!(horner, direct, "n = {n}, x = {x}");
            }
        }
    }

    #[test]
    fn falling_factorial_at_two_vanishes_for_order_five() {
        let row = stirling_row(5).unwrap();
        let total: i128 = row.iter().enumerate().map(|(j, &c)| c * 2i128.pow(j as u32)).sum();
        assert_eq!(total, 0);
    }

    #[test]
    fn domain_errors() {
        assert!(inverse_tuples(0).is_err());
        assert!(fdb_tuples(0).is_err());
        assert!(stirling_first(3, 4).is_err());
        assert!(matches!(inverse_tuples(MAX_ORDER + 1), Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn binomial_and_factorial_basics() {
        assert_eq!(factorial(0).unwrap(), 1);
        assert_eq!(factorial(6).unwrap(), 720);
        assert_eq!(binomial(6, 2).unwrap(), 15);
        assert_eq!(binomial(5, 0).unwrap(), 1);
        assert_eq!(binomial(4, 7).unwrap(), 0);
    }
}
