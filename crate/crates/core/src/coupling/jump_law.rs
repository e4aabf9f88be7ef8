//! Basic coupling of two rate rows: a joint jump law on regime pairs whose
//! marginals are the two rows and which jumps to the diagonal as often as
//! possible.

use crate::error::Result;
use crate::model::{RateRow, RegimeId};

pub type RegimePair = (RegimeId, RegimeId);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoupledJumpLaw {
    /// Positive rates in ascending `(m, n)` order.
    entries: Vec<(RegimePair, f64)>,
    total: f64,
}

impl CoupledJumpLaw {
    pub fn entries(&self) -> &[(RegimePair, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn rate(&self, target: RegimePair) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == target)
            .map(|e| e.1)
            .unwrap_or(0.0)
    }

    /// Target whose cumulative slot contains `z`, scanning in canonical order.
    pub fn locate(&self, z: f64) -> Option<RegimePair> {
        let mut lo = 0.0;
        for &(pair, q) in &self.entries {
            let hi = lo + q;
            if lo <= z && z < hi {
                return Some(pair);
            }
            lo = hi;
        }
        None
    }

    /// Replaces one rate; meant for fault-injection tests.
    pub fn perturb(&mut self, index: usize, delta: f64) {
        self.entries[index].1 += delta;
        self.total = self.entries.iter().map(|e| e.1).sum();
    }

    fn finish(&mut self) {
        self.entries.retain(|e| e.1 > 0.0);
        self.entries.sort_by_key(|e| e.0);
        self.total = self.entries.iter().map(|e| e.1).sum();
    }
}

/// Walks the union of targets of two sorted rows, yielding `(m, a_m, b_m)`.
fn merged(a: &RateRow, b: &RateRow) -> Vec<(RegimeId, f64, f64)> {
    let (ea, eb) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(ea.len() + eb.len());
    while i < ea.len() || j < eb.len() {
        match (ea.get(i), eb.get(j)) {
            (Some(&(ma, qa)), Some(&(mb, qb))) if ma == mb => {
                out.push((ma, qa, qb));
                i += 1;
                j += 1;
            }
            (Some(&(ma, qa)), Some(&(mb, _))) if ma < mb => {
                out.push((ma, qa, 0.0));
                i += 1;
            }
            (Some(_), Some(&(mb, qb))) => {
                out.push((mb, 0.0, qb));
                j += 1;
            }
            (Some(&(ma, qa)), None) => {
                out.push((ma, qa, 0.0));
                i += 1;
            }
            (None, Some(&(mb, qb))) => {
                out.push((mb, 0.0, qb));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

/// Joint law for the pair `(k, l)` given `row_k = q_k.(phi)` and
/// `row_l = q_l.(psi)`; both rows must be sorted.
pub fn coupled_jump_law(row_k: &RateRow, row_l: &RateRow, k: RegimeId, l: RegimeId) -> Result<CoupledJumpLaw> {
    row_k.check(k)?;
    row_l.check(l)?;
    let mut law = CoupledJumpLaw::default();
    law.entries.reserve(row_k.len() + row_l.len() + 2);
    for (m, a, b) in merged(row_k, row_l) {
        if k != l && (m == k || m == l) {
            continue;
        }
        law.entries.push(((m, l), pos(a - b)));
        law.entries.push(((k, m), pos(b - a)));
        law.entries.push(((m, m), a.min(b)));
    }
    if k != l {
        law.entries.push(((l, l), row_k.get(l)));
        law.entries.push(((k, k), row_l.get(k)));
    }
    law.finish();
    Ok(law)
}

/// Total predicted by the rate-sum identities: `sum_m max(a_m, b_m)` over
/// `m` outside `{k, l}`, plus `q_kl(phi) + q_lk(psi)` when `k != l`.
pub fn expected_total(row_k: &RateRow, row_l: &RateRow, k: RegimeId, l: RegimeId) -> f64 {
    let mut total: f64 = merged(row_k, row_l)
        .into_iter()
        .filter(|(m, _, _)| *m != k && *m != l)
        .map(|(_, a, b)| a.max(b))
        .sum();
    if k != l {
        total += row_k.get(l) + row_l.get(k);
    }
    total
}

/// True when each coordinate of `law` moves with exactly the rates of its row,
/// to `1e-12`.
pub fn marginal_consistency_check(
    law: &CoupledJumpLaw,
    row_k: &RateRow,
    row_l: &RateRow,
    k: RegimeId,
    l: RegimeId,
) -> bool {
    const TOL: f64 = 1e-12;
    let mut targets: Vec<RegimeId> = row_k
        .entries()
        .iter()
        .chain(row_l.entries())
        .map(|e| e.0)
        .chain(law.entries().iter().flat_map(|e| [e.0 .0, e.0 .1]))
        .collect();
    targets.sort();
    targets.dedup();
    for m in targets {
        let first: f64 = law
            .entries()
            .iter()
            .filter(|e| e.0 .0 == m && m != k)
            .map(|e| e.1)
            .sum();
        let second: f64 = law
            .entries()
            .iter()
            .filter(|e| e.0 .1 == m && m != l)
            .map(|e| e.1)
            .sum();
        let want_first = if m == k { 0.0 } else { row_k.get(m) };
        let want_second = if m == l { 0.0 } else { row_l.get(m) };
        if (first - want_first).abs() > TOL * want_first.max(1.0)
            || (second - want_second).abs() > TOL * want_second.max(1.0)
        {
            return false;
        }
    }
    // a jump that moves neither coordinate is not a jump
    !law.entries().iter().any(|e| e.0 == (k, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: usize) -> RegimeId {
        RegimeId(i - 1)
    }

    fn row(pairs: &[(usize, f64)]) -> RateRow {
        RateRow::from_pairs(pairs.iter().map(|&(l, q)| (r(l), q)))
    }

    #[test]
    fn off_diagonal_example() {
        let rk = row(&[(2, 2.0), (3, 1.0)]);
        let rl = row(&[(1, 1.0), (3, 3.0)]);
        let law = coupled_jump_law(&rk, &rl, r(1), r(2)).unwrap();
        assert_eq!(law.rate((r(1), r(3))), 2.0);
        assert_eq!(law.rate((r(3), r(3))), 1.0);
        assert_eq!(law.rate((r(2), r(2))), 2.0);
        assert_eq!(law.rate((r(1), r(1))), 1.0);
        assert!(law.entries().iter().all(|e| e.0 != (r(3), r(2))));
        assert_eq!(law.entries().len(), 4);
        assert_eq!(law.total(), 6.0);
        assert_eq!(expected_total(&rk, &rl, r(1), r(2)), 6.0);
        assert!(marginal_consistency_check(&law, &rk, &rl, r(1), r(2)));
    }

    #[test]
    fn identical_rows_on_diagonal_stay_diagonal() {
        let rk = row(&[(2, 0.3), (3, 1.2)]);
        let law = coupled_jump_law(&rk, &rk, r(1), r(1)).unwrap();
        assert!(law.entries().iter().all(|e| e.0 .0 == e.0 .1));
        assert_eq!(law.rate((r(3), r(3))), 1.2);
        assert_eq!(law.total(), rk.total());
    }

    #[test]
    fn diagonal_source_example() {
        let rk = row(&[(2, 3.0)]);
        let rl = row(&[(2, 1.0)]);
        let law = coupled_jump_law(&rk, &rl, r(1), r(1)).unwrap();
        assert_eq!(law.rate((r(2), r(1))), 2.0);
        assert_eq!(law.rate((r(2), r(2))), 1.0);
        assert_eq!(law.total(), 3.0);
        assert!(marginal_consistency_check(&law, &rk, &rl, r(1), r(1)));
    }

    #[test]
    fn perturbed_law_detected() {
        let rk = row(&[(2, 2.0), (3, 1.0)]);
        let rl = row(&[(1, 1.0), (3, 3.0)]);
        let mut law = coupled_jump_law(&rk, &rl, r(1), r(2)).unwrap();
        law.perturb(0, 1e-6);
        assert!(!marginal_consistency_check(&law, &rk, &rl, r(1), r(2)));
    }

    #[test]
    fn negative_rate_rejected() {
        let bad = row(&[(2, -1.0)]);
        assert!(coupled_jump_law(&bad, &RateRow::new(), r(1), r(2)).is_err());
    }
}
