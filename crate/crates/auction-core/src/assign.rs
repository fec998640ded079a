//! Exhaustive solvers for the small allocation problems at the heart of every
//! mechanism here: match buyers to goods one-to-one, or split the goods into
//! per-buyer bundles, so that total reported value is maximal.
//!
//! Instances are desk-sized by contract, so both solvers simply enumerate the
//! feasible allocations and keep every optimum they find. Size guards turn
//! "this would take a while" into an error instead. Keeping the full optimum
//! set matters: payments depend on which optimum is chosen, and the
//! verification harness averages over all of them when ties are broken at
//! random.

use itertools::Itertools;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EngineError, Result};
use crate::model::Allocation;

/// Most buyers a one-to-one assignment instance may have; enumeration is
/// factorial in this.
pub const MAX_ASSIGNMENT_BUYERS: usize = 8;

/// Most goods a bundle-partition instance may have.
pub const MAX_PARTITION_GOODS: usize = 10;

/// Cap on the number of candidate allocations either solver will walk.
pub const ENUMERATION_BUDGET: u64 = 5_000_000;

/// How a mechanism chooses among equally good allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    /// Take the optimum whose good-to-buyer vector is lexicographically
    /// smallest, unassigned before buyer 0. Fully deterministic.
    Lexicographic,
    /// Draw uniformly among the optima with a seeded generator, so runs are
    /// reproducible per seed.
    Random { seed: u64 },
}

impl TieRule {
    /// Stateful chooser for one mechanism run. Successive draws advance the
    /// generator, so a run that breaks several ties (say one per winner) gets
    /// independent picks while staying reproducible.
    pub fn breaker(&self) -> TieBreaker {
        TieBreaker {
            rng: match self {
                TieRule::Lexicographic => None,
                TieRule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            },
        }
    }
}

/// See [`TieRule::breaker`].
pub struct TieBreaker {
    rng: Option<ChaCha8Rng>,
}

impl TieBreaker {
    /// Picks the index of the winning option from a nonempty, ascending-sorted
    /// slice of candidates.
    pub fn pick(&mut self, sorted_options_len: usize) -> usize {
        assert!(sorted_options_len > 0, "no options to pick from");
        match &mut self.rng {
            None => 0,
            Some(rng) => rng.random_range(0..sorted_options_len),
        }
    }
}

/// Result of either solver: the chosen allocation, its value, and the full
/// set of optima in ascending allocation order.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSolution {
    pub best: Allocation,
    pub value: f64,
    pub optima: Vec<Allocation>,
}

fn check_value_matrix(values: &[Vec<f64>], n: usize, m: usize) -> Result<()> {
    if values.len() != n {
        return Err(EngineError::DimensionMismatch(format!(
            "value matrix has {} rows, expected {n}",
            values.len()
        )));
    }
    for (i, row) in values.iter().enumerate() {
        if row.len() != m {
            return Err(EngineError::DimensionMismatch(format!(
                "value row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(EngineError::NonFinite(format!("value[{i}][{k}]")));
        }
    }
    Ok(())
}

/// Collects the allocations whose value is within `epsilon` of the best, from
/// a list of candidates, and resolves the tie.
fn finish(
    mut scored: Vec<(Allocation, f64)>,
    epsilon: f64,
    tie: TieRule,
) -> AssignmentSolution {
    let max = scored
        .iter()
        .map(|(_, w)| *w)
        .fold(f64::NEG_INFINITY, f64::max);
    scored.retain(|(_, w)| *w >= max - epsilon);
    scored.sort_by(|a, b| a.0.cmp(&b.0));
    let optima: Vec<Allocation> = scored.into_iter().map(|(a, _)| a).collect();
    let pick = tie.breaker().pick(optima.len());
    AssignmentSolution {
        best: optima[pick].clone(),
        value: max,
        optima,
    }
}

/// Assigns every good to a distinct buyer so that the sum of `values[i][k]`
/// over assigned pairs is maximal. Requires at least as many buyers as goods;
/// every good is handed out even when values are negative, which is the
/// behaviour the thin-market payment rule expects.
pub fn best_injective_assignment(
    values: &[Vec<f64>],
    n: usize,
    m: usize,
    tie: TieRule,
    epsilon: f64,
) -> Result<AssignmentSolution> {
    if n < m {
        return Err(EngineError::UnsupportedShape(format!(
            "cannot give {m} goods to {n} buyers one good each"
        )));
    }
    if m == 0 {
        return Err(EngineError::UnsupportedShape("no goods to assign".into()));
    }
    if n > MAX_ASSIGNMENT_BUYERS {
        return Err(EngineError::SizeGuard(format!(
            "{n} buyers exceeds the assignment solver limit of {MAX_ASSIGNMENT_BUYERS}"
        )));
    }
    check_value_matrix(values, n, m)?;

    let scored = (0..n)
        .permutations(m)
        .map(|buyers| {
            let value: f64 = buyers
                .iter()
                .enumerate()
                .map(|(k, &i)| values[i][k])
                .sum();
            let alloc = Allocation::new(buyers.into_iter().map(Some).collect());
            (alloc, value)
        })
        .collect();
    Ok(finish(scored, epsilon, tie))
}

/// Splits the goods into disjoint (possibly empty) bundles, at most one per
/// buyer, maximizing the sum of `bundle_value(buyer, bundle)`. Bundles are
/// bitmasks over goods; an unassigned good appears in nobody's mask. The
/// value of an empty bundle is taken as zero without consulting the callback.
pub fn best_partition(
    n: usize,
    m: usize,
    bundle_value: impl Fn(usize, u32) -> f64,
    tie: TieRule,
    epsilon: f64,
) -> Result<AssignmentSolution> {
    if n == 0 || m == 0 {
        return Err(EngineError::UnsupportedShape(
            "need at least one buyer and one good".into(),
        ));
    }
    if m > MAX_PARTITION_GOODS {
        return Err(EngineError::SizeGuard(format!(
            "{m} goods exceeds the partition solver limit of {MAX_PARTITION_GOODS}"
        )));
    }
    let total = ((n + 1) as u64)
        .checked_pow(m as u32)
        .filter(|&t| t <= ENUMERATION_BUDGET)
        .ok_or_else(|| {
            EngineError::SizeGuard(format!(
                "({n}+1)^{m} candidate partitions exceed the enumeration budget \
                 of {ENUMERATION_BUDGET}"
            ))
        })?;

    let mut scored = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        // Decode the candidate as base-(n+1) digits, one per good:
        // 0 leaves the good unassigned, b+1 hands it to buyer b.
        let mut rest = code;
        let mut assigned = vec![None; m];
        let mut masks = vec![0u32; n];
        for (k, slot) in assigned.iter_mut().enumerate() {
            let digit = (rest % (n as u64 + 1)) as usize;
            rest /= n as u64 + 1;
            if digit > 0 {
                *slot = Some(digit - 1);
                masks[digit - 1] |= 1 << k;
            }
        }
        let value: f64 = masks
            .iter()
            .enumerate()
            .filter(|(_, &mask)| mask != 0)
            .map(|(i, &mask)| bundle_value(i, mask))
            .sum();
        if !value.is_finite() {
            return Err(EngineError::NonFinite(format!(
                "partition value for candidate {code}"
            )));
        }
        // Keep only candidates near the running best to bound memory.
        if value > best {
            best = value;
        }
        if value >= best - epsilon {
            scored.push((Allocation::new(assigned), value));
        }
    }
    scored.retain(|(_, w)| *w >= best - epsilon);
    Ok(finish(scored, epsilon, tie))
}

/// Checks, for one instance of nonnegative per-good values, that bundling
/// adds nothing under unit demand: the best bundle partition is worth exactly
/// as much as the best one-good-per-buyer assignment of all goods.
pub fn unit_demand_reduction_check(
    values: &[Vec<f64>],
    n: usize,
    m: usize,
    epsilon: f64,
) -> Result<bool> {
    check_value_matrix(values, n, m)?;
    let unit_demand_bundle = |i: usize, mask: u32| -> f64 {
        (0..m)
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| values[i][k])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let partition = best_partition(n, m, unit_demand_bundle, TieRule::Lexicographic, epsilon)?;
    let assignment =
        best_injective_assignment(values, n, m, TieRule::Lexicographic, epsilon)?;
    Ok((partition.value - assignment.value).abs() <= epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-9;

    #[test]
    fn picks_the_hand_checked_assignment() {
        // Three buyers, two goods; buyer 0 should take good 0 and buyer 2
        // good 1, for 5 + 7.5.
        let values = vec![vec![5.0, 4.0], vec![4.5, 4.5], vec![5.5, 7.5]];
        let sol =
            best_injective_assignment(&values, 3, 2, TieRule::Lexicographic, EPS).unwrap();
        assert_eq!(sol.best.assigned, vec![Some(0), Some(2)]);
        assert!((sol.value - 12.5).abs() < 1e-12);
        assert_eq!(sol.optima.len(), 1);
    }

    #[test]
    fn single_good_goes_to_the_highest_value_buyer() {
        let values = vec![vec![10.0], vec![7.0]];
        let sol =
            best_injective_assignment(&values, 2, 1, TieRule::Lexicographic, EPS).unwrap();
        assert_eq!(sol.best.assigned, vec![Some(0)]);
        assert_eq!(sol.value, 10.0);
    }

    #[test]
    fn identical_values_tie_across_all_assignments() {
        let values = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let sol =
            best_injective_assignment(&values, 2, 2, TieRule::Lexicographic, EPS).unwrap();
        assert_eq!(sol.optima.len(), 2);
        // Lexicographic rule: buyer 0 keeps good 0.
        assert_eq!(sol.best.assigned, vec![Some(0), Some(1)]);

        // Seeded random picks are reproducible.
        let a = best_injective_assignment(&values, 2, 2, TieRule::Random { seed: 11 }, EPS)
            .unwrap();
        let b = best_injective_assignment(&values, 2, 2, TieRule::Random { seed: 11 }, EPS)
            .unwrap();
        assert_eq!(a.best, b.best);
        assert!(a.optima.contains(&a.best));
    }

    #[test]
    fn matches_a_nested_loop_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let values: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let sol =
                best_injective_assignment(&values, 3, 2, TieRule::Lexicographic, EPS).unwrap();
            // Oracle: spell out the six assignments by hand.
            let mut oracle = f64::NEG_INFINITY;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        oracle = oracle.max(values[i][0] + values[j][1]);
                    }
                }
            }
            assert!((sol.value - oracle).abs() < 1e-12);
            let chosen = sol.best.assigned[0].unwrap();
            let other = sol.best.assigned[1].unwrap();
            assert!((values[chosen][0] + values[other][1] - oracle).abs() <= EPS);
        }
    }

    #[test]
    fn partition_prefers_a_valuable_bundle() {
        // Buyer 0 wants the pair (worth 5, singletons worthless); buyer 1
        // would pay 3 for good 0 alone. The pair wins.
        let bundle_value = |i: usize, mask: u32| match (i, mask) {
            (0, 0b11) => 5.0,
            (1, 0b01) => 3.0,
            _ => 0.0,
        };
        let sol = best_partition(2, 2, bundle_value, TieRule::Lexicographic, EPS).unwrap();
        assert_eq!(sol.best.assigned, vec![Some(0), Some(0)]);
        assert_eq!(sol.value, 5.0);
    }

    #[test]
    fn partition_leaves_worthless_goods_unassigned_under_lex_rule() {
        // Every bundle is worth zero to everyone; the lexicographically
        // smallest optimum assigns nothing.
        let sol = best_partition(2, 2, |_, _| 0.0, TieRule::Lexicographic, EPS).unwrap();
        assert_eq!(sol.best.assigned, vec![None, None]);
        assert_eq!(sol.value, 0.0);
        // Every good-to-buyer map ties at zero: (2+1)^2 of them.
        assert_eq!(sol.optima.len(), 9);
    }

    #[test]
    fn bundling_adds_nothing_under_unit_demand() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let values: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..2).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            assert!(unit_demand_reduction_check(&values, 3, 2, EPS).unwrap());
        }
        // Square case too.
        for _ in 0..100 {
            let values: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            assert!(unit_demand_reduction_check(&values, 3, 3, EPS).unwrap());
        }
    }

    #[test]
    fn guards_reject_oversized_instances() {
        let values = vec![vec![0.0]; 9];
        assert!(matches!(
            best_injective_assignment(&values, 9, 1, TieRule::Lexicographic, EPS),
            Err(EngineError::SizeGuard(_))
        ));
        assert!(matches!(
            best_partition(3, 11, |_, _| 0.0, TieRule::Lexicographic, EPS),
            Err(EngineError::SizeGuard(_))
        ));
        assert!(matches!(
            best_partition(8, 8, |_, _| 0.0, TieRule::Lexicographic, EPS),
            Err(EngineError::SizeGuard(_))
        ));
        let few = vec![vec![0.0, 0.0]];
        assert!(matches!(
            best_injective_assignment(&few, 1, 2, TieRule::Lexicographic, EPS),
            Err(EngineError::UnsupportedShape(_))
        ));
    }

    #[test]
    fn rejects_non_finite_values() {
        let values = vec![vec![f64::INFINITY], vec![0.0]];
        assert!(best_injective_assignment(&values, 2, 1, TieRule::Lexicographic, EPS).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn value_matrix(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
            proptest::collection::vec(
                proptest::collection::vec(-10.0..10.0f64, m),
                n,
            )
        }

        proptest! {
            #[test]
            fn chosen_allocation_is_an_optimum(values in value_matrix(4, 3)) {
                let sol = best_injective_assignment(
                    &values, 4, 3, TieRule::Lexicographic, EPS,
                ).unwrap();
                prop_assert!(sol.optima.contains(&sol.best));
                for alloc in &sol.optima {
                    let w: f64 = (0..3)
                        .map(|k| values[alloc.assigned[k].unwrap()][k])
                        .sum();
                    prop_assert!((w - sol.value).abs() <= EPS);
                }
            }

            #[test]
            fn partition_value_dominates_any_single_assignment(
                values in value_matrix(3, 2),
            ) {
                // The partition solver searches a superset of the injective
                // assignments, so with unit-demand bundles its value can
                // only be higher (goods may stay unsold).
                let bundle = |i: usize, mask: u32| -> f64 {
                    (0..2)
                        .filter(|k| mask & (1 << k) != 0)
                        .map(|k| values[i][k])
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                let part = best_partition(3, 2, bundle, TieRule::Lexicographic, EPS).unwrap();
                let assign = best_injective_assignment(
                    &values, 3, 2, TieRule::Lexicographic, EPS,
                ).unwrap();
                prop_assert!(part.value >= assign.value - EPS);
            }
        }
    }
}
