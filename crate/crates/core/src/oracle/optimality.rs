use super::OracleError;

/// Nobody gets more than they asked for, and either the pool is used up or
/// every demand is met.
pub fn check_pareto(alloc: &[u64], demands: &[u64], capacity: u64) -> bool {
    if alloc.len() != demands.len() || alloc.iter().zip(demands).any(|(a, d)| a > d) {
        return false;
    }
    let given: u64 = alloc.iter().sum();
    given == capacity || alloc == demands
}

/// Visits every integral `a` with `a <= demands` and
/// `sum(a) == min(sum(demands), capacity)`. Fails once more than `budget`
/// search nodes have been visited.
fn for_each_efficient(
    demands: &[u64],
    capacity: u64,
    budget: u64,
    mut visit: impl FnMut(&[u64]),
) -> Result<(), OracleError> {
    let target = demands.iter().sum::<u64>().min(capacity);
    // suffix[i] = sum of demands[i..], to prune branches that cannot reach the target.
    let mut suffix = vec![0u64; demands.len() + 1];
    for i in (0..demands.len()).rev() {
        suffix[i] = suffix[i + 1] + demands[i];
    }
    let mut nodes = 0u64;
    let mut current = vec![0u64; demands.len()];

    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: usize,
        left: u64,
        demands: &[u64],
        suffix: &[u64],
        current: &mut Vec<u64>,
        nodes: &mut u64,
        budget: u64,
        visit: &mut dyn FnMut(&[u64]),
    ) -> Result<(), OracleError> {
        *nodes += 1;
        if *nodes > budget {
            return Err(OracleError::BudgetExceeded {
                needed: *nodes as u128,
                budget,
            });
        }
        if i == demands.len() {
            visit(current);
            return Ok(());
        }
        let lo = left.saturating_sub(suffix[i + 1]);
        let hi = demands[i].min(left);
        for a in lo..=hi {
            current[i] = a;
            walk(
                i + 1,
                left - a,
                demands,
                suffix,
                current,
                nodes,
                budget,
                visit,
            )?;
        }
        current[i] = 0;
        Ok(())
    }

    walk(
        0,
        target,
        demands,
        &suffix,
        &mut current,
        &mut nodes,
        budget,
        &mut visit,
    )
}

/// Best achievable `min_u (past_u + a_u)` over efficient integral allocations `a`.
pub fn maximin_oracle(
    past: &[u64],
    demands: &[u64],
    capacity: u64,
    budget: u64,
) -> Result<u64, OracleError> {
    if past.len() != demands.len() {
        return Err(OracleError::BadSpace(
            "past and demand vectors differ in length".into(),
        ));
    }
    let mut best = 0u64;
    for_each_efficient(demands, capacity, budget, |a| {
        let worst = past.iter().zip(a).map(|(r, x)| r + x).min().unwrap_or(0);
        best = best.max(worst);
    })?;
    Ok(best)
}

/// Lexicographically greatest sorted allocation among efficient integral
/// allocations, i.e. the per-quantum max-min fair outcome up to relabelling.
pub fn leximin_bruteforce(
    demands: &[u64],
    capacity: u64,
    budget: u64,
) -> Result<Vec<u64>, OracleError> {
    let mut best: Option<Vec<u64>> = None;
    for_each_efficient(demands, capacity, budget, |a| {
        let mut sorted = a.to_vec();
        sorted.sort_unstable();
        if best.as_ref().is_none_or(|b| sorted > *b) {
            best = Some(sorted);
        }
    })?;
    Ok(best.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::maxmin_quantum;

    #[test]
    fn pareto_clauses() {
        assert!(check_pareto(&[3, 2, 1], &[3, 2, 1], 6));
        assert!(!check_pareto(&[1, 0], &[2, 2], 4));
        assert!(!check_pareto(&[3, 0], &[2, 2], 4));
        assert!(check_pareto(&[1, 1], &[1, 1], 4));
        assert!(check_pareto(&[2, 2], &[5, 5], 4));
    }

    #[test]
    fn maximin_examples() {
        assert_eq!(maximin_oracle(&[0, 0, 0], &[3, 2, 1], 6, 1_000).unwrap(), 1);
        assert_eq!(maximin_oracle(&[10, 0], &[5, 5], 5, 1_000).unwrap(), 5);
        assert!(maximin_oracle(&[0; 5], &[10; 5], 10, 3)
            .unwrap_err()
            .is_budget());
    }

    #[test]
    fn leximin_matches_water_filling() {
        for demands in [[3u64, 2, 1], [2, 2, 4], [0, 5, 5], [4, 4, 4]] {
            let mut fast = maxmin_quantum(&demands, 6, None);
            fast.sort_unstable();
            assert_eq!(leximin_bruteforce(&demands, 6, 10_000).unwrap(), fast);
        }
    }
}
