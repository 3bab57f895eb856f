use std::collections::BTreeMap;

use crate::karma::{AllocationResult, Config, KarmaError, Ledger, QuantumDemands, UserId};
use crate::scalar::CreditScalar;

/// One slice at a time, scanning every user for each slice. Balances are
/// updated in place as slices move, so this shares no bookkeeping with the
/// production allocators.
pub fn naive_allocate<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &Config<S>,
    demands: &QuantumDemands,
) -> Result<AllocationResult<S>, KarmaError> {
    ledger.check_matches(config)?;
    if let Some(u) = demands.keys().find(|u| !config.contains(**u)) {
        return Err(KarmaError::UnknownUser(*u));
    }
    let users: Vec<UserId> = config.users().collect();
    let before: Vec<S> = users.iter().map(|u| ledger.credits[u].clone()).collect();
    let free = config.free_credits();
    let mut credit: Vec<S> = before.iter().map(|c| c.clone() + free.clone()).collect();
    let demand: Vec<u64> = users
        .iter()
        .map(|u| demands.get(u).copied().unwrap_or(0))
        .collect();
    let cost: Vec<S> = users
        .iter()
        .map(|u| config.borrow_cost(*u).expect("registered"))
        .collect();

    let mut alloc = vec![0u64; users.len()];
    let mut spare = vec![0u64; users.len()];
    for (i, u) in users.iter().enumerate() {
        let g = config.guaranteed(*u);
        alloc[i] = demand[i].min(g);
        spare[i] = g.saturating_sub(demand[i]);
    }
    let base = alloc.clone();
    let mut borrowed = vec![0u64; users.len()];
    let mut lent = vec![0u64; users.len()];
    let mut shared_left = config.shared_slices();
    let mut shared_used = 0;

    loop {
        // Richest borrower still wanting slices, smallest id on ties.
        let mut taker: Option<usize> = None;
        for i in 0..users.len() {
            if alloc[i] < demand[i]
                && credit[i] > S::zero()
                && taker.is_none_or(|t| credit[i] > credit[t])
            {
                taker = Some(i);
            }
        }
        let Some(b) = taker else { break };
        // Poorest donor with a spare slice.
        let mut giver: Option<usize> = None;
        for i in 0..users.len() {
            if spare[i] > 0 && giver.is_none_or(|g| credit[i] < credit[g]) {
                giver = Some(i);
            }
        }
        match giver {
            Some(d) => {
                spare[d] -= 1;
                lent[d] += 1;
                credit[d] = credit[d].clone() + S::one();
            }
            None if shared_left > 0 => {
                shared_left -= 1;
                shared_used += 1;
            }
            None => break,
        }
        alloc[b] += 1;
        borrowed[b] += 1;
        credit[b] = credit[b].clone() - cost[b].clone();
    }

    let nonzero = |v: &[u64]| -> BTreeMap<UserId, u64> {
        users
            .iter()
            .zip(v)
            .filter(|(_, x)| **x > 0)
            .map(|(u, x)| (*u, *x))
            .collect()
    };
    let result = AllocationResult {
        quantum: ledger.quantum,
        alloc: users.iter().copied().zip(alloc.iter().copied()).collect(),
        base: users.iter().copied().zip(base).collect(),
        borrowed: nonzero(&borrowed),
        donated_used: nonzero(&lent),
        shared_used,
        credit_delta: users
            .iter()
            .enumerate()
            .map(|(i, u)| (*u, credit[i].clone() - before[i].clone()))
            .collect(),
        satisfied: users
            .iter()
            .enumerate()
            .map(|(i, u)| (*u, alloc[i] == demand[i]))
            .collect(),
    };
    ledger.rate.clear();
    for (i, u) in users.iter().enumerate() {
        let rate = credit[i].clone() - before[i].clone() - free.clone();
        if !rate.is_zero() {
            ledger.rate.insert(*u, rate);
        }
        ledger.credits.insert(*u, credit[i].clone());
        *ledger.cumulative.entry(*u).or_insert(0) += alloc[i];
    }
    ledger.quantum += 1;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rational, Rational};
    use crate::traces::gen_example;

    #[test]
    fn running_example_credit_trail() {
        let ex = gen_example("fig4", None).unwrap();
        let mut ledger = Ledger::new(&ex.config).unwrap();
        let mut trail = vec![vec![]; 3];
        let mut allocs = vec![];
        for row in ex.trace.rows() {
            let demands = row
                .iter()
                .enumerate()
                .map(|(u, d)| (UserId(u as u32), *d))
                .collect();
            allocs.push(
                naive_allocate(&mut ledger, &ex.config, &demands)
                    .unwrap()
                    .alloc_vec(),
            );
            for (u, c) in ledger.credits().values().enumerate() {
                trail[u].push(c.to_integer());
            }
        }
        assert_eq!(
            allocs,
            [
                vec![3, 2, 1],
                vec![3, 0, 0],
                vec![0, 3, 0],
                vec![1, 1, 4],
                vec![1, 2, 3]
            ]
        );
        assert_eq!(
            trail,
            [
                vec![5, 4, 6, 7, 8],
                vec![6, 8, 7, 8, 8],
                vec![7, 9, 11, 9, 8]
            ]
        );
    }

    #[test]
    fn single_shared_slice_goes_to_smaller_id() {
        let half = rational(1, 2);
        let config = Config::weighted(
            [(UserId(0), half), (UserId(1), half)],
            rational(0, 1),
            Rational::from_integer(5),
        )
        .unwrap();
        let mut ledger = Ledger::new(&config).unwrap();
        let demands = [(UserId(0), 3), (UserId(1), 1)].into_iter().collect();
        let r = naive_allocate(&mut ledger, &config, &demands).unwrap();
        assert_eq!(r.alloc_vec(), [1, 0]);
        assert_eq!(ledger.credit(UserId(0)), Some(&rational(9, 2)));
    }

    #[test]
    fn zero_capacity_cannot_be_configured() {
        let config = Config::weighted(
            [(UserId(0), rational(0, 1))],
            rational(0, 1),
            Rational::from_integer(5),
        )
        .unwrap();
        assert!(matches!(
            Ledger::new(&config),
            Err(KarmaError::NonPositiveShare(_))
        ));
    }
}
