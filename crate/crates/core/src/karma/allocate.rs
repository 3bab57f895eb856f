use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::batched::frontier_select;
use super::{AllocationResult, Config, KarmaError, Ledger, QuantumDemands, UserId};
use crate::scalar::CreditScalar;

/// Everything the borrow/lend phase needs, computed once per quantum.
#[derive(Debug, Clone)]
pub(crate) struct QuantumSetup<S> {
    pub free: S,
    /// Balances after the free-credit increment.
    pub credits: BTreeMap<UserId, S>,
    pub demands: BTreeMap<UserId, u64>,
    pub base: BTreeMap<UserId, u64>,
    /// Users with idle guaranteed slices, and how many.
    pub donated: BTreeMap<UserId, u64>,
    /// Users wanting more than their guaranteed share: (extra slices wanted, cost per slice).
    pub borrowers: BTreeMap<UserId, (u64, S)>,
    pub shared: u64,
}

impl<S: CreditScalar> QuantumSetup<S> {
    pub fn prepare(
        ledger: &Ledger<S>,
        config: &Config<S>,
        demands: &QuantumDemands,
    ) -> Result<Self, KarmaError> {
        ledger.check_matches(config)?;
        if let Some(user) = demands.keys().find(|u| !config.contains(**u)) {
            return Err(KarmaError::UnknownUser(*user));
        }
        let free = config.free_credits();
        let mut setup = QuantumSetup {
            free: free.clone(),
            credits: BTreeMap::new(),
            demands: BTreeMap::new(),
            base: BTreeMap::new(),
            donated: BTreeMap::new(),
            borrowers: BTreeMap::new(),
            shared: config.shared_slices(),
        };
        for (user, balance) in &ledger.credits {
            let user = *user;
            let demand = demands.get(&user).copied().unwrap_or(0);
            let guaranteed = config.guaranteed(user);
            setup.credits.insert(user, balance.clone() + free.clone());
            setup.demands.insert(user, demand);
            setup.base.insert(user, demand.min(guaranteed));
            if demand < guaranteed {
                setup.donated.insert(user, guaranteed - demand);
            } else if demand > guaranteed {
                let cost = config.borrow_cost(user).expect("registered user");
                setup.borrowers.insert(user, (demand - guaranteed, cost));
            }
        }
        Ok(setup)
    }

    fn donated_total(&self) -> u64 {
        self.donated.values().sum()
    }
}

/// Slices moved during the borrow/lend phase.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Grants {
    pub borrowed: BTreeMap<UserId, u64>,
    pub lent: BTreeMap<UserId, u64>,
    pub shared_used: u64,
}

struct RichestFirst<S> {
    credit: S,
    user: UserId,
}

impl<S: PartialOrd> Ord for RichestFirst<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.credit
            .partial_cmp(&other.credit)
            .expect("credit balances are comparable")
            .then_with(|| other.user.cmp(&self.user))
    }
}

impl<S: PartialOrd> PartialOrd for RichestFirst<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: PartialOrd> PartialEq for RichestFirst<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: PartialOrd> Eq for RichestFirst<S> {}

struct PoorestFirst<S> {
    credit: S,
    user: UserId,
}

impl<S: PartialOrd> Ord for PoorestFirst<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .credit
            .partial_cmp(&self.credit)
            .expect("credit balances are comparable")
            .then_with(|| other.user.cmp(&self.user))
    }
}

impl<S: PartialOrd> PartialOrd for PoorestFirst<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: PartialOrd> PartialEq for PoorestFirst<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: PartialOrd> Eq for PoorestFirst<S> {}

/// Slice-at-a-time borrow loop with a max-heap of borrowers and a min-heap of donors.
fn borrow_loop<S: CreditScalar>(setup: &QuantumSetup<S>) -> Grants {
    let mut grants = Grants::default();
    let mut need: BTreeMap<UserId, u64> = BTreeMap::new();
    let mut borrowers = BinaryHeap::new();
    for (user, (extra, _)) in &setup.borrowers {
        need.insert(*user, *extra);
        let credit = setup.credits[user].clone();
        if credit > S::zero() {
            borrowers.push(RichestFirst {
                credit,
                user: *user,
            });
        }
    }
    let mut spare: BTreeMap<UserId, u64> = setup.donated.clone();
    let mut donors: BinaryHeap<_> = setup
        .donated
        .keys()
        .map(|u| PoorestFirst {
            credit: setup.credits[u].clone(),
            user: *u,
        })
        .collect();
    let mut donated_left = setup.donated_total();
    let mut shared_left = setup.shared;

    while donated_left + shared_left > 0 {
        let Some(RichestFirst { credit, user }) = borrowers.pop() else {
            break;
        };
        if let Some(PoorestFirst {
            credit: dc,
            user: donor,
        }) = donors.pop()
        {
            *grants.lent.entry(donor).or_insert(0) += 1;
            donated_left -= 1;
            let left = spare.get_mut(&donor).expect("donor has spare slices");
            *left -= 1;
            if *left > 0 {
                donors.push(PoorestFirst {
                    credit: dc + S::one(),
                    user: donor,
                });
            }
        } else {
            shared_left -= 1;
            grants.shared_used += 1;
        }
        *grants.borrowed.entry(user).or_insert(0) += 1;
        let remaining = need.get_mut(&user).expect("borrower has demand");
        *remaining -= 1;
        let credit = credit - setup.borrowers[&user].1.clone();
        if *remaining > 0 && credit > S::zero() {
            borrowers.push(RichestFirst { credit, user });
        }
    }
    grants
}

/// Closed-form variant: picks the credit level at which supply runs out
/// instead of stepping one slice at a time.
fn borrow_frontier<S: CreditScalar>(setup: &QuantumSetup<S>) -> Grants {
    let mut grants = Grants::default();

    // A borrower may take its k-th slice only while its balance before that
    // slice is positive, i.e. at most ceil(credit / cost) slices.
    let lanes: Vec<_> = setup
        .borrowers
        .iter()
        .map(|(user, (extra, cost))| {
            let credit = setup.credits[user].clone();
            let affordable = if credit > S::zero() {
                (credit.clone() / cost.clone()).ceil_i128().max(0) as u64
            } else {
                0
            };
            (*user, credit, cost.clone(), (*extra).min(affordable))
        })
        .collect();
    let demand: u64 = lanes.iter().map(|l| l.3).sum();
    let supply = setup.donated_total() + setup.shared;
    let picks = demand.min(supply);
    for ((user, ..), taken) in lanes.iter().zip(frontier_select(&lanes, picks)) {
        if taken > 0 {
            grants.borrowed.insert(*user, taken);
        }
    }

    // Donors are drained poorest first; negating balances turns that into
    // the same richest-first selection.
    let lent = picks.min(setup.donated_total());
    let donor_lanes: Vec<_> = setup
        .donated
        .iter()
        .map(|(user, spare)| (*user, -setup.credits[user].clone(), S::one(), *spare))
        .collect();
    for ((user, ..), taken) in donor_lanes.iter().zip(frontier_select(&donor_lanes, lent)) {
        if taken > 0 {
            grants.lent.insert(*user, taken);
        }
    }
    grants.shared_used = picks - lent;
    grants
}

fn settle<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &Config<S>,
    setup: QuantumSetup<S>,
    grants: Grants,
) -> AllocationResult<S> {
    let mut result = AllocationResult {
        quantum: ledger.quantum,
        alloc: BTreeMap::new(),
        base: setup.base.clone(),
        borrowed: grants.borrowed.clone(),
        donated_used: grants.lent.clone(),
        shared_used: grants.shared_used,
        credit_delta: BTreeMap::new(),
        satisfied: BTreeMap::new(),
    };
    ledger.rate.clear();
    for (user, base) in &setup.base {
        let borrowed = grants.borrowed.get(user).copied().unwrap_or(0);
        let lent = grants.lent.get(user).copied().unwrap_or(0);
        let alloc = base + borrowed;
        let cost = config.borrow_cost(*user).expect("registered user");
        let rate = S::from_u64(lent) - S::from_u64(borrowed) * cost;
        let delta = setup.free.clone() + rate.clone();
        if rate != S::zero() {
            ledger.rate.insert(*user, rate);
        }
        let balance = ledger.credits.get_mut(user).expect("registered user");
        *balance = balance.clone() + delta.clone();
        *ledger.cumulative.get_mut(user).expect("registered user") += alloc;
        result.alloc.insert(*user, alloc);
        result.credit_delta.insert(*user, delta);
        result.satisfied.insert(*user, alloc == setup.demands[user]);
    }
    ledger.quantum += 1;
    result
}

/// Runs one quantum of the allocator and updates the ledger in place.
///
/// Borrowers are served one slice at a time, richest first; each slice comes
/// from the poorest remaining donor, or from the shared pool once donated
/// slices run out. Ties go to the smallest user id.
pub fn allocate_quantum<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &Config<S>,
    demands: &QuantumDemands,
) -> Result<AllocationResult<S>, KarmaError> {
    let setup = QuantumSetup::prepare(ledger, config, demands)?;
    let grants = borrow_loop(&setup);
    Ok(settle(ledger, config, setup, grants))
}

/// Same contract as [`allocate_quantum`], computed level-by-level.
pub fn allocate_quantum_batched<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &Config<S>,
    demands: &QuantumDemands,
) -> Result<AllocationResult<S>, KarmaError> {
    let setup = QuantumSetup::prepare(ledger, config, demands)?;
    let grants = borrow_frontier(&setup);
    Ok(settle(ledger, config, setup, grants))
}
