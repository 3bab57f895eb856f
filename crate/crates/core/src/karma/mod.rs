//! The credit-based allocator.
//!
//! Every quantum each user receives free credits, keeps up to its guaranteed
//! share, and may borrow further slices (donated by idle users first, then
//! from the shared pool) by paying credits. Borrowers with the most credits
//! are served first; donors with the fewest credits are drained first.

mod allocate;
mod batched;
mod churn;
mod config;
mod ledger;

use std::collections::BTreeMap;

pub use allocate::{allocate_quantum, allocate_quantum_batched};
pub use churn::{join_user, leave_user};
pub use config::{ChurnMode, Config, UserId};
pub use ledger::Ledger;

use crate::scalar::CreditScalar;

/// Slices requested by each user in one quantum. Registered users missing
/// from the map demand nothing.
pub type QuantumDemands = BTreeMap<UserId, u64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KarmaError {
    #[error("configuration has no users")]
    NoUsers,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(String),
    #[error("initial credits must be non-negative, got {0}")]
    NegativeInitCredits(String),
    #[error("fair share of {0} must be positive")]
    NonPositiveShare(UserId),
    #[error("capacity {capacity} does not equal the sum of fair shares {shares}")]
    CapacityMismatch { capacity: u64, shares: String },
    #[error("fair shares must sum to a whole number of slices, got {0}")]
    NonIntegralCapacity(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("user {0} is already registered")]
    DuplicateUser(UserId),
    #[error("cannot remove the last user")]
    LastUser,
    #[error("ledger users do not match the configuration")]
    LedgerMismatch,
}

/// Outcome of one quantum, with an audit trail of every credit movement.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult<S> {
    /// Index of the quantum this result belongs to.
    pub quantum: u64,
    /// Slices granted to each user.
    pub alloc: BTreeMap<UserId, u64>,
    /// Part of `alloc` covered by the guaranteed share.
    pub base: BTreeMap<UserId, u64>,
    /// Slices borrowed beyond the guaranteed share (nonzero entries only).
    pub borrowed: BTreeMap<UserId, u64>,
    /// Donated slices of each donor that were lent out (nonzero entries only).
    pub donated_used: BTreeMap<UserId, u64>,
    /// Slices drawn from the shared pool.
    pub shared_used: u64,
    /// Net credit change over the quantum, free credits included.
    pub credit_delta: BTreeMap<UserId, S>,
    /// Whether the user's reported demand was met in full.
    pub satisfied: BTreeMap<UserId, bool>,
}

impl<S: CreditScalar> AllocationResult<S> {
    pub fn total_allocated(&self) -> u64 {
        self.alloc.values().sum()
    }

    pub fn alloc_of(&self, user: UserId) -> u64 {
        self.alloc.get(&user).copied().unwrap_or(0)
    }

    /// Allocation as a vector in user-id order.
    pub fn alloc_vec(&self) -> Vec<u64> {
        self.alloc.values().copied().collect()
    }
}

/// Owns a configuration and its ledger and drives them together.
#[derive(Debug, Clone)]
pub struct Karma<S> {
    config: Config<S>,
    ledger: Ledger<S>,
}

impl<S: CreditScalar> Karma<S> {
    pub fn new(config: Config<S>) -> Result<Self, KarmaError> {
        let ledger = Ledger::new(&config)?;
        Ok(Karma { config, ledger })
    }

    pub fn config(&self) -> &Config<S> {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger<S> {
        &self.ledger
    }

    pub fn allocate(
        &mut self,
        demands: &QuantumDemands,
    ) -> Result<AllocationResult<S>, KarmaError> {
        allocate_quantum(&mut self.ledger, &self.config, demands)
    }

    pub fn allocate_batched(
        &mut self,
        demands: &QuantumDemands,
    ) -> Result<AllocationResult<S>, KarmaError> {
        allocate_quantum_batched(&mut self.ledger, &self.config, demands)
    }

    pub fn join(&mut self, user: UserId, share: crate::Rational) -> Result<(), KarmaError> {
        join_user(&mut self.ledger, &mut self.config, user, share)
    }

    pub fn leave(&mut self, user: UserId) -> Result<(), KarmaError> {
        leave_user(&mut self.ledger, &mut self.config, user)
    }
}
