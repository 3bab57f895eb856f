//! Brute-force references used to check the allocator on small instances:
//! a slice-at-a-time allocator, efficiency and maximin checks, exhaustive
//! misreporting searches, and the randomized suites built from them.

mod deviation;
mod naive;
mod optimality;
mod verify;

pub use deviation::{
    collusion_spotcheck, deviation_search, search_reports, DeviationReport, DeviationSpace,
    SearchOutcome,
};
pub use naive::naive_allocate;
pub use optimality::{check_pareto, leximin_bruteforce, maximin_oracle};
pub use verify::{run_suites, Suite, Verdict, VerifyOptions, VerifyReport};

use crate::karma::KarmaError;
use crate::sim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("search space of {needed} exceeds budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("deviation search requires alpha = 0, got {0}")]
    NonZeroAlpha(String),
    #[error("initial credits {have} may run out; need at least {need}")]
    CreditsTooLow { have: String, need: String },
    #[error("deviation space: {0}")]
    BadSpace(String),
    #[error(transparent)]
    Karma(#[from] KarmaError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl OracleError {
    pub fn is_budget(&self) -> bool {
        matches!(self, OracleError::BudgetExceeded { .. })
    }
}
