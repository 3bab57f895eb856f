//! Credit-based allocation of a shared pool of slices among users whose
//! demands change every quantum, together with reference policies, a
//! trace-driven simulator and brute-force checkers for its guarantees.

pub mod baselines;
pub mod karma;
pub mod oracle;
pub mod scalar;
pub mod sim;
pub mod slice_pool;
pub mod traces;

pub use karma::{
    allocate_quantum, allocate_quantum_batched, join_user, leave_user, AllocationResult, ChurnMode,
    Config, Karma, KarmaError, Ledger, QuantumDemands, UserId,
};
pub use scalar::{parse_rational, rational, CreditScalar, Rational};
pub use sim::{run, Metrics, SimReport, Strategy};
pub use traces::{gen_example, gen_synthetic, load_trace, BurstParams, DemandTrace, TraceError};

/// Configuration with exact credit balances.
pub type ExactConfig = Config<Rational>;
/// Ledger with exact credit balances.
pub type ExactLedger = Ledger<Rational>;
/// Allocator with exact credit balances.
pub type ExactKarma = Karma<Rational>;
/// Allocator with `f64` credit balances; exact only while every charge is integral.
pub type FloatKarma = Karma<f64>;
