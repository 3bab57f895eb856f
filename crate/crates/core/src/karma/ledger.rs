use std::collections::BTreeMap;

use super::{Config, KarmaError, UserId};
use crate::scalar::CreditScalar;

/// Per-user credit balances, earn/spend rates and cumulative allocations.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger<S> {
    pub(crate) credits: BTreeMap<UserId, S>,
    /// Credits earned from lending minus credits spent on borrowing in the
    /// last quantum. Users with a zero rate have no entry.
    pub(crate) rate: BTreeMap<UserId, S>,
    pub(crate) cumulative: BTreeMap<UserId, u64>,
    pub(crate) quantum: u64,
}

impl<S: CreditScalar> Ledger<S> {
    /// Bootstraps every configured user with the initial credits.
    pub fn new(config: &Config<S>) -> Result<Self, KarmaError> {
        config.validate()?;
        let init = config.init_credits().clone();
        Ok(Ledger {
            credits: config.users().map(|u| (u, init.clone())).collect(),
            rate: BTreeMap::new(),
            cumulative: config.users().map(|u| (u, 0)).collect(),
            quantum: 0,
        })
    }

    /// A fresh ledger whose balances are given explicitly instead of the
    /// configured initial credits.
    pub fn with_credits(
        config: &Config<S>,
        credits: impl IntoIterator<Item = (UserId, S)>,
    ) -> Result<Self, KarmaError> {
        let mut ledger = Ledger::new(config)?;
        for (user, balance) in credits {
            *ledger
                .credits
                .get_mut(&user)
                .ok_or(KarmaError::UnknownUser(user))? = balance;
        }
        Ok(ledger)
    }

    pub fn credits(&self) -> &BTreeMap<UserId, S> {
        &self.credits
    }

    pub fn credit(&self, user: UserId) -> Option<&S> {
        self.credits.get(&user)
    }

    pub fn rates(&self) -> &BTreeMap<UserId, S> {
        &self.rate
    }

    pub fn cumulative(&self) -> &BTreeMap<UserId, u64> {
        &self.cumulative
    }

    pub fn cumulative_of(&self, user: UserId) -> u64 {
        self.cumulative.get(&user).copied().unwrap_or(0)
    }

    /// Number of quanta allocated so far.
    pub fn quantum(&self) -> u64 {
        self.quantum
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.credits.keys().copied()
    }

    pub fn total_credits(&self) -> S {
        self.credits
            .values()
            .cloned()
            .fold(S::zero(), |acc, c| acc + c)
    }

    pub(crate) fn check_matches(&self, config: &Config<S>) -> Result<(), KarmaError> {
        if self.credits.len() != config.n_users()
            || !config.users().all(|u| self.credits.contains_key(&u))
        {
            return Err(KarmaError::LedgerMismatch);
        }
        Ok(())
    }
}
