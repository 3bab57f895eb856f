use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::KarmaError;
use crate::scalar::{floor_u64, rat_u64, CreditScalar, Rational};

/// Identifier of a tenant. Ordering doubles as the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl From<u32> for UserId {
    fn from(id: u32) -> Self {
        UserId(id)
    }
}

/// How the pool reacts when users join or leave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ChurnMode {
    /// Pool size stays put; fair shares are rescaled proportionally.
    #[default]
    Fixed,
    /// Fair shares stay put; the pool grows or shrinks by the user's share.
    ScaleOnChurn,
}

/// System-wide allocation parameters.
///
/// Fair shares are exact rationals so that proportional rescaling on churn
/// never loses precision; the pool size is always a whole number of slices
/// and equals the sum of the shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Config<S> {
    shares: BTreeMap<UserId, Rational>,
    capacity: u64,
    alpha: Rational,
    init_credits: S,
    churn: ChurnMode,
}

impl<S: CreditScalar> Config<S> {
    /// `n_users` users (ids `0..n_users`) with the same fair share.
    pub fn uniform(n_users: usize, fair_share: u64, alpha: Rational, init_credits: S) -> Self {
        let shares = (0..n_users as u32)
            .map(|u| (UserId(u), rat_u64(fair_share)))
            .collect();
        Config {
            shares,
            capacity: n_users as u64 * fair_share,
            alpha,
            init_credits,
            churn: ChurnMode::Fixed,
        }
    }

    /// Per-user fair shares. The pool size is their sum, which must be integral.
    pub fn weighted(
        shares: impl IntoIterator<Item = (UserId, Rational)>,
        alpha: Rational,
        init_credits: S,
    ) -> Result<Self, KarmaError> {
        let shares: BTreeMap<UserId, Rational> = shares.into_iter().collect();
        let total: Rational = shares.values().cloned().sum();
        if !total.is_integer() || total < Rational::zero() {
            return Err(KarmaError::NonIntegralCapacity(total.to_string()));
        }
        Ok(Config {
            shares,
            capacity: total.to_integer() as u64,
            alpha,
            init_credits,
            churn: ChurnMode::Fixed,
        })
    }

    /// Overrides the pool size. [`Config::validate`] rejects values that differ
    /// from the sum of fair shares.
    pub fn with_capacity(mut self, capacity: u64) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_alpha(mut self, alpha: Rational) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_init_credits(mut self, init_credits: S) -> Self {
        self.init_credits = init_credits;
        self
    }

    pub fn with_churn(mut self, churn: ChurnMode) -> Self {
        self.churn = churn;
        self
    }

    pub fn validate(&self) -> Result<(), KarmaError> {
        if self.shares.is_empty() {
            return Err(KarmaError::NoUsers);
        }
        if self.alpha < Rational::zero() || self.alpha > Rational::one() {
            return Err(KarmaError::InvalidAlpha(self.alpha.to_string()));
        }
        if self.init_credits < S::zero() {
            return Err(KarmaError::NegativeInitCredits(
                self.init_credits.to_string(),
            ));
        }
        if let Some((&user, _)) = self.shares.iter().find(|(_, f)| **f <= Rational::zero()) {
            return Err(KarmaError::NonPositiveShare(user));
        }
        let total: Rational = self.shares.values().cloned().sum();
        if total != rat_u64(self.capacity) {
            return Err(KarmaError::CapacityMismatch {
                capacity: self.capacity,
                shares: total.to_string(),
            });
        }
        Ok(())
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.shares.keys().copied()
    }

    pub fn n_users(&self) -> usize {
        self.shares.len()
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.shares.contains_key(&user)
    }

    pub fn shares(&self) -> &BTreeMap<UserId, Rational> {
        &self.shares
    }

    pub fn share(&self, user: UserId) -> Option<&Rational> {
        self.shares.get(&user)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    pub fn init_credits(&self) -> &S {
        &self.init_credits
    }

    pub fn churn(&self) -> ChurnMode {
        self.churn
    }

    /// True when every user has the same fair share.
    pub fn is_uniform(&self) -> bool {
        let mut it = self.shares.values();
        match it.next() {
            Some(first) => it.all(|f| f == first),
            None => true,
        }
    }

    /// Whole slices a user is guaranteed every quantum: `floor(alpha * f_u)`.
    ///
    /// Slices are indivisible, so a fractional guaranteed share is rounded
    /// down and the remainder joins the shared pool.
    pub fn guaranteed(&self, user: UserId) -> u64 {
        self.shares
            .get(&user)
            .map_or(0, |f| floor_u64(&(self.alpha * f)))
    }

    /// Slices left for credit-based borrowing once guaranteed shares are set aside.
    pub fn shared_slices(&self) -> u64 {
        let reserved: u64 = self.users().map(|u| self.guaranteed(u)).sum();
        self.capacity.saturating_sub(reserved)
    }

    /// Credits minted per user per quantum: `(1 - alpha) * capacity / n`.
    pub fn free_credits_exact(&self) -> Rational {
        (Rational::one() - self.alpha) * rat_u64(self.capacity) / rat_u64(self.n_users() as u64)
    }

    pub fn free_credits(&self) -> S {
        S::from_rational(&self.free_credits_exact())
    }

    /// Credits charged per borrowed slice: `1 / (n * w_u)` with `w_u = f_u / capacity`.
    /// Equals one when all shares are equal.
    pub fn borrow_cost_exact(&self, user: UserId) -> Option<Rational> {
        let f = self.shares.get(&user)?;
        Some(rat_u64(self.capacity) / (rat_u64(self.n_users() as u64) * f))
    }

    pub fn borrow_cost(&self, user: UserId) -> Option<S> {
        self.borrow_cost_exact(user).map(|c| S::from_rational(&c))
    }

    pub(crate) fn shares_mut(&mut self) -> &mut BTreeMap<UserId, Rational> {
        &mut self.shares
    }

    pub(crate) fn set_capacity(&mut self, capacity: u64) {
        self.capacity = capacity;
    }
}
