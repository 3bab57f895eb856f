use num_traits::Zero;

use super::{ChurnMode, Config, KarmaError, Ledger, UserId};
use crate::scalar::{rat_u64, CreditScalar, Rational};

/// Registers `user` with fair share `share`.
///
/// The newcomer starts with the mean balance of the existing users, whose
/// balances are left untouched. Under [`ChurnMode::Fixed`] every share is
/// rescaled so the pool size is unchanged; under [`ChurnMode::ScaleOnChurn`]
/// the pool grows by `share`.
pub fn join_user<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &mut Config<S>,
    user: UserId,
    share: Rational,
) -> Result<(), KarmaError> {
    ledger.check_matches(config)?;
    if config.contains(user) {
        return Err(KarmaError::DuplicateUser(user));
    }
    if share <= Rational::zero() {
        return Err(KarmaError::NonPositiveShare(user));
    }
    let n = ledger.credits.len() as u64;
    let mean = ledger.total_credits() / S::from_u64(n);

    match config.churn() {
        ChurnMode::Fixed => {
            let capacity = rat_u64(config.capacity());
            let total = capacity + share;
            let shares = config.shares_mut();
            shares.insert(user, share);
            for f in shares.values_mut() {
                *f = *f * capacity / total;
            }
        }
        ChurnMode::ScaleOnChurn => {
            let grown = rat_u64(config.capacity()) + share;
            if !grown.is_integer() {
                return Err(KarmaError::NonIntegralCapacity(grown.to_string()));
            }
            config.shares_mut().insert(user, share);
            config.set_capacity(grown.to_integer() as u64);
        }
    }
    ledger.credits.insert(user, mean);
    ledger.cumulative.insert(user, 0);
    Ok(())
}

/// Removes `user`. Remaining balances are unchanged; the freed share is
/// spread proportionally ([`ChurnMode::Fixed`]) or the pool shrinks
/// ([`ChurnMode::ScaleOnChurn`]).
pub fn leave_user<S: CreditScalar>(
    ledger: &mut Ledger<S>,
    config: &mut Config<S>,
    user: UserId,
) -> Result<(), KarmaError> {
    ledger.check_matches(config)?;
    let Some(share) = config.share(user).copied() else {
        return Err(KarmaError::UnknownUser(user));
    };
    if config.n_users() == 1 {
        return Err(KarmaError::LastUser);
    }
    match config.churn() {
        ChurnMode::Fixed => {
            let capacity = rat_u64(config.capacity());
            let remaining = capacity - share;
            let shares = config.shares_mut();
            shares.remove(&user);
            for f in shares.values_mut() {
                *f = *f * capacity / remaining;
            }
        }
        ChurnMode::ScaleOnChurn => {
            let shrunk = rat_u64(config.capacity()) - share;
            if !shrunk.is_integer() {
                return Err(KarmaError::NonIntegralCapacity(shrunk.to_string()));
            }
            config.shares_mut().remove(&user);
            config.set_capacity(shrunk.to_integer() as u64);
        }
    }
    ledger.credits.remove(&user);
    ledger.rate.remove(&user);
    ledger.cumulative.remove(&user);
    Ok(())
}
