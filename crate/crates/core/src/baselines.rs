//! Reference policies: per-quantum max-min fairness, max-min computed once
//! from the first quantum, and strict partitioning.
//!
//! All of them work on demand vectors indexed by user position.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::karma::{Config, Karma, KarmaError, QuantumDemands, UserId};
use crate::scalar::{floor_u64, CreditScalar, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("trace has no quanta")]
    EmptyTrace,
    #[error("expected {expected} demands, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error(transparent)]
    Karma(#[from] KarmaError),
}

/// Integral water-filling.
///
/// With `weights == None` (or all weights equal) every unsatisfied user is
/// raised to a common level and leftover slices go to the smallest indices.
/// Otherwise each slice goes to the unsatisfied user with the smallest
/// allocation-to-weight ratio, ties to the smallest index.
pub fn maxmin_quantum(demands: &[u64], capacity: u64, weights: Option<&[Rational]>) -> Vec<u64> {
    match weights {
        Some(w) if w.iter().any(|x| *x != w[0]) => weighted_fill(demands, capacity, w),
        _ => level_fill(demands, capacity),
    }
}

fn level_fill(demands: &[u64], capacity: u64) -> Vec<u64> {
    let total: u64 = demands.iter().sum();
    if total <= capacity {
        return demands.to_vec();
    }
    let filled = |level: u64| demands.iter().map(|d| (*d).min(level)).sum::<u64>();
    // Largest level that fits.
    let (mut lo, mut hi) = (0u64, demands.iter().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if filled(mid) <= capacity {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let mut alloc: Vec<u64> = demands.iter().map(|d| (*d).min(lo)).collect();
    let mut rest = capacity - filled(lo);
    for (a, d) in alloc.iter_mut().zip(demands) {
        if rest == 0 {
            break;
        }
        if *d > lo {
            *a += 1;
            rest -= 1;
        }
    }
    alloc
}

struct Neediest {
    ratio: Rational,
    index: usize,
}

impl Ord for Neediest {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .ratio
            .cmp(&self.ratio)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Neediest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Neediest {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neediest {}

fn weighted_fill(demands: &[u64], capacity: u64, weights: &[Rational]) -> Vec<u64> {
    let mut alloc = vec![0u64; demands.len()];
    let mut heap: BinaryHeap<Neediest> = demands
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0)
        .map(|(index, _)| Neediest {
            ratio: Rational::from_integer(0),
            index,
        })
        .collect();
    let mut left = capacity;
    while left > 0 {
        let Some(Neediest { index, .. }) = heap.pop() else {
            break;
        };
        alloc[index] += 1;
        left -= 1;
        if alloc[index] < demands[index] {
            let ratio = Rational::from_integer(alloc[index] as i128) / weights[index];
            heap.push(Neediest { ratio, index });
        }
    }
    alloc
}

/// Max-min allocation computed from the first quantum's demands and then
/// held fixed for the whole trace.
pub fn maxmin_static_t0(
    trace: &[Vec<u64>],
    capacity: u64,
    weights: Option<&[Rational]>,
) -> Result<Vec<u64>, PolicyError> {
    let first = trace.first().ok_or(PolicyError::EmptyTrace)?;
    Ok(maxmin_quantum(first, capacity, weights))
}

/// Each user gets at most its (whole-slice) fair share; idle share is wasted.
pub fn strict_partition(demands: &[u64], fair_shares: &[Rational]) -> Vec<u64> {
    demands
        .iter()
        .zip(fair_shares)
        .map(|(d, f)| (*d).min(floor_u64(f)))
        .collect()
}

/// Allocation policy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Karma,
    MaxminPeriodic,
    MaxminStatic,
    Strict,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Karma,
        Policy::MaxminPeriodic,
        Policy::MaxminStatic,
        Policy::Strict,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Karma => "karma",
            Policy::MaxminPeriodic => "maxmin",
            Policy::MaxminStatic => "maxmin-static",
            Policy::Strict => "strict",
        }
    }

    /// Fresh per-run state for this policy.
    pub fn instantiate<S: CreditScalar>(
        &self,
        config: &Config<S>,
    ) -> Result<Box<dyn QuantumPolicy>, PolicyError> {
        config.validate()?;
        let shares: Vec<Rational> = config.shares().values().copied().collect();
        let weights = if config.is_uniform() {
            None
        } else {
            Some(shares.clone())
        };
        Ok(match self {
            Policy::Karma => Box::new(KarmaPolicy::new(config.clone())?),
            Policy::MaxminPeriodic => Box::new(MaxminPeriodic {
                capacity: config.capacity(),
                weights,
            }),
            Policy::MaxminStatic => Box::new(MaxminStatic {
                capacity: config.capacity(),
                weights,
                fixed: None,
            }),
            Policy::Strict => Box::new(StrictPartition { shares }),
        })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "karma" => Ok(Policy::Karma),
            "maxmin" | "maxmin-periodic" | "max-min" => Ok(Policy::MaxminPeriodic),
            "maxmin-static" | "maxmin-t0" | "static" => Ok(Policy::MaxminStatic),
            "strict" | "strict-partition" => Ok(Policy::Strict),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

/// Uniform per-quantum contract shared by every policy: reported demands in,
/// allocation out, both indexed by user position.
pub trait QuantumPolicy: Send {
    fn allocate(&mut self, reported: &[u64]) -> Result<Vec<u64>, PolicyError>;

    /// Credit balances after the last quantum, for policies that keep them.
    fn credits(&self) -> Option<Vec<String>> {
        None
    }
}

struct KarmaPolicy<S> {
    karma: Karma<S>,
    users: Vec<UserId>,
}

impl<S: CreditScalar> KarmaPolicy<S> {
    fn new(config: Config<S>) -> Result<Self, KarmaError> {
        let users = config.users().collect();
        Ok(KarmaPolicy {
            karma: Karma::new(config)?,
            users,
        })
    }
}

impl<S: CreditScalar> QuantumPolicy for KarmaPolicy<S> {
    fn allocate(&mut self, reported: &[u64]) -> Result<Vec<u64>, PolicyError> {
        check_len(self.users.len(), reported)?;
        let demands: QuantumDemands = self
            .users
            .iter()
            .copied()
            .zip(reported.iter().copied())
            .collect();
        let result = self.karma.allocate_batched(&demands)?;
        Ok(self.users.iter().map(|u| result.alloc_of(*u)).collect())
    }

    fn credits(&self) -> Option<Vec<String>> {
        Some(
            self.karma
                .ledger()
                .credits()
                .values()
                .map(|c| c.to_string())
                .collect(),
        )
    }
}

struct MaxminPeriodic {
    capacity: u64,
    weights: Option<Vec<Rational>>,
}

impl QuantumPolicy for MaxminPeriodic {
    fn allocate(&mut self, reported: &[u64]) -> Result<Vec<u64>, PolicyError> {
        if let Some(w) = &self.weights {
            check_len(w.len(), reported)?;
        }
        Ok(maxmin_quantum(
            reported,
            self.capacity,
            self.weights.as_deref(),
        ))
    }
}

struct MaxminStatic {
    capacity: u64,
    weights: Option<Vec<Rational>>,
    fixed: Option<Vec<u64>>,
}

impl QuantumPolicy for MaxminStatic {
    fn allocate(&mut self, reported: &[u64]) -> Result<Vec<u64>, PolicyError> {
        match &self.fixed {
            Some(fixed) => {
                check_len(fixed.len(), reported)?;
                Ok(fixed
                    .iter()
                    .zip(reported)
                    .map(|(f, d)| (*f).min(*d))
                    .collect())
            }
            None => {
                let fixed = maxmin_quantum(reported, self.capacity, self.weights.as_deref());
                self.fixed = Some(fixed.clone());
                Ok(fixed)
            }
        }
    }
}

struct StrictPartition {
    shares: Vec<Rational>,
}

impl QuantumPolicy for StrictPartition {
    fn allocate(&mut self, reported: &[u64]) -> Result<Vec<u64>, PolicyError> {
        check_len(self.shares.len(), reported)?;
        Ok(strict_partition(reported, &self.shares))
    }
}

fn check_len(expected: usize, reported: &[u64]) -> Result<(), PolicyError> {
    if reported.len() != expected {
        return Err(PolicyError::Dimension {
            expected,
            got: reported.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;

    #[test]
    fn periodic_maxmin_on_running_example() {
        assert_eq!(maxmin_quantum(&[2, 2, 4], 6, None), vec![2, 2, 2]);
        assert_eq!(maxmin_quantum(&[3, 2, 1], 6, None), vec![3, 2, 1]);
        assert_eq!(maxmin_quantum(&[0, 0, 0], 6, None), vec![0, 0, 0]);
        assert_eq!(maxmin_quantum(&[2, 3, 5], 6, None), vec![2, 2, 2]);
    }

    #[test]
    fn remainder_goes_to_smallest_index() {
        assert_eq!(maxmin_quantum(&[5, 5, 5], 7, None), vec![3, 2, 2]);
        assert_eq!(maxmin_quantum(&[1, 5, 5], 6, None), vec![1, 3, 2]);
        assert_eq!(maxmin_quantum(&[4, 4], 0, None), vec![0, 0]);
    }

    #[test]
    fn weighted_fill_matches_level_fill_for_equal_weights() {
        let w = vec![rational(2, 1); 4];
        for demands in [[5u64, 5, 5, 5], [0, 7, 1, 3], [9, 9, 0, 2]] {
            for cap in 0..=20 {
                assert_eq!(
                    weighted_fill(&demands, cap, &w),
                    level_fill(&demands, cap),
                    "{demands:?} cap {cap}"
                );
            }
        }
    }

    #[test]
    fn weighted_fill_is_proportional() {
        let w = [rational(1, 1), rational(3, 1)];
        assert_eq!(maxmin_quantum(&[10, 10], 8, Some(&w)), vec![2, 6]);
        assert_eq!(maxmin_quantum(&[1, 10], 8, Some(&w)), vec![1, 7]);
    }

    #[test]
    fn static_allocation_uses_first_quantum() {
        let trace = vec![vec![3, 2, 1], vec![3, 0, 0]];
        assert_eq!(maxmin_static_t0(&trace, 6, None).unwrap(), vec![3, 2, 1]);
        let lying = vec![vec![3, 2, 2], vec![3, 0, 0]];
        assert_eq!(maxmin_static_t0(&lying, 6, None).unwrap(), vec![2, 2, 2]);
        assert_eq!(maxmin_static_t0(&[], 6, None), Err(PolicyError::EmptyTrace));
        assert_eq!(
            maxmin_static_t0(&trace[..1], 6, None).unwrap(),
            maxmin_quantum(&trace[0], 6, None)
        );
    }

    #[test]
    fn strict_partition_is_elementwise_min() {
        let f = vec![rational(2, 1); 3];
        assert_eq!(strict_partition(&[3, 2, 1], &f), vec![2, 2, 1]);
        assert_eq!(strict_partition(&[0, 0, 0], &f), vec![0, 0, 0]);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("drf".parse::<Policy>().is_err());
    }
}
