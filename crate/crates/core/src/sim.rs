//! Trace-driven simulation of a policy and the metrics computed from it.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{Policy, PolicyError, QuantumPolicy};
use crate::karma::Config;
use crate::scalar::{CreditScalar, Rational};
use crate::traces::DemandTrace;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{got} strategies for {expected} users")]
    Dimension { expected: usize, got: usize },
    #[error("scripted reports for user {user} cover {got} quanta, trace has {expected}")]
    ScriptLength {
        user: usize,
        expected: usize,
        got: usize,
    },
    #[error("user index {0} out of range")]
    UnknownUser(usize),
    #[error("no non-conformant users given")]
    EmptySet,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

/// How a user turns its true demand into a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Truthful,
    /// Reports `max(demand, fair share)` rounded up.
    Nonconformant,
    /// Fixed reports, one per quantum.
    Scripted(Vec<u64>),
}

pub fn all_truthful(n: usize) -> Vec<Strategy> {
    vec![Strategy::Truthful; n]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub utilization: f64,
    pub fairness: f64,
    /// Median over minimum total useful allocation; `None` when the minimum is 0.
    pub allocation_disparity: Option<f64>,
    pub min_welfare: f64,
    pub max_welfare: f64,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub policy: String,
    pub users: Vec<String>,
    pub capacity: u64,
    /// `[t][u]` matrices.
    pub reported: Vec<Vec<u64>>,
    pub demand: Vec<Vec<u64>>,
    pub alloc: Vec<Vec<u64>>,
    pub useful: Vec<Vec<u64>>,
    /// Balances after each quantum, for credit-based policies.
    pub credits: Option<Vec<Vec<String>>>,
    /// Total allocation per user.
    pub total_alloc: Vec<u64>,
    /// Total useful allocation per user.
    pub total_useful: Vec<u64>,
    /// Useful over demanded, `None` for users that never demanded anything.
    pub welfare: Vec<Option<f64>>,
    pub metrics: Metrics,
}

#[derive(Serialize)]
struct UserSummary<'a> {
    user: &'a str,
    total_alloc: u64,
    total_useful: u64,
    total_demand: u64,
    welfare: Option<f64>,
    final_credits: Option<&'a str>,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    policy: &'a str,
    capacity: u64,
    quanta: usize,
    metrics: &'a Metrics,
    users: Vec<UserSummary<'a>>,
}

impl SimReport {
    pub fn n_quanta(&self) -> usize {
        self.alloc.len()
    }

    /// Per-user totals and metrics as a JSON document.
    pub fn to_json(&self) -> serde_json::Value {
        let last = self.credits.as_ref().and_then(|c| c.last());
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(u, name)| UserSummary {
                user: name,
                total_alloc: self.total_alloc[u],
                total_useful: self.total_useful[u],
                total_demand: self.demand.iter().map(|r| r[u]).sum(),
                welfare: self.welfare[u],
                final_credits: last.map(|c| c[u].as_str()),
            })
            .collect();
        let summary = ReportSummary {
            policy: &self.policy,
            capacity: self.capacity,
            quanta: self.n_quanta(),
            metrics: &self.metrics,
            users,
        };
        serde_json::to_value(summary).expect("summary serializes")
    }

    /// One row per (quantum, user): `quantum,user,reported,true,alloc,useful,credits`.
    pub fn write_quanta_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(writer);
        let wrap = |e: csv::Error| SimError::Io(e.into());
        out.write_record([
            "quantum", "user", "reported", "true", "alloc", "useful", "credits",
        ])
        .map_err(wrap)?;
        for t in 0..self.n_quanta() {
            for (u, name) in self.users.iter().enumerate() {
                let credits = self
                    .credits
                    .as_ref()
                    .map_or(String::new(), |c| c[t][u].clone());
                out.write_record([
                    t.to_string(),
                    name.clone(),
                    self.reported[t][u].to_string(),
                    self.demand[t][u].to_string(),
                    self.alloc[t][u].to_string(),
                    self.useful[t][u].to_string(),
                    credits,
                ])
                .map_err(wrap)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn reports_for(
    trace: &DemandTrace,
    shares: &[Rational],
    strategies: &[Strategy],
) -> Result<Vec<Vec<u64>>, SimError> {
    if strategies.len() != trace.n_users() {
        return Err(SimError::Dimension {
            expected: trace.n_users(),
            got: strategies.len(),
        });
    }
    for (user, s) in strategies.iter().enumerate() {
        if let Strategy::Scripted(list) = s {
            if list.len() != trace.n_quanta() {
                return Err(SimError::ScriptLength {
                    user,
                    expected: trace.n_quanta(),
                    got: list.len(),
                });
            }
        }
    }
    let ceil_share: Vec<u64> = shares
        .iter()
        .map(|f| f.ceil().to_integer().max(0) as u64)
        .collect();
    Ok(trace
        .rows()
        .iter()
        .enumerate()
        .map(|(t, row)| {
            row.iter()
                .zip(strategies)
                .enumerate()
                .map(|(u, (&d, s))| match s {
                    Strategy::Truthful => d,
                    Strategy::Nonconformant => d.max(ceil_share[u]),
                    Strategy::Scripted(list) => list[t],
                })
                .collect()
        })
        .collect())
}

/// Replays `trace` through a fresh instance of `policy`.
pub fn run<S: CreditScalar>(
    trace: &DemandTrace,
    policy: Policy,
    config: &Config<S>,
    strategies: &[Strategy],
) -> Result<SimReport, SimError> {
    if config.n_users() != trace.n_users() {
        return Err(SimError::Dimension {
            expected: config.n_users(),
            got: trace.n_users(),
        });
    }
    let shares: Vec<Rational> = config.shares().values().copied().collect();
    let reported = reports_for(trace, &shares, strategies)?;
    let mut state = policy.instantiate(config)?;
    replay(
        trace,
        state.as_mut(),
        policy.name(),
        config.capacity(),
        reported,
    )
}

fn replay(
    trace: &DemandTrace,
    policy: &mut dyn QuantumPolicy,
    name: &str,
    capacity: u64,
    reported: Vec<Vec<u64>>,
) -> Result<SimReport, SimError> {
    let n = trace.n_users();
    let mut alloc = Vec::with_capacity(trace.n_quanta());
    let mut useful = Vec::with_capacity(trace.n_quanta());
    let mut credits = Vec::new();
    for (row, rep) in trace.rows().iter().zip(&reported) {
        let r = policy.allocate(rep)?;
        useful.push(
            r.iter()
                .zip(row)
                .map(|(a, d)| (*a).min(*d))
                .collect::<Vec<u64>>(),
        );
        alloc.push(r);
        if let Some(c) = policy.credits() {
            credits.push(c);
        }
    }
    let total_alloc: Vec<u64> = (0..n)
        .map(|u| alloc.iter().map(|r: &Vec<u64>| r[u]).sum())
        .collect();
    let total_useful: Vec<u64> = (0..n)
        .map(|u| useful.iter().map(|r: &Vec<u64>| r[u]).sum())
        .collect();
    let total_demand = trace.totals();
    let welfare: Vec<Option<f64>> = total_useful
        .iter()
        .zip(&total_demand)
        .map(|(&got, &want)| (want > 0).then(|| got as f64 / want as f64))
        .collect();

    let served: u64 = total_useful.iter().sum();
    let servable: u64 = trace
        .rows()
        .iter()
        .map(|r| r.iter().sum::<u64>().min(capacity))
        .sum();
    let utilization = if servable == 0 {
        1.0
    } else {
        served as f64 / servable as f64
    };
    let present: Vec<f64> = welfare.iter().flatten().copied().collect();
    let min_welfare = present.iter().copied().fold(f64::INFINITY, f64::min);
    let max_welfare = present.iter().copied().fold(0.0, f64::max);
    let (min_welfare, fairness) = if present.is_empty() {
        (1.0, 1.0)
    } else if max_welfare == 0.0 {
        (0.0, 1.0)
    } else {
        (min_welfare, min_welfare / max_welfare)
    };
    let metrics = Metrics {
        utilization,
        fairness,
        allocation_disparity: disparity(&total_useful),
        min_welfare,
        max_welfare: if present.is_empty() { 1.0 } else { max_welfare },
    };
    Ok(SimReport {
        policy: name.to_string(),
        users: trace.users().to_vec(),
        capacity,
        reported,
        demand: trace.rows().to_vec(),
        alloc,
        useful,
        credits: (!credits.is_empty()).then_some(credits),
        total_alloc,
        total_useful,
        welfare,
        metrics,
    })
}

/// Median over minimum; the median of an even count is the mean of the middle pair.
pub fn disparity(totals: &[u64]) -> Option<f64> {
    let mut v = totals.to_vec();
    v.sort_unstable();
    let min = *v.first()?;
    if min == 0 {
        return None;
    }
    let mid = v.len() / 2;
    let median = if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    };
    Some(median / min as f64)
}

/// For each user in `nonconformant`, its Karma welfare when everyone is
/// truthful divided by its welfare when the whole set over-reports.
/// Users that never demand anything get 1.
pub fn welfare_gain_on_conforming<S: CreditScalar>(
    trace: &DemandTrace,
    config: &Config<S>,
    nonconformant: &[usize],
) -> Result<Vec<(usize, f64)>, SimError> {
    if nonconformant.is_empty() {
        return Err(SimError::EmptySet);
    }
    let n = trace.n_users();
    if let Some(&u) = nonconformant.iter().find(|&&u| u >= n) {
        return Err(SimError::UnknownUser(u));
    }
    let mut mixed = all_truthful(n);
    for &u in nonconformant {
        mixed[u] = Strategy::Nonconformant;
    }
    let (honest, lying) = rayon::join(
        || run(trace, Policy::Karma, config, &all_truthful(n)),
        || run(trace, Policy::Karma, config, &mixed),
    );
    let (honest, lying) = (honest?, lying?);
    Ok(nonconformant
        .iter()
        .map(|&u| {
            let ratio = match (honest.welfare[u], lying.welfare[u]) {
                (Some(h), Some(l)) if l > 0.0 => h / l,
                (Some(h), Some(_)) if h > 0.0 => f64::INFINITY,
                _ => 1.0,
            };
            (u, ratio)
        })
        .collect())
}

/// Metrics of each policy on the same truthful trace, computed in parallel.
pub fn compare<S: CreditScalar>(
    trace: &DemandTrace,
    policies: &[Policy],
    config: &Config<S>,
) -> Result<Vec<(Policy, Metrics)>, SimError> {
    let strategies = all_truthful(trace.n_users());
    policies
        .par_iter()
        .map(|&p| run(trace, p, config, &strategies).map(|r| (p, r.metrics)))
        .collect()
}
