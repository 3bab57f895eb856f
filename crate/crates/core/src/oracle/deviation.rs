use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use super::OracleError;
use crate::karma::{allocate_quantum_batched, Config, Ledger, QuantumDemands, UserId};
use crate::scalar::{rat_u64, Rational};
use crate::traces::DemandTrace;

/// Joint report choices of a group of deviating users, per quantum.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSpace {
    users: Vec<usize>,
    /// `choices[t][k][j]`: report of `users[j]` in option `k` of quantum `t`.
    choices: Vec<Vec<Vec<u64>>>,
}

fn product(per_user: &[Vec<u64>]) -> Vec<Vec<u64>> {
    per_user.iter().fold(vec![vec![]], |acc, options| {
        acc.iter()
            .flat_map(|prefix| {
                options.iter().map(move |x| {
                    let mut next = prefix.clone();
                    next.push(*x);
                    next
                })
            })
            .collect()
    })
}

impl DeviationSpace {
    pub fn new(users: Vec<usize>, choices: Vec<Vec<Vec<u64>>>) -> Result<Self, OracleError> {
        if users.is_empty() {
            return Err(OracleError::BadSpace("no deviating users".into()));
        }
        for (t, opts) in choices.iter().enumerate() {
            if opts.is_empty() || opts.iter().any(|o| o.len() != users.len()) {
                return Err(OracleError::BadSpace(format!("bad options at quantum {t}")));
            }
        }
        Ok(DeviationSpace { users, choices })
    }

    /// One user choosing from an explicit list each quantum.
    pub fn single(user: usize, per_quantum: Vec<Vec<u64>>) -> Result<Self, OracleError> {
        let choices = per_quantum
            .into_iter()
            .map(|o| o.into_iter().map(|x| vec![x]).collect())
            .collect();
        DeviationSpace::new(vec![user], choices)
    }

    fn per_user(
        trace: &DemandTrace,
        users: &[usize],
        range: impl Fn(u64) -> std::ops::RangeInclusive<u64>,
    ) -> Result<Self, OracleError> {
        if let Some(u) = users.iter().find(|&&u| u >= trace.n_users()) {
            return Err(OracleError::BadSpace(format!("user {u} out of range")));
        }
        let choices = (0..trace.n_quanta())
            .map(|t| {
                let lists: Vec<Vec<u64>> = users
                    .iter()
                    .map(|&u| range(trace.get(t, u)).collect())
                    .collect();
                product(&lists)
            })
            .collect();
        DeviationSpace::new(users.to_vec(), choices)
    }

    /// Every report in `[d, max(d, d_max)]`.
    pub fn over_report(
        trace: &DemandTrace,
        users: &[usize],
        d_max: u64,
    ) -> Result<Self, OracleError> {
        DeviationSpace::per_user(trace, users, |d| d..=d.max(d_max))
    }

    /// Every report in `[0, d]`.
    pub fn under_report(trace: &DemandTrace, users: &[usize]) -> Result<Self, OracleError> {
        DeviationSpace::per_user(trace, users, |d| 0..=d)
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    /// Number of complete report sequences, saturating.
    pub fn size(&self) -> u128 {
        self.choices
            .iter()
            .fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128))
    }
}

/// Result of an exhaustive search, with per-prefix totals so that bounds can
/// be checked at every horizon, not just the last quantum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    /// Group useful allocation through quantum `t` when everyone is truthful.
    pub truthful: Vec<u64>,
    /// Best group useful allocation through quantum `t` over the space.
    pub best: Vec<u64>,
    /// First report sequence (in enumeration order) reaching `best` at the last quantum.
    pub argmax: Vec<Vec<u64>>,
    pub evaluated: u64,
}

impl SearchOutcome {
    pub fn truthful_total(&self) -> u64 {
        self.truthful.last().copied().unwrap_or(0)
    }

    pub fn best_total(&self) -> u64 {
        self.best.last().copied().unwrap_or(0)
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.best_total(), self.truthful_total())
    }

    /// First quantum at which `best > truthful * num / den`.
    pub fn first_violation(&self, num: u64, den: u64) -> Option<usize> {
        self.best
            .iter()
            .zip(&self.truthful)
            .position(|(b, t)| *b as u128 * den as u128 > *t as u128 * num as u128)
    }
}

fn ratio(got: u64, base: u64) -> f64 {
    match (got, base) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => got as f64 / base as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub users: Vec<usize>,
    pub truthful_useful: u64,
    pub best_overreport_gain: f64,
    pub best_underreport_ratio: f64,
    pub over: SearchOutcome,
    pub under: SearchOutcome,
}

struct Walker<'a> {
    trace: &'a DemandTrace,
    config: &'a Config<Rational>,
    space: &'a DeviationSpace,
    ids: Vec<UserId>,
}

/// Partial result of one subtree.
struct Partial {
    best: Vec<u64>,
    final_best: Option<(u64, Vec<Vec<u64>>)>,
    evaluated: u64,
}

impl Partial {
    fn new(t: usize) -> Self {
        Partial {
            best: vec![0; t],
            final_best: None,
            evaluated: 0,
        }
    }

    /// Folds `other`, which comes later in enumeration order.
    fn absorb(&mut self, other: Partial) {
        for (b, o) in self.best.iter_mut().zip(other.best) {
            *b = (*b).max(o);
        }
        if let Some((v, path)) = other.final_best {
            if self.final_best.as_ref().is_none_or(|(best, _)| v > *best) {
                self.final_best = Some((v, path));
            }
        }
        self.evaluated += other.evaluated;
    }
}

impl Walker<'_> {
    fn step(
        &self,
        ledger: &mut Ledger<Rational>,
        t: usize,
        reports: Option<&[u64]>,
    ) -> Result<u64, OracleError> {
        let row = self.trace.quantum(t);
        let mut demands: QuantumDemands =
            self.ids.iter().copied().zip(row.iter().copied()).collect();
        if let Some(reports) = reports {
            for (&u, &r) in self.space.users.iter().zip(reports) {
                demands.insert(self.ids[u], r);
            }
        }
        let result = allocate_quantum_batched(ledger, self.config, &demands)?;
        Ok(self
            .space
            .users
            .iter()
            .map(|&u| result.alloc_of(self.ids[u]).min(row[u]))
            .sum())
    }

    fn truthful(&self) -> Result<Vec<u64>, OracleError> {
        let mut ledger = Ledger::new(self.config)?;
        let mut total = 0;
        (0..self.trace.n_quanta())
            .map(|t| {
                total += self.step(&mut ledger, t, None)?;
                Ok(total)
            })
            .collect()
    }

    fn walk(
        &self,
        ledger: &Ledger<Rational>,
        t: usize,
        so_far: u64,
        path: &mut Vec<Vec<u64>>,
        out: &mut Partial,
    ) -> Result<(), OracleError> {
        if t == self.trace.n_quanta() {
            out.evaluated += 1;
            if out.final_best.as_ref().is_none_or(|(b, _)| so_far > *b) {
                out.final_best = Some((so_far, path.clone()));
            }
            return Ok(());
        }
        for option in &self.space.choices[t] {
            let mut next = ledger.clone();
            let total = so_far + self.step(&mut next, t, Some(option))?;
            out.best[t] = out.best[t].max(total);
            path.push(option.clone());
            self.walk(&next, t + 1, total, path, out)?;
            path.pop();
        }
        Ok(())
    }
}

fn check_preconditions(trace: &DemandTrace, config: &Config<Rational>) -> Result<(), OracleError> {
    if !config.alpha().is_zero() {
        return Err(OracleError::NonZeroAlpha(config.alpha().to_string()));
    }
    config.validate()?;
    if config.n_users() != trace.n_users() {
        return Err(OracleError::BadSpace(
            "config and trace disagree on the number of users".into(),
        ));
    }
    // Worst case: every slice of every quantum borrowed at the highest price.
    let max_cost = config
        .users()
        .filter_map(|u| config.borrow_cost_exact(u))
        .max()
        .unwrap_or_default();
    let need = rat_u64(config.capacity()) * rat_u64(trace.n_quanta() as u64) * max_cost;
    if *config.init_credits() < need {
        return Err(OracleError::CreditsTooLow {
            have: config.init_credits().to_string(),
            need: need.to_string(),
        });
    }
    Ok(())
}

/// Exhaustively replays every report sequence in `space` and records the
/// deviating group's useful allocation.
pub fn search_reports(
    trace: &DemandTrace,
    config: &Config<Rational>,
    space: &DeviationSpace,
    budget: u64,
) -> Result<SearchOutcome, OracleError> {
    check_preconditions(trace, config)?;
    if space.choices.len() != trace.n_quanta() {
        return Err(OracleError::BadSpace(format!(
            "space covers {} quanta, trace has {}",
            space.choices.len(),
            trace.n_quanta()
        )));
    }
    if let Some(u) = space.users.iter().find(|&&u| u >= trace.n_users()) {
        return Err(OracleError::BadSpace(format!("user {u} out of range")));
    }
    let needed = space.size();
    if needed > budget as u128 {
        return Err(OracleError::BudgetExceeded { needed, budget });
    }
    let walker = Walker {
        trace,
        config,
        space,
        ids: config.users().collect(),
    };
    let truthful = walker.truthful()?;
    let n_quanta = trace.n_quanta();
    if n_quanta == 0 {
        return Ok(SearchOutcome {
            truthful,
            best: vec![],
            argmax: vec![],
            evaluated: 1,
        });
    }

    let root = Ledger::new(config)?;
    let parts: Vec<Partial> = space.choices[0]
        .par_iter()
        .map(|option| {
            let mut out = Partial::new(n_quanta);
            let mut ledger = root.clone();
            let total = walker.step(&mut ledger, 0, Some(option))?;
            out.best[0] = total;
            let mut path = vec![option.clone()];
            walker.walk(&ledger, 1, total, &mut path, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_, OracleError>>()?;
    let mut all = Partial::new(n_quanta);
    for part in parts {
        all.absorb(part);
    }
    let (_, argmax) = all.final_best.expect("space is non-empty");
    Ok(SearchOutcome {
        truthful,
        best: all.best,
        argmax,
        evaluated: all.evaluated,
    })
}

fn group_search(
    trace: &DemandTrace,
    config: &Config<Rational>,
    users: &[usize],
    d_max: u64,
    budget: u64,
) -> Result<DeviationReport, OracleError> {
    let over_space = DeviationSpace::over_report(trace, users, d_max)?;
    let under_space = DeviationSpace::under_report(trace, users)?;
    let needed = over_space.size().saturating_add(under_space.size());
    if needed > budget as u128 {
        return Err(OracleError::BudgetExceeded { needed, budget });
    }
    let over = search_reports(trace, config, &over_space, budget)?;
    let under = search_reports(trace, config, &under_space, budget)?;
    Ok(DeviationReport {
        users: users.to_vec(),
        truthful_useful: over.truthful_total(),
        best_overreport_gain: over.ratio(),
        best_underreport_ratio: under.ratio(),
        over,
        under,
    })
}

/// Best gain `user` can get alone, first by only over-reporting (reports in
/// `[d, d_max]`), then by only under-reporting (reports in `[0, d]`).
pub fn deviation_search(
    trace: &DemandTrace,
    config: &Config<Rational>,
    user: usize,
    d_max: u64,
    budget: u64,
) -> Result<DeviationReport, OracleError> {
    group_search(trace, config, &[user], d_max, budget)
}

/// Same as [`deviation_search`] for two users deviating jointly; gains are
/// measured on their combined useful allocation.
pub fn collusion_spotcheck(
    trace: &DemandTrace,
    config: &Config<Rational>,
    pair: (usize, usize),
    d_max: u64,
    budget: u64,
) -> Result<DeviationReport, OracleError> {
    if pair.0 == pair.1 {
        return Err(OracleError::BadSpace("colluding users must differ".into()));
    }
    group_search(trace, config, &[pair.0, pair.1], d_max, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::gen_example;

    #[test]
    fn under_reporting_gain_on_small_example() {
        let ex = gen_example("fig6-gain", None).unwrap();
        let space = DeviationSpace::single(0, vec![vec![0, 8]; 3]).unwrap();
        let out = search_reports(&ex.trace, &ex.config, &space, 100).unwrap();
        assert_eq!(out.truthful_total(), 9);
        assert_eq!(out.best_total(), 10);
        assert_eq!(out.argmax, [vec![0], vec![8], vec![8]]);
        assert_eq!(out.evaluated, 8);
    }

    #[test]
    fn scripted_zero_report_loses() {
        let ex = gen_example("fig6-loss", None).unwrap();
        let space = DeviationSpace::single(0, vec![vec![0], vec![8], vec![8]]).unwrap();
        let out = search_reports(&ex.trace, &ex.config, &space, 10).unwrap();
        assert_eq!((out.truthful_total(), out.best_total()), (12, 4));
    }

    #[test]
    fn refuses_what_it_cannot_check() {
        let ex = gen_example("fig4", None).unwrap();
        assert!(matches!(
            deviation_search(&ex.trace, &ex.config, 0, 4, 1_000),
            Err(OracleError::NonZeroAlpha(_))
        ));
        let ex = gen_example("fig6-gain", None).unwrap();
        assert!(deviation_search(&ex.trace, &ex.config, 0, 8, 1)
            .unwrap_err()
            .is_budget());
        let poor = ex
            .config
            .clone()
            .with_init_credits(Rational::from_integer(1));
        assert!(matches!(
            deviation_search(&ex.trace, &poor, 0, 8, 10_000),
            Err(OracleError::CreditsTooLow { .. })
        ));
    }

    #[test]
    fn truthful_is_always_in_the_space() {
        let ex = gen_example("fig6-gain", None).unwrap();
        let rep = deviation_search(&ex.trace, &ex.config, 1, 8, 100_000).unwrap();
        assert!(rep.best_overreport_gain >= 1.0 && rep.best_underreport_ratio >= 1.0);
        let joint = collusion_spotcheck(&ex.trace, &ex.config, (0, 1), 8, 1_000_000).unwrap();
        assert!(joint.best_underreport_ratio >= 1.0);
    }
}
