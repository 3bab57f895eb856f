//! Randomized property suites over small instances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{
    check_pareto, maximin_oracle, naive_allocate, search_reports, DeviationSpace, OracleError,
};
use crate::baselines::Policy;
use crate::karma::{
    allocate_quantum, allocate_quantum_batched, Config, Ledger, QuantumDemands, UserId,
};
use crate::scalar::{rational, Rational};
use crate::sim::{all_truthful, run};
use crate::traces::{gen_example, DemandTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Differential,
    Pareto,
    Theorem5,
    Lemma1,
    Lemma2,
    Collusion,
    MaxminWorstcase,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Differential,
        Suite::Pareto,
        Suite::Theorem5,
        Suite::Lemma1,
        Suite::Lemma2,
        Suite::Collusion,
        Suite::MaxminWorstcase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Differential => "differential",
            Suite::Pareto => "pareto",
            Suite::Theorem5 => "theorem5",
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Collusion => "collusion",
            Suite::MaxminWorstcase => "maxmin-worstcase",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub suites: Vec<Suite>,
    /// Hard cap on the size of any single exhaustive search.
    pub budget: u64,
    pub differential_instances: usize,
    pub pareto_runs: usize,
    pub theorem5_quanta: usize,
    pub lemma_instances: usize,
    pub weighted_lemma_instances: usize,
    pub collusion_instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 7,
            suites: Suite::ALL.to_vec(),
            budget: 1_000_000,
            differential_instances: 10_000,
            pareto_runs: 200,
            theorem5_quanta: 500,
            lemma_instances: 200,
            weighted_lemma_instances: 100,
            collusion_instances: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub suite: Suite,
    pub property: String,
    pub passed: bool,
    pub checked: u64,
    pub detail: String,
    pub counterexample: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub budget: u64,
    pub verdicts: Vec<Verdict>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Large enough that no balance can run out on the instances generated here.
const PLENTY: i128 = 1_000_000;

struct Instance {
    trace: DemandTrace,
    config: Config<Rational>,
}

impl Instance {
    fn to_json(&self) -> serde_json::Value {
        json!({
            "shares": self.config.shares().values().map(|s| s.to_string()).collect::<Vec<_>>(),
            "alpha": self.config.alpha().to_string(),
            "init_credits": self.config.init_credits().to_string(),
            "demand": self.trace.rows(),
        })
    }
}

fn user_names(n: usize) -> Vec<String> {
    (0..n).map(|u| format!("u{u}")).collect()
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize, quanta: usize, d_max: u64) -> DemandTrace {
    let rows = (0..quanta)
        .map(|_| (0..n).map(|_| rng.gen_range(0..=d_max)).collect())
        .collect();
    DemandTrace::new(user_names(n), rows).expect("rectangular")
}

/// Uniform integral share, or per-user halves whose sum is integral.
fn random_shares(rng: &mut ChaCha8Rng, n: usize, weighted: bool, f_max: u64) -> Vec<Rational> {
    if !weighted {
        let f = rng.gen_range(1..=f_max) as i128;
        return vec![Rational::from_integer(f); n];
    }
    let mut shares: Vec<Rational> = (0..n)
        .map(|_| rational(rng.gen_range(1..=2 * f_max as i128), 2))
        .collect();
    let total: Rational = shares.iter().copied().sum();
    if !total.is_integer() {
        shares[n - 1] += rational(1, 2);
    }
    shares
}

fn config_of(shares: &[Rational], alpha: Rational, init: Rational) -> Config<Rational> {
    let entries = shares
        .iter()
        .enumerate()
        .map(|(u, s)| (UserId(u as u32), *s));
    Config::weighted(entries, alpha, init).expect("integral total")
}

fn demands_of(row: &[u64]) -> QuantumDemands {
    row.iter()
        .enumerate()
        .map(|(u, d)| (UserId(u as u32), *d))
        .collect()
}

fn pass(suite: Suite, property: &str, checked: u64, detail: String) -> Verdict {
    Verdict {
        suite,
        property: property.into(),
        passed: true,
        checked,
        detail,
        counterexample: None,
    }
}

fn fail(
    suite: Suite,
    property: &str,
    checked: u64,
    detail: String,
    cx: serde_json::Value,
) -> Verdict {
    Verdict {
        suite,
        property: property.into(),
        passed: false,
        checked,
        detail,
        counterexample: Some(cx),
    }
}

fn differential(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Verdict {
    const PROP: &str = "slice-at-a-time, heap and batched allocators agree exactly";
    let alphas = [
        rational(0, 1),
        rational(1, 4),
        rational(1, 2),
        rational(3, 4),
        rational(1, 1),
    ];
    let cases: Vec<_> = (0..opts.differential_instances)
        .map(|_| {
            let n = rng.gen_range(1..=6);
            let weighted = rng.gen_bool(0.3);
            let shares = random_shares(rng, n, weighted, 4);
            let alpha = alphas[rng.gen_range(0..alphas.len())];
            let config = config_of(&shares, alpha, Rational::from_integer(0));
            let credits: Vec<Rational> = (0..n)
                .map(|_| rational(rng.gen_range(0..=40), [1, 2, 4][rng.gen_range(0..3)]))
                .collect();
            let cap = config.capacity();
            let row: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=cap + 2)).collect();
            (config, credits, row)
        })
        .collect();
    let bad = cases.par_iter().position_first(|(config, credits, row)| {
        let balances = credits
            .iter()
            .enumerate()
            .map(|(u, c)| (UserId(u as u32), *c));
        let start = Ledger::with_credits(config, balances).expect("valid");
        let demands = demands_of(row);
        let (mut a, mut b, mut c) = (start.clone(), start.clone(), start);
        let ra = naive_allocate(&mut a, config, &demands).expect("valid");
        let rb = allocate_quantum(&mut b, config, &demands).expect("valid");
        let rc = allocate_quantum_batched(&mut c, config, &demands).expect("valid");
        !(ra == rb && rb == rc && a == b && b == c)
    });
    let checked = opts.differential_instances as u64;
    match bad {
        None => pass(
            Suite::Differential,
            PROP,
            checked,
            format!("{checked} single-quantum instances"),
        ),
        Some(i) => {
            let (config, credits, row) = &cases[i];
            let cx = json!({
                "shares": config.shares().values().map(|s| s.to_string()).collect::<Vec<_>>(),
                "alpha": config.alpha().to_string(),
                "credits": credits.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "demand": row,
            });
            fail(
                Suite::Differential,
                PROP,
                i as u64 + 1,
                format!("instance {i} differs"),
                cx,
            )
        }
    }
}

fn pareto(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Verdict {
    const PROP: &str =
        "each quantum allocates min(total demand, capacity) without exceeding any demand";
    let alphas = [rational(0, 1), rational(1, 2), rational(1, 1)];
    let runs: Vec<Instance> = (0..opts.pareto_runs)
        .map(|_| {
            let n = rng.gen_range(1..=6);
            let weighted = rng.gen_bool(0.3);
            let shares = random_shares(rng, n, weighted, 4);
            let alpha = alphas[rng.gen_range(0..alphas.len())];
            let config = config_of(&shares, alpha, Rational::from_integer(PLENTY));
            let quanta = rng.gen_range(1..=8);
            let cap = config.capacity();
            Instance {
                trace: random_trace(rng, n, quanta, cap),
                config,
            }
        })
        .collect();
    let bad = runs.par_iter().find_map_first(|inst| {
        let report = run(
            &inst.trace,
            Policy::Karma,
            &inst.config,
            &all_truthful(inst.trace.n_users()),
        )
        .ok()?;
        report
            .alloc
            .iter()
            .zip(inst.trace.rows())
            .position(|(a, d)| !check_pareto(a, d, inst.config.capacity()))
            .map(|t| (inst, t))
    });
    let checked: u64 = runs.iter().map(|r| r.trace.n_quanta() as u64).sum();
    match bad {
        None => pass(
            Suite::Pareto,
            PROP,
            checked,
            format!("{} runs, {checked} quanta", runs.len()),
        ),
        Some((inst, t)) => fail(
            Suite::Pareto,
            PROP,
            checked,
            format!("quantum {t}"),
            json!({"instance": inst.to_json(), "quantum": t}),
        ),
    }
}

fn theorem5(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<Verdict, OracleError> {
    const PROP: &str = "with alpha = 0 the smallest cumulative allocation is the best achievable";
    let mut runs = Vec::new();
    let mut quanta = 0;
    while quanta < opts.theorem5_quanta {
        let n = rng.gen_range(1..=5);
        let f = rng.gen_range(1..=(10 / n as u64).max(1));
        let config = Config::uniform(n, f, rational(0, 1), Rational::from_integer(PLENTY));
        let t = rng.gen_range(1..=5).min(opts.theorem5_quanta - quanta);
        quanta += t;
        runs.push(Instance {
            trace: random_trace(rng, n, t, 2 * f + 1),
            config,
        });
    }
    let results: Vec<Option<(usize, u64, u64)>> = runs
        .par_iter()
        .map(|inst| {
            let mut ledger = Ledger::new(&inst.config)?;
            let mut past = vec![0u64; inst.trace.n_users()];
            for (t, row) in inst.trace.rows().iter().enumerate() {
                let best = maximin_oracle(&past, row, inst.config.capacity(), opts.budget)?;
                let result = allocate_quantum_batched(&mut ledger, &inst.config, &demands_of(row))?;
                for (p, a) in past.iter_mut().zip(result.alloc_vec()) {
                    *p += a;
                }
                let got = *past.iter().min().expect("at least one user");
                if got != best {
                    return Ok(Some((t, got, best)));
                }
            }
            Ok(None)
        })
        .collect::<Result<_, OracleError>>()?;
    for (inst, res) in runs.iter().zip(results) {
        if let Some((t, got, best)) = res {
            let cx =
                json!({"instance": inst.to_json(), "quantum": t, "karma_min": got, "oracle": best});
            return Ok(fail(
                Suite::Theorem5,
                PROP,
                quanta as u64,
                format!("karma {got} vs oracle {best}"),
                cx,
            ));
        }
    }
    Ok(pass(
        Suite::Theorem5,
        PROP,
        quanta as u64,
        format!("{} runs, {quanta} quanta", runs.len()),
    ))
}

fn lemma_instances(
    rng: &mut ChaCha8Rng,
    count: usize,
    weighted: bool,
    n_max: usize,
    t_max: usize,
    d_max: u64,
) -> Vec<Instance> {
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=n_max);
            let shares = random_shares(rng, n, weighted, 2);
            let config = config_of(&shares, rational(0, 1), Rational::from_integer(PLENTY));
            let quanta = rng.gen_range(1..=t_max);
            Instance {
                trace: random_trace(rng, n, quanta, d_max),
                config,
            }
        })
        .collect()
}

/// Searches every deviating group of every instance and reports the first
/// prefix at which the group beats `num / den` times its truthful outcome.
#[allow(clippy::too_many_arguments)]
fn bound_suite(
    suite: Suite,
    property: &str,
    instances: &[Instance],
    groups: impl Fn(usize) -> Vec<Vec<usize>> + Sync,
    over: bool,
    d_max: u64,
    (num, den): (u64, u64),
    budget: u64,
) -> Result<Verdict, OracleError> {
    let results: Vec<(u64, f64, Option<serde_json::Value>)> = instances
        .par_iter()
        .map(|inst| {
            let mut searched = 0;
            let mut worst: f64 = 0.0;
            for group in groups(inst.trace.n_users()) {
                let space = if over {
                    DeviationSpace::over_report(&inst.trace, &group, d_max)?
                } else {
                    DeviationSpace::under_report(&inst.trace, &group)?
                };
                let out = search_reports(&inst.trace, &inst.config, &space, budget)?;
                searched += out.evaluated;
                worst = worst.max(out.ratio());
                if let Some(t) = out.first_violation(num, den) {
                    let cx = json!({
                        "instance": inst.to_json(),
                        "users": group,
                        "through_quantum": t,
                        "truthful": out.truthful[t],
                        "best": out.best[t],
                        "reports": out.argmax,
                    });
                    return Ok((searched, worst, Some(cx)));
                }
            }
            Ok((searched, worst, None))
        })
        .collect::<Result<_, OracleError>>()?;
    let mut searched = 0;
    let mut worst: f64 = 0.0;
    for (s, w, cx) in results {
        searched += s;
        worst = worst.max(w);
        if let Some(cx) = cx {
            return Ok(fail(
                suite,
                property,
                searched,
                format!("bound {num}/{den} exceeded"),
                cx,
            ));
        }
    }
    let detail = format!(
        "{} instances, {searched} report sequences, worst ratio {worst:.4}",
        instances.len()
    );
    Ok(pass(suite, property, searched, detail))
}

fn singles(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|u| vec![u]).collect()
}

fn pairs(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| vec![a, b]))
        .collect()
}

fn worstcase() -> Verdict {
    const PROP: &str = "periodic max-min gives a max/min total allocation of n + 1";
    for n in [3usize, 5, 8] {
        let ex = gen_example("maxmin-worstcase", Some(n)).expect("known example");
        let report = run(
            &ex.trace,
            Policy::MaxminPeriodic,
            &ex.config,
            &all_truthful(n),
        )
        .expect("valid example");
        let max = *report.total_alloc.iter().max().expect("users");
        let min = *report.total_alloc.iter().min().expect("users");
        if max != (n as u64 + 1) * min {
            let cx = json!({"n": n, "totals": report.total_alloc});
            return fail(
                Suite::MaxminWorstcase,
                PROP,
                3,
                format!("n = {n}: {max}/{min}"),
                cx,
            );
        }
    }
    pass(Suite::MaxminWorstcase, PROP, 3, "n in {3, 5, 8}".into())
}

/// Runs the selected suites in a fixed order. Each suite draws from its
/// own generator seeded from `opts.seed`, so selecting a subset does not
/// change the instances any suite sees.
pub fn run_suites(opts: &VerifyOptions) -> Result<VerifyReport, OracleError> {
    let mut verdicts = Vec::new();
    for (i, suite) in Suite::ALL.into_iter().enumerate() {
        if !opts.suites.contains(&suite) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let verdict = match suite {
            Suite::Differential => differential(opts, &mut rng),
            Suite::Pareto => pareto(opts, &mut rng),
            Suite::Theorem5 => theorem5(opts, &mut rng)?,
            Suite::Lemma1 => {
                let instances = lemma_instances(&mut rng, opts.lemma_instances, false, 4, 4, 4);
                let prop = "over-reporting never raises a user's useful allocation";
                bound_suite(
                    suite,
                    prop,
                    &instances,
                    singles,
                    true,
                    4,
                    (1, 1),
                    opts.budget,
                )?
            }
            Suite::Lemma2 => {
                let uniform = lemma_instances(&mut rng, opts.lemma_instances, false, 4, 4, 4);
                let prop = "under-reporting gains at most 1.5x with equal shares";
                verdicts.push(bound_suite(
                    suite,
                    prop,
                    &uniform,
                    singles,
                    false,
                    4,
                    (3, 2),
                    opts.budget,
                )?);
                let weighted =
                    lemma_instances(&mut rng, opts.weighted_lemma_instances, true, 4, 3, 4);
                let prop = "under-reporting gains at most 2x with unequal shares";
                bound_suite(
                    suite,
                    prop,
                    &weighted,
                    singles,
                    false,
                    4,
                    (2, 1),
                    opts.budget,
                )?
            }
            Suite::Collusion => {
                let instances = lemma_instances(&mut rng, opts.collusion_instances, false, 3, 3, 3);
                let prop = "a colluding pair cannot gain by over-reporting";
                verdicts.push(bound_suite(
                    suite,
                    prop,
                    &instances,
                    pairs,
                    true,
                    3,
                    (1, 1),
                    opts.budget,
                )?);
                let prop = "a colluding pair gains at most 2x by under-reporting";
                bound_suite(
                    suite,
                    prop,
                    &instances,
                    pairs,
                    false,
                    3,
                    (2, 1),
                    opts.budget,
                )?
            }
            Suite::MaxminWorstcase => worstcase(),
        };
        verdicts.push(verdict);
    }
    Ok(VerifyReport {
        seed: opts.seed,
        budget: opts.budget,
        verdicts,
    })
}
