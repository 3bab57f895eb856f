//! Hand-checked instances with exact expected outcomes.

use karma_core::baselines::{maxmin_static_t0, Policy};
use karma_core::oracle::{
    collusion_spotcheck, deviation_search, naive_allocate, search_reports, DeviationSpace,
};
use karma_core::sim::{all_truthful, compare, run, welfare_gain_on_conforming, Strategy};
use karma_core::traces::{gen_example, load_trace};
use karma_core::{rational, ExactLedger, Karma, Rational, UserId};

fn demands(row: &[u64]) -> karma_core::QuantumDemands {
    row.iter()
        .enumerate()
        .map(|(u, d)| (UserId(u as u32), *d))
        .collect()
}

#[test]
fn running_example_allocations_and_credits() {
    let ex = gen_example("fig4", None).unwrap();
    let expected_alloc = [[3, 2, 1], [3, 0, 0], [0, 3, 0], [1, 1, 4], [1, 2, 3]];
    let expected_credits = [[5, 6, 7], [4, 8, 9], [6, 7, 11], [7, 8, 9], [8, 8, 8]];
    let mut heap = Karma::new(ex.config.clone()).unwrap();
    let mut batched = Karma::new(ex.config.clone()).unwrap();
    let mut naive = ExactLedger::new(&ex.config).unwrap();
    for (t, row) in ex.trace.rows().iter().enumerate() {
        let d = demands(row);
        let a = heap.allocate(&d).unwrap();
        let b = batched.allocate_batched(&d).unwrap();
        let c = naive_allocate(&mut naive, &ex.config, &d).unwrap();
        assert_eq!(a.alloc_vec(), expected_alloc[t]);
        assert_eq!(a, b);
        assert_eq!(a, c);
        let credits: Vec<Rational> = heap.ledger().credits().values().copied().collect();
        let want: Vec<Rational> = expected_credits[t]
            .iter()
            .map(|c| Rational::from_integer(*c))
            .collect();
        assert_eq!(credits, want, "quantum {t}");
    }
    assert_eq!(
        heap.ledger()
            .cumulative()
            .values()
            .copied()
            .collect::<Vec<_>>(),
        [8, 8, 8]
    );
}

#[test]
fn periodic_maxmin_totals() {
    let ex = gen_example("fig3", None).unwrap();
    let r = run(
        &ex.trace,
        Policy::MaxminPeriodic,
        &ex.config,
        &all_truthful(3),
    )
    .unwrap();
    assert_eq!(r.total_alloc, [10, 9, 5]);
}

#[test]
fn static_maxmin_rewards_inflated_first_report() {
    let ex = gen_example("fig3", None).unwrap();
    let honest = run(
        &ex.trace,
        Policy::MaxminStatic,
        &ex.config,
        &all_truthful(3),
    )
    .unwrap();
    assert_eq!(honest.total_useful[2], 3);
    let mut script: Vec<u64> = ex.trace.column(2);
    script[0] = 2;
    let strategies = vec![
        Strategy::Truthful,
        Strategy::Truthful,
        Strategy::Scripted(script),
    ];
    let lying = run(&ex.trace, Policy::MaxminStatic, &ex.config, &strategies).unwrap();
    assert_eq!(lying.total_useful[2], 5);
    assert_eq!(
        maxmin_static_t0(&[vec![3, 2, 2]], 6, None).unwrap(),
        [2, 2, 2]
    );
}

#[test]
fn maxmin_worst_case_ratio() {
    for n in [2usize, 3, 5, 8, 13] {
        let ex = gen_example("maxmin-worstcase", Some(n)).unwrap();
        let r = run(
            &ex.trace,
            Policy::MaxminPeriodic,
            &ex.config,
            &all_truthful(n),
        )
        .unwrap();
        let max = *r.total_alloc.iter().max().unwrap();
        let min = *r.total_alloc.iter().min().unwrap();
        assert_eq!(max, (n as u64 + 1) * min, "n = {n}: {:?}", r.total_alloc);
    }
}

fn scripted(name: &str, n: Option<usize>, user: usize, reports: Vec<u64>) -> (u64, u64) {
    let ex = gen_example(name, n).unwrap();
    let space =
        DeviationSpace::single(user, reports.into_iter().map(|r| vec![r]).collect()).unwrap();
    let out = search_reports(&ex.trace, &ex.config, &space, 10).unwrap();
    (out.truthful_total(), out.best_total())
}

#[test]
fn small_deviation_examples() {
    assert_eq!(scripted("fig6-gain", None, 0, vec![0, 8, 8]), (9, 10));
    assert_eq!(scripted("fig6-loss", None, 0, vec![0, 8, 8]), (12, 4));
    assert_eq!(scripted("table1", Some(8), 0, vec![0, 8, 8]), (9, 10));
    assert_eq!(scripted("table2", Some(8), 0, vec![0, 8, 8]), (10, 2));
}

#[test]
fn exhaustive_search_on_small_examples() {
    let ex = gen_example("fig6-gain", None).unwrap();
    let space = DeviationSpace::single(0, vec![vec![0, 8]; 3]).unwrap();
    let out = search_reports(&ex.trace, &ex.config, &space, 100).unwrap();
    assert_eq!((out.truthful_total(), out.best_total()), (9, 10));
    assert_eq!(out.argmax[0], [0]);

    let full = deviation_search(&ex.trace, &ex.config, 0, 8, 1_000_000).unwrap();
    assert_eq!(full.best_overreport_gain, 1.0);
    assert_eq!(full.under.best_total(), 10);

    let t1 = gen_example("table1", Some(8)).unwrap();
    let rep = deviation_search(&t1.trace, &t1.config, 0, 8, 1_000_000).unwrap();
    assert_eq!((rep.truthful_useful, rep.under.best_total()), (9, 10));
}

#[test]
fn colluding_pair_on_small_example() {
    let ex = gen_example("fig6-gain", None).unwrap();
    let rep = collusion_spotcheck(&ex.trace, &ex.config, (0, 1), 8, 10_000_000).unwrap();
    assert_eq!(rep.truthful_useful, 18);
    assert_eq!(rep.over.best_total(), 18);
    assert_eq!(rep.under.best_total(), 20);
}

#[test]
fn conforming_gains_on_running_example() {
    let ex = gen_example("fig4", None).unwrap();
    let gain = |u| welfare_gain_on_conforming(&ex.trace, &ex.config, &[u]).unwrap()[0].1;
    assert_eq!(gain(0), 1.0);
    assert!((gain(1) - 8.0 / 7.0).abs() < 1e-12);
    assert_eq!(gain(2), 2.0);
}

#[test]
fn fairness_does_not_improve_with_alpha() {
    for name in ["fig3", "fig6-gain", "fig6-loss"] {
        let ex = gen_example(name, None).unwrap();
        let fairness: Vec<f64> = [rational(0, 1), rational(1, 2), rational(1, 1)]
            .into_iter()
            .map(|a| {
                let config = ex.config.clone().with_alpha(a);
                let table = compare(&ex.trace, &[Policy::Karma], &config).unwrap();
                table[0].1.fairness
            })
            .collect();
        assert!(
            fairness.windows(2).all(|w| w[0] >= w[1]),
            "{name}: {fairness:?}"
        );
    }
    let ex = gen_example("fig3", None).unwrap();
    let full = ex.config.clone().with_alpha(rational(1, 1));
    let r = run(&ex.trace, Policy::Karma, &full, &all_truthful(3)).unwrap();
    assert_eq!(r.total_alloc, [10, 9, 5]);
}

#[test]
fn strict_partition_wastes_the_most() {
    let ex = gen_example("fig3", None).unwrap();
    let table = compare(&ex.trace, &Policy::ALL, &ex.config).unwrap();
    let strict = table
        .iter()
        .find(|(p, _)| *p == Policy::Strict)
        .unwrap()
        .1
        .utilization;
    assert!(table.iter().all(|(_, m)| strict <= m.utilization));
    assert_eq!(strict, 21.0 / 24.0);
}

#[test]
fn golden_traces_survive_a_round_trip() {
    for name in karma_core::traces::EXAMPLE_NAMES {
        let ex = gen_example(name, None).unwrap();
        let text = ex.trace.to_csv_string();
        let back = load_trace(text.as_bytes()).unwrap();
        assert_eq!(back, ex.trace);
        assert_eq!(back.to_csv_string(), text);
    }
}
