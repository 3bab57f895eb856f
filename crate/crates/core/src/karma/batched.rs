//! Level-based selection used by the batched allocator.
//!
//! Each lane is a strictly decreasing arithmetic sequence of priorities
//! `start, start - step, start - 2*step, ...` with at most `limit` terms.
//! Serving the highest priority one slice at a time (ties to the earlier
//! lane) takes exactly the `picks` largest terms of the merged sequences,
//! so the outcome is fixed by the level of the last term taken.

use super::UserId;
use crate::scalar::CreditScalar;

pub(crate) type Lane<S> = (UserId, S, S, u64);

fn term<S: CreditScalar>(lane: &Lane<S>, j: u64) -> S {
    lane.1.clone() - lane.2.clone() * S::from_u64(j)
}

/// Terms of `lane` that are `>= level`.
fn count_at_or_above<S: CreditScalar>(lane: &Lane<S>, level: &S) -> u64 {
    if lane.3 == 0 || lane.1 < *level {
        return 0;
    }
    let steps = ((lane.1.clone() - level.clone()) / lane.2.clone()).floor_i128();
    (steps as u64).saturating_add(1).min(lane.3)
}

/// Terms of `lane` that are strictly `> level`.
fn count_above<S: CreditScalar>(lane: &Lane<S>, level: &S) -> u64 {
    if lane.3 == 0 || lane.1 <= *level {
        return 0;
    }
    let steps = ((lane.1.clone() - level.clone()) / lane.2.clone()).ceil_i128();
    (steps as u64).min(lane.3)
}

fn total_at_or_above<S: CreditScalar>(lanes: &[Lane<S>], level: &S) -> u64 {
    lanes.iter().map(|l| count_at_or_above(l, level)).sum()
}

/// How many terms each lane contributes to the `picks` largest, in lane order.
pub(crate) fn frontier_select<S: CreditScalar>(lanes: &[Lane<S>], picks: u64) -> Vec<u64> {
    let available: u64 = lanes.iter().map(|l| l.3).sum();
    if picks >= available {
        return lanes.iter().map(|l| l.3).collect();
    }
    if picks == 0 {
        return vec![0; lanes.len()];
    }

    // The cut level is the largest term whose at-or-above count reaches `picks`.
    let mut level: Option<S> = None;
    for lane in lanes.iter().filter(|l| l.3 > 0) {
        let last = term(lane, lane.3 - 1);
        if total_at_or_above(lanes, &last) < picks {
            continue;
        }
        let (mut lo, mut hi) = (0u64, lane.3 - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if total_at_or_above(lanes, &term(lane, mid)) >= picks {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let candidate = term(lane, lo);
        if level.as_ref().is_none_or(|l| candidate > *l) {
            level = Some(candidate);
        }
    }
    let level = level.expect("some term reaches the pick count");

    let mut taken: Vec<u64> = lanes.iter().map(|l| count_above(l, &level)).collect();
    let mut rest = picks - taken.iter().sum::<u64>();
    for (lane, t) in lanes.iter().zip(taken.iter_mut()) {
        if rest == 0 {
            break;
        }
        if count_at_or_above(lane, &level) > *t {
            *t += 1;
            rest -= 1;
        }
    }
    taken
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rational, Rational};

    fn greedy(lanes: &[Lane<Rational>], picks: u64) -> Vec<u64> {
        let mut taken = vec![0u64; lanes.len()];
        for _ in 0..picks {
            let mut best: Option<(usize, Rational)> = None;
            for (i, lane) in lanes.iter().enumerate() {
                if taken[i] >= lane.3 {
                    continue;
                }
                let v = term(lane, taken[i]);
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((i, v));
                }
            }
            match best {
                Some((i, _)) => taken[i] += 1,
                None => break,
            }
        }
        taken
    }

    #[test]
    fn equal_lanes_alternate_with_remainder_to_first() {
        let r = |n| rational(n, 1);
        let lanes = vec![
            (UserId(0), r(5), r(1), 10),
            (UserId(1), r(5), r(1), 10),
            (UserId(2), r(7), r(1), 10),
        ];
        assert_eq!(frontier_select(&lanes, 5), vec![1, 1, 3]);
        assert_eq!(frontier_select(&lanes, 6), vec![2, 1, 3]);
        assert_eq!(frontier_select(&lanes, 30), vec![10, 10, 10]);
        assert_eq!(frontier_select(&lanes, 0), vec![0, 0, 0]);
    }

    #[test]
    fn fractional_steps_match_greedy() {
        let lanes = vec![
            (UserId(0), rational(9, 2), rational(3, 4), 6),
            (UserId(1), rational(4, 1), rational(3, 2), 3),
            (UserId(2), rational(13, 3), rational(1, 3), 9),
            (UserId(3), rational(-1, 1), rational(1, 1), 2),
        ];
        for picks in 0..=20 {
            assert_eq!(
                frontier_select(&lanes, picks),
                greedy(&lanes, picks),
                "picks={picks}"
            );
        }
    }
}
