#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use karma_core::slice_pool::{AccessKind, AccessOutcome, EventKind, PoolEvent, SliceId, SlicePool};
use karma_core::UserId;

#[derive(Debug, Default)]
pub struct HandoffStats {
    pub reassignments: u64,
    pub accesses: u64,
    pub stale_attempts: u64,
    pub stale_successes: u64,
    pub current_denied: u64,
    pub ownership_changes: u64,
    pub flushes_required: u64,
    pub missing_flushes: u64,
    pub partition_broken: bool,
}

/// Random allocation with `sum <= capacity`.
fn random_alloc(rng: &mut ChaCha8Rng, n: usize, capacity: u64) -> Vec<u64> {
    let mut left = capacity;
    let mut out = vec![0; n];
    for u in rand::seq::index::sample(rng, n, n).into_iter() {
        let take = rng.gen_range(0..=left);
        out[u] = take;
        left -= take;
    }
    out
}

/// Reallocates slices at random until `target` of them have changed hands,
/// with users probing slices between rounds using every sequence number they
/// were ever given.
pub fn handoff_trial(seed: u64, target: u64) -> HandoffStats {
    const N: usize = 4;
    const CAP: u64 = 8;
    let users: Vec<UserId> = (0..N as u32).map(UserId).collect();
    let guaranteed = vec![CAP / N as u64; N];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = SlicePool::new(CAP);
    let mut log: Vec<PoolEvent> = Vec::new();
    let mut stats = HandoffStats::default();
    let mut tokens: Vec<(SliceId, UserId, u64)> = Vec::new();
    let mut prev = vec![0u64; N];

    while stats.reassignments < target {
        let next = random_alloc(&mut rng, N, CAP);
        let moves = pool
            .apply_allocation(&users, &prev, &next, &guaranteed, &mut log)
            .unwrap();
        stats.reassignments += moves.len() as u64;
        tokens.extend(moves.iter().map(|m| (m.slice, m.to, m.seq)));
        prev = next;
        stats.partition_broken |= !pool.check_partition();

        for _ in 0..rng.gen_range(1..=12) {
            // Half the probes use the holder's current token, half replay an old one.
            let held: Vec<SliceId> = (0..CAP)
                .filter(|s| pool.meta(*s).unwrap().owner.is_some())
                .collect();
            let (slice, user, seq) = if !held.is_empty() && rng.gen_bool(0.5) {
                let s = held[rng.gen_range(0..held.len())];
                let meta = pool.meta(s).unwrap();
                (s, meta.owner.unwrap(), meta.seq)
            } else {
                tokens[rng.gen_range(0..tokens.len())]
            };
            let kind = if rng.gen_bool(0.5) {
                AccessKind::Read
            } else {
                AccessKind::Write
            };
            let meta = pool.meta(slice).unwrap();
            let current = meta.owner == Some(user) && meta.seq == seq;
            let outcome = pool.access(slice, user, seq, kind, &mut log).unwrap();
            stats.accesses += 1;
            let granted = outcome != AccessOutcome::Stale;
            if !current {
                stats.stale_attempts += 1;
                stats.stale_successes += granted as u64;
            } else if !granted {
                stats.current_denied += 1;
            }
        }
    }

    // Replay the event log: whenever a slice changes hands while holding
    // another user's data, the new owner's first granted access must come
    // right after a flush of that data.
    let mut holder: HashMap<SliceId, UserId> = HashMap::new();
    let mut dirty_by: HashMap<SliceId, UserId> = HashMap::new();
    let mut needs_flush: HashMap<SliceId, UserId> = HashMap::new();
    let mut last: HashMap<SliceId, PoolEvent> = HashMap::new();
    for ev in &log {
        match ev.kind {
            EventKind::Move => {
                if holder
                    .insert(ev.slice, ev.actor)
                    .is_some_and(|p| p != ev.actor)
                {
                    stats.ownership_changes += 1;
                }
                match dirty_by.get(&ev.slice) {
                    Some(d) if *d != ev.actor => needs_flush.insert(ev.slice, *d),
                    _ => needs_flush.remove(&ev.slice),
                };
            }
            EventKind::Read | EventKind::Write => {
                if let Some(owner) = needs_flush.remove(&ev.slice) {
                    stats.flushes_required += 1;
                    let flushed = last
                        .get(&ev.slice)
                        .is_some_and(|p| p.kind == EventKind::Flush && p.actor == owner);
                    if !flushed {
                        stats.missing_flushes += 1;
                    }
                }
                dirty_by.insert(ev.slice, ev.actor);
            }
            EventKind::Flush | EventKind::Denied => {}
        }
        if ev.kind != EventKind::Denied {
            last.insert(ev.slice, *ev);
        }
    }
    stats
}
