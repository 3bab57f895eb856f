//! Slice identities and the sequence-number hand-off protocol.
//!
//! The pool maps allocation counts onto concrete slice ids. Every ownership
//! change bumps the slice's sequence number; reads must present the current
//! number, writes the current or a newer one, and the first access by a new
//! owner flushes the previous owner's data before it proceeds.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use crate::karma::UserId;

pub type SliceId = u64;

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("allocation of {requested} slices exceeds pool capacity {capacity}")]
    OverCapacity { requested: u64, capacity: u64 },
    #[error("previous allocation does not match the slices currently held")]
    StaleAllocation,
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
    #[error("event sink failed: {0}")]
    Sink(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Ok,
    Stale,
    /// The previous owner's data was flushed; the access then succeeded.
    FlushThenOk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Move,
    Flush,
    Denied,
    Read,
    Write,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Move => "move",
            EventKind::Flush => "flush",
            EventKind::Denied => "denied",
            EventKind::Read => "read",
            EventKind::Write => "write",
        })
    }
}

/// One protocol event. For `Flush` the actor is the owner whose data was
/// flushed; for everything else it is the user acting on the slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolEvent {
    pub tick: u64,
    pub slice: SliceId,
    pub actor: UserId,
    pub kind: EventKind,
    pub seq: u64,
}

impl fmt::Display for PoolEvent {
    /// Tab-separated `tick slice actor kind seq`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.tick, self.slice, self.actor.0, self.kind, self.seq
        )
    }
}

/// Receives protocol events as they happen.
pub trait EventSink {
    fn record(&mut self, event: PoolEvent) -> io::Result<()>;
}

impl EventSink for Vec<PoolEvent> {
    fn record(&mut self, event: PoolEvent) -> io::Result<()> {
        self.push(event);
        Ok(())
    }
}

/// Writes one tab-separated line per event.
pub struct LineSink<W>(pub W);

impl<W: io::Write> EventSink for LineSink<W> {
    fn record(&mut self, event: PoolEvent) -> io::Result<()> {
        writeln!(self.0, "{event}")
    }
}

/// Discards events.
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _: PoolEvent) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SliceMeta {
    pub owner: Option<UserId>,
    pub seq: u64,
    /// Owner whose data still sits in the slice and must be flushed before
    /// the current owner touches it.
    pub pending_flush: Option<UserId>,
    last_owner: Option<UserId>,
}

/// A slice that changed hands in [`SlicePool::apply_allocation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Movement {
    pub slice: SliceId,
    pub from: Option<UserId>,
    pub to: UserId,
    pub seq: u64,
}

/// Tracks which user holds which slice.
///
/// Unheld slices sit either in a user's donated list (idle guaranteed share)
/// or in the shared list.
#[derive(Debug, Clone)]
pub struct SlicePool {
    donated: BTreeMap<UserId, Vec<SliceId>>,
    shared: Vec<SliceId>,
    held: BTreeMap<UserId, Vec<SliceId>>,
    meta: Vec<SliceMeta>,
    tick: u64,
}

impl SlicePool {
    pub fn new(capacity: u64) -> Self {
        SlicePool {
            donated: BTreeMap::new(),
            shared: (0..capacity).rev().collect(),
            held: BTreeMap::new(),
            meta: vec![SliceMeta::default(); capacity as usize],
            tick: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.meta.len() as u64
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn meta(&self, slice: SliceId) -> Option<&SliceMeta> {
        self.meta.get(slice as usize)
    }

    pub fn held_by(&self, user: UserId) -> &[SliceId] {
        self.held.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn donated_by(&self, user: UserId) -> &[SliceId] {
        self.donated.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn shared(&self) -> &[SliceId] {
        &self.shared
    }

    /// Current holdings as counts, for `users` in order.
    pub fn counts(&self, users: &[UserId]) -> Vec<u64> {
        users
            .iter()
            .map(|u| self.held_by(*u).len() as u64)
            .collect()
    }

    /// Moves slices so that `users[i]` holds `new_alloc[i]` of them.
    ///
    /// `prev_alloc` must match the current holdings. Users keep slices they
    /// already hold wherever counts allow. A user shrinking below
    /// `guaranteed[i]` parks the freed slices in its donated list; anything
    /// else returns to the shared list. Growing users take back their own
    /// donated slices first, then other users' donated slices (smallest
    /// user first), then shared slices.
    pub fn apply_allocation(
        &mut self,
        users: &[UserId],
        prev_alloc: &[u64],
        new_alloc: &[u64],
        guaranteed: &[u64],
        sink: &mut dyn EventSink,
    ) -> Result<Vec<Movement>, PoolError> {
        let requested: u64 = new_alloc.iter().sum();
        if requested > self.capacity() {
            return Err(PoolError::OverCapacity {
                requested,
                capacity: self.capacity(),
            });
        }
        if prev_alloc.len() != users.len()
            || new_alloc.len() != users.len()
            || self.counts(users) != prev_alloc
        {
            return Err(PoolError::StaleAllocation);
        }
        self.tick += 1;

        for (i, user) in users.iter().enumerate() {
            let held = self.held.entry(*user).or_default();
            let target = new_alloc[i] as usize;
            let keep_guaranteed = guaranteed.get(i).copied().unwrap_or(0) as usize;
            while held.len() > target {
                let slice = held.pop().expect("non-empty");
                let meta = &mut self.meta[slice as usize];
                meta.owner = None;
                if held.len() < keep_guaranteed {
                    self.donated.entry(*user).or_default().push(slice);
                } else {
                    self.shared.push(slice);
                }
            }
        }

        let mut moves = Vec::new();
        for (i, user) in users.iter().enumerate() {
            let target = new_alloc[i] as usize;
            while self.held_by(*user).len() < target {
                let slice = self.take_free(*user).expect("capacity checked above");
                let meta = &mut self.meta[slice as usize];
                let from = meta.last_owner;
                // Data in the slice belongs to the unflushed owner if the last
                // holder never touched it, otherwise to the last holder.
                meta.pending_flush = match meta.pending_flush {
                    Some(unflushed) => Some(unflushed).filter(|p| p != user),
                    None => from.filter(|p| p != user),
                };
                meta.owner = Some(*user);
                meta.last_owner = Some(*user);
                meta.seq += 1;
                let seq = meta.seq;
                self.held.entry(*user).or_default().push(slice);
                sink.record(PoolEvent {
                    tick: self.tick,
                    slice,
                    actor: *user,
                    kind: EventKind::Move,
                    seq,
                })?;
                moves.push(Movement {
                    slice,
                    from,
                    to: *user,
                    seq,
                });
            }
        }
        self.donated.retain(|_, v| !v.is_empty());
        Ok(moves)
    }

    fn take_free(&mut self, user: UserId) -> Option<SliceId> {
        if let Some(slice) = self.donated.get_mut(&user).and_then(Vec::pop) {
            return Some(slice);
        }
        for list in self.donated.values_mut() {
            if let Some(slice) = list.pop() {
                return Some(slice);
            }
        }
        self.shared.pop()
    }

    /// Checks an access against the slice's current owner and sequence number.
    pub fn access(
        &mut self,
        slice: SliceId,
        user: UserId,
        seq: u64,
        kind: AccessKind,
        sink: &mut dyn EventSink,
    ) -> Result<AccessOutcome, PoolError> {
        let tick = self.tick;
        let meta = self
            .meta
            .get_mut(slice as usize)
            .ok_or(PoolError::UnknownSlice(slice))?;
        let valid = meta.owner == Some(user)
            && match kind {
                AccessKind::Read => seq == meta.seq,
                AccessKind::Write => seq >= meta.seq,
            };
        if !valid {
            sink.record(PoolEvent {
                tick,
                slice,
                actor: user,
                kind: EventKind::Denied,
                seq,
            })?;
            return Ok(AccessOutcome::Stale);
        }
        if kind == AccessKind::Write && seq > meta.seq {
            meta.seq = seq;
        }
        let outcome = match meta.pending_flush.take() {
            Some(previous) => {
                sink.record(PoolEvent {
                    tick,
                    slice,
                    actor: previous,
                    kind: EventKind::Flush,
                    seq: meta.seq,
                })?;
                AccessOutcome::FlushThenOk
            }
            None => AccessOutcome::Ok,
        };
        let event = if kind == AccessKind::Read {
            EventKind::Read
        } else {
            EventKind::Write
        };
        sink.record(PoolEvent {
            tick,
            slice,
            actor: user,
            kind: event,
            seq: meta.seq,
        })?;
        Ok(outcome)
    }

    /// Every slice is in exactly one of: a held list, a donated list, the shared list.
    pub fn check_partition(&self) -> bool {
        let mut seen = vec![0u8; self.meta.len()];
        let lists = self
            .held
            .values()
            .chain(self.donated.values())
            .chain(std::iter::once(&self.shared));
        for list in lists {
            for s in list {
                match seen.get_mut(*s as usize) {
                    Some(c) => *c += 1,
                    None => return false,
                }
            }
        }
        let owners_ok = self.held.iter().all(|(u, list)| {
            list.iter()
                .all(|s| self.meta[*s as usize].owner == Some(*u))
        });
        seen.iter().all(|c| *c == 1) && owners_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(n: u32) -> Vec<UserId> {
        (0..n).map(UserId).collect()
    }

    #[test]
    fn fresh_assignment_sets_seq_one() {
        let mut pool = SlicePool::new(6);
        let moves = pool
            .apply_allocation(&users(3), &[0, 0, 0], &[1, 1, 4], &[], &mut NullSink)
            .unwrap();
        assert_eq!(moves.len(), 6);
        assert!(moves.iter().all(|m| m.seq == 1 && m.from.is_none()));
        assert!(pool.check_partition());
    }

    #[test]
    fn unchanged_allocation_moves_nothing() {
        let mut pool = SlicePool::new(6);
        pool.apply_allocation(&users(3), &[0, 0, 0], &[2, 2, 2], &[], &mut NullSink)
            .unwrap();
        let moves = pool
            .apply_allocation(&users(3), &[2, 2, 2], &[2, 2, 2], &[], &mut NullSink)
            .unwrap();
        assert!(moves.is_empty());
    }

    #[test]
    fn shifting_two_slices_moves_exactly_two() {
        let mut pool = SlicePool::new(6);
        pool.apply_allocation(&users(3), &[0, 0, 0], &[3, 2, 1], &[], &mut NullSink)
            .unwrap();
        let moves = pool
            .apply_allocation(&users(3), &[3, 2, 1], &[1, 2, 3], &[], &mut NullSink)
            .unwrap();
        assert_eq!(moves.len(), 2);
        for m in &moves {
            assert_eq!(m.from, Some(UserId(0)));
            assert_eq!(m.to, UserId(2));
            assert_eq!(m.seq, 2);
        }
    }

    #[test]
    fn over_capacity_and_stale_prev_are_rejected() {
        let mut pool = SlicePool::new(4);
        assert!(matches!(
            pool.apply_allocation(&users(2), &[0, 0], &[3, 2], &[], &mut NullSink),
            Err(PoolError::OverCapacity { .. })
        ));
        assert!(matches!(
            pool.apply_allocation(&users(2), &[1, 0], &[1, 1], &[], &mut NullSink),
            Err(PoolError::StaleAllocation)
        ));
    }

    #[test]
    fn idle_guaranteed_slices_are_parked_as_donated() {
        let mut pool = SlicePool::new(4);
        pool.apply_allocation(&users(2), &[0, 0], &[2, 2], &[2, 2], &mut NullSink)
            .unwrap();
        pool.apply_allocation(&users(2), &[2, 2], &[0, 3], &[2, 2], &mut NullSink)
            .unwrap();
        assert_eq!(pool.donated_by(UserId(0)).len(), 1);
        assert!(pool.check_partition());
        // Growing back reclaims the user's own donated slice first.
        let parked = pool.donated_by(UserId(0))[0];
        pool.apply_allocation(&users(2), &[0, 3], &[1, 3], &[2, 2], &mut NullSink)
            .unwrap();
        assert_eq!(pool.held_by(UserId(0)), &[parked]);
    }

    #[test]
    fn hand_off_protocol() {
        let (a, b) = (UserId(0), UserId(1));
        let mut pool = SlicePool::new(1);
        let mut log: Vec<PoolEvent> = Vec::new();
        pool.apply_allocation(&[a, b], &[0, 0], &[1, 0], &[], &mut log)
            .unwrap();
        for _ in 0..4 {
            // Bump to seq 5 via writes with newer sequence numbers.
            let seq = pool.meta(0).unwrap().seq + 1;
            assert_eq!(
                pool.access(0, a, seq, AccessKind::Write, &mut log).unwrap(),
                AccessOutcome::Ok
            );
        }
        assert_eq!(pool.meta(0).unwrap().seq, 5);
        assert_eq!(
            pool.access(0, a, 5, AccessKind::Read, &mut log).unwrap(),
            AccessOutcome::Ok
        );

        pool.apply_allocation(&[a, b], &[1, 0], &[0, 1], &[], &mut log)
            .unwrap();
        assert_eq!(pool.meta(0).unwrap().seq, 6);
        assert_eq!(
            pool.access(0, a, 5, AccessKind::Read, &mut log).unwrap(),
            AccessOutcome::Stale
        );
        assert_eq!(
            pool.access(0, a, 7, AccessKind::Write, &mut log).unwrap(),
            AccessOutcome::Stale
        );
        assert_eq!(
            pool.access(0, b, 6, AccessKind::Write, &mut log).unwrap(),
            AccessOutcome::FlushThenOk
        );
        let flush = log.iter().find(|e| e.kind == EventKind::Flush).unwrap();
        assert_eq!(flush.actor, a);
        assert_eq!(
            pool.access(0, b, 6, AccessKind::Read, &mut log).unwrap(),
            AccessOutcome::Ok
        );
        assert!(matches!(
            pool.access(9, b, 6, AccessKind::Read, &mut log),
            Err(PoolError::UnknownSlice(9))
        ));
    }

    #[test]
    fn events_render_tab_separated() {
        let e = PoolEvent {
            tick: 3,
            slice: 7,
            actor: UserId(2),
            kind: EventKind::Flush,
            seq: 9,
        };
        assert_eq!(e.to_string(), "3\t7\t2\tflush\t9");
        let mut sink = LineSink(Vec::new());
        sink.record(e).unwrap();
        assert_eq!(String::from_utf8(sink.0).unwrap(), "3\t7\t2\tflush\t9\n");
    }
}
