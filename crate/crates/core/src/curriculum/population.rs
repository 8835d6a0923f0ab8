use std::sync::Arc;

use super::buffer::EnvBuffer;
use crate::error::{Error, Result};
use crate::nn::PolicyNet;

/// A frozen ego snapshot and the environments it has been scored on.
#[derive(Clone, Debug)]
pub struct CoPlayer {
    pub id: String,
    pub created_at: usize,
    snapshot: Arc<PolicyNet>,
    fingerprint: String,
    pub buffer: EnvBuffer,
}

impl CoPlayer {
    pub fn new(
        id: impl Into<String>,
        created_at: usize,
        snapshot: PolicyNet,
        buffer: EnvBuffer,
    ) -> Self {
        let fingerprint = snapshot.fingerprint();
        CoPlayer {
            id: id.into(),
            created_at,
            snapshot: Arc::new(snapshot),
            fingerprint,
            buffer,
        }
    }

    pub fn snapshot(&self) -> &Arc<PolicyNet> {
        &self.snapshot
    }

    /// Fingerprint taken at creation time.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Summary of a co-player used for selection: `(created_at, buffer)`.
pub type Candidate<'a> = (usize, &'a EnvBuffer);

/// Picks the candidate whose buffer holds the lowest priority key. An empty
/// buffer counts as negative infinity. Ties go to the oldest candidate, then
/// to the smallest layout id of the minimising entry.
pub fn select_co_player(candidates: &[Candidate<'_>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Empty("co-player population"));
    }
    let key = |c: &Candidate<'_>| {
        let best = c.1.best();
        let k = best
            .map(|e| c.1.scoring().key(e.score))
            .unwrap_or(f64::NEG_INFINITY);
        (
            k,
            c.0,
            best.map(|e| e.layout_id.clone()).unwrap_or_default(),
        )
    };
    let mut best = 0;
    let mut best_key = key(&candidates[0]);
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let k = key(c);
        let better =
            k.0.total_cmp(&best_key.0)
                .then(k.1.cmp(&best_key.1))
                .then_with(|| k.2.cmp(&best_key.2));
        if better.is_lt() {
            best = i;
            best_key = k;
        }
    }
    Ok(best)
}

/// Ordered co-players, oldest first, with FIFO eviction at capacity.
#[derive(Clone, Debug)]
pub struct Population {
    members: Vec<CoPlayer>,
    capacity: usize,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "population capacity must be positive");
        Population {
            members: Vec::new(),
            capacity,
        }
    }

    pub fn members(&self) -> &[CoPlayer] {
        &self.members
    }

    pub fn member_mut(&mut self, index: usize) -> &mut CoPlayer {
        &mut self.members[index]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a co-player, returning the evicted oldest member if the
    /// population was full.
    pub fn push(&mut self, member: CoPlayer) -> Option<CoPlayer> {
        self.members.push(member);
        (self.members.len() > self.capacity).then(|| self.members.remove(0))
    }

    pub fn sample_co_player(&self) -> Result<usize> {
        let candidates: Vec<Candidate<'_>> = self
            .members
            .iter()
            .map(|m| (m.created_at, &m.buffer))
            .collect();
        select_co_player(&candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::buffer::Scoring;

    fn buf(scores: &[(&str, f64)]) -> EnvBuffer {
        let mut b = EnvBuffer::new(8, Scoring::Return);
        for (id, s) in scores {
            b.update(id, *s, 0).unwrap();
        }
        b
    }

    #[test]
    fn picks_lowest_minimum() {
        let (a, b, c) = (
            buf(&[("x", 12.0), ("y", 20.0)]),
            buf(&[("x", 8.0), ("z", 40.0)]),
            buf(&[("q", 30.0)]),
        );
        assert_eq!(select_co_player(&[(0, &a), (1, &b), (2, &c)]).unwrap(), 1);
    }

    #[test]
    fn singleton_and_empty() {
        let a = buf(&[("x", 5.0)]);
        assert_eq!(select_co_player(&[(0, &a)]).unwrap(), 0);
        let empty = buf(&[]);
        assert_eq!(select_co_player(&[(0, &a), (1, &empty)]).unwrap(), 1);
        assert!(select_co_player(&[]).is_err());
    }

    #[test]
    fn ties_prefer_older_then_layout_id() {
        let a = buf(&[("m", 3.0)]);
        let b = buf(&[("a", 3.0)]);
        assert_eq!(select_co_player(&[(5, &a), (2, &b)]).unwrap(), 1);
        assert_eq!(select_co_player(&[(2, &a), (2, &b)]).unwrap(), 1);
    }
}
