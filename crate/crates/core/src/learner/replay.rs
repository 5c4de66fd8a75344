//! Fixed-capacity ring of transitions with cheap mark/rollback.
//!
//! A [`BufferMark`] records the cursor, length and insert count. While any
//! mark is outstanding, every insert that overwrites an occupied slot first
//! pushes the old transition onto an undo journal, so rolling back restores
//! the buffer exactly without copying its contents.

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferMark {
    cursor: usize,
    len: usize,
    insert_count: u64,
    journal_len: usize,
    depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
    len: usize,
    insert_count: u64,
    journal: Vec<(usize, Transition)>,
    open_marks: usize,
}

/// Column-major view of a sampled minibatch.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
            len: 0,
            insert_count: 0,
            journal: Vec::new(),
            open_marks: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.state_dim, self.action_dim)
    }

    fn read_slot(&self, i: usize) -> Transition {
        let (n, m) = (self.state_dim, self.action_dim);
        Transition {
            s: self.states[i * n..(i + 1) * n].to_vec(),
            a: self.actions[i * m..(i + 1) * m].to_vec(),
            r: self.rewards[i],
            s_next: self.next_states[i * n..(i + 1) * n].to_vec(),
            done: self.dones[i],
        }
    }

    fn write_slot(&mut self, i: usize, t: &Transition) {
        let (n, m) = (self.state_dim, self.action_dim);
        self.states[i * n..(i + 1) * n].copy_from_slice(&t.s);
        self.actions[i * m..(i + 1) * m].copy_from_slice(&t.a);
        self.rewards[i] = t.r;
        self.next_states[i * n..(i + 1) * n].copy_from_slice(&t.s_next);
        self.dones[i] = t.done;
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim {
            return Err(Error::Dimension { expected: self.state_dim, got: t.s.len() });
        }
        if t.a.len() != self.action_dim {
            return Err(Error::Dimension { expected: self.action_dim, got: t.a.len() });
        }
        let slot = self.cursor;
        if slot < self.len {
            if self.open_marks > 0 {
                let old = self.read_slot(slot);
                self.journal.push((slot, old));
            }
            self.write_slot(slot, &t);
        } else {
            self.states.extend_from_slice(&t.s);
            self.actions.extend_from_slice(&t.a);
            self.rewards.push(t.r);
            self.next_states.extend_from_slice(&t.s_next);
            self.dones.push(t.done);
            self.len += 1;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.insert_count += 1;
        Ok(())
    }

    /// Transition at logical position `i`, 0 being the oldest retained entry.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let slot = if self.len < self.capacity { i } else { (self.cursor + i) % self.capacity };
        Some(self.read_slot(slot))
    }

    pub fn state_at(&self, i: usize) -> Option<&[f64]> {
        if i >= self.len {
            return None;
        }
        let slot = if self.len < self.capacity { i } else { (self.cursor + i) % self.capacity };
        Some(&self.states[slot * self.state_dim..(slot + 1) * self.state_dim])
    }

    /// Uniformly samples `n` slot indices with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if self.len < n || self.len == 0 {
            return Err(Error::InsufficientBuffer { have: self.len, need: n.max(1) });
        }
        Ok((0..n).map(|_| rng.below(self.len)).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, slots: &[usize]) -> Batch {
        let (n, m) = (self.state_dim, self.action_dim);
        let mut b = Batch::default();
        for &i in slots {
            b.states.push(self.states[i * n..(i + 1) * n].to_vec());
            b.actions.push(self.actions[i * m..(i + 1) * m].to_vec());
            b.rewards.push(self.rewards[i]);
            b.next_states.push(self.next_states[i * n..(i + 1) * n].to_vec());
            b.dones.push(self.dones[i]);
        }
        b
    }

    /// Only the states of the sampled slots.
    pub fn gather_states(&self, slots: &[usize]) -> Vec<Vec<f64>> {
        let n = self.state_dim;
        slots.iter().map(|&i| self.states[i * n..(i + 1) * n].to_vec()).collect()
    }

    pub fn mark(&mut self) -> BufferMark {
        self.open_marks += 1;
        BufferMark {
            cursor: self.cursor,
            len: self.len,
            insert_count: self.insert_count,
            journal_len: self.journal.len(),
            depth: self.open_marks,
        }
    }

    /// Undoes every insert made since `mark` and closes it.
    pub fn rollback(&mut self, mark: BufferMark) -> Result<()> {
        if mark.depth != self.open_marks || mark.journal_len > self.journal.len() {
            return Err(Error::RevertMismatch("replay mark is not the innermost open mark".into()));
        }
        if self.insert_count < mark.insert_count || self.len < mark.len {
            return Err(Error::RevertMismatch("replay buffer shrank since mark".into()));
        }
        while self.journal.len() > mark.journal_len {
            let (slot, old) = self.journal.pop().expect("journal entry");
            self.write_slot(slot, &old);
        }
        let (n, m) = (self.state_dim, self.action_dim);
        self.states.truncate(mark.len * n);
        self.actions.truncate(mark.len * m);
        self.rewards.truncate(mark.len);
        self.next_states.truncate(mark.len * n);
        self.dones.truncate(mark.len);
        self.len = mark.len;
        self.cursor = mark.cursor;
        self.insert_count = mark.insert_count;
        self.close(mark)
    }

    /// Keeps every insert made since `mark` and closes it.
    pub fn release(&mut self, mark: BufferMark) -> Result<()> {
        if mark.depth != self.open_marks {
            return Err(Error::RevertMismatch("replay mark is not the innermost open mark".into()));
        }
        self.close(mark)
    }

    fn close(&mut self, _mark: BufferMark) -> Result<()> {
        self.open_marks -= 1;
        // entries recorded under an inner mark still belong to any outer one
        if self.open_marks == 0 {
            self.journal.clear();
        }
        Ok(())
    }

    pub(crate) fn open_marks(&self) -> usize {
        self.open_marks
    }

    /// Raw storage image (slot order) for serialization.
    pub(crate) fn raw_parts(&self) -> (&[f64], &[f64], &[f64], &[f64], &[bool]) {
        (&self.states, &self.actions, &self.rewards, &self.next_states, &self.dones)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_raw_parts(
        capacity: usize,
        state_dim: usize,
        action_dim: usize,
        cursor: usize,
        insert_count: u64,
        states: Vec<f64>,
        actions: Vec<f64>,
        rewards: Vec<f64>,
        next_states: Vec<f64>,
        dones: Vec<bool>,
    ) -> Result<Self> {
        let len = rewards.len();
        if capacity == 0
            || len > capacity
            || states.len() != len * state_dim
            || next_states.len() != len * state_dim
            || actions.len() != len * action_dim
            || dones.len() != len
            || cursor >= capacity
        {
            return Err(Error::Corrupt("inconsistent replay buffer image".into()));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states,
            actions,
            rewards,
            next_states,
            dones,
            cursor,
            len,
            insert_count,
            journal: Vec::new(),
            open_marks: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(k: f64) -> Transition {
        Transition { s: vec![k, -k], a: vec![k * 0.5], r: k, s_next: vec![k + 1.0, k], done: k as u64 % 3 == 0 }
    }

    #[test]
    fn ring_wraps_and_keeps_newest() {
        let mut b = ReplayBuffer::new(3, 2, 1).unwrap();
        for k in 0..5 {
            b.push(tr(k as f64)).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.insert_count(), 5);
        let rs: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().r).collect();
        assert_eq!(rs, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn rollback_matches_deep_copy_when_full() {
        let mut b = ReplayBuffer::new(5, 2, 1).unwrap();
        for k in 0..7 {
            b.push(tr(k as f64)).unwrap();
        }
        let copy = b.clone();
        let mark = b.mark();
        for k in 100..108 {
            b.push(tr(k as f64)).unwrap();
        }
        assert_ne!(b.raw_parts().2, copy.raw_parts().2);
        b.rollback(mark).unwrap();
        assert_eq!(b, copy);
    }

    #[test]
    fn rollback_matches_deep_copy_while_filling() {
        let mut b = ReplayBuffer::new(10, 2, 1).unwrap();
        for k in 0..4 {
            b.push(tr(k as f64)).unwrap();
        }
        let copy = b.clone();
        let mark = b.mark();
        for k in 10..19 {
            b.push(tr(k as f64)).unwrap();
        }
        b.rollback(mark).unwrap();
        assert_eq!(b, copy);
    }

    #[test]
    fn release_keeps_inserts() {
        let mut b = ReplayBuffer::new(4, 2, 1).unwrap();
        let mark = b.mark();
        b.push(tr(1.0)).unwrap();
        b.release(mark).unwrap();
        assert_eq!(b.len(), 1);
        let m2 = b.mark();
        b.push(tr(2.0)).unwrap();
        b.rollback(m2).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn sampling_is_reproducible_and_checks_size() {
        let mut b = ReplayBuffer::new(100, 2, 1).unwrap();
        assert!(matches!(b.sample(1, &mut RngStream::root(0)), Err(Error::InsufficientBuffer { .. })));
        for k in 0..50 {
            b.push(tr(k as f64)).unwrap();
        }
        let x = b.sample_indices(16, &mut RngStream::root(4)).unwrap();
        let y = b.sample_indices(16, &mut RngStream::root(4)).unwrap();
        assert_eq!(x, y);
        assert!(b.sample(51, &mut RngStream::root(0)).is_err());
    }
}
