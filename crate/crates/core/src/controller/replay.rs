//! FIFO replay memory sampled as fixed-length, episode-contained sequences.

use std::collections::VecDeque;

use rand::Rng;

use super::AgentState;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub episode: u64,
    pub state: AgentState,
    pub action: usize,
    pub reward: f64,
    /// [`AgentState::terminal`] when `done`.
    pub next_state: AgentState,
    pub done: bool,
}

/// A run of consecutive transitions from one episode, left-padded to the
/// sequence length. `mask[i]` is false on padding slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub transitions: Vec<Option<Transition>>,
    pub mask: Vec<bool>,
}

impl SequenceSample {
    pub fn valid(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().flatten()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// The sequence ending at index `end`: up to `len` transitions going back
    /// no further than the start of `end`'s episode.
    pub fn sequence_ending_at(&self, end: usize, len: usize) -> SequenceSample {
        let episode = self.items[end].episode;
        let mut start = end;
        while start > 0 && end - start + 1 < len && self.items[start - 1].episode == episode {
            start -= 1;
        }
        let pad = len - (end - start + 1);
        let mut transitions: Vec<Option<Transition>> = vec![None; pad];
        transitions.extend((start..=end).map(|i| Some(self.items[i].clone())));
        let mut mask = vec![false; pad];
        mask.resize(len, true);
        SequenceSample { transitions, mask }
    }

    /// `batch` sequences whose last transitions are drawn uniformly.
    pub fn sample(&self, batch: usize, len: usize, rng: &mut impl Rng) -> Vec<SequenceSample> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| self.sequence_ending_at(rng.gen_range(0..self.items.len()), len))
            .collect()
    }
}
