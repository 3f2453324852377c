//! Capacity-bounded experience replay with uniform batch sampling.

use rand::Rng;

/// Ring buffer over transition records. Batches are sampled uniformly
/// without replacement within the batch.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<Item> {
    data: Vec<Item>,
    capacity: usize,
    next: usize,
}

impl<Item: Clone> ReplayBuffer<Item> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            data: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        }
    }

    pub fn push(&mut self, item: Item) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Item {
        &self.data[idx]
    }

    /// Uniformly sample `batch` distinct indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Vec<usize> {
        assert!(batch <= self.data.len(), "batch larger than buffer");
        rand::seq::index::sample(rng, self.data.len(), batch).into_vec()
    }
}
