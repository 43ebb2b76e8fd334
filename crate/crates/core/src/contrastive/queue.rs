use std::collections::VecDeque;

/// FIFO buffer of the most recent key embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyQueue {
    capacity: usize,
    dim: usize,
    keys: VecDeque<Vec<f64>>,
}

impl KeyQueue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        KeyQueue {
            capacity,
            dim,
            keys: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Appends keys in order, evicting the oldest beyond capacity.
    pub fn push_batch<'a>(&mut self, keys: impl IntoIterator<Item = &'a Vec<f64>>) {
        if self.capacity == 0 {
            return;
        }
        for k in keys {
            debug_assert_eq!(k.len(), self.dim);
            if self.keys.len() == self.capacity {
                self.keys.pop_front();
            }
            self.keys.push_back(k.clone());
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.keys.iter()
    }
}
