use std::collections::VecDeque;

use rand::Rng;

use crate::demand::RequestId;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredAction {
    pub features: Vec<f64>,
    pub reward: f64,
    pub requests: Vec<RequestId>,
}

/// One decision epoch seen during training.
///
/// `previous[i]` is the post-decision state vehicle `i` reached in the epoch
/// before; its target comes from the best joint action over `actions`.
/// Empty `actions` marks the end of an episode, where every target is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub epoch: u32,
    pub previous: Vec<Vec<f64>>,
    pub actions: Vec<Vec<StoredAction>>,
    /// Action each vehicle actually took.
    pub taken: Vec<usize>,
}

/// Bounded FIFO of experiences.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
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

    /// Appends, evicting the oldest experience when full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// Up to `n` distinct experiences drawn uniformly.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        let n = n.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(epoch: u32) -> Experience {
        Experience {
            epoch,
            previous: vec![],
            actions: vec![],
            taken: vec![],
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(3);
        for e in 0..5 {
            m.push(exp(e));
            assert!(m.len() <= 3);
        }
        let kept: Vec<u32> = (0..m.len()).map(|i| m.get(i).unwrap().epoch).collect();
        assert_eq!(kept, vec![2, 3, 4]);
    }

    #[test]
    fn seeded_sampling() {
        let mut m = ReplayMemory::new(50);
        for e in 0..50 {
            m.push(exp(e));
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            m.sample(10, &mut rng).iter().map(|e| e.epoch).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        let mut d = draw(1);
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 10);
        assert_eq!(m.sample(100, &mut ChaCha8Rng::seed_from_u64(0)).len(), 50);
    }
}
