use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: f64,
    pub s_next: Vec<f64>,
    /// The episode ended here for a reason other than the step limit, so
    /// the target does not bootstrap.
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with its own sampling RNG.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::arg("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            data: Vec::new(),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.cost.is_finite() {
            return Err(Error::numeric("transition cost is not finite"));
        }
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// `batch` distinct transitions drawn uniformly.
    pub fn sample(&mut self, batch: usize) -> Result<Vec<&Transition>> {
        if batch == 0 || batch > self.data.len() {
            return Err(Error::arg(format!(
                "cannot draw {batch} from {} transitions",
                self.data.len()
            )));
        }
        let idx = rand::seq::index::sample(&mut self.rng, self.data.len(), batch);
        Ok(idx.iter().map(|i| &self.data[i]).collect())
    }
}
