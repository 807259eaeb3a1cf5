//! Binary sum tree over per-slot rates. Internal nodes are recomputed from
//! their children on every update, so the root carries no accumulated drift.

#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    leaves: usize,
    len: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new() -> Self {
        Self {
            leaves: 1,
            len: 0,
            nodes: vec![0.0; 2],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Sets the number of live slots; slots past `len` are zeroed.
    pub fn resize(&mut self, len: usize) {
        if len > self.leaves {
            let mut leaves = self.leaves;
            while leaves < len {
                leaves *= 2;
            }
            let old: Vec<f64> = self.nodes[self.leaves..self.leaves + self.len].to_vec();
            self.leaves = leaves;
            self.nodes = vec![0.0; 2 * leaves];
            self.nodes[leaves..leaves + old.len()].copy_from_slice(&old);
            for i in (1..leaves).rev() {
                self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
            }
        } else {
            for slot in len..self.len {
                self.set(slot, 0.0);
            }
        }
        self.len = len;
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        let mut i = self.leaves + slot;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.nodes[self.leaves + slot]
    }

    /// Finds the slot whose cumulative interval contains `u` in
    /// `[0, total)`; returns the slot and the offset of `u` within it.
    pub fn find(&self, mut u: f64) -> (usize, f64) {
        let mut i = 1;
        while i < self.leaves {
            let left = self.nodes[2 * i];
            if u < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        let mut slot = i - self.leaves;
        // Rounding can land on an empty leaf; fall back to the nearest
        // positive one on the left.
        while self.get(slot) <= 0.0 && slot > 0 {
            slot -= 1;
            u = self.get(slot);
        }
        let leaf = self.get(slot);
        (slot, u.min(leaf).max(0.0))
    }
}
