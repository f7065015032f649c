//! Sum tree over exponentiated priorities.

use crate::error::{Error, Result};

/// Binary sum tree. Leaves hold `max(p, epsilon)^alpha`; the leaf count is
/// padded to a power of two with zero-priority leaves that can never be
/// sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorityTree {
    size: usize,
    capacity: usize,
    alpha: f64,
    epsilon: f64,
    /// Heap layout: node `k` has children `2k` and `2k + 1`; leaves start at `capacity`.
    nodes: Vec<f64>,
}

impl PriorityTree {
    /// Creates a tree of `size` leaves, all at raw priority 1.
    pub fn new(size: usize, alpha: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config(format!("priority epsilon must be positive, got {epsilon}")));
        }
        let capacity = size.max(1).next_power_of_two();
        let mut tree = PriorityTree {
            size,
            capacity,
            alpha,
            epsilon,
            nodes: vec![0.0; 2 * capacity],
        };
        let one = 1.0f64.max(epsilon).powf(alpha);
        tree.nodes[capacity..capacity + size].fill(one);
        for k in (1..capacity).rev() {
            tree.nodes[k] = tree.nodes[2 * k] + tree.nodes[2 * k + 1];
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Stored (exponentiated) priority of leaf `index`.
    pub fn leaf(&self, index: usize) -> f64 {
        self.nodes[self.capacity + index]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..self.capacity + self.size]
    }

    /// Sum stored at internal node `k` (1 is the root).
    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn set_priority(&mut self, index: usize, raw_priority: f64) -> Result<()> {
        if index >= self.size {
            return Err(Error::usage(format!("priority index {index} out of range for {} leaves", self.size)));
        }
        if !(raw_priority >= 0.0) {
            return Err(Error::usage(format!("priority must be non-negative, got {raw_priority}")));
        }
        let mut k = self.capacity + index;
        self.nodes[k] = raw_priority.max(self.epsilon).powf(self.alpha);
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
        Ok(())
    }

    /// Leaf whose cumulative-priority interval `[c_{i-1}, c_i)` contains `u`.
    pub fn sample_prefix(&self, u: f64) -> Result<usize> {
        if self.size == 0 {
            return Err(Error::usage("cannot sample from an empty priority tree"));
        }
        if !(self.total() > 0.0) {
            return Err(Error::usage("cannot sample from a tree with zero total priority"));
        }
        let mut u = u.max(0.0);
        let mut k = 1;
        while k < self.capacity {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if u < left || right <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        let mut idx = k - self.capacity;
        // rounding can leave u at a boundary next to a zero-priority phantom
        while idx >= self.size || self.nodes[self.capacity + idx] <= 0.0 {
            idx -= 1;
        }
        Ok(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(raw: &[f64], alpha: f64) -> PriorityTree {
        let mut t = PriorityTree::new(raw.len(), alpha, 1e-3).unwrap();
        for (i, &p) in raw.iter().enumerate() {
            t.set_priority(i, p).unwrap();
        }
        t
    }

    #[test]
    fn alpha_zero_flattens() {
        let t = tree(&[0.0, 5.0, 123.0], 0.0);
        assert_eq!(t.leaves(), &[1.0, 1.0, 1.0]);
        assert_eq!(t.total(), 3.0);
    }

    #[test]
    fn one_to_four_sums_to_ten() {
        let t = tree(&[1.0, 2.0, 3.0, 4.0], 1.0);
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.sample_prefix(5.5).unwrap(), 2);
        assert_eq!(t.sample_prefix(0.0).unwrap(), 0);
        assert_eq!(t.sample_prefix(1.0).unwrap(), 1);
        assert_eq!(t.sample_prefix(9.999).unwrap(), 3);
    }

    #[test]
    fn single_leaf_always_zero() {
        let t = tree(&[0.3], 0.6);
        for u in [0.0, 0.1, 0.99 * t.total()] {
            assert_eq!(t.sample_prefix(u).unwrap(), 0);
        }
    }

    #[test]
    fn padding_is_unreachable() {
        let t = tree(&[1.0, 1.0, 1.0], 1.0);
        assert_eq!(t.capacity(), 4);
        assert_eq!(t.sample_prefix(3.0).unwrap(), 2);
        assert_eq!(t.sample_prefix(1e9).unwrap(), 2);
    }

    #[test]
    fn errors() {
        let mut t = PriorityTree::new(2, 1.0, 1e-3).unwrap();
        assert!(matches!(t.set_priority(2, 1.0), Err(Error::Usage(_))));
        assert!(matches!(t.set_priority(0, -1.0), Err(Error::Usage(_))));
        assert!(matches!(t.set_priority(0, f64::NAN), Err(Error::Usage(_))));
        let empty = PriorityTree::new(0, 1.0, 1e-3).unwrap();
        assert!(matches!(empty.sample_prefix(0.0), Err(Error::Usage(_))));
        assert!(PriorityTree::new(2, 1.5, 1e-3).is_err());
        assert!(PriorityTree::new(2, 0.5, 0.0).is_err());
    }

    #[test]
    fn epsilon_floor() {
        let t = tree(&[0.0], 1.0);
        assert_eq!(t.leaf(0), 1e-3);
    }
}
