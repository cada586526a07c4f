//! Symmetric complex tensors in multi-index storage.
//!
//! An order-r symmetric tensor over d dimensions keeps one entry per
//! nondecreasing multi-index (i_1 <= ... <= i_r), i.e. binomial(d+r-1, r)
//! independent entries, ordered lexicographically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Number of independent entries of an order-`order` symmetric tensor in `dim` dimensions.
pub fn sym_len(dim: usize, order: usize) -> usize {
    binomial(dim + order - 1, order.min(dim + order - 1)) as usize
}

/// Lexicographic rank of a nondecreasing multi-index among all such indices.
pub fn rank_nondecreasing(dim: usize, idx: &[usize]) -> usize {
    rank(dim, idx)
}

fn rank(dim: usize, idx: &[usize]) -> usize {
    let r = idx.len();
    let mut rank = 0;
    let mut low = 0;
    for (pos, &i) in idx.iter().enumerate() {
        for v in low..i {
            // entries with this position fixed to v, remaining r-pos-1 slots >= v
            rank += sym_len(dim - v, r - pos - 1);
        }
        low = i;
    }
    rank
}

/// All nondecreasing multi-indices of the given order, in lexicographic order.
pub fn canonical_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sym_len(dim, order));
    let mut idx = vec![0usize; order];
    loop {
        out.push(idx.clone());
        // odometer over nondecreasing sequences
        let mut pos = order;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] + 1 < dim {
                let v = idx[pos] + 1;
                for slot in idx.iter_mut().skip(pos) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    dim: usize,
    order: usize,
    data: Vec<Complex64>,
}

impl SymTensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            data: vec![Complex64::ZERO; sym_len(dim, order)],
        }
    }

    pub fn from_data(dim: usize, order: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), sym_len(dim, order));
        Self { dim, order, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Entry lookup with indices in any order.
    pub fn get(&self, idx: &[usize]) -> Complex64 {
        debug_assert_eq!(idx.len(), self.order);
        let mut sorted = [0usize; 8];
        let s = &mut sorted[..idx.len()];
        s.copy_from_slice(idx);
        s.sort_unstable();
        self.data[rank(self.dim, s)]
    }

    pub fn set(&mut self, idx: &[usize], value: Complex64) {
        debug_assert_eq!(idx.len(), self.order);
        let mut sorted = [0usize; 8];
        let s = &mut sorted[..idx.len()];
        s.copy_from_slice(idx);
        s.sort_unstable();
        self.data[rank(self.dim, s)] = value;
    }

    /// Trace over the last two slots: out[I] = sum_p self[I, p, p].
    /// The result has order self.order - 2.
    pub fn contract_last_pair(&self) -> SymTensor {
        assert!(self.order >= 2);
        let mut out = SymTensor::zeros(self.dim, self.order - 2);
        for idx in canonical_indices(self.dim, self.order - 2) {
            let mut acc = Complex64::ZERO;
            let mut full = idx.clone();
            full.push(0);
            full.push(0);
            for p in 0..self.dim {
                full[self.order - 2] = p;
                full[self.order - 1] = p;
                acc += self.get(&full);
            }
            out.set(&idx, acc);
        }
        out
    }
}
