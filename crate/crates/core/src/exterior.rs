//! Operators induced on the exterior power Λ^k C^N.
//!
//! Basis vectors are the ordered k-subsets of {0, …, N−1}, enumerated in
//! lexicographic order. A one-particle operator acts by the Leibniz rule.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Clone, Debug)]
pub struct ExteriorBasis {
    n: usize,
    k: usize,
    subsets: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl ExteriorBasis {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "exterior degree {k} exceeds dimension {n}"
            )));
        }
        let mut subsets = Vec::new();
        let mut current = Vec::with_capacity(k);
        enumerate(n, k, 0, &mut current, &mut subsets);
        let index = subsets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(ExteriorBasis {
            n,
            k,
            subsets,
            index,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// The derivation `Σ_p 1 ⊗ … ⊗ h ⊗ … ⊗ 1` restricted to Λ^k.
    pub fn induced(&self, h: &CMatrix) -> CMatrix {
        assert_eq!(h.nrows(), self.n, "operator dimension mismatch");
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (col, subset) in self.subsets.iter().enumerate() {
            for &i in subset {
                out[(col, col)] += h[(i, i)];
                for j in 0..self.n {
                    if j == i || subset.contains(&j) {
                        continue;
                    }
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    let between = subset.iter().filter(|&&s| s > lo && s < hi).count();
                    let mut target: Vec<usize> =
                        subset.iter().map(|&s| if s == i { j } else { s }).collect();
                    target.sort_unstable();
                    let row = self.index[&target];
                    let sign = if between % 2 == 0 { 1.0 } else { -1.0 };
                    out[(row, col)] += h[(j, i)] * sign;
                }
            }
        }
        out
    }
}

fn enumerate(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        enumerate(n, k, i + 1, current, out);
        current.pop();
    }
}

/// Binomial coefficient, used for sizing.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
