//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;

use qrc::linalg::{ComplexMatrix, DensityMatrix};
use qrc::randmat::{random_density_matrix, RandomMatrixSpec};

pub fn random_state(n_spins: usize, seed: u64) -> DensityMatrix {
    random_density_matrix(&RandomMatrixSpec::new(1 << n_spins, 1.0, seed).unwrap()).unwrap()
}

/// Reduced state by explicit summation: bit `n - 1 - s` of a basis index is
/// the state of site `s`.
pub fn partial_trace_oracle(rho: &ComplexMatrix, n: usize, keep: &[usize]) -> ComplexMatrix {
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let assemble = |kept_bits: usize, traced_bits: usize| -> usize {
        let mut idx = 0;
        for (k, &s) in keep.iter().enumerate() {
            let bit = (kept_bits >> (keep.len() - 1 - k)) & 1;
            idx |= bit << (n - 1 - s);
        }
        for (k, &s) in traced.iter().enumerate() {
            let bit = (traced_bits >> (traced.len() - 1 - k)) & 1;
            idx |= bit << (n - 1 - s);
        }
        idx
    };
    let d = 1 << keep.len();
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..1usize << traced.len() {
                out[a * d + b] += rho.get(assemble(a, c), assemble(b, c));
            }
        }
    }
    ComplexMatrix::from_vec(d, out).unwrap()
}

/// `O` acting on `sites`, identity elsewhere, built entry by entry.
pub fn lift_oracle(op: &ComplexMatrix, sites: &[usize], n: usize) -> ComplexMatrix {
    let dim = 1 << n;
    let sub = |i: usize| -> usize {
        sites
            .iter()
            .fold(0, |acc, &s| (acc << 1) | ((i >> (n - 1 - s)) & 1))
    };
    let mask: usize = sites.iter().map(|&s| 1 << (n - 1 - s)).sum();
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            if i & !mask == j & !mask {
                out[i * dim + j] = op.get(sub(i), sub(j));
            }
        }
    }
    ComplexMatrix::from_vec(dim, out).unwrap()
}

pub fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    (1..1usize << n)
        .map(|m| (0..n).filter(|s| m >> s & 1 == 1).collect())
        .collect()
}
