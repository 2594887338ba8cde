//! Dense reference computations built on nalgebra, independent of the crate's
//! own solvers.
#![allow(dead_code)]

use halmdp::almdp::Almdp;
use halmdp::lmdp::FirstExitLmdp;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `diag(e^{ηR}) P` as a dense matrix.
pub fn twisted_matrix(a: &Almdp) -> DMatrix<f64> {
    let n = a.n_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        let scale = (a.eta() * a.rewards()[s]).exp();
        for &(c, p) in a.transitions().row(s) {
            m[(s, c)] += scale * p;
        }
    }
    m
}

/// Largest real part over the spectrum, which for a nonnegative irreducible
/// matrix is the Perron root.
pub fn perron_root(a: &Almdp) -> f64 {
    twisted_matrix(a)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Right Perron vector normalized to 1 at `reference`, from the linear system
/// obtained by pinning that entry.
pub fn perron_vector(a: &Almdp, reference: usize) -> (f64, Vec<f64>) {
    let gamma = perron_root(a);
    let m = twisted_matrix(a);
    let n = a.n_states();
    let idx: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let k = idx.len();
    let mut lhs = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            lhs[(r, c)] = if i == j { gamma } else { 0.0 } - m[(i, j)];
        }
        rhs[r] = m[(i, reference)];
    }
    let sol = lhs.lu().solve(&rhs).expect("pinned Perron system is singular");
    let mut z = vec![1.0; n];
    for (r, &i) in idx.iter().enumerate() {
        z[i] = sol[r];
    }
    (gamma, z)
}

/// First-exit desirability from `(I − R_N P_NN) z_N = R_N P_NT z_T`.
pub fn first_exit_dense(l: &FirstExitLmdp) -> Vec<f64> {
    first_exit_dense_with(l, &l.terminal_z())
}

pub fn first_exit_dense_with(l: &FirstExitLmdp, z_t: &[f64]) -> Vec<f64> {
    let n = l.n_nonterminal();
    let mut lhs = DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for s in 0..n {
        let scale = (l.eta() * l.rewards()[s]).exp();
        for &(c, p) in l.transitions().row(s) {
            if c < n {
                lhs[(s, c)] -= scale * p;
            } else {
                rhs[s] += scale * p * z_t[c - n];
            }
        }
    }
    let sol = lhs.lu().solve(&rhs).expect("first-exit system is singular");
    sol.iter().copied().chain(z_t.iter().copied()).collect()
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub fn max_abs_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
