//! The exit-value system `z_E = G_E z_E` and compositional reconstruction.

use super::bank::{common_rho, BaseLmdpBank};
use super::decomposition::{BaseValues, Decomposition, Slot};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, max_abs_diff, SparseRows};
use crate::lmdp::ZValueTable;

/// Desirability estimates on the exit set with `z_E(s*) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitValueVector {
    pub exits: Vec<usize>,
    pub z_e: Vec<f64>,
    pub reference_state: usize,
    /// Gain estimate the vector was computed at, if any.
    pub rho_hat: Option<f64>,
}

impl ExitValueVector {
    /// All-ones start.
    pub fn ones(decomposition: &Decomposition) -> Self {
        ExitValueVector {
            exits: decomposition.exits().to_vec(),
            z_e: vec![1.0; decomposition.exits().len()],
            reference_state: decomposition.reference_state(),
            rho_hat: None,
        }
    }

    pub fn value_of(&self, state: usize) -> Option<f64> {
        self.exits.binary_search(&state).ok().map(|i| self.z_e[i])
    }
}

/// `G_E` over `E × E` at a common `ρ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitMatrix {
    pub exits: Vec<usize>,
    pub reference_state: usize,
    pub rho_hat: f64,
    pub rows: SparseRows,
}

impl ExitMatrix {
    /// Wraps an explicit matrix, mainly for tests.
    pub fn from_rows(exits: Vec<usize>, reference_state: usize, rho_hat: f64, rows: SparseRows) -> Result<Self> {
        if rows.n_rows() != exits.len() || rows.n_cols() != exits.len() {
            return Err(Error::Dimension {
                expected: exits.len(),
                found: rows.n_rows(),
            });
        }
        if exits.binary_search(&reference_state).is_err() {
            return Err(Error::Decomposition(format!("reference state {reference_state} is not an exit")));
        }
        Ok(ExitMatrix {
            exits,
            reference_state,
            rho_hat,
            rows,
        })
    }

    fn reference_position(&self) -> usize {
        self.exits.binary_search(&self.reference_state).expect("validated")
    }
}

/// Builds `G_E`. The row of an exit inside subtask block `i` holds
/// `z_j^k(f(s))` in the column of the exit mapped to terminal `k`. The row
/// of a relay exit is its one-step backup `e^{η(R−ρ̂)} Σ P(s'|s) ẑ(s')`
/// written over `E`.
pub fn build_exit_matrix(decomposition: &Decomposition, banks: &[BaseLmdpBank]) -> Result<ExitMatrix> {
    let rho_hat = common_rho(banks)?;
    let almdp = decomposition.almdp();
    let exits = decomposition.exits();
    let coefficients = |s: usize| -> Vec<(usize, f64)> {
        match decomposition.slot(s) {
            Slot::Interior { block, class, x } => decomposition
                .terminal_slots(block)
                .iter()
                .map(|&(e, k)| (e, banks.base_z(class, k, x)))
                .collect(),
            Slot::Relay { .. } => vec![(decomposition.exit_position(s).expect("relays are exits"), 1.0)],
        }
    };
    let rows = exits
        .iter()
        .map(|&s| match decomposition.slot(s) {
            Slot::Interior { .. } => coefficients(s),
            Slot::Relay { .. } => {
                let scale = (almdp.eta() * (almdp.rewards()[s] - rho_hat)).exp();
                almdp
                    .transitions()
                    .row(s)
                    .iter()
                    .flat_map(|&(c, p)| {
                        let coeff = match decomposition.exit_position(c) {
                            Some(e) => vec![(e, 1.0)],
                            None => coefficients(c),
                        };
                        coeff.into_iter().map(move |(e, w)| (e, scale * p * w))
                    })
                    .collect()
            }
        })
        .collect();
    Ok(ExitMatrix {
        exits: exits.to_vec(),
        reference_state: decomposition.reference_state(),
        rho_hat,
        rows: SparseRows::from_rows(exits.len(), rows),
    })
}

/// Outcome of [`solve_exit_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSolution {
    pub values: ExitValueVector,
    /// False when the iteration failed to reach a positive normalized fixed
    /// direction.
    pub unique: bool,
    pub iterations: usize,
    /// Final max-norm change between sweeps relative to `max |z|`.
    pub residual: f64,
}

/// Normalized power iteration on `μ_k I + G_E` from `z = 1`, where
/// `μ_k = (G_E z_k)(s*)` is the current Perron estimate; each sweep is
/// rescaled so that `z(s*) = 1`.
///
/// The shift shares eigenvectors with `G_E` and keeps the Perron root
/// strictly dominant when `G_E` is periodic. Scaling it with `μ_k` keeps the
/// contraction rate independent of the magnitude of `G_E`. At the true gain
/// the Perron root is 1 and the limit solves `z_E = G_E z_E`; elsewhere the
/// limit is the Perron vector, which the bisection test compares against `Γ̂`.
pub fn solve_exit_system(g: &ExitMatrix, tol: f64, max_iter: usize) -> ExitSolution {
    let n = g.exits.len();
    let r = g.reference_position();
    let mut z = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let finish = |z: Vec<f64>, unique: bool, iterations: usize, residual: f64| ExitSolution {
        values: ExitValueVector {
            exits: g.exits.clone(),
            z_e: z,
            reference_state: g.reference_state,
            rho_hat: Some(g.rho_hat),
        },
        unique,
        iterations,
        residual,
    };
    for it in 1..=max_iter {
        for (i, row) in g.rows.rows().enumerate() {
            next[i] = row.iter().map(|&(c, w)| w * z[c]).sum();
        }
        let mu = next[r] / z[r];
        if !(mu > 0.0) || !mu.is_finite() {
            return finish(z, false, it, residual);
        }
        for (v, zi) in next.iter_mut().zip(&z) {
            *v = (mu * zi + *v) / (2.0 * mu);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return finish(z, false, it, residual);
        }
        let scale = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        residual = max_abs_diff(&z, &next) / scale;
        std::mem::swap(&mut z, &mut next);
        if residual < tol {
            let positive = z.iter().all(|&v| v > 0.0);
            return finish(z, positive, it, residual);
        }
    }
    finish(z, false, max_iter, residual)
}

/// Dense alternative: solves `z = G_E z` on `E ∖ {s*}` with `z(s*) = 1` by
/// LU. Exact only at the true gain; used by tests as a cross-check.
pub fn solve_exit_system_dense(g: &ExitMatrix) -> Result<ExitValueVector> {
    let n = g.exits.len();
    let r = g.reference_position();
    let others: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let dense = g.rows.to_dense();
    let a: Vec<Vec<f64>> = others
        .iter()
        .map(|&i| {
            others
                .iter()
                .map(|&j| if i == j { 1.0 } else { 0.0 } - dense[i][j])
                .collect()
        })
        .collect();
    let mut rhs = vec![others.iter().map(|&i| dense[i][r]).collect::<Vec<f64>>()];
    lu_solve(a, &mut rhs).map_err(|e| {
        Error::NoUniqueSolution(format!("exit system is singular at column {}", e.column))
    })?;
    let mut z = vec![1.0; n];
    for (&i, &v) in others.iter().zip(&rhs[0]) {
        z[i] = v;
    }
    Ok(ExitValueVector {
        exits: g.exits.clone(),
        z_e: z,
        reference_state: g.reference_state,
        rho_hat: Some(g.rho_hat),
    })
}

fn check_consistent(banks: &[BaseLmdpBank], z_e: &ExitValueVector) -> Result<()> {
    let rho = common_rho(banks)?;
    if let Some(found) = z_e.rho_hat {
        if found != rho {
            return Err(Error::Stale { expected: rho, found });
        }
    }
    Ok(())
}

/// `z(s) = Σ_k z_E(τ^k) z_i^k(f(s); ρ̂)` through the block containing `s`.
pub fn reconstruct_value(
    state: usize,
    decomposition: &Decomposition,
    banks: &[BaseLmdpBank],
    z_e: &ExitValueVector,
) -> Result<f64> {
    check_consistent(banks, z_e)?;
    if state >= decomposition.almdp().n_states() {
        return Err(Error::Dimension {
            expected: decomposition.almdp().n_states(),
            found: state,
        });
    }
    Ok(decomposition.composite_value(banks, &z_e.z_e, state))
}

/// [`reconstruct_value`] over all of `S`.
pub fn reconstruct_all(
    decomposition: &Decomposition,
    banks: &[BaseLmdpBank],
    z_e: &ExitValueVector,
) -> Result<ZValueTable> {
    check_consistent(banks, z_e)?;
    Ok(ZValueTable::new(decomposition.reconstruct_all(banks, &z_e.z_e)))
}
