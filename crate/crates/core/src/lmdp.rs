//! First-exit linearly-solvable MDPs.
//!
//! With desirabilities `z(s) = e^{η v(s)}` the optimality equations are linear:
//!
//! ```text
//! z(s) = e^{η R(s)} Σ_{s'} P(s'|s) z(s'),   s ∈ S
//! z(τ) = e^{η J(τ)},                          τ ∈ T
//! ```
//!
//! Two solvers are provided. [`solve_first_exit_direct`] factors
//! `I − R·P_SS` and is the ground-truth path; [`solve_first_exit_power`]
//! iterates `z ← R P z⁺` from `z = 1` and reports divergence instead of
//! failing.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, max_abs_diff, SparseRows};
use serde::{Deserialize, Serialize};

/// Row sums of passive dynamics must equal one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Any power-iteration entry above this aborts the iteration.
pub const OVERFLOW_GUARD: f64 = 1e100;

/// Default power-iteration tolerance (max-norm change between sweeps).
pub const DEFAULT_TOL: f64 = 1e-10;

/// A first-exit LMDP over dense indices. Nonterminal states occupy indices
/// `0..n_nonterminal()`, terminal states follow.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstExitLmdp {
    labels: Vec<String>,
    n_nonterminal: usize,
    transitions: SparseRows,
    rewards: Vec<f64>,
    terminal_rewards: Vec<f64>,
    eta: f64,
}

impl FirstExitLmdp {
    /// Validates and builds a first-exit LMDP.
    ///
    /// `transitions` has one row per nonterminal and `nonterminals.len() +
    /// terminals.len()` columns.
    pub fn new(
        nonterminals: Vec<String>,
        terminals: Vec<String>,
        transitions: SparseRows,
        rewards: Vec<f64>,
        terminal_rewards: Vec<f64>,
        eta: f64,
    ) -> Result<Self> {
        let n = nonterminals.len();
        let m = terminals.len();
        if transitions.n_rows() != n {
            return Err(Error::Dimension {
                expected: n,
                found: transitions.n_rows(),
            });
        }
        if transitions.n_cols() != n + m {
            return Err(Error::Dimension {
                expected: n + m,
                found: transitions.n_cols(),
            });
        }
        if rewards.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rewards.len(),
            });
        }
        if terminal_rewards.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: terminal_rewards.len(),
            });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidModel(format!("eta must be positive, got {eta}")));
        }
        validate_stochastic_rows(&transitions)?;
        if let Some(s) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("reward of state {s} is not finite")));
        }
        if let Some(t) = terminal_rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "terminal reward of terminal {t} is not finite"
            )));
        }
        let mut labels = nonterminals;
        labels.extend(terminals);
        let lmdp = FirstExitLmdp {
            labels,
            n_nonterminal: n,
            transitions,
            rewards,
            terminal_rewards,
            eta,
        };
        lmdp.check_first_exit_reachability()?;
        Ok(lmdp)
    }

    fn check_first_exit_reachability(&self) -> Result<()> {
        let n = self.n_nonterminal;
        let total = self.n_states();
        // Terminals need an incoming support edge.
        let mut has_incoming = vec![false; total];
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (s, row) in self.transitions.rows().enumerate() {
            for &(t, _) in row {
                has_incoming[t] = true;
                reverse[t].push(s);
            }
        }
        if let Some(t) = (n..total).find(|&t| !has_incoming[t]) {
            return Err(Error::InvalidModel(format!(
                "terminal `{}` is not reachable from any nonterminal",
                self.labels[t]
            )));
        }
        // Every nonterminal must reach some terminal.
        let mut reaches = vec![false; total];
        let mut stack: Vec<usize> = (n..total).collect();
        for &t in &stack {
            reaches[t] = true;
        }
        while let Some(u) = stack.pop() {
            for &p in &reverse[u] {
                if !reaches[p] {
                    reaches[p] = true;
                    stack.push(p);
                }
            }
        }
        if let Some(s) = (0..n).find(|&s| !reaches[s]) {
            return Err(Error::InvalidModel(format!(
                "nonterminal `{}` cannot reach a terminal state",
                self.labels[s]
            )));
        }
        Ok(())
    }

    pub fn n_nonterminal(&self) -> usize {
        self.n_nonterminal
    }

    pub fn n_terminal(&self) -> usize {
        self.labels.len() - self.n_nonterminal
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn transitions(&self) -> &SparseRows {
        &self.transitions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn terminal_rewards(&self) -> &[f64] {
        &self.terminal_rewards
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Terminal desirabilities `e^{η J(τ)}`.
    pub fn terminal_z(&self) -> Vec<f64> {
        self.terminal_rewards
            .iter()
            .map(|j| (self.eta * j).exp())
            .collect()
    }

    /// Copy with every nonterminal reward shifted by `delta`.
    pub fn with_reward_shift(&self, delta: f64) -> FirstExitLmdp {
        let mut out = self.clone();
        for r in &mut out.rewards {
            *r += delta;
        }
        out
    }

    /// Copy with new terminal rewards.
    pub fn with_terminal_rewards(&self, terminal_rewards: Vec<f64>) -> Result<FirstExitLmdp> {
        if terminal_rewards.len() != self.n_terminal() {
            return Err(Error::Dimension {
                expected: self.n_terminal(),
                found: terminal_rewards.len(),
            });
        }
        let mut out = self.clone();
        out.terminal_rewards = terminal_rewards;
        Ok(out)
    }

    fn check_table(&self, z: &ZValueTable) -> Result<()> {
        if z.len() != self.n_states() {
            return Err(Error::Dimension {
                expected: self.n_states(),
                found: z.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn validate_stochastic_rows(p: &SparseRows) -> Result<()> {
    for (s, row) in p.rows().enumerate() {
        if let Some(&(c, w)) = row.iter().find(|&&(_, w)| !(0.0..=1.0).contains(&w) || !w.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "probability P({c}|{s}) = {w} outside [0, 1]"
            )));
        }
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "row {s} of the passive dynamics sums to {sum}"
            )));
        }
    }
    Ok(())
}

/// Exponentiated values `z = e^{η v}` over a state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZValueTable {
    values: Vec<f64>,
}

impl ZValueTable {
    pub fn new(values: Vec<f64>) -> Self {
        ZValueTable { values }
    }

    pub fn ones(n: usize) -> Self {
        ZValueTable { values: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Divides every entry by the entry at `reference`.
    pub fn normalized_at(&self, reference: usize) -> ZValueTable {
        let d = self.values[reference];
        ZValueTable::new(self.values.iter().map(|v| v / d).collect())
    }
}

impl std::ops::Index<usize> for ZValueTable {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for ZValueTable {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// A controlled transition law `π(s'|s)` over `S × (S ∪ T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    rows: SparseRows,
}

impl Policy {
    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn prob(&self, s: usize, next: usize) -> f64 {
        self.rows.get(s, next)
    }
}

/// One application of the linear Bellman operator: nonterminal entries are
/// replaced by `e^{ηR(s)} Σ P(s'|s) z(s')`, terminal entries are copied.
pub fn bellman_backup_z(lmdp: &FirstExitLmdp, z: &ZValueTable) -> Result<ZValueTable> {
    lmdp.check_table(z)?;
    let mut out = z.clone();
    backup_into(lmdp, z.as_slice(), &mut out.values);
    Ok(out)
}

fn backup_into(lmdp: &FirstExitLmdp, z: &[f64], out: &mut [f64]) {
    for (s, row) in lmdp.transitions.rows().enumerate() {
        let g: f64 = row.iter().map(|&(c, p)| p * z[c]).sum();
        out[s] = (lmdp.eta * lmdp.rewards[s]).exp() * g;
    }
}

/// Outcome of [`solve_first_exit_power`].
#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub z: ZValueTable,
    pub converged: bool,
    /// Final max-norm change between sweeps.
    pub residual: f64,
    pub iterations: usize,
    /// Set when the iteration was aborted (overflow or NaN).
    pub diagnostic: Option<String>,
}

/// Power iteration `z ← R P z⁺` from `z = 1` until the max-norm change drops
/// below `tol`.
pub fn solve_first_exit_power(lmdp: &FirstExitLmdp, tol: f64, max_iter: usize) -> PowerSolution {
    let n = lmdp.n_nonterminal;
    let mut z = vec![1.0; lmdp.n_states()];
    z[n..].copy_from_slice(&lmdp.terminal_z());
    let mut next = z.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        backup_into(lmdp, &z, &mut next);
        if let Some(s) = next[..n]
            .iter()
            .position(|v| !v.is_finite() || *v > OVERFLOW_GUARD)
        {
            return PowerSolution {
                diagnostic: Some(format!(
                    "value of state `{}` left the finite range ({:e}) at sweep {it}",
                    lmdp.labels[s], next[s]
                )),
                z: ZValueTable::new(next),
                converged: false,
                residual,
                iterations: it,
            };
        }
        residual = max_abs_diff(&z[..n], &next[..n]);
        std::mem::swap(&mut z, &mut next);
        if residual < tol {
            return PowerSolution {
                z: ZValueTable::new(z),
                converged: true,
                residual,
                iterations: it,
                diagnostic: None,
            };
        }
    }
    PowerSolution {
        z: ZValueTable::new(z),
        converged: false,
        residual,
        iterations: max_iter,
        diagnostic: Some(format!("no convergence within {max_iter} sweeps")),
    }
}

/// Exact solution of `z = R P z⁺` by a dense solve of `(I − R P_SS) z_S =
/// R P_ST z_T`.
pub fn solve_first_exit_direct(lmdp: &FirstExitLmdp) -> Result<ZValueTable> {
    let mut out = solve_first_exit_direct_multi(lmdp, &[lmdp.terminal_z()])?;
    Ok(out.pop().expect("one right-hand side"))
}

/// Solves the same first-exit system for several terminal desirability
/// vectors at once (one factorization). Terminal vectors may contain zeros,
/// i.e. `J = −∞`, which is never materialized in value space.
pub fn solve_first_exit_direct_multi(
    lmdp: &FirstExitLmdp,
    terminal_values: &[Vec<f64>],
) -> Result<Vec<ZValueTable>> {
    let n = lmdp.n_nonterminal;
    let m = lmdp.n_terminal();
    for tv in terminal_values {
        if tv.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: tv.len(),
            });
        }
    }
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs: Vec<Vec<f64>> = vec![vec![0.0; n]; terminal_values.len()];
    for (s, row) in lmdp.transitions.rows().enumerate() {
        let w = (lmdp.eta * lmdp.rewards[s]).exp();
        a[s][s] += 1.0;
        for &(c, p) in row {
            if c < n {
                a[s][c] -= w * p;
            } else {
                for (b, tv) in rhs.iter_mut().zip(terminal_values) {
                    b[s] += w * p * tv[c - n];
                }
            }
        }
    }
    lu_solve(a, &mut rhs).map_err(|e| {
        Error::NoUniqueSolution(format!(
            "I − R·P_SS is singular (pivot {:e} at column {})",
            e.pivot, e.column
        ))
    })?;
    Ok(rhs
        .into_iter()
        .zip(terminal_values)
        .map(|(mut zs, tv)| {
            zs.extend_from_slice(tv);
            ZValueTable::new(zs)
        })
        .collect())
}

/// Optimal controlled dynamics `π(s'|s) = P(s'|s) z(s') / G[z](s)`.
pub fn optimal_policy(lmdp: &FirstExitLmdp, z: &ZValueTable) -> Result<Policy> {
    lmdp.check_table(z)?;
    let rows = lmdp
        .transitions
        .rows()
        .enumerate()
        .map(|(s, row)| {
            let g: f64 = row.iter().map(|&(c, p)| p * z[c]).sum();
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::DegenerateSupport { state: s });
            }
            Ok(row.iter().map(|&(c, p)| (c, p * z[c] / g)).collect())
        })
        .collect::<Result<Vec<Vec<(usize, f64)>>>>()?;
    Ok(Policy {
        rows: SparseRows::from_rows(lmdp.n_states(), rows),
    })
}

/// Pointwise weighted sum `Σ_i w_i z_i` of tables over a common state set.
pub fn compose_values(base_values: &[ZValueTable], weights: &[f64]) -> Result<ZValueTable> {
    if base_values.len() != weights.len() {
        return Err(Error::Dimension {
            expected: base_values.len(),
            found: weights.len(),
        });
    }
    let Some(first) = base_values.first() else {
        return Ok(ZValueTable::new(Vec::new()));
    };
    let n = first.len();
    let mut out = vec![0.0; n];
    for (table, &w) in base_values.iter().zip(weights) {
        if table.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: table.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(table.as_slice()) {
            *o += w * v;
        }
    }
    Ok(ZValueTable::new(out))
}

/// `v(s) = ln z(s) / η`.
pub fn value_from_z(z: &ZValueTable, eta: f64) -> Result<Vec<f64>> {
    z.as_slice()
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            if v > 0.0 {
                Ok(v.ln() / eta)
            } else {
                Err(Error::Domain { state: s, value: v })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn one_step(r: f64, j: f64, eta: f64) -> FirstExitLmdp {
        FirstExitLmdp::new(
            labels("s", 1),
            labels("t", 1),
            SparseRows::from_rows(2, vec![vec![(1, 1.0)]]),
            vec![r],
            vec![j],
            eta,
        )
        .unwrap()
    }

    #[test]
    fn backup_single_state() {
        let l = one_step(0.0, 0.0, 1.0);
        let z = ZValueTable::new(vec![7.0, 1.0]);
        assert_eq!(bellman_backup_z(&l, &z).unwrap().as_slice(), &[1.0, 1.0]);

        let l = one_step(0.0, 0.7, 2.0);
        let z = ZValueTable::new(vec![3.0, (2.0f64 * 0.7).exp()]);
        let out = bellman_backup_z(&l, &z).unwrap();
        assert!((out[0] - (1.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn backup_rejects_mismatched_table() {
        let l = one_step(0.0, 0.0, 1.0);
        assert!(matches!(
            bellman_backup_z(&l, &ZValueTable::ones(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn power_one_step_reaches_fixed_point() {
        let l = one_step(-0.3, 0.5, 1.5);
        let sol = solve_first_exit_power(&l, 1e-12, 100);
        assert!(sol.converged);
        assert!((sol.z[0] - (1.5f64 * 0.2).exp()).abs() < 1e-14);
    }

    #[test]
    fn power_flags_divergence() {
        // Self-loop with probability 0.9 and reward +10: spectral radius e^10·0.9 > 1.
        let l = FirstExitLmdp::new(
            labels("s", 1),
            labels("t", 1),
            SparseRows::from_rows(2, vec![vec![(0, 0.9), (1, 0.1)]]),
            vec![10.0],
            vec![0.0],
            1.0,
        )
        .unwrap();
        let sol = solve_first_exit_power(&l, 1e-10, 10_000);
        assert!(!sol.converged);
        assert!(sol.diagnostic.is_some());
    }

    #[test]
    fn direct_single_state() {
        let l = one_step(0.0, 0.0, 1.0);
        assert_eq!(solve_first_exit_direct(&l).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn direct_detects_singular_system() {
        // e^{ηR}·p = 1 for the self-loop makes I − R·P_SS singular.
        let l = FirstExitLmdp::new(
            labels("s", 1),
            labels("t", 1),
            SparseRows::from_rows(2, vec![vec![(0, 0.5), (1, 0.5)]]),
            vec![std::f64::consts::LN_2],
            vec![0.0],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            solve_first_exit_direct(&l),
            Err(Error::NoUniqueSolution(_))
        ));
    }

    #[test]
    fn policy_examples() {
        let p = SparseRows::from_rows(3, vec![vec![(1, 0.5), (2, 0.5)]]);
        let l = FirstExitLmdp::new(
            labels("s", 1),
            labels("t", 2),
            p,
            vec![0.0],
            vec![0.0, 0.0],
            1.0,
        )
        .unwrap();
        let pi = optimal_policy(&l, &ZValueTable::ones(3)).unwrap();
        assert_eq!(pi.prob(0, 1), 0.5);
        let pi = optimal_policy(&l, &ZValueTable::new(vec![1.0, 1.0, 3.0])).unwrap();
        assert_eq!(pi.prob(0, 1), 0.25);
        assert_eq!(pi.prob(0, 2), 0.75);
        assert!(matches!(
            optimal_policy(&l, &ZValueTable::new(vec![1.0, 0.0, 0.0])),
            Err(Error::DegenerateSupport { state: 0 })
        ));

        let l = one_step(0.0, 0.0, 1.0);
        let pi = optimal_policy(&l, &ZValueTable::new(vec![1.0, 42.0])).unwrap();
        assert_eq!(pi.prob(0, 1), 1.0);
    }

    #[test]
    fn compose_examples() {
        let a = ZValueTable::new(vec![1.0, 2.0]);
        let b = ZValueTable::new(vec![3.0, 4.0]);
        let both = [a.clone(), b.clone()];
        assert_eq!(compose_values(&both, &[0.0, 1.0]).unwrap(), b);
        assert_eq!(compose_values(&both, &[0.0, 0.0]).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(compose_values(&both, &[1.0]).is_err());
        assert!(compose_values(&[a, ZValueTable::ones(3)], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn value_from_z_examples() {
        assert_eq!(value_from_z(&ZValueTable::ones(3), 1.0).unwrap(), vec![0.0; 3]);
        let v = value_from_z(&ZValueTable::new(vec![(2.0f64).exp()]), 2.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(matches!(
            value_from_z(&ZValueTable::new(vec![1.0, 0.0]), 1.0),
            Err(Error::Domain { state: 1, .. })
        ));
    }

    #[test]
    fn construction_validates() {
        let bad_row = SparseRows::from_rows(2, vec![vec![(1, 0.9)]]);
        assert!(FirstExitLmdp::new(labels("s", 1), labels("t", 1), bad_row, vec![0.0], vec![0.0], 1.0).is_err());
        let ok = SparseRows::from_rows(2, vec![vec![(1, 1.0)]]);
        assert!(FirstExitLmdp::new(labels("s", 1), labels("t", 1), ok.clone(), vec![0.0], vec![0.0], 0.0).is_err());
        // Nonterminal trapped in a self-loop never exits.
        let trapped = SparseRows::from_rows(3, vec![vec![(2, 1.0)], vec![(1, 1.0)]]);
        assert!(FirstExitLmdp::new(labels("s", 2), labels("t", 1), trapped, vec![0.0; 2], vec![0.0], 1.0).is_err());
    }
}
