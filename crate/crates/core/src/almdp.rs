//! Average-reward LMDPs.
//!
//! The exponentiated gain `Γ = e^{ηρ}` is the Perron root of `R·P`, and the
//! optimal desirabilities are its eigenvector pinned to `z(s*) = 1`:
//!
//! ```text
//! Γ z(s) = e^{η R(s)} Σ_{s'} P(s'|s) z(s')
//! ```
//!
//! Three exact routes are exposed: [`relative_value_iteration`], the
//! first-exit reduction [`to_first_exit`], and [`solve_flat_binary_search`],
//! which bisects on `Γ̂` using the reduction.

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp_weighted, max_abs_diff, SparseRows};
use crate::lmdp::{solve_first_exit_direct, validate_stochastic_rows, FirstExitLmdp, ZValueTable};

/// Relative tolerance under which the bisection test is treated as a tie.
pub const TIE_TOL: f64 = 1e-12;

/// A recurrent average-reward LMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Almdp {
    labels: Vec<String>,
    transitions: SparseRows,
    rewards: Vec<f64>,
    eta: f64,
}

impl Almdp {
    /// Validates row-stochasticity and strong connectivity of the support
    /// digraph of `P`.
    pub fn new(labels: Vec<String>, transitions: SparseRows, rewards: Vec<f64>, eta: f64) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidModel("an ALMDP needs at least one state".into()));
        }
        if transitions.n_rows() != n || transitions.n_cols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: if transitions.n_rows() != n {
                    transitions.n_rows()
                } else {
                    transitions.n_cols()
                },
            });
        }
        if rewards.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rewards.len(),
            });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidModel(format!("eta must be positive, got {eta}")));
        }
        if let Some(s) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("reward of state {s} is not finite")));
        }
        validate_stochastic_rows(&transitions)?;
        let almdp = Almdp {
            labels,
            transitions,
            rewards,
            eta,
        };
        if let Some(s) = almdp.first_unreachable() {
            return Err(Error::InvalidModel(format!(
                "support of P is not strongly connected (state `{}`)",
                almdp.labels[s]
            )));
        }
        Ok(almdp)
    }

    fn first_unreachable(&self) -> Option<usize> {
        let n = self.n_states();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, row) in self.transitions.rows().enumerate() {
            for &(t, _) in row {
                reverse[t].push(s);
            }
        }
        let forward: Vec<Vec<usize>> = self
            .transitions
            .rows()
            .map(|r| r.iter().map(|&(c, _)| c).collect())
            .collect();
        for adj in [&forward, &reverse] {
            let mut seen = vec![false; n];
            seen[0] = true;
            let mut stack = vec![0];
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if let Some(s) = seen.iter().position(|&b| !b) {
                return Some(s);
            }
        }
        None
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

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Copy with every reward shifted by `c`.
    pub fn with_reward_shift(&self, c: f64) -> Almdp {
        let mut out = self.clone();
        for r in &mut out.rewards {
            *r += c;
        }
        out
    }

    /// `(R·P z)(s) = e^{ηR(s)} Σ P(s'|s) z(s')`.
    pub fn twisted_backup(&self, s: usize, z: &[f64]) -> f64 {
        let g: f64 = self.transitions.row(s).iter().map(|&(c, p)| p * z[c]).sum();
        (self.eta * self.rewards[s]).exp() * g
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states() {
            return Err(Error::Dimension {
                expected: self.n_states(),
                found: s,
            });
        }
        Ok(())
    }
}

/// Gain estimate together with its exponentiated form `Γ̂ = e^{ηρ̂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    pub rho_hat: f64,
    pub gamma_hat: f64,
}

impl GainEstimate {
    pub fn from_rho(rho_hat: f64, eta: f64) -> Self {
        GainEstimate {
            rho_hat,
            gamma_hat: (eta * rho_hat).exp(),
        }
    }

    pub fn from_gamma(gamma_hat: f64, eta: f64) -> Self {
        GainEstimate {
            rho_hat: gamma_hat.ln() / eta,
            gamma_hat,
        }
    }
}

/// Relative value iteration with reference state `s*`.
///
/// Each sweep forms `w = R·P ẑ_k`; the gain estimate is `w(s*)`. The update
/// averages `w` with `ẑ_k` before renormalizing at `s*`. The averaged operator
/// `(R·P + I)/2` has the same eigenvector and its Perron root is the unique
/// eigenvalue of maximal modulus even when `P` is periodic (bipartite grids),
/// so the iteration converges on every communicating instance.
pub fn relative_value_iteration(
    almdp: &Almdp,
    reference_state: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(ZValueTable, GainEstimate)> {
    relative_value_iteration_traced(almdp, reference_state, tol, max_iter, |_, _, _| {})
}

/// [`relative_value_iteration`] calling `on_sweep(iteration, ẑ, Γ̂)` after
/// every sweep, with `ẑ(s*) = 1`.
pub fn relative_value_iteration_traced(
    almdp: &Almdp,
    reference_state: usize,
    tol: f64,
    max_iter: usize,
    mut on_sweep: impl FnMut(usize, &[f64], f64),
) -> Result<(ZValueTable, GainEstimate)> {
    almdp.check_state(reference_state)?;
    let n = almdp.n_states();
    let scale: Vec<f64> = almdp.rewards.iter().map(|r| (almdp.eta * r).exp()).collect();
    let mut z = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        for (s, row) in almdp.transitions.rows().enumerate() {
            let g: f64 = row.iter().map(|&(c, p)| p * z[c]).sum();
            next[s] = scale[s] * g;
        }
        let gamma = next[reference_state];
        let norm = 0.5 * (gamma + z[reference_state]);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotConverged {
                iterations: iteration,
                residual: f64::NAN,
            });
        }
        for (nx, zx) in next.iter_mut().zip(&z) {
            *nx = 0.5 * (*nx + zx) / norm;
        }
        residual = max_abs_diff(&z, &next);
        std::mem::swap(&mut z, &mut next);
        on_sweep(iteration, &z, gamma);
        if residual < tol {
            // Report Γ from the converged vector.
            let gamma = almdp.twisted_backup(reference_state, &z) / z[reference_state];
            return Ok((ZValueTable::new(z), GainEstimate::from_gamma(gamma, almdp.eta)));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// First-exit reduction: nonterminals `S ∖ {s*}`, single terminal `s*` with
/// `J(s*) = 0`, rewards `R(s) − ρ̂`. Nonterminal order follows `S`.
pub fn to_first_exit(almdp: &Almdp, reference_state: usize, rho_hat: f64) -> Result<FirstExitLmdp> {
    almdp.check_state(reference_state)?;
    let n = almdp.n_states();
    let map = |s: usize| -> usize {
        if s == reference_state {
            n - 1
        } else if s < reference_state {
            s
        } else {
            s - 1
        }
    };
    let mut nonterminals = Vec::with_capacity(n - 1);
    let mut rows = Vec::with_capacity(n - 1);
    let mut rewards = Vec::with_capacity(n - 1);
    for s in (0..n).filter(|&s| s != reference_state) {
        nonterminals.push(almdp.labels[s].clone());
        rows.push(
            almdp
                .transitions
                .row(s)
                .iter()
                .map(|&(c, p)| (map(c), p))
                .collect(),
        );
        rewards.push(almdp.rewards[s] - rho_hat);
    }
    FirstExitLmdp::new(
        nonterminals,
        vec![almdp.labels[reference_state].clone()],
        SparseRows::from_rows(n, rows),
        rewards,
        vec![0.0],
        almdp.eta,
    )
}

/// Re-expands a solution of [`to_first_exit`] to a table over `S`.
pub fn extend_first_exit_solution(z_prime: &ZValueTable, reference_state: usize) -> ZValueTable {
    let n = z_prime.len();
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&z_prime.as_slice()[..reference_state]);
    out.push(z_prime[n - 1]);
    out.extend_from_slice(&z_prime.as_slice()[reference_state..n - 1]);
    ZValueTable::new(out)
}

/// Outcome of testing one candidate `Γ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `Γ̂ z(s*) > e^{ηR(s*)} Σ P(s|s*) z(s)`: the candidate is too large.
    TooLarge,
    /// The test failed or tied: the candidate is too small.
    TooSmall,
    /// The first-exit problem at this candidate has no unique positive
    /// solution, which only happens below the true gain.
    NotUnique,
}

/// One bisection step, reported to tracing callbacks.
#[derive(Debug, Clone)]
pub struct BisectionStep {
    pub iteration: usize,
    pub gamma_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub verdict: Verdict,
    /// Values over `S` at this candidate when a unique solution exists.
    pub z: Option<ZValueTable>,
}

struct Probe {
    verdict: Verdict,
    /// `(lhs − rhs) / rhs` of the line test; `None` when not unique.
    gap: Option<f64>,
    z: Option<ZValueTable>,
}

fn probe_flat(almdp: &Almdp, reference_state: usize, gamma_hat: f64) -> Result<Probe> {
    let not_unique = Probe {
        verdict: Verdict::NotUnique,
        gap: None,
        z: None,
    };
    // a single state has nothing to reduce: the only eigenvector is z = 1
    let z = if almdp.n_states() == 1 {
        ZValueTable::ones(1)
    } else {
        let rho_hat = gamma_hat.ln() / almdp.eta;
        let reduced = to_first_exit(almdp, reference_state, rho_hat)?;
        let z_prime = match solve_first_exit_direct(&reduced) {
            Ok(z) => z,
            Err(Error::NoUniqueSolution(_)) => return Ok(not_unique),
            Err(e) => return Err(e),
        };
        if z_prime.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Ok(not_unique);
        }
        extend_first_exit_solution(&z_prime, reference_state)
    };
    let lhs = gamma_hat * z[reference_state];
    let rhs = almdp.twisted_backup(reference_state, z.as_slice());
    let gap = (lhs - rhs) / rhs;
    let verdict = if gap > TIE_TOL {
        Verdict::TooLarge
    } else {
        Verdict::TooSmall
    };
    Ok(Probe {
        verdict,
        gap: Some(gap),
        z: Some(z),
    })
}

/// Bisection on `Γ̂ ∈ (gamma_lo, gamma_hi]` using the first-exit reduction.
/// Returns the solution at the final upper end.
pub fn solve_flat_binary_search(
    almdp: &Almdp,
    reference_state: usize,
    epsilon: f64,
    gamma_lo: f64,
    gamma_hi: f64,
) -> Result<(ZValueTable, GainEstimate)> {
    solve_flat_binary_search_traced(almdp, reference_state, epsilon, gamma_lo, gamma_hi, |_| {})
}

/// Default upper end of the gain bracket: `e^{η max_s R(s)}`, which is `1`
/// when all rewards are nonpositive.
pub fn default_gamma_hi(almdp: &Almdp) -> f64 {
    let rmax = almdp.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (almdp.eta * rmax.max(0.0)).exp()
}

/// [`solve_flat_binary_search`] with a callback invoked after every step.
pub fn solve_flat_binary_search_traced(
    almdp: &Almdp,
    reference_state: usize,
    epsilon: f64,
    gamma_lo: f64,
    gamma_hi: f64,
    mut on_step: impl FnMut(&BisectionStep),
) -> Result<(ZValueTable, GainEstimate)> {
    almdp.check_state(reference_state)?;
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(gamma_lo >= 0.0 && gamma_hi > gamma_lo) {
        return Err(Error::Bracket {
            lo: gamma_lo,
            hi: gamma_hi,
        });
    }
    // The upper end must not test as too small, beyond a tie.
    let top = probe_flat(almdp, reference_state, gamma_hi)?;
    match top.gap {
        Some(gap) if gap > -1e-9 => {}
        _ => {
            return Err(Error::Bracket {
                lo: gamma_lo,
                hi: gamma_hi,
            })
        }
    }
    if gamma_lo > 0.0 {
        let bottom = probe_flat(almdp, reference_state, gamma_lo)?;
        if bottom.verdict == Verdict::TooLarge {
            return Err(Error::Bracket {
                lo: gamma_lo,
                hi: gamma_hi,
            });
        }
    }
    let mut best = top.z.expect("unique at the upper end");
    let (mut lo, mut hi) = (gamma_lo, gamma_hi);
    let mut iteration = 0;
    while hi - lo > epsilon {
        let gamma_hat = 0.5 * (lo + hi);
        let probe = probe_flat(almdp, reference_state, gamma_hat)?;
        match probe.verdict {
            Verdict::TooLarge => {
                hi = gamma_hat;
                best = probe.z.clone().expect("unique when too large");
            }
            Verdict::TooSmall | Verdict::NotUnique => lo = gamma_hat,
        }
        iteration += 1;
        on_step(&BisectionStep {
            iteration,
            gamma_hat,
            lo,
            hi,
            verdict: probe.verdict,
            z: probe.z,
        });
    }
    Ok((best, GainEstimate::from_gamma(hi, almdp.eta)))
}

/// Soft TD error `r − ρ̂ + (1/η) ln Σ P(s'|s) e^{η v̂(s')} − v̂(s)`, with a
/// max-shifted log-sum-exp.
pub fn soft_td_error(almdp: &Almdp, state: usize, reward_sample: f64, v_hat: &[f64], rho_hat: f64) -> f64 {
    let eta = almdp.eta;
    let lse = log_sum_exp_weighted(
        almdp
            .transitions
            .row(state)
            .iter()
            .map(|&(c, p)| (p, eta * v_hat[c])),
    );
    reward_sample - rho_hat + lse / eta - v_hat[state]
}

/// Soft Bellman operator `T(v)(s) = R(s) + (1/η) ln Σ P(s'|s) e^{η v(s')}`.
pub fn soft_bellman_operator(almdp: &Almdp, v: &[f64]) -> Vec<f64> {
    let eta = almdp.eta;
    (0..almdp.n_states())
        .map(|s| {
            let lse = log_sum_exp_weighted(
                almdp
                    .transitions
                    .row(s)
                    .iter()
                    .map(|&(c, p)| (p, eta * v[c])),
            );
            almdp.rewards[s] + lse / eta
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_loop(r: f64, eta: f64) -> Almdp {
        Almdp::new(
            vec!["s".into()],
            SparseRows::from_rows(1, vec![vec![(0, 1.0)]]),
            vec![r],
            eta,
        )
        .unwrap()
    }

    fn two_state(rewards: [f64; 2]) -> Almdp {
        Almdp::new(
            vec!["a".into(), "b".into()],
            SparseRows::from_rows(2, vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 1.0)]]),
            rewards.to_vec(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rvi_single_state() {
        let (z, g) = relative_value_iteration(&self_loop(0.7, 2.0), 0, 1e-12, 100).unwrap();
        assert_eq!(z.as_slice(), &[1.0]);
        assert!((g.gamma_hat - (1.4f64).exp()).abs() < 1e-12);
        assert!((g.rho_hat - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rvi_uniform_rewards() {
        let a = two_state([-0.4, -0.4]);
        let (z, g) = relative_value_iteration(&a, 1, 1e-13, 10_000).unwrap();
        assert!((g.rho_hat + 0.4).abs() < 1e-10);
        assert!(z.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn rejects_disconnected_support() {
        let p = SparseRows::from_rows(2, vec![vec![(0, 1.0)], vec![(1, 1.0)]]);
        assert!(Almdp::new(vec!["a".into(), "b".into()], p, vec![0.0; 2], 1.0).is_err());
    }

    #[test]
    fn reduction_structure() {
        let a = two_state([0.0, 0.0]);
        let l = to_first_exit(&a, 0, 0.0).unwrap();
        assert_eq!(l.n_nonterminal(), 1);
        assert_eq!(l.n_terminal(), 1);
        assert_eq!(l.rewards(), &[0.0]);
        let l = to_first_exit(&a.with_reward_shift(-1.0), 1, -0.25).unwrap();
        assert_eq!(l.rewards(), &[-0.75]);
        assert_eq!(l.labels()[1], "b");
    }

    #[test]
    fn extend_reinserts_reference() {
        let zp = ZValueTable::new(vec![2.0, 3.0, 1.0]);
        assert_eq!(extend_first_exit_solution(&zp, 1).as_slice(), &[2.0, 1.0, 3.0]);
        assert_eq!(extend_first_exit_solution(&zp, 0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn bisection_zero_rewards() {
        let a = two_state([0.0, 0.0]);
        let (z, g) = solve_flat_binary_search(&a, 0, 1e-9, 0.0, 1.0).unwrap();
        assert!((g.gamma_hat - 1.0).abs() <= 1e-9);
        assert!(z.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn bisection_rejects_bad_bracket() {
        // Positive rewards put Γ above 1.
        let a = two_state([1.0, 0.5]);
        assert!(matches!(
            solve_flat_binary_search(&a, 0, 1e-6, 0.0, 1.0),
            Err(Error::Bracket { .. })
        ));
        assert!(solve_flat_binary_search(&a, 0, 1e-6, 0.0, default_gamma_hi(&a)).is_ok());
    }

    #[test]
    fn td_error_examples() {
        let a = self_loop(1.0, 1.0);
        assert_eq!(soft_td_error(&a, 0, 1.0, &[0.0], 0.0), 1.0);
    }

    #[test]
    fn gain_estimate_consistency() {
        let g = GainEstimate::from_rho(-0.3, 2.0);
        assert!((g.gamma_hat - (-0.6f64).exp()).abs() < 1e-15);
        let h = GainEstimate::from_gamma(g.gamma_hat, 2.0);
        assert!((h.rho_hat + 0.3).abs() < 1e-15);
    }
}
