//! Bisection on the exponentiated gain using the hierarchical
//! representation: base banks, the exit system, and a test at `s*`.

use super::bank::{empty_banks, solve_all_banks, BaseLmdpBank};
use super::decomposition::Decomposition;
use super::exit::{build_exit_matrix, reconstruct_all, solve_exit_system, ExitValueVector};
use crate::almdp::{GainEstimate, Verdict, TIE_TOL};
use crate::error::{Error, Result};
use crate::lmdp::ZValueTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenConfig {
    pub epsilon: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub exit_tol: f64,
    pub exit_max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            epsilon: 1e-8,
            gamma_lo: 0.0,
            gamma_hi: 1.0,
            exit_tol: 1e-14,
            exit_max_iter: 1_000_000,
        }
    }
}

/// One bisection step.
#[derive(Debug, Clone)]
pub struct EigenStep {
    pub iteration: usize,
    pub gamma_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub verdict: Verdict,
    /// Reconstructed values over `S` at this candidate, when unique.
    pub z: Option<ZValueTable>,
}

/// Banks, exit values, and gain at the final upper end of the bracket.
#[derive(Debug, Clone)]
pub struct HierarchicalSolution {
    pub banks: Vec<BaseLmdpBank>,
    pub exit_values: ExitValueVector,
    pub gain: GainEstimate,
    pub iterations: usize,
}

impl HierarchicalSolution {
    /// Reconstructed values over `S`.
    pub fn reconstruct(&self, decomposition: &Decomposition) -> Result<ZValueTable> {
        reconstruct_all(decomposition, &self.banks, &self.exit_values)
    }
}

struct Probe {
    verdict: Verdict,
    gap: Option<f64>,
    artifacts: Option<(Vec<BaseLmdpBank>, ExitValueVector)>,
}

fn probe(decomposition: &Decomposition, banks: &[BaseLmdpBank], gamma_hat: f64, config: &EigenConfig) -> Result<Probe> {
    let almdp = decomposition.almdp();
    let rho_hat = gamma_hat.ln() / almdp.eta();
    let not_unique = Probe {
        verdict: Verdict::NotUnique,
        gap: None,
        artifacts: None,
    };
    let solved = match solve_all_banks(banks, rho_hat) {
        Ok(b) => b,
        Err(Error::NoUniqueSolution(_)) => return Ok(not_unique),
        Err(e) => return Err(e),
    };
    let g = build_exit_matrix(decomposition, &solved)?;
    let sol = solve_exit_system(&g, config.exit_tol, config.exit_max_iter);
    if !sol.unique {
        return Ok(not_unique);
    }
    let s_star = decomposition.reference_state();
    let z_e = &sol.values.z_e;
    let lhs = gamma_hat * z_e[decomposition.reference_position()];
    // Successors of s* inside its block are reconstructed, others read z_E.
    let rhs = decomposition.backup_value(&solved, z_e, s_star, 0.0);
    if !(rhs > 0.0) || !rhs.is_finite() {
        return Ok(not_unique);
    }
    let gap = (lhs - rhs) / rhs;
    let verdict = if gap > TIE_TOL {
        Verdict::TooLarge
    } else {
        Verdict::TooSmall
    };
    Ok(Probe {
        verdict,
        gap: Some(gap),
        artifacts: Some((solved, sol.values)),
    })
}

/// Bisection on `Γ̂ ∈ (lo, hi]`. Each candidate solves every bank at
/// `ρ̂ = ln Γ̂ / η`, builds and solves the exit system, then compares
/// `Γ̂ ẑ_E(s*)` with `e^{ηR(s*)} Σ P(s|s*) ẑ(s)`.
pub fn algorithm1_eigenvector(decomposition: &Decomposition, config: &EigenConfig) -> Result<HierarchicalSolution> {
    algorithm1_eigenvector_traced(decomposition, config, |_| {})
}

/// [`algorithm1_eigenvector`] with a callback after every bisection step.
pub fn algorithm1_eigenvector_traced(
    decomposition: &Decomposition,
    config: &EigenConfig,
    mut on_step: impl FnMut(&EigenStep),
) -> Result<HierarchicalSolution> {
    if !(config.epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    let (lo0, hi0) = (config.gamma_lo, config.gamma_hi);
    if !(lo0 >= 0.0 && hi0 > lo0) {
        return Err(Error::Bracket { lo: lo0, hi: hi0 });
    }
    let eta = decomposition.almdp().eta();
    let banks = empty_banks(decomposition);
    let top = probe(decomposition, &banks, hi0, config)?;
    match (top.gap, &top.artifacts) {
        (Some(gap), Some(_)) if gap > -1e-9 => {}
        _ => return Err(Error::Bracket { lo: lo0, hi: hi0 }),
    }
    if lo0 > 0.0 && probe(decomposition, &banks, lo0, config)?.verdict == Verdict::TooLarge {
        return Err(Error::Bracket { lo: lo0, hi: hi0 });
    }
    let mut best = top.artifacts.expect("checked above");
    let (mut lo, mut hi) = (lo0, hi0);
    let mut iteration = 0;
    while hi - lo > config.epsilon {
        let gamma_hat = 0.5 * (lo + hi);
        let p = probe(decomposition, &banks, gamma_hat, config)?;
        match p.verdict {
            Verdict::TooLarge => hi = gamma_hat,
            Verdict::TooSmall | Verdict::NotUnique => lo = gamma_hat,
        }
        iteration += 1;
        let z = p
            .artifacts
            .as_ref()
            .map(|(b, v)| ZValueTable::new(decomposition.reconstruct_all(b, &v.z_e)));
        on_step(&EigenStep {
            iteration,
            gamma_hat,
            lo,
            hi,
            verdict: p.verdict,
            z,
        });
        if p.verdict == Verdict::TooLarge {
            best = p.artifacts.expect("unique when too large");
        }
    }
    Ok(HierarchicalSolution {
        banks: best.0,
        exit_values: best.1,
        gain: GainEstimate::from_gamma(hi, eta),
        iterations: iteration,
    })
}
