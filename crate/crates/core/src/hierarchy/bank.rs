//! Base-LMDP banks: one first-exit solution per representative terminal,
//! parameterized by the gain estimate.

use super::decomposition::{BaseValues, Decomposition};
use crate::error::{Error, Result};
use crate::lmdp::{solve_first_exit_direct_multi, FirstExitLmdp, ZValueTable};
use rayon::prelude::*;

/// Relative tolerance for negative round-off in base values.
const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BaseLmdpBank {
    pub class_index: usize,
    /// Representative with unshifted rewards; shifted by `−ρ̂` at solve time.
    pub representative: FirstExitLmdp,
    /// `z_j^k` over the representative's states, one per terminal `k`.
    pub base_values: Vec<ZValueTable>,
    pub solved_at_rho: Option<f64>,
}

impl BaseLmdpBank {
    pub fn new(class_index: usize, representative: FirstExitLmdp) -> Self {
        BaseLmdpBank {
            class_index,
            representative,
            base_values: Vec::new(),
            solved_at_rho: None,
        }
    }

    pub fn n_bases(&self) -> usize {
        self.representative.n_terminal()
    }
}

/// Solves the `n` base LMDPs of `bank` with rewards `R − ρ̂` and one-hot
/// terminal desirabilities. A singular system or a solution with negative
/// entries means the subtask has no unique solution at this `ρ̂`.
pub fn solve_base_bank(bank: &BaseLmdpBank, rho_hat: f64) -> Result<BaseLmdpBank> {
    let rep = bank.representative.with_reward_shift(-rho_hat);
    let n = rep.n_nonterminal();
    let m = rep.n_terminal();
    let one_hot: Vec<Vec<f64>> = (0..m)
        .map(|k| (0..m).map(|t| if t == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut tables = solve_first_exit_direct_multi(&rep, &one_hot)?;
    let scale = tables
        .iter()
        .flat_map(|t| t.as_slice()[..n].iter())
        .fold(1.0f64, |a, v| a.max(v.abs()));
    for (k, table) in tables.iter_mut().enumerate() {
        for x in 0..n {
            let v = table[x];
            if !v.is_finite() || v < -NEGATIVE_TOL * scale {
                return Err(Error::NoUniqueSolution(format!(
                    "base {k} of class {} has value {v:e} at state {x} for gain {rho_hat}",
                    bank.class_index
                )));
            }
            if v < 0.0 {
                table[x] = 0.0;
            }
        }
    }
    for x in 0..n {
        let total: f64 = tables.iter().map(|t| t[x]).sum();
        if !(total > 0.0) {
            return Err(Error::NoUniqueSolution(format!(
                "class {} has no positive solution at state {x} for gain {rho_hat}",
                bank.class_index
            )));
        }
    }
    Ok(BaseLmdpBank {
        class_index: bank.class_index,
        representative: bank.representative.clone(),
        base_values: tables,
        solved_at_rho: Some(rho_hat),
    })
}

/// Unsolved banks, one per class of `decomposition`.
pub fn empty_banks(decomposition: &Decomposition) -> Vec<BaseLmdpBank> {
    decomposition
        .representatives()
        .iter()
        .enumerate()
        .map(|(j, rep)| BaseLmdpBank::new(j, rep.clone()))
        .collect()
}

/// Solves every bank at `rho_hat`; classes are solved in parallel.
pub fn solve_all_banks(banks: &[BaseLmdpBank], rho_hat: f64) -> Result<Vec<BaseLmdpBank>> {
    banks.par_iter().map(|b| solve_base_bank(b, rho_hat)).collect()
}

/// Common `ρ̂` of a set of banks, or a staleness error.
pub fn common_rho(banks: &[BaseLmdpBank]) -> Result<f64> {
    let mut rho = None;
    for bank in banks {
        let r = bank.solved_at_rho.ok_or(Error::Stale {
            expected: f64::NAN,
            found: f64::NAN,
        })?;
        match rho {
            None => rho = Some(r),
            Some(expected) if expected != r => return Err(Error::Stale { expected, found: r }),
            _ => {}
        }
    }
    rho.ok_or_else(|| Error::Decomposition("no banks".into()))
}

impl BaseValues for [BaseLmdpBank] {
    fn base_z(&self, class: usize, k: usize, x: usize) -> f64 {
        self[class].base_values[k][x]
    }
}

impl BaseValues for Vec<BaseLmdpBank> {
    fn base_z(&self, class: usize, k: usize, x: usize) -> f64 {
        self[class].base_values[k][x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseRows;
    use crate::lmdp::solve_first_exit_direct;

    fn room() -> FirstExitLmdp {
        // 3-state corridor with terminals at both ends.
        let rows = vec![
            vec![(3, 0.5), (1, 0.5)],
            vec![(0, 0.5), (2, 0.5)],
            vec![(1, 0.5), (4, 0.5)],
        ];
        FirstExitLmdp::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["L".into(), "R".into()],
            SparseRows::from_rows(5, rows),
            vec![-1.0; 3],
            vec![0.0; 2],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn boundary_is_one_hot() {
        let bank = solve_base_bank(&BaseLmdpBank::new(0, room()), -0.5).unwrap();
        assert_eq!(bank.base_values[0][3], 1.0);
        assert_eq!(bank.base_values[0][4], 0.0);
        assert_eq!(bank.base_values[1][4], 1.0);
        assert_eq!(bank.solved_at_rho, Some(-0.5));
    }

    #[test]
    fn sum_of_bases_is_all_ones_task() {
        let rho = -0.5;
        let bank = solve_base_bank(&BaseLmdpBank::new(0, room()), rho).unwrap();
        let oracle = solve_first_exit_direct(&room().with_reward_shift(-rho)).unwrap();
        for x in 0..3 {
            let s = bank.base_values[0][x] + bank.base_values[1][x];
            assert!((s - oracle[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn low_gain_has_no_unique_solution() {
        // Far below the critical gain the interior system is not positive.
        assert!(matches!(
            solve_base_bank(&BaseLmdpBank::new(0, room()), -5.0),
            Err(Error::NoUniqueSolution(_))
        ));
    }

    #[test]
    fn staleness_detected() {
        let a = solve_base_bank(&BaseLmdpBank::new(0, room()), -0.5).unwrap();
        let b = solve_base_bank(&BaseLmdpBank::new(1, room()), -0.4).unwrap();
        assert!(matches!(common_rho(&[a.clone(), b]), Err(Error::Stale { .. })));
        assert_eq!(common_rho(&[a.clone(), a]).unwrap(), -0.5);
    }
}
