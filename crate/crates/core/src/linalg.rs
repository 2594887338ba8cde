//! Small numerical kernels: sparse row storage for transition tables and a
//! dense LU solver with partial pivoting.

use serde::{Deserialize, Serialize};

/// Row-sparse nonnegative matrix. Row `i` holds `(column, weight)` pairs sorted
/// by column with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRows {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    /// Builds from unsorted entries; duplicate columns within a row are summed
    /// and explicit zeros are dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut row| {
                row.sort_by_key(|&(c, _)| c);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (c, w) in row {
                    match merged.last_mut() {
                        Some((lc, lw)) if *lc == c => *lw += w,
                        _ => merged.push((c, w)),
                    }
                }
                merged.retain(|&(_, w)| w != 0.0);
                merged
            })
            .collect();
        SparseRows { n_cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * x[c]).sum())
            .collect()
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; self.n_cols];
                for &(c, w) in row {
                    d[c] = w;
                }
                d
            })
            .collect()
    }
}

/// Failure of [`lu_solve`]: the pivot at `column` fell below the singularity
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
    pub pivot: f64,
}

/// Relative pivot threshold below which a system is declared singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Solves `A X = B` in place for several right-hand sides by Gaussian
/// elimination with partial pivoting. `a` is row-major `n × n`; each entry of
/// `rhs` is a length-`n` column and is overwritten by the solution.
pub fn lu_solve(mut a: Vec<Vec<f64>>, rhs: &mut [Vec<f64>]) -> Result<(), Singular> {
    let n = a.len();
    let scale = a
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_abs > SINGULAR_PIVOT * scale) {
            return Err(Singular {
                column: col,
                pivot: piv_abs,
            });
        }
        if piv_row != col {
            a.swap(piv_row, col);
            for b in rhs.iter_mut() {
                b.swap(piv_row, col);
            }
        }
        let pivot = a[col][col];
        for r in col + 1..n {
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(r);
            let src = &upper[col];
            let dst = &mut lower[0];
            for c in col..n {
                dst[c] -= factor * src[c];
            }
            for b in rhs.iter_mut() {
                b[r] -= factor * b[col];
            }
        }
    }
    for b in rhs.iter_mut() {
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in r + 1..n {
                acc -= a[r][c] * b[c];
            }
            b[r] = acc / a[r][r];
        }
    }
    Ok(())
}

/// Max-norm of `a - b`.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `ln Σ_i w_i e^{x_i}` over the nonzero weights, shifted by the max exponent.
/// Returns `-inf` when every weighted exponent is `-inf`.
pub fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let m = terms
        .clone()
        .filter(|&(w, _)| w > 0.0)
        .map(|(_, x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = terms
        .filter(|&(w, _)| w > 0.0)
        .map(|(w, x)| w * (x - m).exp())
        .sum();
    m + s.ln()
}
