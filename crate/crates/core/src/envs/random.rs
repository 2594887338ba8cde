//! Random instance generators for property tests and benchmarks.

use crate::almdp::Almdp;
use crate::error::Result;
use crate::linalg::SparseRows;
use crate::lmdp::FirstExitLmdp;
use rand::seq::SliceRandom;
use rand::Rng;

fn normalized(rng: &mut impl Rng, targets: Vec<usize>) -> Vec<(usize, f64)> {
    let w: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    targets.into_iter().zip(w).map(|(t, w)| (t, w / total)).collect()
}

/// Random ALMDP on `n` states. A random Hamiltonian cycle makes the support
/// strongly connected; each state gets up to `extra` further successors.
/// Rewards are uniform in `[r_lo, r_hi)`.
pub fn random_almdp(rng: &mut impl Rng, n: usize, extra: usize, r_lo: f64, r_hi: f64, eta: f64) -> Result<Almdp> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut rows = vec![Vec::new(); n];
    for i in 0..n {
        let (s, t) = (order[i], order[(i + 1) % n]);
        let mut targets = vec![t];
        for _ in 0..rng.gen_range(0..=extra) {
            targets.push(rng.gen_range(0..n));
        }
        targets.sort_unstable();
        targets.dedup();
        rows[s] = normalized(rng, targets);
    }
    let rewards = (0..n)
        .map(|_| if r_hi > r_lo { rng.gen_range(r_lo..r_hi) } else { r_lo })
        .collect();
    Almdp::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        SparseRows::from_rows(n, rows),
        rewards,
        eta,
    )
}

/// Random first-exit LMDP. Nonterminal `s` always reaches `s + 1` (the last
/// one reaches a terminal) and every terminal has an incoming edge, so the
/// instance is well posed. Rewards are uniform in `[r_lo, r_hi)`; terminal
/// rewards uniform in `[-1, 0)`.
pub fn random_first_exit(
    rng: &mut impl Rng,
    n_nonterminal: usize,
    n_terminal: usize,
    extra: usize,
    r_lo: f64,
    r_hi: f64,
    eta: f64,
) -> Result<FirstExitLmdp> {
    let (n, m) = (n_nonterminal, n_terminal);
    let mut targets: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let mut t = vec![if s + 1 < n { s + 1 } else { n + rng.gen_range(0..m) }];
            for _ in 0..rng.gen_range(0..=extra) {
                t.push(rng.gen_range(0..n + m));
            }
            t
        })
        .collect();
    for tau in 0..m {
        targets[rng.gen_range(0..n)].push(n + tau);
    }
    let rows = targets
        .into_iter()
        .map(|mut t| {
            t.sort_unstable();
            t.dedup();
            normalized(rng, t)
        })
        .collect();
    let rewards = (0..n)
        .map(|_| if r_hi > r_lo { rng.gen_range(r_lo..r_hi) } else { r_lo })
        .collect();
    let terminal_rewards = (0..m).map(|_| rng.gen_range(-1.0..0.0)).collect();
    FirstExitLmdp::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        (0..m).map(|i| format!("t{i}")).collect(),
        SparseRows::from_rows(n + m, rows),
        rewards,
        terminal_rewards,
        eta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_produce_valid_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..20 {
            random_almdp(&mut rng, n, 3, -1.0, 1.0, 1.0).unwrap();
            random_first_exit(&mut rng, n, 1 + n % 3, 3, -1.0, -0.1, 1.0).unwrap();
        }
    }
}
