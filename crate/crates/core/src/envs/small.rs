//! Small instances used by tests and examples.

use super::EnvBundle;
use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::hierarchy::{ClassDeclarations, PartitionSpec};
use crate::linalg::SparseRows;
use crate::lmdp::FirstExitLmdp;

/// Corridor of `n` nonterminals with a terminal at each end. Every cell
/// moves left or right with probability 1/2; rewards are `reward`, `J = 0`.
pub fn corridor_first_exit(n: usize, reward: f64, eta: f64) -> Result<FirstExitLmdp> {
    if n == 0 {
        return Err(Error::Config("corridor needs at least one cell".into()));
    }
    let (left, right) = (n, n + 1);
    let rows = (0..n)
        .map(|s| {
            let l = if s == 0 { left } else { s - 1 };
            let r = if s + 1 == n { right } else { s + 1 };
            vec![(l, 0.5), (r, 0.5)]
        })
        .collect();
    FirstExitLmdp::new(
        (0..n).map(|i| format!("c{i}")).collect(),
        vec!["L".into(), "R".into()],
        SparseRows::from_rows(n + 2, rows),
        vec![reward; n],
        vec![0.0; 2],
        eta,
    )
}

/// Ring of `n` states moving to either neighbor with probability 1/2.
/// State `reward_state` earns `reward`, all others 0.
pub fn ring(n: usize, reward_state: usize, reward: f64, eta: f64) -> Result<Almdp> {
    if n < 2 || reward_state >= n {
        return Err(Error::Config(format!("invalid ring: n={n}, reward_state={reward_state}")));
    }
    let rows = (0..n)
        .map(|s| vec![((s + n - 1) % n, 0.5), ((s + 1) % n, 0.5)])
        .collect();
    let mut rewards = vec![0.0; n];
    rewards[reward_state] = reward;
    Almdp::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        SparseRows::from_rows(n, rows),
        rewards,
        eta,
    )
}

/// Ten-state corridor with reflecting ends, reward −1 except 0 at the right
/// end, split into two rooms of five. Each room is its own class.
pub fn two_room_corridor(eta: f64) -> Result<EnvBundle> {
    let n = 10;
    let rows = (0..n)
        .map(|s| match s {
            0 => vec![(1, 1.0)],
            _ if s == n - 1 => vec![(n - 2, 1.0)],
            _ => vec![(s - 1, 0.5), (s + 1, 0.5)],
        })
        .collect();
    let mut rewards = vec![-1.0; n];
    rewards[n - 1] = 0.0;
    let almdp = Almdp::new(
        (0..n).map(|i| format!("c{i}")).collect(),
        SparseRows::from_rows(n, rows),
        rewards,
        eta,
    )?;
    let partition = PartitionSpec::new(n, vec![(0..5).collect(), (5..10).collect()])?;
    let declarations = ClassDeclarations::induced(&almdp, &partition)?;
    EnvBundle::new("two-room-corridor".into(), almdp, partition, declarations, 0)
}
