//! Continuing taxi domain. A passenger waits at a depot with a destination;
//! entering the passenger's depot picks them up, and entering the destination
//! drops them off. After a drop-off a new passenger appears at another depot
//! with a random destination, and the taxi stays where it is.
//!
//! States: `wait(p, d, cell)` with `cell ≠ depot p`, `ride(d, cell)` with
//! `cell ≠ depot d`, and one `delivered(d)` state per depot that jumps
//! uniformly to the nine states `wait(p, q, depot d)` with `p ≠ d`, `q ≠ p`.

use super::EnvBundle;
use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::hierarchy::{induced_representative, BlockRole, ClassDeclarations, PartitionSpec};
use crate::linalg::SparseRows;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxiSpec {
    pub grid_size: usize,
    /// Four depot cells as `[row, col]`. Defaults depend on `grid_size`.
    pub depot_locations: Option<Vec<[usize; 2]>>,
    pub reward_step: f64,
    /// Reward of the drop-off state.
    pub reward_dropoff: f64,
    pub eta: f64,
}

impl Default for TaxiSpec {
    fn default() -> Self {
        TaxiSpec {
            grid_size: 5,
            depot_locations: None,
            reward_step: -1.0,
            reward_dropoff: 0.0,
            eta: 1.0,
        }
    }
}

impl TaxiSpec {
    pub fn with_grid(grid_size: usize) -> Self {
        TaxiSpec {
            grid_size,
            ..Default::default()
        }
    }

    pub fn depots(&self) -> Vec<(usize, usize)> {
        match &self.depot_locations {
            Some(d) => d.iter().map(|&[r, c]| (r, c)).collect(),
            None if self.grid_size == 5 => vec![(0, 0), (0, 4), (4, 0), (4, 3)],
            None => {
                let n = self.grid_size.max(2) - 1;
                vec![(0, 0), (0, n), (n, 0), (n, n.saturating_sub(1))]
            }
        }
    }

    /// Blocked moves between horizontally adjacent cells `(row, col)` and
    /// `(row, col + 1)`. The 5×5 grid uses the classic wall layout.
    fn walls(&self) -> Vec<(usize, usize)> {
        if self.grid_size == 5 {
            vec![(0, 1), (1, 1), (3, 0), (4, 0), (3, 2), (4, 2)]
        } else {
            Vec::new()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config(format!("grid_size must be at least 2, got {}", self.grid_size)));
        }
        let depots = self.depots();
        if depots.len() != 4 {
            return Err(Error::Config(format!("taxi needs 4 depots, got {}", depots.len())));
        }
        for (i, &(r, c)) in depots.iter().enumerate() {
            if r >= self.grid_size || c >= self.grid_size {
                return Err(Error::Config(format!("depot ({r}, {c}) lies outside the grid")));
            }
            if depots[..i].contains(&(r, c)) {
                return Err(Error::Config(format!("depot ({r}, {c}) is listed twice")));
            }
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

fn neighbors(spec: &TaxiSpec, walls: &[(usize, usize)], cell: usize) -> Vec<usize> {
    let n = spec.grid_size;
    let (r, c) = (cell / n, cell % n);
    let mut out = Vec::with_capacity(4);
    if r > 0 {
        out.push(cell - n);
    }
    if r + 1 < n {
        out.push(cell + n);
    }
    if c > 0 && !walls.contains(&(r, c - 1)) {
        out.push(cell - 1);
    }
    if c + 1 < n && !walls.contains(&(r, c)) {
        out.push(cell + 1);
    }
    out
}

/// Builds the taxi ALMDP with 12 waiting blocks, 4 riding blocks, and 4
/// drop-off relays. Waiting blocks with the same pickup depot share a class,
/// as do riding blocks with the same destination.
pub fn build_taxi(spec: &TaxiSpec) -> Result<EnvBundle> {
    spec.validate()?;
    let n = spec.grid_size;
    let cells = n * n;
    let walls = spec.walls();
    let depots: Vec<usize> = spec.depots().iter().map(|&(r, c)| r * n + c).collect();
    let names = ["R", "G", "Y", "B"];

    // Index tables.
    let mut labels = Vec::new();
    let mut wait = vec![vec![vec![usize::MAX; cells]; 4]; 4];
    let mut wait_blocks = Vec::new();
    for p in 0..4 {
        for d in (0..4).filter(|&d| d != p) {
            let mut block = Vec::new();
            for cell in (0..cells).filter(|&c| c != depots[p]) {
                wait[p][d][cell] = labels.len();
                block.push(labels.len());
                labels.push(format!("wait:{}>{}@{},{}", names[p], names[d], cell / n, cell % n));
            }
            wait_blocks.push((p, d, block));
        }
    }
    let mut ride = vec![vec![usize::MAX; cells]; 4];
    let mut ride_blocks = Vec::new();
    for d in 0..4 {
        let mut block = Vec::new();
        for cell in (0..cells).filter(|&c| c != depots[d]) {
            ride[d][cell] = labels.len();
            block.push(labels.len());
            labels.push(format!("ride:{}@{},{}", names[d], cell / n, cell % n));
        }
        ride_blocks.push((d, block));
    }
    let delivered: Vec<usize> = (0..4)
        .map(|d| {
            labels.push(format!("delivered:{}", names[d]));
            labels.len() - 1
        })
        .collect();
    let n_states = labels.len();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_states];
    let mut rewards = vec![spec.reward_step; n_states];
    let uniform = |targets: Vec<usize>| -> Vec<(usize, f64)> {
        let p = 1.0 / targets.len() as f64;
        targets.into_iter().map(|t| (t, p)).collect()
    };
    for (p, d, block) in &wait_blocks {
        for &s in block {
            let cell = (0..cells).find(|&c| wait[*p][*d][c] == s).expect("indexed");
            let targets = neighbors(spec, &walls, cell)
                .into_iter()
                .map(|c| if c == depots[*p] { ride[*d][c] } else { wait[*p][*d][c] })
                .collect();
            rows[s] = uniform(targets);
        }
    }
    for (d, block) in &ride_blocks {
        for &s in block {
            let cell = (0..cells).find(|&c| ride[*d][c] == s).expect("indexed");
            let targets = neighbors(spec, &walls, cell)
                .into_iter()
                .map(|c| if c == depots[*d] { delivered[*d] } else { ride[*d][c] })
                .collect();
            rows[s] = uniform(targets);
        }
    }
    for d in 0..4 {
        let targets = (0..4)
            .filter(|&p| p != d)
            .flat_map(|p| (0..4).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| wait[p][q][depots[d]])
            .collect();
        rows[delivered[d]] = uniform(targets);
        rewards[delivered[d]] = spec.reward_dropoff;
    }

    let almdp = Almdp::new(labels, SparseRows::from_rows(n_states, rows), rewards, spec.eta)?;
    let mut blocks: Vec<Vec<usize>> = wait_blocks.iter().map(|(_, _, b)| b.clone()).collect();
    blocks.extend(ride_blocks.iter().map(|(_, b)| b.clone()));
    blocks.extend(delivered.iter().map(|&s| vec![s]));
    let partition = PartitionSpec::new(n_states, blocks)?;

    // Class p for waiting at depot p, class 4 + d for riding to depot d; the
    // first block of each class induces the representative.
    let mut representatives = Vec::with_capacity(8);
    let mut roles = Vec::with_capacity(partition.n_blocks());
    for p in 0..4 {
        let first = wait_blocks.iter().position(|(q, _, _)| *q == p).expect("three blocks per depot");
        representatives.push(induced_representative(&almdp, &partition, first)?);
    }
    for d in 0..4 {
        representatives.push(induced_representative(&almdp, &partition, wait_blocks.len() + d)?);
    }
    for (p, d, block) in &wait_blocks {
        roles.push(BlockRole::Subtask {
            class: *p,
            state_map: (0..block.len()).collect(),
            terminal_map: vec![(ride[*d][depots[*p]], 0)],
        });
    }
    for (d, block) in &ride_blocks {
        roles.push(BlockRole::Subtask {
            class: 4 + d,
            state_map: (0..block.len()).collect(),
            terminal_map: vec![(delivered[*d], 0)],
        });
    }
    roles.extend((0..4).map(|_| BlockRole::Relay));
    let declarations = ClassDeclarations { representatives, roles };
    let start = wait_blocks[0].2[0];
    EnvBundle::new(format!("taxi-{n}x{n}"), almdp, partition, declarations, start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_structure() {
        let env = build_taxi(&TaxiSpec::default()).unwrap();
        assert_eq!(env.partition.n_blocks(), 16 + 4);
        assert_eq!(env.almdp.n_states(), 12 * 24 + 4 * 24 + 4);
        let size = env.decomposition().unwrap().representation_size();
        assert_eq!(size.to_string(), "E=16 C=8 K=24 N=1 total=208");
    }

    #[test]
    fn eight_by_eight_builds() {
        let env = build_taxi(&TaxiSpec::with_grid(8)).unwrap();
        assert_eq!(env.almdp.n_states(), 16 * 63 + 4);
    }

    #[test]
    fn walls_block_moves() {
        let spec = TaxiSpec::default();
        let walls = spec.walls();
        // (0,1) cannot move right into (0,2).
        assert!(!neighbors(&spec, &walls, 1).contains(&2));
        assert!(neighbors(&spec, &walls, 2 * 5 + 1).contains(&(2 * 5 + 2)));
    }

    #[test]
    fn rejects_duplicate_depots() {
        let spec = TaxiSpec {
            depot_locations: Some(vec![[0, 0], [0, 0], [1, 1], [2, 2]]),
            ..Default::default()
        };
        assert!(build_taxi(&spec).is_err());
    }
}
