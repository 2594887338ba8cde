//! Grid of square rooms joined by doorways, with a goal state that restarts
//! the agent in the top-left corner.
//!
//! Every room maps onto one representative room that has all four doorways
//! and the goal doorway. A cell whose room lacks one of those doorways has
//! fewer open moves; its reward is offset by `ln(open/open_rep)/η` so that
//! `e^{ηR} P` matches the representative on every shared move. The missing
//! doorway becomes a representative terminal that the room never reaches.

use super::EnvBundle;
use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::hierarchy::{BlockRole, ClassDeclarations, PartitionSpec};
use crate::linalg::SparseRows;
use crate::lmdp::FirstExitLmdp;
use serde::{Deserialize, Serialize};

/// Representative terminal order.
pub const TERMINAL_LABELS: [&str; 5] = ["G", "L", "R", "T", "B"];
const G: usize = 0;
const L: usize = 1;
const RIGHT: usize = 2;
const T: usize = 3;
const B: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NRoomSpec {
    pub room_rows: usize,
    pub room_cols: usize,
    /// Interior cells per room side.
    pub room_size: usize,
    /// Room holding the goal doorway, row-major; top-right when absent.
    pub goal_room: Option<usize>,
    pub reward_step: f64,
    pub reward_goal: f64,
    pub eta: f64,
}

impl Default for NRoomSpec {
    fn default() -> Self {
        NRoomSpec {
            room_rows: 2,
            room_cols: 2,
            room_size: 5,
            goal_room: None,
            reward_step: -1.0,
            reward_goal: 0.0,
            eta: 1.0,
        }
    }
}

impl NRoomSpec {
    /// `rooms_per_side × rooms_per_side` rooms.
    pub fn square(rooms_per_side: usize, room_size: usize) -> Self {
        NRoomSpec {
            room_rows: rooms_per_side,
            room_cols: rooms_per_side,
            room_size,
            ..Default::default()
        }
    }

    /// A single row of `n_rooms` rooms.
    pub fn row(n_rooms: usize, room_size: usize) -> Self {
        NRoomSpec {
            room_rows: 1,
            room_cols: n_rooms,
            room_size,
            ..Default::default()
        }
    }

    pub fn n_rooms(&self) -> usize {
        self.room_rows * self.room_cols
    }

    pub fn goal(&self) -> usize {
        self.goal_room.unwrap_or(self.room_cols.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.room_rows == 0 || self.room_cols == 0 {
            return Err(Error::Config("the room grid needs at least one room".into()));
        }
        if self.room_size < 2 {
            return Err(Error::Config(format!("room_size must be at least 2, got {}", self.room_size)));
        }
        if self.goal() >= self.n_rooms() {
            return Err(Error::Config(format!("goal room {} does not exist", self.goal())));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

struct Layout {
    m: usize,
}

impl Layout {
    fn mid(&self) -> usize {
        self.m / 2
    }

    /// Doorway cells of the representative, by terminal.
    fn door_cell(&self, k: usize) -> (usize, usize) {
        let (m, h) = (self.m, self.mid());
        match k {
            G => (1, m - 2),
            L => (h, 0),
            RIGHT => (h, m - 1),
            T => (0, h),
            B => (m - 1, h),
            _ => unreachable!(),
        }
    }

    fn neighbors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let m = self.m;
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((i - 1, j));
        }
        if i + 1 < m {
            out.push((i + 1, j));
        }
        if j > 0 {
            out.push((i, j - 1));
        }
        if j + 1 < m {
            out.push((i, j + 1));
        }
        out
    }

    fn doors_at(&self, i: usize, j: usize) -> Vec<usize> {
        (0..TERMINAL_LABELS.len()).filter(|&k| self.door_cell(k) == (i, j)).collect()
    }
}

/// The shared room: `m²` nonterminals, terminals `G, L, R, T, B`, uniform
/// passive dynamics over open moves, reward `reward_step`, and `J = 0`.
pub fn representative_room(spec: &NRoomSpec) -> Result<FirstExitLmdp> {
    spec.validate()?;
    let lay = Layout { m: spec.room_size };
    let m = lay.m;
    let n = m * m;
    let mut rows = Vec::with_capacity(n);
    for i in 0..m {
        for j in 0..m {
            let mut targets: Vec<usize> = lay.neighbors(i, j).into_iter().map(|(a, b)| a * m + b).collect();
            targets.extend(lay.doors_at(i, j).into_iter().map(|k| n + k));
            let p = 1.0 / targets.len() as f64;
            rows.push(targets.into_iter().map(|t| (t, p)).collect());
        }
    }
    FirstExitLmdp::new(
        (0..n).map(|x| format!("{},{}", x / m, x % m)).collect(),
        TERMINAL_LABELS.iter().map(|s| s.to_string()).collect(),
        SparseRows::from_rows(n + TERMINAL_LABELS.len(), rows),
        vec![spec.reward_step; n],
        vec![0.0; TERMINAL_LABELS.len()],
        spec.eta,
    )
}

/// Builds the N-room ALMDP. States are room-major then row-major within a
/// room; the goal state is last. One block per room plus a relay block for
/// the goal, and a single class.
pub fn build_nroom(spec: &NRoomSpec) -> Result<EnvBundle> {
    spec.validate()?;
    let lay = Layout { m: spec.room_size };
    let m = lay.m;
    let cells = m * m;
    let n_rooms = spec.n_rooms();
    let goal_state = n_rooms * cells;
    let n_states = goal_state + 1;
    let index = |room: usize, i: usize, j: usize| room * cells + i * m + j;
    let h = lay.mid();

    let mut labels = Vec::with_capacity(n_states);
    let mut rows = Vec::with_capacity(n_states);
    let mut rewards = Vec::with_capacity(n_states);
    let mut roles = Vec::with_capacity(n_rooms + 1);
    for room in 0..n_rooms {
        let (a, b) = (room / spec.room_cols, room % spec.room_cols);
        // Neighboring cell across each representative doorway, if present.
        let across = |k: usize| -> Option<usize> {
            match k {
                G => (room == spec.goal()).then_some(goal_state),
                L => (b > 0).then(|| index(room - 1, h, m - 1)),
                RIGHT => (b + 1 < spec.room_cols).then(|| index(room + 1, h, 0)),
                T => (a > 0).then(|| index(room - spec.room_cols, m - 1, h)),
                B => (a + 1 < spec.room_rows).then(|| index(room + spec.room_cols, 0, h)),
                _ => unreachable!(),
            }
        };
        let mut terminal_map = Vec::new();
        for k in 0..TERMINAL_LABELS.len() {
            if let Some(t) = across(k) {
                terminal_map.push((t, k));
            }
        }
        for i in 0..m {
            for j in 0..m {
                labels.push(format!("r{room}:{i},{j}"));
                let inner = lay.neighbors(i, j);
                let rep_doors = lay.doors_at(i, j);
                let mut targets: Vec<usize> = inner.iter().map(|&(x, y)| index(room, x, y)).collect();
                targets.extend(rep_doors.iter().filter_map(|&k| across(k)));
                let open = targets.len();
                let open_rep = inner.len() + rep_doors.len();
                let p = 1.0 / open as f64;
                rows.push(targets.into_iter().map(|t| (t, p)).collect());
                rewards.push(spec.reward_step + (open as f64 / open_rep as f64).ln() / spec.eta);
            }
        }
        roles.push(BlockRole::Subtask {
            class: 0,
            state_map: (0..cells).collect(),
            terminal_map,
        });
    }
    labels.push("G".into());
    rows.push(vec![(index(0, 0, 0), 1.0)]);
    rewards.push(spec.reward_goal);
    roles.push(BlockRole::Relay);

    let almdp = Almdp::new(labels, SparseRows::from_rows(n_states, rows), rewards, spec.eta)?;
    let mut blocks: Vec<Vec<usize>> = (0..n_rooms).map(|r| (r * cells..(r + 1) * cells).collect()).collect();
    blocks.push(vec![goal_state]);
    let partition = PartitionSpec::new(n_states, blocks)?;
    let declarations = ClassDeclarations {
        representatives: vec![representative_room(spec)?],
        roles,
    };
    EnvBundle::new(
        format!("nroom-{}x{}-{}", spec.room_rows, spec.room_cols, m),
        almdp,
        partition,
        declarations,
        index(0, 0, 0),
    )
}
