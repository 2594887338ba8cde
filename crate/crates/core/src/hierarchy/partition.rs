//! Partitions of the state space, induced subtasks, and equivalence-class
//! declarations.

use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::linalg::SparseRows;
use crate::lmdp::FirstExitLmdp;
use serde::{Deserialize, Serialize};

/// Absolute tolerance of the class verifier, applied to log-weights
/// `ηR(s) + ln P(s'|s)` of the twisted kernel.
pub const CLASS_MATCH_TOL: f64 = 1e-12;

/// Disjoint blocks `S_1..S_L` covering `S`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl PartitionSpec {
    /// Builds from explicit blocks. Block order is kept; states inside each
    /// block are sorted.
    pub fn new(n_states: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; n_states];
        let mut blocks = blocks;
        for (b, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::Decomposition(format!("block {b} is empty")));
            }
            block.sort_unstable();
            for &s in block.iter() {
                if s >= n_states {
                    return Err(Error::Decomposition(format!(
                        "block {b} names state {s}, but there are only {n_states} states"
                    )));
                }
                if block_of[s] != usize::MAX {
                    return Err(Error::Decomposition(format!(
                        "state {s} appears in blocks {} and {b}",
                        block_of[s]
                    )));
                }
                block_of[s] = b;
            }
        }
        if let Some(s) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::Decomposition(format!("state {s} is not covered by any block")));
        }
        Ok(PartitionSpec { blocks, block_of })
    }

    /// Builds from a state → block map; block indices must be `0..L` with no
    /// gaps.
    pub fn from_block_of(block_of: &[usize]) -> Result<Self> {
        let n_blocks = block_of.iter().map(|b| b + 1).max().unwrap_or(0);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (s, &b) in block_of.iter().enumerate() {
            blocks[b].push(s);
        }
        Self::new(block_of.len(), blocks)
    }

    pub fn single_block(n_states: usize) -> Self {
        PartitionSpec {
            blocks: vec![(0..n_states).collect()],
            block_of: vec![0; n_states],
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.block_of[s]
    }

    /// Position of `s` inside its block.
    pub fn position_in_block(&self, s: usize) -> usize {
        self.blocks[self.block_of[s]]
            .binary_search(&s)
            .expect("state belongs to its block")
    }
}

/// Terminal set `T_i`: states outside block `b` reachable in one step from
/// inside it, sorted.
pub fn block_terminals(almdp: &Almdp, partition: &PartitionSpec, b: usize) -> Vec<usize> {
    let mut out: Vec<usize> = partition
        .block(b)
        .iter()
        .flat_map(|&s| almdp.transitions().row(s).iter().map(|&(c, _)| c))
        .filter(|&c| partition.block_of(c) != b)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Subtask `L_i` of one block and its map into a class representative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtaskDescriptor {
    pub block_index: usize,
    /// `T_i`, sorted.
    pub terminal_states: Vec<usize>,
    pub class_index: usize,
    /// Representative nonterminal of each block state, in block order.
    pub state_bijection: Vec<usize>,
    /// Representative terminal of each entry of `terminal_states`.
    pub terminal_bijection: Vec<usize>,
}

/// Induces one subtask per block, each its own class with identity maps.
/// Fails when some block cannot be left.
pub fn induce_subtasks(almdp: &Almdp, partition: &PartitionSpec) -> Result<Vec<SubtaskDescriptor>> {
    check_partition_size(almdp, partition)?;
    (0..partition.n_blocks())
        .map(|b| {
            let terminal_states = block_terminals(almdp, partition, b);
            if terminal_states.is_empty() {
                return Err(Error::Decomposition(format!(
                    "block {b} has no terminal states; the subtask cannot exit"
                )));
            }
            Ok(SubtaskDescriptor {
                block_index: b,
                class_index: b,
                state_bijection: (0..partition.block(b).len()).collect(),
                terminal_bijection: (0..terminal_states.len()).collect(),
                terminal_states,
            })
        })
        .collect()
}

fn check_partition_size(almdp: &Almdp, partition: &PartitionSpec) -> Result<()> {
    if partition.n_states() != almdp.n_states() {
        return Err(Error::Dimension {
            expected: almdp.n_states(),
            found: partition.n_states(),
        });
    }
    Ok(())
}

/// First-exit LMDP induced by block `b`: nonterminals in block order,
/// terminals `T_i`, rewards `R`, and `J = 0`.
pub fn induced_representative(almdp: &Almdp, partition: &PartitionSpec, b: usize) -> Result<FirstExitLmdp> {
    let block = partition.block(b);
    let terminals = block_terminals(almdp, partition, b);
    let n = block.len();
    let col = |s: usize| -> usize {
        if partition.block_of(s) == b {
            partition.position_in_block(s)
        } else {
            n + terminals.binary_search(&s).expect("terminal of the block")
        }
    };
    let rows = block
        .iter()
        .map(|&s| almdp.transitions().row(s).iter().map(|&(c, p)| (col(c), p)).collect())
        .collect();
    let labels = |ids: &[usize]| ids.iter().map(|&s| almdp.labels()[s].clone()).collect();
    FirstExitLmdp::new(
        labels(block),
        labels(&terminals),
        SparseRows::from_rows(n + terminals.len(), rows),
        block.iter().map(|&s| almdp.rewards()[s]).collect(),
        vec![0.0; terminals.len()],
        almdp.eta(),
    )
}

/// How a block enters the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockRole {
    /// A first-exit subtask mapped into class `class`.
    Subtask {
        class: usize,
        /// Representative nonterminal of each block state, in block order.
        state_map: Vec<usize>,
        /// `(flat terminal state, representative terminal index)` for every
        /// state of `T_i`. Representative terminals outside the image are
        /// unreachable from this block and carry zero weight.
        terminal_map: Vec<(usize, usize)>,
    },
    /// A single state whose value is a one-step backup of its successors.
    /// It holds no base LMDPs and its successors do not join the exit set.
    Relay,
}

/// Class representatives and the role of every block.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDeclarations {
    /// One first-exit LMDP per class, with unshifted rewards and `J = 0`.
    pub representatives: Vec<FirstExitLmdp>,
    pub roles: Vec<BlockRole>,
}

impl ClassDeclarations {
    /// Every block is its own class, represented by its induced subtask.
    pub fn induced(almdp: &Almdp, partition: &PartitionSpec) -> Result<Self> {
        let subtasks = induce_subtasks(almdp, partition)?;
        let representatives = (0..partition.n_blocks())
            .map(|b| induced_representative(almdp, partition, b))
            .collect::<Result<Vec<_>>>()?;
        let roles = subtasks
            .into_iter()
            .map(|d| BlockRole::Subtask {
                class: d.class_index,
                state_map: d.state_bijection,
                terminal_map: d.terminal_states.into_iter().zip(d.terminal_bijection).collect(),
            })
            .collect();
        Ok(ClassDeclarations { representatives, roles })
    }
}

/// Checks the declaration of one subtask block and returns its descriptor.
pub(crate) fn describe_subtask(
    almdp: &Almdp,
    partition: &PartitionSpec,
    b: usize,
    class: usize,
    state_map: &[usize],
    terminal_map: &[(usize, usize)],
    rep: &FirstExitLmdp,
) -> Result<SubtaskDescriptor> {
    let block = partition.block(b);
    let terminal_states = block_terminals(almdp, partition, b);
    if terminal_states.is_empty() {
        return Err(Error::Decomposition(format!(
            "block {b} has no terminal states; the subtask cannot exit"
        )));
    }
    if state_map.len() != block.len() || rep.n_nonterminal() != block.len() {
        return Err(Error::Decomposition(format!(
            "block {b} has {} states, its state map {} entries, and class {class} {} nonterminals",
            block.len(),
            state_map.len(),
            rep.n_nonterminal()
        )));
    }
    let mut seen = vec![false; rep.n_nonterminal()];
    for &x in state_map {
        if x >= seen.len() || std::mem::replace(&mut seen[x], true) {
            return Err(Error::Decomposition(format!(
                "state map of block {b} is not a bijection onto class {class}"
            )));
        }
    }
    let mut terminal_bijection = vec![usize::MAX; terminal_states.len()];
    let mut used = vec![false; rep.n_terminal()];
    for &(tau, k) in terminal_map {
        let Ok(pos) = terminal_states.binary_search(&tau) else {
            return Err(Error::Decomposition(format!(
                "terminal map of block {b} names state {tau}, which is not a terminal of the block"
            )));
        };
        if k >= used.len() || std::mem::replace(&mut used[k], true) || terminal_bijection[pos] != usize::MAX {
            return Err(Error::Decomposition(format!(
                "terminal map of block {b} is not injective into class {class}"
            )));
        }
        terminal_bijection[pos] = k;
    }
    if let Some(pos) = terminal_bijection.iter().position(|&k| k == usize::MAX) {
        return Err(Error::Mapping(terminal_states[pos]));
    }
    Ok(SubtaskDescriptor {
        block_index: b,
        terminal_states,
        class_index: class,
        state_bijection: state_map.to_vec(),
        terminal_bijection,
    })
}

/// Equivalence check for one subtask: transported through the declared maps,
/// every twisted-kernel entry `e^{ηR(s)} P(s'|s)` of the block matches the
/// representative's entry within [`CLASS_MATCH_TOL`] in log space. Entries of
/// the representative into terminals outside the image must be the only
/// unmatched ones.
pub fn verify_subtask(
    almdp: &Almdp,
    partition: &PartitionSpec,
    desc: &SubtaskDescriptor,
    rep: &FirstExitLmdp,
) -> Result<()> {
    let b = desc.block_index;
    let n = rep.n_nonterminal();
    if rep.eta() != almdp.eta() {
        return Err(Error::Decomposition(format!(
            "class {} uses eta {} but the model uses {}",
            desc.class_index,
            rep.eta(),
            almdp.eta()
        )));
    }
    let mut in_image = vec![false; rep.n_terminal()];
    for &k in &desc.terminal_bijection {
        in_image[k] = true;
    }
    let eta = almdp.eta();
    for (pos, &s) in partition.block(b).iter().enumerate() {
        let x = desc.state_bijection[pos];
        let rep_row = rep.transitions().row(x);
        let mut matched = vec![false; rep_row.len()];
        for &(c, p) in almdp.transitions().row(s) {
            let y = if partition.block_of(c) == b {
                desc.state_bijection[partition.position_in_block(c)]
            } else {
                let t = desc
                    .terminal_states
                    .binary_search(&c)
                    .map_err(|_| Error::Mapping(c))?;
                n + desc.terminal_bijection[t]
            };
            let Ok(k) = rep_row.binary_search_by_key(&y, |&(col, _)| col) else {
                return Err(Error::Decomposition(format!(
                    "state `{}` of block {b} moves to `{}`, which has no counterpart in class {}",
                    almdp.labels()[s],
                    almdp.labels()[c],
                    desc.class_index
                )));
            };
            let lhs = eta * almdp.rewards()[s] + p.ln();
            let rhs = eta * rep.rewards()[x] + rep_row[k].1.ln();
            if (lhs - rhs).abs() > CLASS_MATCH_TOL {
                return Err(Error::Decomposition(format!(
                    "twisted kernel of `{}` -> `{}` differs from class {} by {:e}",
                    almdp.labels()[s],
                    almdp.labels()[c],
                    desc.class_index,
                    lhs - rhs
                )));
            }
            matched[k] = true;
        }
        for (k, &(col, _)) in rep_row.iter().enumerate() {
            if !matched[k] && (col < n || in_image[col - n]) {
                return Err(Error::Decomposition(format!(
                    "class {} state {x} has a transition with no counterpart in block {b}",
                    desc.class_index
                )));
            }
        }
    }
    Ok(())
}
