//! A validated hierarchical decomposition: subtasks, classes, exit set, and
//! compositional reconstruction of values.

use super::partition::{describe_subtask, verify_subtask, BlockRole, ClassDeclarations, PartitionSpec, SubtaskDescriptor};
use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::lmdp::FirstExitLmdp;
use std::fmt;

/// Access to base-LMDP desirabilities `z_j^k(x)` at representative
/// nonterminals. Implemented by exactly solved banks and by online
/// estimates.
pub trait BaseValues {
    fn base_z(&self, class: usize, k: usize, x: usize) -> f64;
}

/// Where a flat state lives in the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Nonterminal `x` of class `class`, inside subtask block `block`.
    Interior { block: usize, class: usize, x: usize },
    /// The single state of a relay block.
    Relay { block: usize },
}

/// Stored values of a decomposition: `E + Σ_j K_j·N_j`, where `K_j` and
/// `N_j` are the nonterminal and terminal counts of class `j`. `K` and `N`
/// report the maxima over classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepresentationSize {
    pub exits: usize,
    pub classes: usize,
    pub k: usize,
    pub n: usize,
    pub total: usize,
}

impl fmt::Display for RepresentationSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E={} C={} K={} N={} total={}",
            self.exits, self.classes, self.k, self.n, self.total
        )
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    almdp: Almdp,
    partition: PartitionSpec,
    representatives: Vec<FirstExitLmdp>,
    subtasks: Vec<Option<SubtaskDescriptor>>,
    slots: Vec<Slot>,
    exits: Vec<usize>,
    exit_pos: Vec<Option<usize>>,
    /// Per block, `(exit position of τ, representative terminal k)` over `T_i`.
    terminal_slots: Vec<Vec<(usize, usize)>>,
    reference_state: usize,
}

impl Decomposition {
    /// Validates the declarations, verifies every class equivalence, and
    /// builds the exit set `E = ∪ T_i` over subtask blocks. The reference
    /// state defaults to the smallest exit.
    pub fn new(almdp: Almdp, partition: PartitionSpec, declarations: ClassDeclarations) -> Result<Self> {
        if partition.n_states() != almdp.n_states() {
            return Err(Error::Dimension {
                expected: almdp.n_states(),
                found: partition.n_states(),
            });
        }
        if declarations.roles.len() != partition.n_blocks() {
            return Err(Error::Decomposition(format!(
                "{} block roles declared for {} blocks",
                declarations.roles.len(),
                partition.n_blocks()
            )));
        }
        let mut subtasks = Vec::with_capacity(partition.n_blocks());
        let mut slots = vec![Slot::Relay { block: 0 }; almdp.n_states()];
        let mut exits = Vec::new();
        for (b, role) in declarations.roles.iter().enumerate() {
            match role {
                BlockRole::Subtask {
                    class,
                    state_map,
                    terminal_map,
                } => {
                    let rep = declarations
                        .representatives
                        .get(*class)
                        .ok_or_else(|| Error::Decomposition(format!("block {b} names unknown class {class}")))?;
                    let desc = describe_subtask(&almdp, &partition, b, *class, state_map, terminal_map, rep)?;
                    verify_subtask(&almdp, &partition, &desc, rep)?;
                    for (pos, &s) in partition.block(b).iter().enumerate() {
                        slots[s] = Slot::Interior {
                            block: b,
                            class: *class,
                            x: desc.state_bijection[pos],
                        };
                    }
                    exits.extend_from_slice(&desc.terminal_states);
                    subtasks.push(Some(desc));
                }
                BlockRole::Relay => {
                    let block = partition.block(b);
                    if block.len() != 1 {
                        return Err(Error::Decomposition(format!(
                            "relay block {b} has {} states; relays hold exactly one",
                            block.len()
                        )));
                    }
                    slots[block[0]] = Slot::Relay { block: b };
                    subtasks.push(None);
                }
            }
        }
        exits.sort_unstable();
        exits.dedup();
        let mut exit_pos = vec![None; almdp.n_states()];
        for (i, &e) in exits.iter().enumerate() {
            exit_pos[e] = Some(i);
        }
        if let Some(s) = (0..almdp.n_states()).find(|&s| matches!(slots[s], Slot::Relay { .. }) && exit_pos[s].is_none()) {
            return Err(Error::Decomposition(format!(
                "relay state `{}` is not a terminal of any subtask",
                almdp.labels()[s]
            )));
        }
        let terminal_slots = subtasks
            .iter()
            .map(|d| match d {
                Some(d) => d
                    .terminal_states
                    .iter()
                    .zip(&d.terminal_bijection)
                    .map(|(&tau, &k)| (exit_pos[tau].expect("terminals are exits"), k))
                    .collect(),
                None => Vec::new(),
            })
            .collect();
        let reference_state = *exits
            .first()
            .ok_or_else(|| Error::Decomposition("the exit set is empty".into()))?;
        Ok(Decomposition {
            almdp,
            partition,
            representatives: declarations.representatives,
            subtasks,
            slots,
            exits,
            exit_pos,
            terminal_slots,
            reference_state,
        })
    }

    /// Decomposition where each block is its own class.
    pub fn induced(almdp: Almdp, partition: PartitionSpec) -> Result<Self> {
        let decl = ClassDeclarations::induced(&almdp, &partition)?;
        Self::new(almdp, partition, decl)
    }

    /// Replaces the reference state; it must be an exit.
    pub fn with_reference_state(mut self, s: usize) -> Result<Self> {
        if self.exit_pos.get(s).copied().flatten().is_none() {
            return Err(Error::Decomposition(format!("reference state {s} is not an exit state")));
        }
        self.reference_state = s;
        Ok(self)
    }

    pub fn almdp(&self) -> &Almdp {
        &self.almdp
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn representatives(&self) -> &[FirstExitLmdp] {
        &self.representatives
    }

    pub fn n_classes(&self) -> usize {
        self.representatives.len()
    }

    /// Descriptor of block `b`, `None` for relays.
    pub fn subtask(&self, b: usize) -> Option<&SubtaskDescriptor> {
        self.subtasks[b].as_ref()
    }

    pub fn subtasks(&self) -> impl Iterator<Item = &SubtaskDescriptor> {
        self.subtasks.iter().flatten()
    }

    pub fn slot(&self, s: usize) -> Slot {
        self.slots[s]
    }

    /// Exit set `E`, sorted.
    pub fn exits(&self) -> &[usize] {
        &self.exits
    }

    pub fn exit_position(&self, s: usize) -> Option<usize> {
        self.exit_pos[s]
    }

    pub fn reference_state(&self) -> usize {
        self.reference_state
    }

    pub fn reference_position(&self) -> usize {
        self.exit_pos[self.reference_state].expect("reference is an exit")
    }

    /// `(exit position, representative terminal)` pairs over `T_i` of block
    /// `b`; empty for relays.
    pub fn terminal_slots(&self, b: usize) -> &[(usize, usize)] {
        &self.terminal_slots[b]
    }

    pub fn representation_size(&self) -> RepresentationSize {
        let k = self.representatives.iter().map(FirstExitLmdp::n_nonterminal).max().unwrap_or(0);
        let n = self.representatives.iter().map(FirstExitLmdp::n_terminal).max().unwrap_or(0);
        let stored: usize = self
            .representatives
            .iter()
            .map(|r| r.n_nonterminal() * r.n_terminal())
            .sum();
        RepresentationSize {
            exits: self.exits.len(),
            classes: self.representatives.len(),
            k,
            n,
            total: self.exits.len() + stored,
        }
    }

    /// Compositional value `Σ_{τ ∈ T_i} z_E(τ) z_j^{k(τ)}(f(s))` for subtask
    /// states; the stored exit value for relays.
    pub fn composite_value(&self, bases: &(impl BaseValues + ?Sized), z_e: &[f64], s: usize) -> f64 {
        match self.slots[s] {
            Slot::Interior { block, class, x } => self.terminal_slots[block]
                .iter()
                .map(|&(e, k)| {
                    let w = z_e[e];
                    if w == 0.0 {
                        0.0
                    } else {
                        w * bases.base_z(class, k, x)
                    }
                })
                .sum(),
            Slot::Relay { .. } => z_e[self.exit_pos[s].expect("relays are exits")],
        }
    }

    /// Value of `s` as seen from the stored representation: `z_E(s)` for
    /// exits, the composition otherwise.
    pub fn current_value(&self, bases: &(impl BaseValues + ?Sized), z_e: &[f64], s: usize) -> f64 {
        match self.exit_pos[s] {
            Some(e) => z_e[e],
            None => self.composite_value(bases, z_e, s),
        }
    }

    /// Value of successor `next` used in a backup at `from`: compositional
    /// inside `from`'s subtask block, the stored exit value across blocks.
    pub fn successor_value(&self, bases: &(impl BaseValues + ?Sized), z_e: &[f64], from: usize, next: usize) -> f64 {
        let same_block = self.partition.block_of(from) == self.partition.block_of(next);
        if same_block && matches!(self.slots[next], Slot::Interior { .. }) {
            self.composite_value(bases, z_e, next)
        } else {
            self.current_value(bases, z_e, next)
        }
    }

    /// `e^{η(R(s) − ρ̂)} Σ P(s'|s) ẑ(s')` with successor values as in
    /// [`Decomposition::successor_value`].
    pub fn backup_value(&self, bases: &(impl BaseValues + ?Sized), z_e: &[f64], s: usize, rho_hat: f64) -> f64 {
        let g: f64 = self
            .almdp
            .transitions()
            .row(s)
            .iter()
            .map(|&(c, p)| p * self.successor_value(bases, z_e, s, c))
            .sum();
        (self.almdp.eta() * (self.almdp.rewards()[s] - rho_hat)).exp() * g
    }

    /// Compositional values over all of `S`.
    pub fn reconstruct_all(&self, bases: &(impl BaseValues + ?Sized), z_e: &[f64]) -> Vec<f64> {
        (0..self.almdp.n_states())
            .map(|s| self.composite_value(bases, z_e, s))
            .collect()
    }
}
