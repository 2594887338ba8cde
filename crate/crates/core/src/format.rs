//! JSON documents for models and partitions. States are referred to by
//! label; probabilities and rewards are plain numbers.

use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::hierarchy::{BlockRole, ClassDeclarations, PartitionSpec};
use crate::linalg::SparseRows;
use crate::lmdp::FirstExitLmdp;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub to: String,
    pub prob: f64,
}

/// An average-reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlmdpDocument {
    pub states: Vec<String>,
    pub eta: f64,
    /// Missing states default to reward 0.
    #[serde(default)]
    pub rewards: BTreeMap<String, f64>,
    pub transitions: Vec<TransitionEntry>,
}

/// A first-exit model. Transitions leave nonterminals only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmdpDocument {
    pub states: Vec<String>,
    pub terminals: Vec<String>,
    pub eta: f64,
    #[serde(default)]
    pub rewards: BTreeMap<String, f64>,
    #[serde(default)]
    pub terminal_rewards: BTreeMap<String, f64>,
    pub transitions: Vec<TransitionEntry>,
}

/// Role of one block. Subtask maps use labels: block state to
/// representative nonterminal, and exit state to representative terminal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoleDocument {
    Subtask {
        class: usize,
        state_map: BTreeMap<String, String>,
        terminal_map: BTreeMap<String, String>,
    },
    Relay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDocument {
    pub states: Vec<String>,
    /// Required on every block when `classes` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<RoleDocument>,
}

/// A partition, optionally with class representatives and block roles.
/// Without `classes` every block becomes its own class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDocument {
    pub blocks: Vec<BlockDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<LmdpDocument>>,
}

/// A model with an optional partition, as stored by `export` and read by
/// the `file` environment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDocument {
    #[serde(default)]
    pub name: String,
    pub almdp: AlmdpDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionDocument>,
    /// Learner start state; defaults to the first state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
}

fn index(labels: &[String]) -> HashMap<&str, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
}

fn lookup(map: &HashMap<&str, usize>, label: &str) -> Result<usize> {
    map.get(label).copied().ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

fn rows_from_entries(
    map: &HashMap<&str, usize>,
    n_rows: usize,
    n_cols: usize,
    entries: &[TransitionEntry],
) -> Result<SparseRows> {
    let mut rows = vec![Vec::new(); n_rows];
    for e in entries {
        let from = lookup(map, &e.from)?;
        if from >= n_rows {
            return Err(Error::InvalidModel(format!("terminal `{}` has outgoing transitions", e.from)));
        }
        rows[from].push((lookup(map, &e.to)?, e.prob));
    }
    Ok(SparseRows::from_rows(n_cols, rows))
}

fn entries_from_rows(labels: &[String], rows: &SparseRows) -> Vec<TransitionEntry> {
    rows.rows()
        .enumerate()
        .flat_map(|(s, row)| {
            row.iter().map(move |&(c, p)| TransitionEntry {
                from: labels[s].clone(),
                to: labels[c].clone(),
                prob: p,
            })
        })
        .collect()
}

fn reward_vector(map: &HashMap<&str, usize>, n: usize, rewards: &BTreeMap<String, f64>, offset: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for (label, &r) in rewards {
        let i = lookup(map, label)?;
        if i < offset || i - offset >= n {
            return Err(Error::UnknownLabel(label.clone()));
        }
        out[i - offset] = r;
    }
    Ok(out)
}

impl AlmdpDocument {
    pub fn from_almdp(almdp: &Almdp) -> Self {
        AlmdpDocument {
            states: almdp.labels().to_vec(),
            eta: almdp.eta(),
            rewards: almdp.labels().iter().cloned().zip(almdp.rewards().iter().copied()).collect(),
            transitions: entries_from_rows(almdp.labels(), almdp.transitions()),
        }
    }

    pub fn to_almdp(&self) -> Result<Almdp> {
        let map = index(&self.states);
        if map.len() != self.states.len() {
            return Err(Error::InvalidModel("duplicate state labels".into()));
        }
        let n = self.states.len();
        let rows = rows_from_entries(&map, n, n, &self.transitions)?;
        let rewards = reward_vector(&map, n, &self.rewards, 0)?;
        Almdp::new(self.states.clone(), rows, rewards, self.eta)
    }
}

impl LmdpDocument {
    pub fn from_lmdp(lmdp: &FirstExitLmdp) -> Self {
        let n = lmdp.n_nonterminal();
        let labels = lmdp.labels();
        LmdpDocument {
            states: labels[..n].to_vec(),
            terminals: labels[n..].to_vec(),
            eta: lmdp.eta(),
            rewards: labels[..n].iter().cloned().zip(lmdp.rewards().iter().copied()).collect(),
            terminal_rewards: labels[n..]
                .iter()
                .cloned()
                .zip(lmdp.terminal_rewards().iter().copied())
                .collect(),
            transitions: entries_from_rows(labels, lmdp.transitions()),
        }
    }

    pub fn to_lmdp(&self) -> Result<FirstExitLmdp> {
        let labels: Vec<String> = self.states.iter().chain(&self.terminals).cloned().collect();
        let map = index(&labels);
        if map.len() != labels.len() {
            return Err(Error::InvalidModel("duplicate state labels".into()));
        }
        let (n, m) = (self.states.len(), self.terminals.len());
        let rows = rows_from_entries(&map, n, n + m, &self.transitions)?;
        FirstExitLmdp::new(
            self.states.clone(),
            self.terminals.clone(),
            rows,
            reward_vector(&map, n, &self.rewards, 0)?,
            reward_vector(&map, m, &self.terminal_rewards, n)?,
            self.eta,
        )
    }
}

impl PartitionDocument {
    pub fn from_parts(almdp: &Almdp, partition: &PartitionSpec, declarations: Option<&ClassDeclarations>) -> Self {
        let labels = almdp.labels();
        let blocks = partition
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let role = declarations.map(|d| match &d.roles[b] {
                    BlockRole::Relay => RoleDocument::Relay,
                    BlockRole::Subtask {
                        class,
                        state_map,
                        terminal_map,
                    } => {
                        let rep = d.representatives[*class].labels();
                        let n = d.representatives[*class].n_nonterminal();
                        RoleDocument::Subtask {
                            class: *class,
                            state_map: block
                                .iter()
                                .zip(state_map)
                                .map(|(&s, &x)| (labels[s].clone(), rep[x].clone()))
                                .collect(),
                            terminal_map: terminal_map
                                .iter()
                                .map(|&(tau, k)| (labels[tau].clone(), rep[n + k].clone()))
                                .collect(),
                        }
                    }
                });
                BlockDocument {
                    states: block.iter().map(|&s| labels[s].clone()).collect(),
                    role,
                }
            })
            .collect();
        PartitionDocument {
            blocks,
            classes: declarations.map(|d| d.representatives.iter().map(LmdpDocument::from_lmdp).collect()),
        }
    }

    /// Resolves labels against `almdp`. Declarations are `None` when the
    /// document carries no classes.
    pub fn to_parts(&self, almdp: &Almdp) -> Result<(PartitionSpec, Option<ClassDeclarations>)> {
        let map = index(almdp.labels());
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.states.iter().map(|l| lookup(&map, l)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let partition = PartitionSpec::new(almdp.n_states(), blocks)?;
        let Some(classes) = &self.classes else {
            return Ok((partition, None));
        };
        let representatives = classes.iter().map(LmdpDocument::to_lmdp).collect::<Result<Vec<_>>>()?;
        let mut roles = Vec::with_capacity(partition.n_blocks());
        for (b, doc) in self.blocks.iter().enumerate() {
            // Documents list blocks in partition order.
            let role = doc
                .role
                .as_ref()
                .ok_or_else(|| Error::Decomposition(format!("block {b} has no role")))?;
            roles.push(match role {
                RoleDocument::Relay => BlockRole::Relay,
                RoleDocument::Subtask {
                    class,
                    state_map,
                    terminal_map,
                } => {
                    let rep = representatives
                        .get(*class)
                        .ok_or_else(|| Error::Decomposition(format!("block {b} names unknown class {class}")))?;
                    let rep_map = index(rep.labels());
                    let n = rep.n_nonterminal();
                    let states = partition
                        .block(b)
                        .iter()
                        .map(|&s| {
                            let label = &almdp.labels()[s];
                            let target = state_map.get(label).ok_or_else(|| Error::Mapping(s))?;
                            let x = lookup(&rep_map, target)?;
                            if x >= n {
                                return Err(Error::Mapping(s));
                            }
                            Ok(x)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let terminals = terminal_map
                        .iter()
                        .map(|(flat, target)| {
                            let tau = lookup(&map, flat)?;
                            let k = lookup(&rep_map, target)?;
                            if k < n {
                                return Err(Error::Mapping(tau));
                            }
                            Ok((tau, k - n))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    BlockRole::Subtask {
                        class: *class,
                        state_map: states,
                        terminal_map: terminals,
                    }
                }
            });
        }
        Ok((
            partition,
            Some(ClassDeclarations {
                representatives,
                roles,
            }),
        ))
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
