//! Online learning: Z-learning for first-exit LMDPs and the hierarchical
//! learner that estimates base values, the gain, and exit values from a
//! single stream of transitions.

use crate::almdp::Almdp;
use crate::error::{Error, Result};
use crate::hierarchy::{BaseValues, ClassDeclarations, Decomposition, ExitValueVector, PartitionSpec, Slot};
use crate::learner::{is_eval_step, run_flat_learner, sample_weighted, CurveSample, LearnerConfig, LearningCurve, Schedule};
use crate::linalg::log_sum_exp_weighted;
use crate::lmdp::{FirstExitLmdp, ZValueTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Value-space floor standing in for `v = −∞` (read back as `z = 0`).
pub const V_FLOOR: f64 = -1e9;
/// Upper clamp of reconstructed desirabilities.
pub const Z_MAX: f64 = 1e100;
/// TD errors are clamped to `[−TD_CLAMP, TD_CLAMP]`.
pub const TD_CLAMP: f64 = 1e3;

/// An observed transition together with the probabilities needed for
/// importance weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub r: f64,
    pub s_next: usize,
    /// `π̂(s_next|s)` of the policy that generated the sample.
    pub behavior_prob: f64,
    /// `P(s_next|s)`.
    pub passive_prob: f64,
}

fn clamp_td(delta: f64) -> f64 {
    if delta.is_nan() {
        0.0
    } else {
        delta.clamp(-TD_CLAMP, TD_CLAMP)
    }
}

/// Z-learning update `ẑ(s) ← (1−α)ẑ(s) + α e^{ηr} (P/π̂) ẑ(s')`.
pub fn z_learning_step(lmdp: &FirstExitLmdp, z_hat: &ZValueTable, t: &Transition, alpha: f64) -> Result<ZValueTable> {
    if !(t.behavior_prob > 0.0) {
        return Err(Error::ImportanceWeight {
            from: t.s,
            to: t.s_next,
        });
    }
    if z_hat.len() != lmdp.n_states() {
        return Err(Error::Dimension {
            expected: lmdp.n_states(),
            found: z_hat.len(),
        });
    }
    let mut out = z_hat.clone();
    let weight = t.passive_prob / t.behavior_prob;
    out[t.s] = (1.0 - alpha) * z_hat[t.s] + alpha * (lmdp.eta() * t.r).exp() * weight * z_hat[t.s_next];
    Ok(out)
}

/// Episodic Z-learning. Episodes start at a uniformly random nonterminal and
/// follow `π̂ ∝ P ẑ`; each state's rate follows `schedule` over its visits.
pub fn run_z_learning(lmdp: &FirstExitLmdp, steps: u64, schedule: Schedule, seed: u64) -> Result<ZValueTable> {
    let n = lmdp.n_nonterminal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![1.0; lmdp.n_states()];
    z[n..].copy_from_slice(&lmdp.terminal_z());
    let mut z = ZValueTable::new(z);
    let mut visits = vec![0u64; n];
    let mut s = rng.gen_range(0..n);
    for _ in 0..steps {
        let row = lmdp.transitions().row(s);
        let weights: Vec<f64> = row.iter().map(|&(c, p)| p * z[c]).collect();
        let total: f64 = weights.iter().sum();
        let k = sample_weighted(&mut rng, &weights);
        let (next, passive) = row[k];
        let t = Transition {
            s,
            r: lmdp.rewards()[s],
            s_next: next,
            behavior_prob: weights[k] / total,
            passive_prob: passive,
        };
        z = z_learning_step(lmdp, &z, &t, schedule.alpha(visits[s]))?;
        visits[s] += 1;
        s = if next >= n { rng.gen_range(0..n) } else { next };
    }
    Ok(z)
}

/// State of the hierarchical online learner.
#[derive(Debug, Clone)]
pub struct OnlineLearnerState {
    /// Per class `j` and base `k`, value-space estimates over the
    /// representative's nonterminals.
    pub base_v_hats: Vec<Vec<Vec<f64>>>,
    pub z_e_hat: ExitValueVector,
    pub rho_hat: f64,
    pub eta: f64,
    pub lambda: f64,
    pub base_schedule: Schedule,
    pub gain_schedule: Schedule,
    pub exit_schedule: Schedule,
    /// Per class and representative nonterminal.
    pub base_visits: Vec<Vec<u64>>,
    /// Per exit position.
    pub exit_visits: Vec<u64>,
    pub gain_updates: u64,
    pub current_state: usize,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl BaseValues for OnlineLearnerState {
    fn base_z(&self, class: usize, k: usize, x: usize) -> f64 {
        let v = self.base_v_hats[class][k][x];
        if v <= V_FLOOR {
            0.0
        } else {
            (self.eta * v).exp().min(Z_MAX)
        }
    }
}

impl OnlineLearnerState {
    /// Bases start at `z = 1/n` for a class with `n` terminals, exit values
    /// at 1, and `Γ̂ = 1`.
    pub fn new(decomposition: &Decomposition, start: usize, config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        let almdp = decomposition.almdp();
        config.check_eta(almdp.eta())?;
        if start >= almdp.n_states() {
            return Err(Error::Config(format!("start state {start} out of range")));
        }
        let eta = almdp.eta();
        let reps = decomposition.representatives();
        Ok(OnlineLearnerState {
            base_v_hats: reps
                .iter()
                .map(|r| {
                    let v0 = -(r.n_terminal() as f64).ln() / eta;
                    vec![vec![v0; r.n_nonterminal()]; r.n_terminal()]
                })
                .collect(),
            z_e_hat: ExitValueVector::ones(decomposition),
            rho_hat: 0.0,
            eta,
            lambda: config.lambda,
            base_schedule: config.value_schedule()?,
            gain_schedule: config.gain_schedule()?,
            exit_schedule: config.exit_schedule()?,
            base_visits: reps.iter().map(|r| vec![0; r.n_nonterminal()]).collect(),
            exit_visits: vec![0; decomposition.exits().len()],
            gain_updates: 0,
            current_state: start,
            rng_seed: config.seed,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn gamma_hat(&self) -> f64 {
        (self.eta * self.rho_hat).exp()
    }

    /// Reconstructed `ẑ` over all of `S`, clamped to `[0, Z_MAX]`.
    pub fn reconstruct(&self, decomposition: &Decomposition) -> Vec<f64> {
        decomposition
            .reconstruct_all(self, &self.z_e_hat.z_e)
            .into_iter()
            .map(|v| v.clamp(0.0, Z_MAX))
            .collect()
    }

    fn successor_weights(&self, decomposition: &Decomposition, s: usize) -> Vec<f64> {
        decomposition
            .almdp()
            .transitions()
            .row(s)
            .iter()
            .map(|&(c, p)| {
                p * decomposition
                    .successor_value(self, &self.z_e_hat.z_e, s, c)
                    .clamp(0.0, Z_MAX)
            })
            .collect()
    }

    /// Samples `s' ∼ π̂(·|s_t)` with `π̂ ∝ P ẑ`, falling back to `P` when all
    /// successor estimates vanish, and advances the current state.
    pub fn sample_transition(&mut self, decomposition: &Decomposition) -> Transition {
        let almdp = decomposition.almdp();
        let s = self.current_state;
        let row = almdp.transitions().row(s);
        let mut weights = self.successor_weights(decomposition, s);
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            weights = row.iter().map(|&(_, p)| p).collect();
        }
        let total: f64 = weights.iter().sum();
        let k = sample_weighted(&mut self.rng, &weights);
        self.current_state = row[k].0;
        Transition {
            s,
            r: almdp.rewards()[s],
            s_next: row[k].0,
            behavior_prob: weights[k] / total,
            passive_prob: row[k].1,
        }
    }
}

/// Updates all `n` base estimates of the class containing `t.s` at
/// `x = f(s)` with the differential soft TD rule on the representative, with
/// reward `R(x) − ρ̂` and one-hot boundary values. Relay states are skipped.
pub fn intra_class_update(state: &mut OnlineLearnerState, decomposition: &Decomposition, t: &Transition) -> Result<()> {
    let Slot::Interior { block, class, x } = decomposition.slot(t.s) else {
        return Ok(());
    };
    let same_block = decomposition.partition().block_of(t.s_next) == block;
    let leaves_to_terminal = decomposition
        .subtask(block)
        .is_some_and(|d| d.terminal_states.binary_search(&t.s_next).is_ok());
    if !same_block && !leaves_to_terminal {
        return Err(Error::Mapping(t.s_next));
    }
    let rep = &decomposition.representatives()[class];
    let n = rep.n_nonterminal();
    let eta = state.eta;
    let alpha = state.base_schedule.alpha(state.base_visits[class][x]);
    let reward = rep.rewards()[x] - state.rho_hat;
    let row = rep.transitions().row(x);
    for k in 0..rep.n_terminal() {
        let v = &mut state.base_v_hats[class][k];
        let lse = log_sum_exp_weighted(row.iter().map(|&(c, p)| {
            let exponent = if c < n {
                eta * v[c]
            } else if c - n == k {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            (p, exponent)
        }));
        let delta = clamp_td(reward + lse / eta - v[x]);
        v[x] = (v[x] + alpha * delta).max(V_FLOOR);
    }
    state.base_visits[class][x] += 1;
    Ok(())
}

/// Gain update from the shared TD error at `s_t`, with `ẑ(s_t)` and the
/// successor values reconstructed from current estimates:
/// `ρ̂ ← ρ̂ + λ α δ`.
pub fn online_gain_update(state: &mut OnlineLearnerState, decomposition: &Decomposition, t: &Transition) -> f64 {
    let z_e = &state.z_e_hat.z_e;
    let z_s = decomposition.current_value(state, z_e, t.s).clamp(0.0, Z_MAX);
    let g: f64 = decomposition
        .almdp()
        .transitions()
        .row(t.s)
        .iter()
        .map(|&(c, p)| p * decomposition.successor_value(state, z_e, t.s, c).clamp(0.0, Z_MAX))
        .sum();
    let delta = clamp_td(t.r - state.rho_hat + (g.ln() - z_s.ln()) / state.eta);
    let alpha = state.gain_schedule.alpha(state.gain_updates);
    state.rho_hat += state.lambda * alpha * delta;
    state.gain_updates += 1;
    delta
}

/// Moves `ẑ_E(s)` toward its compositional value through the block
/// containing `s` (a one-step backup for relays). The reference state stays
/// pinned at 1.
pub fn exit_value_update(state: &mut OnlineLearnerState, decomposition: &Decomposition, s: usize, alpha: f64) -> Result<()> {
    let e = decomposition.exit_position(s).ok_or(Error::Mapping(s))?;
    if s == decomposition.reference_state() {
        return Ok(());
    }
    let z_e = &state.z_e_hat.z_e;
    let target = match decomposition.slot(s) {
        Slot::Interior { .. } => decomposition.composite_value(state, z_e, s),
        Slot::Relay { .. } => decomposition.backup_value(state, z_e, s, state.rho_hat),
    };
    let old = state.z_e_hat.z_e[e];
    state.z_e_hat.z_e[e] = ((1.0 - alpha) * old + alpha * target).clamp(0.0, Z_MAX);
    Ok(())
}

/// One learner step: sample, update the class bases, the gain, and the exit
/// value when `s_t ∈ E`.
pub fn online_step(state: &mut OnlineLearnerState, decomposition: &Decomposition) -> Result<Transition> {
    let t = state.sample_transition(decomposition);
    intra_class_update(state, decomposition, &t)?;
    online_gain_update(state, decomposition, &t);
    if let Some(e) = decomposition.exit_position(t.s) {
        let alpha = state.exit_schedule.alpha(state.exit_visits[e]);
        exit_value_update(state, decomposition, t.s, alpha)?;
        state.exit_visits[e] += 1;
    }
    Ok(t)
}

/// Runs the hierarchical learner. A single-block partition cannot be
/// decomposed and runs the flat learner instead. Without declarations every
/// block is its own class.
pub fn run_online_learner(
    almdp: &Almdp,
    partition: &PartitionSpec,
    declarations: Option<&ClassDeclarations>,
    start: usize,
    config: &LearnerConfig,
    eval: impl FnMut(&[f64]) -> f64,
) -> Result<LearningCurve> {
    if partition.n_blocks() == 1 {
        return run_flat_learner(almdp, start, config, eval);
    }
    let declarations = match declarations {
        Some(d) => d.clone(),
        None => ClassDeclarations::induced(almdp, partition)?,
    };
    let decomposition = Decomposition::new(almdp.clone(), partition.clone(), declarations)?;
    run_online_learner_decomposed(&decomposition, start, config, eval)
}

/// [`run_online_learner`] on a prepared decomposition.
pub fn run_online_learner_decomposed(
    decomposition: &Decomposition,
    start: usize,
    config: &LearnerConfig,
    mut eval: impl FnMut(&[f64]) -> f64,
) -> Result<LearningCurve> {
    let mut state = OnlineLearnerState::new(decomposition, start, config)?;
    let mut curve = vec![CurveSample {
        step: 0,
        mae: eval(&state.reconstruct(decomposition)),
        rho_hat: state.rho_hat,
    }];
    for step in 1..=config.steps {
        online_step(&mut state, decomposition)?;
        if is_eval_step(step, config.steps, config.eval_every) {
            curve.push(CurveSample {
                step,
                mae: eval(&state.reconstruct(decomposition)),
                rho_hat: state.rho_hat,
            });
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{corridor_first_exit, two_room_corridor};

    #[test]
    fn z_learning_examples() {
        let l = corridor_first_exit(3, 0.0, 1.0).unwrap();
        let z = ZValueTable::new(vec![0.3, 1.0, 1.0, 1.0, 1.0]);
        let t = Transition {
            s: 0,
            r: 0.0,
            s_next: 1,
            behavior_prob: 0.5,
            passive_prob: 0.5,
        };
        assert_eq!(z_learning_step(&l, &z, &t, 0.0).unwrap(), z);
        let out = z_learning_step(&l, &z, &t, 0.25).unwrap();
        assert!((out[0] - (0.75 * 0.3 + 0.25)).abs() < 1e-15);
        let bad = Transition { behavior_prob: 0.0, ..t };
        assert!(matches!(
            z_learning_step(&l, &z, &bad, 0.5),
            Err(Error::ImportanceWeight { .. })
        ));
    }

    #[test]
    fn boundary_one_hot_update() {
        let env = two_room_corridor(1.0).unwrap();
        let d = env.decomposition().unwrap();
        let cfg = LearnerConfig {
            alpha0: 1.0,
            alpha_decay_c: f64::MAX,
            ..Default::default()
        };
        let mut st = OnlineLearnerState::new(&d, 4, &cfg).unwrap();
        // State 4 of room 1 moves to 3 or to the terminal 5.
        let t = Transition {
            s: 4,
            r: -1.0,
            s_next: 5,
            behavior_prob: 0.5,
            passive_prob: 0.5,
        };
        let before = st.base_v_hats[0][0][4];
        intra_class_update(&mut st, &d, &t).unwrap();
        // One base only: target −1 + ln(0.5·e^{v(3)} + 0.5·1).
        let expected = -1.0 + (0.5 * before.exp() + 0.5f64).ln();
        assert!((st.base_v_hats[0][0][4] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_rates_leave_state() {
        let env = two_room_corridor(1.0).unwrap();
        let d = env.decomposition().unwrap();
        let cfg = LearnerConfig {
            alpha0: 0.0,
            alpha_exit0: 0.0,
            alpha_gain0: 0.0,
            ..Default::default()
        };
        let mut st = OnlineLearnerState::new(&d, 0, &cfg).unwrap();
        let before = (st.base_v_hats.clone(), st.z_e_hat.clone(), st.rho_hat);
        for _ in 0..100 {
            online_step(&mut st, &d).unwrap();
        }
        assert_eq!((st.base_v_hats.clone(), st.z_e_hat.clone(), st.rho_hat), before);
        assert_eq!(st.gamma_hat(), 1.0);
    }

    #[test]
    fn rejects_unmapped_transition() {
        let env = two_room_corridor(1.0).unwrap();
        let d = env.decomposition().unwrap();
        let mut st = OnlineLearnerState::new(&d, 0, &LearnerConfig::default()).unwrap();
        let t = Transition {
            s: 0,
            r: -1.0,
            s_next: 9,
            behavior_prob: 1.0,
            passive_prob: 1.0,
        };
        assert!(matches!(intra_class_update(&mut st, &d, &t), Err(Error::Mapping(9))));
    }
}
