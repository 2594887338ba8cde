//! Learning-rate schedules, learner configuration, and the flat differential
//! soft TD learner.

use crate::almdp::{soft_td_error, Almdp};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-index learning rate `α(ν) = a₀·c / (ν + c)`, where `ν` is a visit
/// count. Satisfies the Robbins–Monro conditions for `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha0: f64,
    pub decay_c: f64,
}

impl Schedule {
    pub fn new(alpha0: f64, decay_c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha0) {
            return Err(Error::Config(format!("learning rate {alpha0} outside [0, 1]")));
        }
        if !(decay_c > 0.0) {
            return Err(Error::Config(format!("decay constant must be positive, got {decay_c}")));
        }
        Ok(Schedule { alpha0, decay_c })
    }

    /// Constant rate.
    pub fn constant(alpha: f64) -> Self {
        Schedule {
            alpha0: alpha,
            decay_c: f64::INFINITY,
        }
    }

    pub fn alpha(&self, visits: u64) -> f64 {
        if self.decay_c.is_infinite() {
            return self.alpha0;
        }
        self.alpha0 * self.decay_c / (visits as f64 + self.decay_c)
    }
}

/// Learner configuration shared by the flat and hierarchical learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub steps: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub lambda: f64,
    pub alpha0: f64,
    pub alpha_decay_c: f64,
    pub eta: f64,
    pub alpha_exit0: f64,
    pub alpha_exit_decay_c: f64,
    pub alpha_gain0: f64,
    pub alpha_gain_decay_c: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            steps: 200_000,
            eval_every: 1000,
            seed: 0,
            lambda: 1.0,
            alpha0: 0.5,
            alpha_decay_c: 1000.0,
            eta: 1.0,
            alpha_exit0: 0.5,
            alpha_exit_decay_c: 1000.0,
            alpha_gain0: 0.05,
            alpha_gain_decay_c: 100_000.0,
        }
    }
}

impl LearnerConfig {
    pub fn value_schedule(&self) -> Result<Schedule> {
        Schedule::new(self.alpha0, self.alpha_decay_c)
    }

    pub fn exit_schedule(&self) -> Result<Schedule> {
        Schedule::new(self.alpha_exit0, self.alpha_exit_decay_c)
    }

    pub fn gain_schedule(&self) -> Result<Schedule> {
        Schedule::new(self.alpha_gain0, self.alpha_gain_decay_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        self.value_schedule()?;
        self.exit_schedule()?;
        self.gain_schedule()?;
        Ok(())
    }

    pub(crate) fn check_eta(&self, model_eta: f64) -> Result<()> {
        if self.eta != model_eta {
            return Err(Error::Config(format!(
                "learner eta {} differs from the model's eta {model_eta}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// One evaluation point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub step: u64,
    pub mae: f64,
    pub rho_hat: f64,
}

pub type LearningCurve = Vec<CurveSample>;

/// Steps at which a run of `steps` steps is evaluated: `0`, every
/// `eval_every`, and the final step.
pub(crate) fn is_eval_step(step: u64, steps: u64, eval_every: u64) -> bool {
    step % eval_every == 0 || step == steps
}

/// Samples an index with probability proportional to `weights`.
pub(crate) fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// A sampled transition with the reward observed on leaving `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatTransition {
    pub s: usize,
    pub r: f64,
    pub s_next: usize,
}

/// State of the flat differential soft TD learner.
#[derive(Debug, Clone)]
pub struct FlatLearnerState {
    pub v_hat: Vec<f64>,
    pub rho_hat: f64,
    pub alpha_schedule: Schedule,
    pub lambda: f64,
    pub visit_counts: Vec<u64>,
    pub rng_seed: u64,
    pub current_state: usize,
    rng: ChaCha8Rng,
}

impl FlatLearnerState {
    pub fn new(n_states: usize, start: usize, alpha_schedule: Schedule, lambda: f64, seed: u64) -> Self {
        FlatLearnerState {
            v_hat: vec![0.0; n_states],
            rho_hat: 0.0,
            alpha_schedule,
            lambda,
            visit_counts: vec![0; n_states],
            rng_seed: seed,
            current_state: start,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Samples `s' ∼ π̂(·|s)` with `π̂(s'|s) ∝ P(s'|s) e^{η v̂(s')}` from the
    /// current state and advances it.
    pub fn sample_transition(&mut self, almdp: &Almdp) -> FlatTransition {
        let s = self.current_state;
        let row = almdp.transitions().row(s);
        let eta = almdp.eta();
        let vmax = row
            .iter()
            .map(|&(c, _)| self.v_hat[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = row
            .iter()
            .map(|&(c, p)| p * (eta * (self.v_hat[c] - vmax)).exp())
            .collect();
        let k = sample_weighted(&mut self.rng, &weights);
        let s_next = row[k].0;
        self.current_state = s_next;
        FlatTransition {
            s,
            r: almdp.rewards()[s],
            s_next,
        }
    }

    /// Desirability estimate `e^{η v̂}`.
    pub fn z_estimate(&self, eta: f64) -> Vec<f64> {
        self.v_hat.iter().map(|v| (eta * v).exp()).collect()
    }
}

/// One differential soft TD update: `v̂(s) += αδ`, `ρ̂ += λαδ` with the same
/// `δ`; `α` is read at the pre-increment visit count of `s`. Returns `δ`.
pub fn flat_td_step(learner: &mut FlatLearnerState, almdp: &Almdp, transition: FlatTransition) -> f64 {
    let s = transition.s;
    let delta = soft_td_error(almdp, s, transition.r, &learner.v_hat, learner.rho_hat);
    let alpha = learner.alpha_schedule.alpha(learner.visit_counts[s]);
    learner.v_hat[s] += alpha * delta;
    learner.rho_hat += learner.lambda * alpha * delta;
    learner.visit_counts[s] += 1;
    delta
}

/// Runs the flat learner on-policy from `start`. `eval` receives the current
/// desirability estimate over all states and returns its MAE; it is called at
/// step 0, every `eval_every` steps, and at the final step.
pub fn run_flat_learner(
    almdp: &Almdp,
    start: usize,
    config: &LearnerConfig,
    mut eval: impl FnMut(&[f64]) -> f64,
) -> Result<LearningCurve> {
    config.validate()?;
    config.check_eta(almdp.eta())?;
    if start >= almdp.n_states() {
        return Err(Error::Config(format!("start state {start} out of range")));
    }
    let mut learner = FlatLearnerState::new(
        almdp.n_states(),
        start,
        config.value_schedule()?,
        config.lambda,
        config.seed,
    );
    let eta = almdp.eta();
    let mut curve = vec![CurveSample {
        step: 0,
        mae: eval(&learner.z_estimate(eta)),
        rho_hat: learner.rho_hat,
    }];
    for step in 1..=config.steps {
        let t = learner.sample_transition(almdp);
        flat_td_step(&mut learner, almdp, t);
        if is_eval_step(step, config.steps, config.eval_every) {
            curve.push(CurveSample {
                step,
                mae: eval(&learner.z_estimate(eta)),
                rho_hat: learner.rho_hat,
            });
        }
    }
    Ok(curve)
}
