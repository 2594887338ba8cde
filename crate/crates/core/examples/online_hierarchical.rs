//! Learns the four-room domain online with the hierarchical learner and with
//! flat TD, each with its own tuned schedule, at the same sample budget.

use halmdp::almdp::relative_value_iteration;
use halmdp::bench::compute_mae;
use halmdp::envs::{build_nroom, NRoomSpec};
use halmdp::learner::{run_flat_learner, LearnerConfig};
use halmdp::online::run_online_learner_decomposed;

fn main() -> halmdp::Result<()> {
    let env = build_nroom(&NRoomSpec::square(2, 5))?;
    let d = env.decomposition()?;
    let s_star = d.reference_state();
    let (z, _) = relative_value_iteration(&env.almdp, s_star, 1e-12, 10_000_000)?;
    let mae = |z_hat: &[f64]| compute_mae(z_hat, z.as_slice(), s_star).unwrap_or(f64::NAN);
    let steps = 50_000;
    let flat = LearnerConfig {
        steps,
        eval_every: 5000,
        lambda: 0.001,
        alpha0: 1.0,
        alpha_decay_c: 1e5,
        ..Default::default()
    };
    let hier = LearnerConfig {
        lambda: 1.0,
        alpha0: 0.7,
        alpha_decay_c: 1e5,
        alpha_exit0: 1.0,
        alpha_exit_decay_c: 1e5,
        alpha_gain0: 0.3,
        alpha_gain_decay_c: 1000.0,
        ..flat.clone()
    };
    let f = run_flat_learner(&env.almdp, env.restart_state, &flat, mae)?;
    let h = run_online_learner_decomposed(&d, env.restart_state, &hier, mae)?;
    println!("representation_size {}", d.representation_size());
    println!("{:>7}  {:>10}  {:>10}", "step", "flat", "hier");
    for (a, b) in f.iter().zip(&h) {
        println!("{:>7}  {:>10.3e}  {:>10.3e}", a.step, a.mae, b.mae);
    }
    Ok(())
}
