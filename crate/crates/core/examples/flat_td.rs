//! Differential soft TD learning on a two-room grid, evaluated against the
//! relative value iteration oracle.

use halmdp::bench::compute_mae;
use halmdp::almdp::relative_value_iteration;
use halmdp::envs::{build_nroom, NRoomSpec};
use halmdp::learner::{run_flat_learner, LearnerConfig};

fn main() -> halmdp::Result<()> {
    let env = build_nroom(&NRoomSpec::row(2, 5))?;
    let s_star = env.oracle_reference_state;
    let (z, gain) = relative_value_iteration(&env.almdp, s_star, 1e-12, 10_000_000)?;
    let config = LearnerConfig {
        steps: 200_000,
        eval_every: 20_000,
        lambda: 0.5,
        alpha0: 0.1,
        alpha_decay_c: 1000.0,
        ..Default::default()
    };
    let curve = run_flat_learner(&env.almdp, env.restart_state, &config, |z_hat| {
        compute_mae(z_hat, z.as_slice(), s_star).unwrap_or(f64::NAN)
    })?;
    println!("{} states, oracle rho {:.6}", env.almdp.n_states(), gain.rho_hat);
    for c in &curve {
        println!("  step {:>6}  mae {:.3e}  rho_hat {:+.6}", c.step, c.mae, c.rho_hat);
    }
    Ok(())
}
