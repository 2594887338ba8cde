//! Z-learning on a first-exit corridor with importance-weighted samples.

use halmdp::envs::corridor_first_exit;
use halmdp::learner::Schedule;
use halmdp::lmdp::solve_first_exit_direct;
use halmdp::online::run_z_learning;

fn main() -> halmdp::Result<()> {
    let lmdp = corridor_first_exit(10, -1.0, 1.0)?;
    let z = solve_first_exit_direct(&lmdp)?;
    for steps in [100, 1000, 10_000, 100_000] {
        let z_hat = run_z_learning(&lmdp, steps, Schedule::new(1.0, 1000.0)?, 0)?;
        let err = (0..lmdp.n_nonterminal())
            .map(|s| ((z_hat[s] - z[s]) / z[s]).abs())
            .fold(0.0, f64::max);
        println!("{steps:>6} steps: max relative error {err:.3e}");
    }
    Ok(())
}
