//! Solves a first-exit corridor three ways and composes a new task from
//! base solutions without solving it again.

use halmdp::envs::corridor_first_exit;
use halmdp::lmdp::{compose_values, optimal_policy, solve_first_exit_direct, solve_first_exit_power, value_from_z, DEFAULT_TOL};

fn main() -> halmdp::Result<()> {
    let lmdp = corridor_first_exit(6, -0.2, 1.0)?;
    let direct = solve_first_exit_direct(&lmdp)?;
    let power = solve_first_exit_power(&lmdp, DEFAULT_TOL, 100_000);
    println!("power iteration: converged={} after {} sweeps", power.converged, power.iterations);
    let v = value_from_z(&direct, lmdp.eta())?;
    for (s, label) in lmdp.labels().iter().enumerate().take(lmdp.n_nonterminal()) {
        println!("  {label}: z={:.6} v={:+.4} |power - direct|={:.1e}", direct[s], v[s], (power.z[s] - direct[s]).abs());
    }
    let policy = optimal_policy(&lmdp, &direct)?;
    println!("policy at c0: {:?}", policy.rows().row(0));

    // One base task per terminal: z = 1 at that terminal, 0 at the other.
    let n = lmdp.n_nonterminal();
    let bases = (0..lmdp.n_terminal())
        .map(|k| {
            let mut j = vec![f64::NEG_INFINITY; lmdp.n_terminal()];
            j[k] = 0.0;
            solve_first_exit_direct(&lmdp.with_terminal_rewards(j)?)
        })
        .collect::<halmdp::Result<Vec<_>>>()?;
    // A new task preferring the right exit: J = (-3, 0).
    let target = lmdp.with_terminal_rewards(vec![-3.0, 0.0])?;
    let weights = target.terminal_z();
    let composed = compose_values(&bases, &weights)?;
    let solved = solve_first_exit_direct(&target)?;
    let err = (0..n).map(|s| (composed[s] - solved[s]).abs()).fold(0.0, f64::max);
    println!("composed vs solved, max abs difference {err:.2e}");
    Ok(())
}
