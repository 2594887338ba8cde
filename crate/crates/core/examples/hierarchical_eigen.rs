//! Solves the four-room and taxi domains with the hierarchical bisection and
//! compares against flat relative value iteration.

use halmdp::almdp::relative_value_iteration;
use halmdp::envs::{build_nroom, build_taxi, EnvBundle, NRoomSpec, TaxiSpec};
use halmdp::hierarchy::{algorithm1_eigenvector, EigenConfig};
use std::time::Instant;

fn run(env: &EnvBundle) -> halmdp::Result<()> {
    let d = env.decomposition()?;
    let s_star = d.reference_state();
    let t = Instant::now();
    let sol = algorithm1_eigenvector(&d, &EigenConfig::default())?;
    let elapsed = t.elapsed();
    let z = sol.reconstruct(&d)?.normalized_at(s_star);
    let (z_ref, gain) = relative_value_iteration(&env.almdp, s_star, 1e-12, 10_000_000)?;
    let max_rel = z
        .as_slice()
        .iter()
        .zip(z_ref.as_slice())
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    println!("{}", env.name);
    println!("  representation_size {}", d.representation_size());
    println!("  gamma hierarchical {:.12} flat {:.12}", sol.gain.gamma_hat, gain.gamma_hat);
    println!("  bisection steps {} in {:.2?}", sol.iterations, elapsed);
    println!("  max relative error of z {max_rel:.3e}");
    Ok(())
}

fn main() -> halmdp::Result<()> {
    run(&build_nroom(&NRoomSpec::default())?)?;
    run(&build_taxi(&TaxiSpec::default())?)?;
    Ok(())
}
