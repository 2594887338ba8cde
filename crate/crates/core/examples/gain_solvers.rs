//! Computes the optimal gain of average-reward models with relative value
//! iteration and with bisection over the first-exit reduction.

use halmdp::almdp::{default_gamma_hi, relative_value_iteration, solve_flat_binary_search_traced};
use halmdp::envs::random::random_almdp;
use halmdp::envs::ring;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> halmdp::Result<()> {
    let r = ring(4, 0, 1.0, 1.0)?;
    let (z, gain) = relative_value_iteration(&r, 0, 1e-12, 1_000_000)?;
    println!("ring: rho={:.10} gamma={:.10} z={:?}", gain.rho_hat, gain.gamma_hat, z.as_slice());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_almdp(&mut rng, 12, 3, -2.0, 0.5, 1.0)?;
    let (z_rvi, g_rvi) = relative_value_iteration(&m, 0, 1e-12, 1_000_000)?;
    println!("random model, 12 states: rvi gamma={:.12}", g_rvi.gamma_hat);
    let (z_bis, g_bis) = solve_flat_binary_search_traced(&m, 0, 1e-10, 0.0, default_gamma_hi(&m), |step| {
        if step.iteration % 8 == 0 {
            println!("  step {:2} gamma={:.10} bracket width {:.1e} {:?}", step.iteration, step.gamma_hat, step.hi - step.lo, step.verdict);
        }
    })?;
    let dz = z_rvi.as_slice().iter().zip(z_bis.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("bisection gamma={:.12}, |dgamma|={:.1e}, max |dz|={dz:.1e}", g_bis.gamma_hat, (g_bis.gamma_hat - g_rvi.gamma_hat).abs());
    Ok(())
}
