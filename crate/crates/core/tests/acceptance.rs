//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero when any criterion fails.

mod common;

use common::{first_exit_dense_with, max_abs_err, max_rel_err, perron_root, rng};
use halmdp::almdp::{
    default_gamma_hi, relative_value_iteration, soft_bellman_operator, solve_flat_binary_search, to_first_exit,
};
use halmdp::bench::{compute_mae, run_experiment, Algorithm, EnvConfig, ExperimentConfig, RESULTS_FILE};
use halmdp::envs::random::{random_almdp, random_first_exit};
use halmdp::envs::{build_nroom, build_taxi, ring, EnvBundle, NRoomSpec, TaxiSpec};
use halmdp::hierarchy::{algorithm1_eigenvector, EigenConfig};
use halmdp::learner::{run_flat_learner, LearnerConfig};
use halmdp::lmdp::{compose_values, solve_first_exit_direct, ZValueTable};
use halmdp::online::run_online_learner_decomposed;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn four_room() -> EnvBundle {
    build_nroom(&NRoomSpec::square(2, 5)).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let eps = 1e-8;
    let mut pass = true;
    let mut parts = Vec::new();
    for env in [four_room(), build_taxi(&TaxiSpec::default()).unwrap()] {
        let d = env.decomposition().unwrap();
        let sr = d.reference_state();
        let (z_rvi, g_rvi) = relative_value_iteration(&env.almdp, sr, 1e-13, 10_000_000).unwrap();
        let dense = perron_root(&env.almdp);
        let start = Instant::now();
        let sol = algorithm1_eigenvector(&d, &EigenConfig { epsilon: eps, ..EigenConfig::default() }).unwrap();
        let z = sol.reconstruct(&d).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let dg = (sol.gain.gamma_hat - g_rvi.gamma_hat).abs();
        let rel = max_rel_err(z.as_slice(), z_rvi.as_slice());
        let ok = dg <= eps + 1e-10 && (g_rvi.gamma_hat - dense).abs() < 1e-10 && rel <= 1e-5 && secs < 10.0;
        pass &= ok;
        parts.push(format!("{} |dGamma|={dg:.1e} rel_z={rel:.1e} time={secs:.2}s", env.name));
    }
    outcome(pass, parts.join("; "))
}

fn gain_correctness() -> Outcome {
    let eps = 1e-8;
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    let trials = 60;
    for i in 0..trials {
        let n = 2 + i % 19;
        let a = random_almdp(&mut r, n, 3, -1.0, 1.0, 1.0).unwrap();
        let (_, g) = solve_flat_binary_search(&a, 0, eps, 0.0, default_gamma_hi(&a)).unwrap();
        worst = worst.max((g.gamma_hat - perron_root(&a)).abs());
    }
    outcome(worst <= eps + 1e-8, format!("{trials} models, max |dGamma|={worst:.1e}"))
}

fn compositionality() -> Outcome {
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    let trials = 25;
    for i in 0..trials {
        let m = 1 + i % 3;
        let n = 12 - m - i % 6;
        let l = random_first_exit(&mut r, n, m, 3, -1.0, -0.1, 1.0).unwrap();
        let unit = l.with_terminal_rewards(vec![0.0; m]).unwrap();
        let bases: Vec<ZValueTable> = (0..m)
            .map(|k| {
                let mut e = vec![0.0; m];
                e[k] = 1.0;
                ZValueTable::new(first_exit_dense_with(&unit, &e))
            })
            .collect();
        let composed = compose_values(&bases, &l.terminal_z()).unwrap();
        let direct = solve_first_exit_direct(&l).unwrap();
        worst = worst.max(max_abs_err(composed.as_slice(), direct.as_slice()));
    }
    outcome(worst <= 1e-9, format!("{trials} models, max abs err={worst:.1e}"))
}

fn representation_accounting() -> Outcome {
    let size = four_room().decomposition().unwrap().representation_size().to_string();
    outcome(size == "E=9 C=1 K=25 N=5 total=134", size)
}

fn operator_properties() -> Outcome {
    let mut r = rng(31);
    let (mut worst_gap, mut worst_shift): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    let trials = 1000;
    for i in 0..trials {
        let eta = r.gen_range(0.2..3.0);
        let a = random_almdp(&mut r, 1 + i % 20, 3, -1.0, 1.0, eta).unwrap();
        let n = a.n_states();
        let vec = |r: &mut rand_chacha::ChaCha8Rng| (0..n).map(|_| r.gen_range(-20.0..20.0)).collect::<Vec<f64>>();
        let (x, y) = (vec(&mut r), vec(&mut r));
        let gap = max_abs_err(&soft_bellman_operator(&a, &x), &soft_bellman_operator(&a, &y)) - max_abs_err(&x, &y);
        worst_gap = worst_gap.max(gap);
        let c = r.gen_range(-10.0..10.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let lifted: Vec<f64> = soft_bellman_operator(&a, &x).iter().map(|v| v + c).collect();
        worst_shift = worst_shift.max(max_abs_err(&soft_bellman_operator(&a, &shifted), &lifted));
    }
    outcome(
        worst_gap <= 1e-10 && worst_shift <= 1e-10,
        format!("{trials} trials each, max(|Tx-Ty|-|x-y|)={worst_gap:.1e}, shift err={worst_shift:.1e}"),
    )
}

fn gain_monotonicity() -> Outcome {
    let mut r = rng(5);
    let mut min_margin = f64::INFINITY;
    for i in 0..10 {
        let a = random_almdp(&mut r, 4 + i, 3, -1.0, 0.0, 1.0).unwrap();
        let rho = perron_root(&a).ln() / a.eta();
        let zs: Vec<Vec<f64>> = (0..5)
            .map(|k| {
                let l = to_first_exit(&a, 0, rho + 0.05 * k as f64).unwrap();
                solve_first_exit_direct(&l).unwrap().into_vec()
            })
            .collect();
        for w in zs.windows(2) {
            for (hi, lo) in w[0].iter().zip(&w[1]).take(a.n_states() - 1) {
                min_margin = min_margin.min(hi - lo);
            }
        }
    }
    outcome(min_margin > 1e-12, format!("10 models x 5 gains, min decrease={min_margin:.1e}"))
}

fn flat_td_convergence() -> Outcome {
    let cfg = LearnerConfig {
        steps: 200_000,
        eval_every: 200_000,
        lambda: 0.5,
        alpha0: 0.1,
        alpha_decay_c: 1000.0,
        ..LearnerConfig::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, almdp, start) in [
        ("ring-4", ring(4, 0, 1.0, 1.0).unwrap(), 0),
        ("nroom-1x2-5", build_nroom(&NRoomSpec::row(2, 5)).unwrap().almdp, 0),
    ] {
        let (z, g) = relative_value_iteration(&almdp, 0, 1e-13, 10_000_000).unwrap();
        let mut good = 0;
        let mut slowest: f64 = 0.0;
        let mut worst = (0.0f64, 0.0f64);
        for seed in 0..5 {
            let t = Instant::now();
            let curve = run_flat_learner(&almdp, start, &LearnerConfig { seed, ..cfg.clone() }, |zh| {
                compute_mae(zh, z.as_slice(), 0).unwrap()
            })
            .unwrap();
            let secs = t.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            let last = curve.last().unwrap();
            let drho = (last.rho_hat - g.rho_hat).abs();
            worst = (worst.0.max(drho), worst.1.max(last.mae));
            if drho < 0.01 && last.mae < 0.05 && secs < 60.0 {
                good += 1;
            }
        }
        pass &= good >= 4;
        parts.push(format!(
            "{name} {good}/5 seeds, worst |drho|={:.1e} mae={:.1e}, slowest {slowest:.2}s",
            worst.0, worst.1
        ));
    }
    outcome(pass, parts.join("; "))
}

/// First evaluated step whose MAE is at most `threshold`.
fn steps_to(curve: &[halmdp::learner::CurveSample], threshold: f64) -> Option<u64> {
    curve.iter().find(|c| c.mae <= threshold).map(|c| c.step)
}

fn hierarchical_speedup() -> Outcome {
    let budget = 50_000;
    let env = four_room();
    let d = env.decomposition().unwrap();
    let sr = d.reference_state();
    let (z, _) = relative_value_iteration(&env.almdp, sr, 1e-13, 10_000_000).unwrap();
    let mae = |zh: &[f64]| compute_mae(zh, z.as_slice(), sr).unwrap();
    // schedules chosen per learner by a grid search at this budget
    let flat = LearnerConfig {
        steps: budget,
        eval_every: 100,
        lambda: 0.001,
        alpha0: 1.0,
        alpha_decay_c: 1e5,
        ..LearnerConfig::default()
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
    let (mut good, mut below) = (0, 0);
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let f = run_flat_learner(&env.almdp, env.restart_state, &LearnerConfig { seed, ..flat.clone() }, mae).unwrap();
        let h = run_online_learner_decomposed(&d, env.restart_state, &LearnerConfig { seed, ..hier.clone() }, mae)
            .unwrap();
        let threshold = f.last().unwrap().mae;
        let lower = h.last().unwrap().mae < threshold;
        below += usize::from(lower);
        match steps_to(&h, threshold) {
            Some(steps) => {
                let ratio = budget as f64 / steps.max(1) as f64;
                ratios.push(format!("{ratio:.1}x"));
                if lower && steps <= budget / 10 {
                    good += 1;
                }
            }
            None => ratios.push("never".into()),
        }
    }
    outcome(
        good >= 4,
        format!(
            "B={budget}, hier final MAE lower on {below}/5 seeds, {good}/5 seeds at >=10x, per-seed speedup [{}]",
            ratios.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut pass = true;
    for alg in [Algorithm::HierOnline, Algorithm::FlatTd, Algorithm::HierEigen] {
        let run = |name: &str| {
            let out = tmp.path().join(format!("{alg}-{name}"));
            let cfg = ExperimentConfig {
                algorithm: alg,
                out: out.clone(),
                seeds: vec![0, 1, 2],
                env: EnvConfig::Nroom(NRoomSpec::square(2, 5)),
                learner: LearnerConfig {
                    steps: 5000,
                    eval_every: 100,
                    ..LearnerConfig::default()
                },
                ..ExperimentConfig::default()
            };
            run_experiment(&cfg).unwrap();
            std::fs::read(out.join(RESULTS_FILE)).unwrap()
        };
        pass &= run("a") == run("b");
    }
    outcome(pass, "hier-online, flat-td, hier-eigen results.csv compared byte for byte".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("gain correctness", gain_correctness),
        ("compositionality", compositionality),
        ("representation accounting", representation_accounting),
        ("operator properties", operator_properties),
        ("gain monotonicity", gain_monotonicity),
        ("flat TD convergence", flat_td_convergence),
        ("hierarchical speedup", hierarchical_speedup),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked".into()));
        if !result.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
