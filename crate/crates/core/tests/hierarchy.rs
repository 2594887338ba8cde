mod common;

use common::{first_exit_dense_with, max_rel_err, perron_root, perron_vector};
use halmdp::almdp::{Almdp, Verdict};
use halmdp::envs::{build_nroom, build_taxi, two_room_corridor, EnvBundle, NRoomSpec, TaxiSpec};
use halmdp::hierarchy::{
    algorithm1_eigenvector, algorithm1_eigenvector_traced, build_exit_matrix, empty_banks, reconstruct_all,
    solve_all_banks, solve_base_bank, solve_exit_system, verify_subtask, BaseLmdpBank, Decomposition, EigenConfig,
    PartitionSpec, Slot,
};
use halmdp::lmdp::solve_first_exit_direct_multi;
use std::collections::{HashSet, VecDeque};

fn four_room() -> EnvBundle {
    build_nroom(&NRoomSpec::square(2, 5)).unwrap()
}

/// Flat oracle `(ρ, z)` with `z(s*) = 1`.
fn flat_oracle(d: &Decomposition) -> (f64, Vec<f64>) {
    let (gamma, z) = perron_vector(d.almdp(), d.reference_state());
    (gamma.ln() / d.almdp().eta(), z)
}

fn exact_banks(d: &Decomposition, rho: f64) -> Vec<BaseLmdpBank> {
    solve_all_banks(&empty_banks(d), rho).unwrap()
}

fn exit_values(d: &Decomposition, z: &[f64]) -> Vec<f64> {
    d.exits().iter().map(|&s| z[s]).collect()
}

#[test]
fn four_room_accounting() {
    let env = four_room();
    let d = env.decomposition().unwrap();
    assert_eq!(env.almdp.n_states(), 101);
    assert_eq!(d.exits().len(), 9);
    assert_eq!(d.representation_size().to_string(), "E=9 C=1 K=25 N=5 total=134");
}

#[test]
fn corridor_terminals_are_the_neighbouring_doorways() {
    let d = two_room_corridor(1.0).unwrap().decomposition().unwrap();
    assert_eq!(d.subtask(0).unwrap().terminal_states, vec![5]);
    assert_eq!(d.subtask(1).unwrap().terminal_states, vec![4]);
}

#[test]
fn single_block_cannot_be_decomposed() {
    let env = four_room();
    let p = PartitionSpec::single_block(env.almdp.n_states());
    assert!(Decomposition::induced(env.almdp.clone(), p).is_err());
}

#[test]
fn bases_sum_to_the_all_ones_task() {
    let d = four_room().decomposition().unwrap();
    let (rho, _) = flat_oracle(&d);
    for rho_hat in [rho, rho + 0.3] {
        let bank = solve_base_bank(&empty_banks(&d)[0], rho_hat).unwrap();
        let rep = bank.representative.with_reward_shift(-rho_hat);
        let ones = first_exit_dense_with(&rep, &vec![1.0; rep.n_terminal()]);
        for x in 0..rep.n_nonterminal() {
            let total: f64 = bank.base_values.iter().map(|z| z[x]).sum();
            assert!((total - ones[x]).abs() <= 1e-10 * ones[x]);
        }
        for (k, z) in bank.base_values.iter().enumerate() {
            let n = rep.n_nonterminal();
            for t in 0..rep.n_terminal() {
                assert_eq!(z[n + t], if t == k { 1.0 } else { 0.0 });
            }
            assert!(z.as_slice().iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn base_values_decrease_with_the_gain() {
    let d = four_room().decomposition().unwrap();
    let (rho, _) = flat_oracle(&d);
    let bank = &empty_banks(&d)[0];
    for step in 0..4 {
        let lo = solve_base_bank(bank, rho + 0.1 * step as f64).unwrap();
        let hi = solve_base_bank(bank, rho + 0.1 * (step + 1) as f64).unwrap();
        let n = bank.representative.n_nonterminal();
        for (a, b) in lo.base_values.iter().zip(&hi.base_values) {
            for x in 0..n {
                if a[x] > 0.0 {
                    assert!(b[x] < a[x], "base value did not decrease: {} -> {}", a[x], b[x]);
                }
            }
        }
    }
}

#[test]
fn exit_matrix_fixes_the_flat_exit_values() {
    let d = four_room().decomposition().unwrap();
    let (rho, z) = flat_oracle(&d);
    let g = build_exit_matrix(&d, &exact_banks(&d, rho)).unwrap();
    let z_e = exit_values(&d, &z);
    assert!(max_rel_err(&g.rows.mul_vec(&z_e), &z_e) < 1e-9);
    let n_max = d.representatives().iter().map(|r| r.n_terminal()).max().unwrap();
    assert!(g.rows.rows().all(|row| row.len() <= n_max));
}

#[test]
fn exit_system_matches_flat_oracle() {
    let d = four_room().decomposition().unwrap();
    let (rho, z) = flat_oracle(&d);
    let g = build_exit_matrix(&d, &exact_banks(&d, rho)).unwrap();
    let sol = solve_exit_system(&g, 1e-14, 1_000_000);
    assert!(sol.unique);
    assert!(max_rel_err(&sol.values.z_e, &exit_values(&d, &z)) < 1e-6);
}

#[test]
fn large_gain_is_flagged_too_large() {
    let d = four_room().decomposition().unwrap();
    let (rho, _) = flat_oracle(&d);
    let g = build_exit_matrix(&d, &exact_banks(&d, rho + 1.0)).unwrap();
    assert!(solve_exit_system(&g, 1e-14, 1_000_000).unique);
    let gamma = perron_root(d.almdp());
    let mut seen = 0;
    algorithm1_eigenvector_traced(&d, &EigenConfig::default(), |st| {
        if st.gamma_hat > gamma * 1.3 {
            seen += 1;
            assert_eq!(st.verdict, Verdict::TooLarge);
        }
    })
    .unwrap();
    assert!(seen > 0);
}

#[test]
fn two_room_reconstruction_matches_flat() {
    let d = two_room_corridor(1.0).unwrap().decomposition().unwrap();
    let (rho, z) = flat_oracle(&d);
    let banks = exact_banks(&d, rho);
    let sol = solve_exit_system(&build_exit_matrix(&d, &banks).unwrap(), 1e-14, 1_000_000);
    let rec = reconstruct_all(&d, &banks, &sol.values).unwrap();
    assert!(max_rel_err(rec.as_slice(), &z) < 1e-6);
}

#[test]
fn subtask_at_flat_boundary_reproduces_flat_values() {
    for env in [four_room(), build_taxi(&TaxiSpec::default()).unwrap()] {
        let d = env.decomposition().unwrap();
        let (rho, z) = flat_oracle(&d);
        for desc in d.subtasks() {
            let rep = d.representatives()[desc.class_index].with_reward_shift(-rho);
            let mut tv = vec![0.0; rep.n_terminal()];
            for (&tau, &k) in desc.terminal_states.iter().zip(&desc.terminal_bijection) {
                tv[k] = z[tau];
            }
            let sol = solve_first_exit_direct_multi(&rep, &[tv]).unwrap().pop().unwrap();
            for (pos, &s) in env.partition.block(desc.block_index).iter().enumerate() {
                let x = desc.state_bijection[pos];
                assert!((sol[x] - z[s]).abs() <= 1e-8 * z[s], "{}: {} vs {}", env.name, sol[x], z[s]);
            }
        }
    }
}

#[test]
fn hierarchical_solver_matches_flat_oracle_on_four_rooms() {
    let d = four_room().decomposition().unwrap();
    let (gamma, z) = perron_vector(d.almdp(), d.reference_state());
    let cfg = EigenConfig::default();
    let sol = algorithm1_eigenvector(&d, &cfg).unwrap();
    assert!((sol.gain.gamma_hat - gamma).abs() <= cfg.epsilon + 1e-10);
    let rec = sol.reconstruct(&d).unwrap();
    assert!(max_rel_err(rec.as_slice(), &z) < 1e-5);
}

#[test]
fn zero_rewards_give_unit_gain() {
    let env = four_room();
    let a = &env.almdp;
    let zero = Almdp::new(a.labels().to_vec(), a.transitions().clone(), vec![0.0; a.n_states()], a.eta()).unwrap();
    let d = Decomposition::induced(zero, env.partition.clone()).unwrap();
    let cfg = EigenConfig::default();
    let sol = algorithm1_eigenvector(&d, &cfg).unwrap();
    assert!((sol.gain.gamma_hat - 1.0).abs() <= cfg.epsilon, "{:?}", sol.gain);
    assert!(sol.exit_values.z_e.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn hierarchical_interval_contains_the_gain() {
    for env in [four_room(), two_room_corridor(1.0).unwrap()] {
        let d = env.decomposition().unwrap();
        let gamma = perron_root(d.almdp());
        algorithm1_eigenvector_traced(&d, &EigenConfig::default(), |st| {
            assert!(st.lo < gamma + 1e-12 && gamma <= st.hi + 1e-12, "{gamma} not in ({}, {}]", st.lo, st.hi);
        })
        .unwrap();
    }
}

#[test]
fn declared_classes_are_sound() {
    for env in [
        four_room(),
        build_nroom(&NRoomSpec::square(3, 4)).unwrap(),
        build_taxi(&TaxiSpec::default()).unwrap(),
    ] {
        let d = env.decomposition().unwrap();
        for desc in d.subtasks() {
            verify_subtask(&env.almdp, &env.partition, desc, &d.representatives()[desc.class_index]).unwrap();
        }
    }
}

#[test]
fn every_state_has_a_slot() {
    for env in [four_room(), build_taxi(&TaxiSpec::default()).unwrap()] {
        let d = env.decomposition().unwrap();
        let mut seen = HashSet::new();
        for s in 0..env.almdp.n_states() {
            match d.slot(s) {
                Slot::Interior { block, class, x } => {
                    assert_eq!(block, env.partition.block_of(s));
                    assert!(x < d.representatives()[class].n_nonterminal());
                    assert!(seen.insert((block, x)), "{}: two states share a slot", env.name);
                }
                Slot::Relay { block } => {
                    assert_eq!(env.partition.block(block), &[s]);
                    assert!(d.exit_position(s).is_some());
                }
            }
        }
    }
}

fn reachable(a: &Almdp, from: usize, reverse: bool) -> usize {
    let n = a.n_states();
    let mut adj = vec![Vec::new(); n];
    for s in 0..n {
        for &(c, p) in a.transitions().row(s) {
            if p > 0.0 {
                if reverse {
                    adj[c].push(s);
                } else {
                    adj[s].push(c);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = queue.pop_front() {
        for &c in &adj[s] {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    seen.iter().filter(|&&b| b).count()
}

#[test]
fn benchmark_domains_are_strongly_connected() {
    for env in [
        four_room(),
        build_nroom(&NRoomSpec::square(3, 4)).unwrap(),
        build_taxi(&TaxiSpec::default()).unwrap(),
        build_taxi(&TaxiSpec::with_grid(8)).unwrap(),
    ] {
        let n = env.almdp.n_states();
        assert_eq!(reachable(&env.almdp, 0, false), n, "{}", env.name);
        assert_eq!(reachable(&env.almdp, 0, true), n, "{}", env.name);
    }
}

#[test]
fn taxi_decomposition_sizes() {
    let d = build_taxi(&TaxiSpec::default()).unwrap().decomposition().unwrap();
    let size = d.representation_size();
    assert_eq!((size.exits, size.classes, size.k, size.n), (16, 8, 24, 1));
    assert_eq!(size.total, 208);
}
