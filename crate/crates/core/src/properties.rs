//! Randomized invariants over the solvers, the outer loop and the model.

use proptest::prelude::*;

use crate::data::TrainingSet;
use crate::dual::{gradient, kkt_report, objective, violating_pair, AlphaState, Feasibility};
use crate::kernel::{GramPack, GramPrecision, KernelParams};
use crate::maxmin::{gb_train, MaxMinConfig, StopReason};
use crate::oracle::{grid_qp, random_instance};
use crate::pga::pga_solve;
use crate::smo::{apply_pair, pair_subproblem, smo_solve};

fn pack_for(set: &TrainingSet, gamma: f64) -> GramPack {
    GramPack::build(set, KernelParams::new(gamma, 1.0).unwrap(), GramPrecision::F64)
}

/// Normalizes raw positive weights into a feasible α (each class sums to 1).
fn feasible(pack: &GramPack, raw: &[f64]) -> Vec<f64> {
    let mut a = raw[..pack.len()].to_vec();
    for idx in pack.classes().both() {
        let s: f64 = idx.iter().map(|&i| a[i]).sum();
        idx.iter().for_each(|&i| a[i] /= s);
    }
    a
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (0u64..10_000, 2usize..9, 2usize..9, 0.05f64..8.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn labeled_gram_entries_in_unit_interval((seed, p, n, gamma) in instance()) {
        let (set, _) = random_instance(seed, p, n, 3);
        let pack = pack_for(&set, gamma);
        let y = &pack.classes().signs;
        for i in 0..pack.len() {
            for j in 0..pack.len() {
                let k = pack.labeled(i, j) * y[i] * y[j];
                prop_assert!(k > 0.0 && k <= 1.0);
            }
        }
    }

    #[test]
    fn euler_identity_and_optimality_gap(
        (seed, p, n, gamma) in instance(),
        raw in proptest::collection::vec(0.01f64..1.0, 16),
    ) {
        let (set, _) = random_instance(seed, p, n, 2);
        let pack = pack_for(&set, gamma);
        let a = feasible(&pack, &raw);
        let f = objective(&a, &pack);
        let dot: f64 = a.iter().zip(gradient(&a, &pack)).map(|(x, g)| x * g).sum();
        prop_assert!((dot - 2.0 * f).abs() <= 1e-10 * f.abs());
        let best = pga_solve(&pack, AlphaState::uniform(&pack), 1e-9, 50_000);
        prop_assert!(best.converged);
        prop_assert!(f >= best.state.obj() - 1e-12);
    }

    #[test]
    fn pga_feasible_descending_and_unique(
        (seed, p, n, gamma) in instance(),
        raw in proptest::collection::vec(0.01f64..1.0, 16),
    ) {
        let (set, _) = random_instance(seed, p, n, 2);
        let pack = pack_for(&set, gamma);
        let eps1 = 1e-8;
        let a = pga_solve(&pack, AlphaState::uniform(&pack), eps1, 50_000);
        let b = pga_solve(&pack, AlphaState::new(feasible(&pack, &raw), &pack), eps1, 50_000);
        for out in [&a, &b] {
            prop_assert!(out.converged);
            prop_assert!(out.track.max_ascent <= 1e-12);
            prop_assert!(out.track.max_sum_error <= 1e-9);
            prop_assert!(out.track.min_alpha >= 0.0 && out.track.max_alpha <= 1.0);
            prop_assert!(kkt_report(&out.state, pack.classes(), eps1).satisfied);
        }
        prop_assert!((a.state.obj() - b.state.obj()).abs() <= 1e-8);
    }

    #[test]
    fn smo_updates_keep_pair_sums_and_bounds(
        (seed, p, n, gamma) in instance(),
        raw in proptest::collection::vec(0.01f64..1.0, 16),
    ) {
        let (set, _) = random_instance(seed, p, n, 2);
        let pack = pack_for(&set, gamma);
        let mut state = AlphaState::new(feasible(&pack, &raw), &pack);
        for _ in 0..25 {
            let Some(pair) = violating_pair(&state, pack.classes()) else { break };
            let sol = pair_subproblem(&state, &pack, pair.up, pair.low);
            prop_assert_eq!(sol.alpha_i_new + sol.alpha_j_new, state.alpha()[pair.up] + state.alpha()[pair.low]);
            prop_assert!((0.0..=1.0).contains(&sol.alpha_i_new) && (0.0..=1.0).contains(&sol.alpha_j_new));
            apply_pair(&mut state, &pack, &sol);
        }
        prop_assert!(Feasibility::of(state.alpha(), pack.classes()).holds(1e-12, 0.0));
    }

    #[test]
    fn pga_and_smo_agree((seed, p, n, gamma) in instance()) {
        let (set, _) = random_instance(seed, p, n, 2);
        let pack = pack_for(&set, gamma);
        let a = pga_solve(&pack, AlphaState::uniform(&pack), 1e-9, 50_000);
        let b = smo_solve(&pack, AlphaState::uniform(&pack), 1e-9, 200_000);
        prop_assert!(a.converged && b.converged);
        let (x, y) = (a.state.obj(), b.state.obj());
        prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(y.abs()));
        prop_assert!(b.track.max_sum_error <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solvers_never_worse_than_grid(seed in 0u64..10_000, gamma in 0.1f64..10.0, p in 1usize..4, n in 1usize..4) {
        let (set, _) = random_instance(seed, p, n, 2);
        let pack = pack_for(&set, gamma);
        let grid = grid_qp(&set, pack.params(), 1e-2).unwrap();
        let a = pga_solve(&pack, AlphaState::uniform(&pack), 1e-9, 10_000);
        let b = smo_solve(&pack, AlphaState::uniform(&pack), 1e-9, 10_000);
        prop_assert!(a.state.obj() <= grid.obj_hat + 1e-12);
        prop_assert!(b.state.obj() <= grid.obj_hat + 1e-12);
    }

    #[test]
    fn outer_loop_invariants(seed in 0u64..10_000, p in 4usize..12, n in 4usize..12) {
        let (set, _) = random_instance(seed, p, n, 3);
        let config = MaxMinConfig::default();
        let r = gb_train(&set, &config).unwrap();
        let recs = &r.trace.records;
        for w in recs.windows(2) {
            prop_assert!(w[1].objective >= w[0].objective);
        }
        for rec in recs {
            prop_assert!(rec.gamma >= config.gamma_lo && rec.gamma <= config.gamma_hi);
        }
        if r.stop == StopReason::Converged {
            prop_assert!(r.final_grad().abs() <= config.eps2);
        }
        prop_assert!(r.models_trained >= recs.len());
    }

    #[test]
    fn saddle_point(seed in 0u64..10_000, p in 4usize..10, n in 4usize..10, picks in proptest::collection::vec((0usize..64, 0usize..64, 0.01f64..1.0), 20)) {
        // Spread-out points make the outer loop end by |f′| ≤ eps2.
        let (set, rows) = random_instance(seed, p, n, 3);
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| 10.0 * v).collect()).collect();
        let set = TrainingSet::from_dense(&rows, &set.labels()).unwrap();
        let config = MaxMinConfig::default();
        let r = gb_train(&set, &config).unwrap();
        prop_assume!(r.stop == StopReason::Converged);
        let delta = 1e-3;
        let base = r.alpha.obj();
        for g in [r.gamma - delta, r.gamma + delta] {
            let pack = r.pack.with_gamma(g).unwrap();
            let out = pga_solve(&pack, AlphaState::uniform(&pack), config.eps1, config.epoch_alpha);
            prop_assert!(out.state.obj() - base <= config.eps2 * delta);
        }
        let alpha = r.alpha.alpha();
        let classes = r.pack.classes();
        for (i, j, frac) in picks {
            let idx = classes.both()[i % 2];
            let (to, from) = (idx[i % idx.len()], idx[j % idx.len()]);
            if to == from || alpha[from] == 0.0 {
                continue;
            }
            let t = frac * alpha[from].min(1.0 - alpha[to]);
            let mut moved = alpha.to_vec();
            moved[to] += t;
            moved[from] -= t;
            prop_assert!(objective(&moved, &r.pack) >= base - t * config.eps1);
        }
    }
}
