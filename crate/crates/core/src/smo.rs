//! Sequential minimal optimization over maximal violating pairs.
//!
//! Both variables of a pair come from the same class, so their sum is
//! fixed and the subproblem is a one-dimensional quadratic on a segment.

use crate::dual::{violating_pair, AlphaState};
use crate::kernel::GramPack;
use crate::solver::{SolveOutcome, SolveTrack, REFRESH_EVERY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSolution {
    pub i: usize,
    pub j: usize,
    pub v_i: f64,
    pub v_j: f64,
    pub alpha_i_uc: f64,
    pub alpha_j_uc: f64,
    pub alpha_i_new: f64,
    pub alpha_j_new: f64,
    pub sum_const: f64,
}

/// Minimizes f over (α_i, α_j) with every other component fixed.
///
/// With Q = G + I/C and v_i = Σ_{k∉{i,j}} Q_ik α_k (read off the cached
/// gradient), the unconstrained minimizer on α_i + α_j = s is
/// α_i = [(Q_jj − Q_ij)s − v_i + v_j] / (Q_ii + Q_jj − 2Q_ij), then clipped
/// to [max(0, s − 1), min(s, 1)].
pub fn pair_subproblem(state: &AlphaState, pack: &GramPack, i: usize, j: usize) -> PairSolution {
    assert_ne!(i, j, "pair indices must differ");
    assert_eq!(pack.classes().is_pos(i), pack.classes().is_pos(j), "pair must lie in one class");
    let (ai, aj) = (state.alpha[i], state.alpha[j]);
    let (qii, qjj, qij) = (pack.reg(i, i), pack.reg(j, j), pack.reg(i, j));
    let v_i = state.grad[i] - qii * ai - qij * aj;
    let v_j = state.grad[j] - qij * ai - qjj * aj;
    let s = ai + aj;
    let denom = qii + qjj - 2.0 * qij;
    let alpha_i_uc = ((qjj - qij) * s - v_i + v_j) / denom;
    let alpha_j_uc = s - alpha_i_uc;
    let clipped = alpha_i_uc.clamp((s - 1.0).max(0.0), s.min(1.0));
    // b = s − a, then a = s − b: one of the two subtractions is exact, so
    // a + b reproduces s bit for bit.
    let alpha_j_new = s - clipped;
    let alpha_i_new = s - alpha_j_new;
    PairSolution {
        i,
        j,
        v_i,
        v_j,
        alpha_i_uc,
        alpha_j_uc,
        alpha_i_new,
        alpha_j_new,
        sum_const: s,
    }
}

/// Writes a pair solution into `state` with a rank-two gradient update and
/// an incremental objective update.
pub fn apply_pair(state: &mut AlphaState, pack: &GramPack, sol: &PairSolution) {
    let di = sol.alpha_i_new - state.alpha[sol.i];
    let dj = sol.alpha_j_new - state.alpha[sol.j];
    let quad = pack.reg(sol.i, sol.i) * di * di
        + pack.reg(sol.j, sol.j) * dj * dj
        + 2.0 * pack.reg(sol.i, sol.j) * di * dj;
    state.obj += di * state.grad[sol.i] + dj * state.grad[sol.j] + 0.5 * quad;
    state.alpha[sol.i] = sol.alpha_i_new;
    state.alpha[sol.j] = sol.alpha_j_new;
    if di != 0.0 {
        pack.add_reg_col_scaled(sol.i, di, &mut state.grad);
    }
    if dj != 0.0 {
        pack.add_reg_col_scaled(sol.j, dj, &mut state.grad);
    }
}

/// Runs SMO from `init` until m − M ≤ eps1 in both classes or `max_epochs`
/// pair updates.
pub fn smo_solve(pack: &GramPack, init: AlphaState, eps1: f64, max_epochs: usize) -> SolveOutcome {
    let classes = pack.classes();
    let mut state = init;
    state.refresh(pack);
    let mut track = SolveTrack::new();
    track.observe_alpha(&state.alpha, classes);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let pair = match violating_pair(&state, classes) {
            Some(p) if p.violation > eps1 => p,
            _ => {
                converged = true;
                break;
            }
        };
        if iterations >= max_epochs {
            break;
        }
        let before = state.obj;
        let sol = pair_subproblem(&state, pack, pair.up, pair.low);
        apply_pair(&mut state, pack, &sol);
        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            state.refresh(pack);
        }
        track.observe(before, state.obj, &state.alpha, classes);
    }
    if !converged {
        state.refresh(pack);
    }
    SolveOutcome {
        state,
        iterations,
        converged,
        track,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, TrainingSet};
    use crate::dual::{kkt_report, objective};
    use crate::kernel::{GramPrecision, KernelParams};
    use crate::oracle::{grid_qp, pair_v_literal, random_instance};
    use crate::pga::{pga_solve, restricted_pair_step};

    fn pack_for(set: &TrainingSet, gamma: f64) -> GramPack {
        GramPack::build(set, KernelParams::new(gamma, 1.0).unwrap(), GramPrecision::F64)
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let rows = vec![vec![0.3, 0.1], vec![0.3, 0.1], vec![-1.0, 0.4]];
        let set = TrainingSet::from_dense(&rows, &[Label::Pos, Label::Pos, Label::Neg]).unwrap();
        let pack = pack_for(&set, 1.0);
        let state = AlphaState::new(vec![0.9, 0.1, 1.0], &pack);
        let sol = pair_subproblem(&state, &pack, 0, 1);
        assert!((sol.alpha_i_uc - 0.5).abs() <= 1e-15);
        assert!((sol.alpha_j_uc - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn degenerate_segment_stays_zero() {
        let (set, _) = random_instance(40, 3, 2, 2);
        let pack = pack_for(&set, 1.0);
        let state = AlphaState::new(vec![1.0, 0.0, 0.0, 0.5, 0.5], &pack);
        let sol = pair_subproblem(&state, &pack, 1, 2);
        assert_eq!((sol.alpha_i_new, sol.alpha_j_new), (0.0, 0.0));
    }

    #[test]
    fn cached_v_matches_literal_sum() {
        let (set, _) = random_instance(41, 3, 3, 2);
        let pack = pack_for(&set, 0.9);
        let state = AlphaState::new(vec![0.2, 0.3, 0.5, 0.6, 0.3, 0.1], &pack);
        let sol = pair_subproblem(&state, &pack, 3, 5);
        let (vi, vj) = pair_v_literal(&pack.reg_gram_dense(), state.alpha(), 3, 5);
        assert!((sol.v_i - vi).abs() <= 1e-14);
        assert!((sol.v_j - vj).abs() <= 1e-14);
    }

    #[test]
    fn clipped_solution_beats_segment_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for seed in 0..20 {
            let (set, _) = random_instance(50 + seed, 3, 3, 2);
            let pack = pack_for(&set, rng.random_range(0.1..5.0));
            let mut alpha: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let sp: f64 = alpha[..3].iter().sum();
            let sn: f64 = alpha[3..].iter().sum();
            alpha[..3].iter_mut().for_each(|a| *a /= sp);
            alpha[3..].iter_mut().for_each(|a| *a /= sn);
            let state = AlphaState::new(alpha.clone(), &pack);
            let sol = pair_subproblem(&state, &pack, 0, 2);
            assert_eq!(sol.alpha_i_new + sol.alpha_j_new, sol.sum_const);
            let at = |a: f64| {
                let mut x = alpha.clone();
                x[0] = a;
                x[2] = sol.sum_const - a;
                objective(&x, &pack)
            };
            let best = at(sol.alpha_i_new);
            let (lo, hi) = ((sol.sum_const - 1.0).max(0.0), sol.sum_const.min(1.0));
            for k in 0..=1000 {
                assert!(best <= at(lo + (hi - lo) * k as f64 / 1000.0) + 1e-15);
            }
        }
    }

    #[test]
    fn box_clip_when_sum_exceeds_one() {
        // Sum 1.6 with a strong pull toward i: the box caps α_i at 1.
        let (set, _) = random_instance(42, 3, 2, 2);
        let pack = pack_for(&set, 1.0);
        let mut state = AlphaState::new(vec![0.8, 0.8, 0.0, 0.5, 0.5], &pack);
        state.grad[0] = -50.0;
        let sol = pair_subproblem(&state, &pack, 0, 1);
        assert!(sol.alpha_i_uc > 1.0);
        assert_eq!(sol.alpha_i_new, 1.0);
        assert!((sol.alpha_j_new - 0.6).abs() <= 1e-15);
    }

    #[test]
    fn two_points_immediate() {
        let (set, _) = random_instance(43, 1, 1, 2);
        let pack = pack_for(&set, 1.0);
        let out = smo_solve(&pack, AlphaState::uniform(&pack), 1e-6, 10);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn agrees_with_pga_and_grid() {
        for seed in 0..5 {
            let (set, _) = random_instance(60 + seed, 2, 2, 2);
            let pack = pack_for(&set, 1.0);
            let s = smo_solve(&pack, AlphaState::uniform(&pack), 1e-9, 10_000);
            let p = pga_solve(&pack, AlphaState::uniform(&pack), 1e-9, 10_000);
            assert!(s.converged && p.converged);
            assert!((s.state.obj() - p.state.obj()).abs() <= 1e-6);
            let grid = grid_qp(&set, pack.params(), 1e-3).unwrap();
            assert!((s.state.obj() - grid.obj_hat).abs() <= 1e-4);
        }
    }

    #[test]
    fn smo_step_is_restricted_pga_step() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..30 {
            let (set, _) = random_instance(70 + seed, 4, 4, 2);
            let pack = pack_for(&set, rng.random_range(0.2..3.0));
            let mut alpha: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
            let sp: f64 = alpha[..4].iter().sum();
            let sn: f64 = alpha[4..].iter().sum();
            alpha[..4].iter_mut().for_each(|a| *a /= sp);
            alpha[4..].iter_mut().for_each(|a| *a /= sn);
            let state = AlphaState::new(alpha, &pack);
            let pair = violating_pair(&state, pack.classes()).unwrap();
            let mut smo = state.clone();
            apply_pair(&mut smo, &pack, &pair_subproblem(&state, &pack, pair.up, pair.low));
            let pga = restricted_pair_step(&state, &pack, pair.up, pair.low);
            for (a, b) in smo.alpha().iter().zip(pga.alpha()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn descent_and_kkt_on_larger_instance() {
        let (set, _) = random_instance(80, 15, 12, 3);
        let pack = pack_for(&set, 2.0);
        let out = smo_solve(&pack, AlphaState::uniform(&pack), 1e-6, 100_000);
        assert!(out.converged);
        assert!(out.track.max_ascent <= 1e-12);
        assert!(kkt_report(&out.state, pack.classes(), 1e-6).satisfied);
    }
}
