//! Projected gradient descent on the two class simplices.
//!
//! Each iteration projects −∇f onto the face of the feasible set defined by
//! the currently active bounds. The projection has a closed form: within a
//! class, subtract the mean of −∇f over the free components. When the
//! projected direction vanishes, the bound whose multiplier is most negative
//! is released and the direction is recomputed. The step is the exact
//! minimizer of the quadratic along d, capped where d first hits a bound.

use crate::dual::{at_lower, at_upper, is_interior, AlphaState};
use crate::kernel::{dot, Classes, GramPack};
use crate::solver::{SolveOutcome, SolveTrack, REFRESH_EVERY};

/// |d_i| below this is treated as zero when bounding the step.
const D_ZERO: f64 = 1e-14;

/// A feasible descent direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionInfo {
    pub d: Vec<f64>,
    /// Components moving freely in this direction.
    pub free: Vec<bool>,
    /// Mean of −∇f over each class's free set, positive class first. `None`
    /// for a class with no free component; that class uses the two-component
    /// direction along its maximal violating pair instead.
    pub mu: [Option<f64>; 2],
    pub released: Option<usize>,
    pub d_inf_norm: f64,
}

#[inline]
fn class_slot(classes: &Classes, i: usize) -> usize {
    if classes.is_pos(i) {
        0
    } else {
        1
    }
}

fn fill_class(alpha: &[f64], grad: &[f64], idx: &[usize], free: &[bool], d: &mut [f64]) -> Option<f64> {
    let (sum, count) = idx
        .iter()
        .filter(|&&i| free[i])
        .fold((0.0, 0usize), |(s, c), &i| (s - grad[i], c + 1));
    if count > 0 {
        let mu = sum / count as f64;
        for &i in idx {
            d[i] = if free[i] { -grad[i] - mu } else { 0.0 };
        }
        return Some(mu);
    }
    // No free component: move along the maximal violating pair.
    let mut up: Option<usize> = None;
    let mut low: Option<usize> = None;
    for &i in idx {
        d[i] = 0.0;
        if !at_upper(alpha[i]) && up.is_none_or(|u| -grad[i] > -grad[u]) {
            up = Some(i);
        }
        if !at_lower(alpha[i]) && low.is_none_or(|w| -grad[i] < -grad[w]) {
            low = Some(i);
        }
    }
    if let (Some(i), Some(j)) = (up, low) {
        let half = 0.5 * (grad[j] - grad[i]);
        if i != j && half > 0.0 {
            d[i] = half;
            d[j] = -half;
        }
    }
    None
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn build(state: &AlphaState, classes: &Classes, free: Vec<bool>, released: Option<usize>) -> DirectionInfo {
    let mut d = vec![0.0; free.len()];
    let mu = [
        fill_class(&state.alpha, &state.grad, &classes.pos, &free, &mut d),
        fill_class(&state.alpha, &state.grad, &classes.neg, &free, &mut d),
    ];
    let d_inf_norm = inf_norm(&d);
    DirectionInfo {
        d,
        free,
        mu,
        released,
        d_inf_norm,
    }
}

/// Projected negative gradient with every bound at 0 or 1 held active.
pub fn direction(state: &AlphaState, classes: &Classes) -> DirectionInfo {
    let free = state.alpha.iter().map(|&a| is_interior(a)).collect();
    build(state, classes, free, None)
}

/// Multipliers of the active bound constraints, as (index, value). For
/// α_i = 0 the value is ∇_i f + μ, for α_i = 1 it is −∇_i f − μ, with μ the
/// class's free-set mean. Classes without a free set contribute nothing.
pub fn bound_multipliers(state: &AlphaState, classes: &Classes, info: &DirectionInfo) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 0..state.alpha.len() {
        if info.free[i] {
            continue;
        }
        let Some(mu) = info.mu[class_slot(classes, i)] else {
            continue;
        };
        let a = state.alpha[i];
        if at_lower(a) {
            out.push((i, state.grad[i] + mu));
        } else if at_upper(a) {
            out.push((i, -state.grad[i] - mu));
        }
    }
    out
}

/// Drops the active bound with the most negative multiplier (below `-tol`,
/// lowest index on ties) and recomputes the direction with that component
/// free. `None` when no multiplier is below `-tol`.
pub fn release(state: &AlphaState, classes: &Classes, info: &DirectionInfo, tol: f64) -> Option<DirectionInfo> {
    let mut pick: Option<(usize, f64)> = None;
    for (i, m) in bound_multipliers(state, classes, info) {
        if m < -tol && pick.is_none_or(|(_, best)| m < best) {
            pick = Some((i, m));
        }
    }
    let (j, _) = pick?;
    let mut free = info.free.clone();
    free[j] = true;
    Some(build(state, classes, free, Some(j)))
}

/// Step length information along d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub eta_bar: f64,
    pub eta_max: f64,
    pub eta_star: f64,
    /// Component that reaches its bound at `eta_max`.
    pub blocking: Option<usize>,
}

/// Largest η with α + η·d inside [0, 1]^l, and the component that binds
/// first (lowest index on ties). Infinite when no component can bind.
pub fn step_bounds(alpha: &[f64], d: &[f64]) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for (i, (&a, &di)) in alpha.iter().zip(d).enumerate() {
        if di.abs() < D_ZERO {
            continue;
        }
        let t = if di < 0.0 { a / -di } else { (1.0 - a) / di };
        let t = t.max(0.0);
        if t < best.0 {
            best = (t, Some(i));
        }
    }
    best
}

/// Exact minimizer η̄ = −dᵀ∇f / dᵀQd clamped to [0, η_max]. `qd` is Q·d;
/// `grad` may be any per-class shift of ∇f (see [`centered_grad`]).
pub fn line_search(grad: &[f64], d: &[f64], qd: &[f64], eta_max: f64, blocking: Option<usize>) -> StepInfo {
    let curv = dot(d, qd);
    assert!(curv > 0.0, "dᵀQd must be positive for a nonzero direction, got {curv}");
    let eta_bar = -dot(d, grad) / curv;
    let eta_star = eta_bar.clamp(0.0, eta_max);
    StepInfo {
        eta_bar,
        eta_max,
        eta_star,
        blocking: if eta_star == eta_max { blocking } else { None },
    }
}

/// Moves `state` by η·d, snaps near-bound components onto their bounds,
/// restores the class sums, and updates the gradient with the one product
/// `qd` plus rank-one corrections for every snapped component.
fn apply_step(state: &mut AlphaState, pack: &GramPack, d: &[f64], qd: &[f64], step: &StepInfo) {
    let eta = step.eta_star;
    let l = state.alpha.len();
    let mut moved: Vec<f64> = (0..l).map(|i| state.alpha[i] + eta * d[i]).collect();
    let target = moved.clone();
    if let Some(b) = step.blocking {
        moved[b] = if d[b] < 0.0 { 0.0 } else { 1.0 };
    }
    for a in moved.iter_mut() {
        if at_lower(*a) {
            *a = 0.0;
        } else if at_upper(*a) {
            *a = 1.0;
        }
    }
    for idx in pack.classes().both() {
        let interior: Vec<usize> = idx.iter().copied().filter(|&i| is_interior(moved[i])).collect();
        if interior.is_empty() {
            continue;
        }
        let residual = idx.iter().map(|&i| moved[i]).sum::<f64>() - 1.0;
        let share = residual / interior.len() as f64;
        for &i in &interior {
            moved[i] = (moved[i] - share).clamp(0.0, 1.0);
        }
    }
    for (g, q) in state.grad.iter_mut().zip(qd) {
        *g += eta * q;
    }
    for i in 0..l {
        let delta = moved[i] - target[i];
        if delta != 0.0 {
            pack.add_reg_col_scaled(i, delta, &mut state.grad);
        }
    }
    state.alpha = moved;
    state.obj = 0.5 * dot(&state.alpha, &state.grad);
}

/// ∇f shifted by a constant per class: the mean of ∇f over the components
/// where d is nonzero. Since d sums to zero within each class, dᵀ∇f is
/// unchanged, but near the optimum the shifted form avoids cancellation
/// between the large class means and the tiny projected gradient.
pub fn centered_grad(grad: &[f64], d: &[f64], classes: &Classes) -> Vec<f64> {
    let mut out = grad.to_vec();
    for idx in classes.both() {
        let (s, n) = idx
            .iter()
            .filter(|&&i| d[i] != 0.0)
            .fold((0.0, 0usize), |(s, n), &i| (s + grad[i], n + 1));
        if n > 0 {
            let c = s / n as f64;
            idx.iter().for_each(|&i| out[i] -= c);
        }
    }
    out
}

/// One full step along `d` (step bound, line search, update). Returns the
/// step taken.
pub fn step_along(state: &mut AlphaState, pack: &GramPack, d: &[f64]) -> StepInfo {
    let mut qd = vec![0.0; d.len()];
    pack.reg_matvec(d, &mut qd);
    let (eta_max, blocking) = step_bounds(&state.alpha, d);
    let shifted = centered_grad(&state.grad, d, pack.classes());
    let step = line_search(&shifted, d, &qd, eta_max, blocking);
    apply_step(state, pack, d, &qd, &step);
    step
}

/// One PGA step restricted to the pair (i, j) of one class: d is nonzero
/// only at i and j, d_i = −d_j = (∇_j f − ∇_i f)/2.
pub fn restricted_pair_step(state: &AlphaState, pack: &GramPack, i: usize, j: usize) -> AlphaState {
    assert_eq!(pack.classes().is_pos(i), pack.classes().is_pos(j), "pair must lie in one class");
    let mut d = vec![0.0; state.alpha.len()];
    let half = 0.5 * (state.grad[j] - state.grad[i]);
    d[i] = half;
    d[j] = -half;
    let mut next = state.clone();
    if half != 0.0 {
        step_along(&mut next, pack, &d);
    }
    next
}

/// Direction for the current state, after at most one release. `None` when
/// the state is optimal at tolerance `tol`.
pub fn next_direction(state: &AlphaState, classes: &Classes, tol: f64) -> Option<DirectionInfo> {
    let info = direction(state, classes);
    if info.d_inf_norm > tol {
        return Some(info);
    }
    release(state, classes, &info, tol)
}

/// Runs PGA from `init` until the projected direction and every bound
/// multiplier are within eps1/2 of optimal, which bounds the class KKT gap
/// m − M by eps1, or until `max_epochs` steps.
pub fn pga_solve(pack: &GramPack, init: AlphaState, eps1: f64, max_epochs: usize) -> SolveOutcome {
    let classes = pack.classes();
    let tol = 0.5 * eps1;
    let mut state = init;
    state.refresh(pack);
    let mut track = SolveTrack::new();
    track.observe_alpha(&state.alpha, classes);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let Some(info) = next_direction(&state, classes, tol) else {
            converged = true;
            break;
        };
        if iterations >= max_epochs {
            break;
        }
        let before = state.obj;
        step_along(&mut state, pack, &info.d);
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
