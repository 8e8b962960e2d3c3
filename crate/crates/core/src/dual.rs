//! State shared by the dual solvers: the α vector on the product of two
//! simplices, its gradient cache, and the KKT diagnostics.
//!
//! The problem is
//!
//! ```text
//! min_α ½ αᵀ(G + I/C)α   s.t.  Σ_{y_i=+1} α_i = Σ_{y_i=−1} α_i = 1,  0 ≤ α_i ≤ 1
//! ```
//!
//! i.e. the squared half-distance between the closest points of the two
//! class hulls in the feature space of the regularized kernel.

use crate::data::Label;
use crate::kernel::{dot, Classes, GramPack};

/// α_i at or below this value is treated as 0; at or above `1 − BOUND_TOL` as 1.
pub const BOUND_TOL: f64 = 1e-12;

#[inline]
pub fn at_lower(a: f64) -> bool {
    a <= BOUND_TOL
}

#[inline]
pub fn at_upper(a: f64) -> bool {
    a >= 1.0 - BOUND_TOL
}

#[inline]
pub fn is_interior(a: f64) -> bool {
    !at_lower(a) && !at_upper(a)
}

/// Uniform start: 1/l⁺ on positives, 1/l⁻ on negatives.
pub fn init_alpha(classes: &Classes) -> Vec<f64> {
    let mut alpha = vec![0.0; classes.len()];
    for idx in classes.both() {
        let w = 1.0 / idx.len() as f64;
        for &i in idx {
            alpha[i] = w;
        }
    }
    alpha
}

/// ½·αᵀ(G + I/C)α, computed from scratch.
pub fn objective(alpha: &[f64], pack: &GramPack) -> f64 {
    0.5 * dot(alpha, &gradient(alpha, pack))
}

/// (G + I/C)·α, computed from scratch.
pub fn gradient(alpha: &[f64], pack: &GramPack) -> Vec<f64> {
    let mut g = vec![0.0; alpha.len()];
    pack.reg_matvec(alpha, &mut g);
    g
}

/// α with cached gradient and objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaState {
    pub(crate) alpha: Vec<f64>,
    pub(crate) grad: Vec<f64>,
    pub(crate) obj: f64,
}

impl AlphaState {
    /// Wraps `alpha` and computes a fresh gradient and objective.
    pub fn new(alpha: Vec<f64>, pack: &GramPack) -> AlphaState {
        assert_eq!(alpha.len(), pack.len(), "alpha length does not match the Gram matrix");
        let grad = gradient(&alpha, pack);
        let obj = 0.5 * dot(&alpha, &grad);
        AlphaState { alpha, grad, obj }
    }

    pub fn uniform(pack: &GramPack) -> AlphaState {
        AlphaState::new(init_alpha(pack.classes()), pack)
    }

    pub fn refresh(&mut self, pack: &GramPack) {
        pack.reg_matvec(&self.alpha, &mut self.grad);
        self.obj = 0.5 * dot(&self.alpha, &self.grad);
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn obj(&self) -> f64 {
        self.obj
    }

    pub fn into_alpha(self) -> Vec<f64> {
        self.alpha
    }
}

/// Optimality diagnostics for one α.
///
/// With g = −∇f: `m_*` is the max of g over the class's "can increase" set
/// (α_i < 1), `big_m_*` the min over its "can decrease" set (α_i > 0), and
/// `mu_*` the mean of g over the strictly interior components (absent when
/// the class has none).
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub mu_plus: Option<f64>,
    pub mu_minus: Option<f64>,
    pub m_plus: f64,
    pub big_m_plus: f64,
    pub m_minus: f64,
    pub big_m_minus: f64,
    pub max_violation: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy)]
struct ClassExtrema {
    m: f64,
    big_m: f64,
    arg_m: Option<usize>,
    arg_big_m: Option<usize>,
    mu: Option<f64>,
}

fn class_extrema(alpha: &[f64], grad: &[f64], idx: &[usize]) -> ClassExtrema {
    let mut ext = ClassExtrema {
        m: f64::NEG_INFINITY,
        big_m: f64::INFINITY,
        arg_m: None,
        arg_big_m: None,
        mu: None,
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for &i in idx {
        let g = -grad[i];
        if !at_upper(alpha[i]) && g > ext.m {
            ext.m = g;
            ext.arg_m = Some(i);
        }
        if !at_lower(alpha[i]) && g < ext.big_m {
            ext.big_m = g;
            ext.arg_big_m = Some(i);
        }
        if is_interior(alpha[i]) {
            sum += g;
            count += 1;
        }
    }
    if count > 0 {
        ext.mu = Some(sum / count as f64);
    }
    ext
}

/// KKT report from the cached gradient in `state`.
pub fn kkt_report(state: &AlphaState, classes: &Classes, eps: f64) -> KktReport {
    let p = class_extrema(&state.alpha, &state.grad, &classes.pos);
    let n = class_extrema(&state.alpha, &state.grad, &classes.neg);
    let max_violation = (p.m - p.big_m).max(n.m - n.big_m).max(0.0);
    KktReport {
        mu_plus: p.mu,
        mu_minus: n.mu,
        m_plus: p.m,
        big_m_plus: p.big_m,
        m_minus: n.m,
        big_m_minus: n.big_m,
        max_violation,
        satisfied: p.m <= p.big_m + eps && n.m <= n.big_m + eps,
    }
}

/// Per-component optimality test with tolerance `eps`: interior components
/// of each class agree with the class mean within `eps`, components at 0
/// lie at most `eps` above it, components at 1 at most `eps` below it.
/// A class without interior components is checked against its extrema.
pub fn component_conditions_hold(state: &AlphaState, classes: &Classes, eps: f64) -> bool {
    classes.both().into_iter().all(|idx| {
        let ext = class_extrema(&state.alpha, &state.grad, idx);
        match ext.mu {
            Some(mu) => idx.iter().all(|&i| {
                let g = -state.grad[i];
                let a = state.alpha[i];
                if at_lower(a) {
                    g <= mu + eps
                } else if at_upper(a) {
                    g >= mu - eps
                } else {
                    (g - mu).abs() <= eps
                }
            }),
            None => ext.m <= ext.big_m + eps,
        }
    })
}

/// Maximal violating pair within one class: `up` may grow, `low` may shrink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolatingPair {
    pub up: usize,
    pub low: usize,
    pub class: Label,
    pub violation: f64,
}

/// The in-class pair with the largest m − M. Ties go to the positive class,
/// and within a class to the lowest index. `None` when neither class has a
/// pair with positive violation.
pub fn violating_pair(state: &AlphaState, classes: &Classes) -> Option<ViolatingPair> {
    let candidates = [
        (Label::Pos, class_extrema(&state.alpha, &state.grad, &classes.pos)),
        (Label::Neg, class_extrema(&state.alpha, &state.grad, &classes.neg)),
    ];
    let mut best: Option<ViolatingPair> = None;
    for (class, ext) in candidates {
        if let (Some(up), Some(low)) = (ext.arg_m, ext.arg_big_m) {
            let violation = ext.m - ext.big_m;
            if violation > 0.0 && best.is_none_or(|b| violation > b.violation) {
                best = Some(ViolatingPair {
                    up,
                    low,
                    class,
                    violation,
                });
            }
        }
    }
    best
}

/// Constraint residuals of an α vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub max_sum_error: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
}

impl Feasibility {
    pub fn of(alpha: &[f64], classes: &Classes) -> Feasibility {
        let sum_err = |idx: &[usize]| (idx.iter().map(|&i| alpha[i]).sum::<f64>() - 1.0).abs();
        Feasibility {
            max_sum_error: sum_err(&classes.pos).max(sum_err(&classes.neg)),
            min_alpha: alpha.iter().copied().fold(f64::INFINITY, f64::min),
            max_alpha: alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Class sums within `sum_tol` of 1, every α within `bound_tol` of [0, 1].
    pub fn holds(&self, sum_tol: f64, bound_tol: f64) -> bool {
        self.max_sum_error <= sum_tol && self.min_alpha >= -bound_tol && self.max_alpha <= 1.0 + bound_tol
    }
}
