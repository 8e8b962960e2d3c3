//! Outer maximization over the Gaussian width γ.
//!
//! The hull distance min_α f(α, γ) is maximized by gradient ascent on γ,
//! using ∂f/∂γ at the current inner solution. The learning rate starts at 1
//! and afterwards equals the size of the previous γ move; a proposed γ is
//! accepted only if the re-solved inner minimum goes up, otherwise the rate
//! is halved.

use std::fmt::Write as _;

use crate::data::TrainingSet;
use crate::dual::AlphaState;
use crate::kernel::{GramPack, GramPrecision, KernelError, KernelParams};
use crate::solver::SolverKind;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaxMinError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxMinConfig {
    pub gamma0: f64,
    pub c_reg: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub epoch_gamma: usize,
    pub epoch_alpha: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub inner_solver: SolverKind,
    pub eta_floor: f64,
    pub max_halvings: usize,
    pub precision: GramPrecision,
    /// Start each inner solve from the previous α instead of the uniform point.
    pub warm_start: bool,
}

impl Default for MaxMinConfig {
    fn default() -> MaxMinConfig {
        MaxMinConfig {
            gamma0: 0.004,
            c_reg: 1.0,
            eps1: 1e-6,
            eps2: 1e-3,
            epoch_gamma: 500,
            epoch_alpha: 2000,
            gamma_lo: 2f64.powi(-15),
            gamma_hi: 8.0,
            inner_solver: SolverKind::Pga,
            eta_floor: 1e-10,
            max_halvings: 40,
            precision: GramPrecision::F64,
            warm_start: false,
        }
    }
}

impl MaxMinConfig {
    pub fn validate(&self) -> Result<(), MaxMinError> {
        KernelParams::new(self.gamma0, self.c_reg)?;
        let bad = |m: &str| Err(MaxMinError::BadConfig(m.to_string()));
        if !(self.gamma_lo > 0.0 && self.gamma_lo < self.gamma0 && self.gamma0 < self.gamma_hi) {
            return bad("need 0 < gamma_lo < gamma0 < gamma_hi");
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0 && self.eta_floor > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.epoch_gamma == 0 || self.epoch_alpha == 0 {
            return bad("epoch limits must be at least 1");
        }
        Ok(())
    }
}

/// clamp(γ + η·f′(γ), lo, hi).
pub fn gamma_update(gamma: f64, grad: f64, eta: f64, lo: f64, hi: f64) -> f64 {
    (gamma + eta * grad).clamp(lo, hi)
}

/// 1 on the first step, else |γ_new − γ_prev| but never below `floor`.
pub fn dynamic_eta(prev_gamma: f64, new_gamma: f64, initial: bool, floor: f64) -> f64 {
    if initial {
        1.0
    } else {
        (new_gamma - prev_gamma).abs().max(floor)
    }
}

/// One outer iteration. `eta` and `halvings` describe the move that left
/// this γ; both are 0 on the last row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRecord {
    pub gamma: f64,
    pub objective: f64,
    pub grad_gamma: f64,
    pub eta: f64,
    pub halvings: usize,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GammaTrace {
    pub records: Vec<GammaRecord>,
}

impl GammaTrace {
    pub const CSV_HEADER: &'static str = "iter,gamma,objective,grad_gamma,eta,halvings";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (k, r) in self.records.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{}",
                k, r.gamma, r.objective, r.grad_gamma, r.eta, r.halvings
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// |f′(γ)| ≤ eps2.
    Converged,
    EpochLimit,
    /// No ascent after `max_halvings` halvings, or the last accepted move
    /// was no larger than `eta_floor`.
    Stalled,
    /// The update is clamped back onto the γ interval end it started from.
    AtBound,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::EpochLimit => "epoch-limit",
            StopReason::Stalled => "stalled",
            StopReason::AtBound => "at-bound",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbResult {
    pub alpha: AlphaState,
    pub gamma: f64,
    pub pack: GramPack,
    pub trace: GammaTrace,
    pub stop: StopReason,
    /// Inner solves run, including rejected trial γ values.
    pub models_trained: usize,
}

impl GbResult {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_grad(&self) -> f64 {
        self.trace.records.last().map_or(0.0, |r| r.grad_gamma)
    }
}

/// Alternates inner solves and γ ascent until |f′(γ)| ≤ eps2, the epoch
/// limit, a stall, or a clamped-out move.
///
/// Each accepted move of size |Δγ| sets the next learning rate to |Δγ|, so
/// the next move is |Δγ|·|f′(γ)|. When |f′| < 1 the moves shrink
/// geometrically; once one is no larger than `eta_floor` the loop stops as
/// stalled.
pub fn gb_train(data: &TrainingSet, config: &MaxMinConfig) -> Result<GbResult, MaxMinError> {
    config.validate()?;
    let solver = config.inner_solver.solver();
    let params = KernelParams::new(config.gamma0, config.c_reg)?;
    let mut pack = GramPack::build(data, params, config.precision);
    let first = solver.solve(&pack, AlphaState::uniform(&pack), config.eps1, config.epoch_alpha);
    let mut models_trained = 1;
    let mut gamma = config.gamma0;
    let mut alpha = first.state;
    let mut inner = (first.iterations, first.converged);
    let mut eta = dynamic_eta(gamma, gamma, true, config.eta_floor);
    let mut trace = GammaTrace::default();
    let mut creeping = false;

    let stop = loop {
        let grad_gamma = pack.gamma_derivative(alpha.alpha());
        trace.records.push(GammaRecord {
            gamma,
            objective: alpha.obj(),
            grad_gamma,
            eta: 0.0,
            halvings: 0,
            inner_iterations: inner.0,
            inner_converged: inner.1,
        });
        if grad_gamma.abs() <= config.eps2 {
            break StopReason::Converged;
        }
        if trace.len() >= config.epoch_gamma {
            break StopReason::EpochLimit;
        }
        if creeping {
            break StopReason::Stalled;
        }

        let mut trial_eta = eta;
        let mut halvings = 0;
        let accepted = loop {
            let proposal = gamma_update(gamma, grad_gamma, trial_eta, config.gamma_lo, config.gamma_hi);
            if proposal == gamma {
                let pinned = gamma == config.gamma_lo || gamma == config.gamma_hi;
                break Err(if pinned { StopReason::AtBound } else { StopReason::Stalled });
            }
            let trial_pack = pack.with_gamma(proposal)?;
            let start = if config.warm_start {
                alpha.clone()
            } else {
                AlphaState::uniform(&trial_pack)
            };
            let sol = solver.solve(&trial_pack, start, config.eps1, config.epoch_alpha);
            models_trained += 1;
            if sol.state.obj() > alpha.obj() {
                break Ok((proposal, trial_pack, sol));
            }
            if halvings == config.max_halvings {
                break Err(StopReason::Stalled);
            }
            halvings += 1;
            trial_eta *= 0.5;
        };
        let last = trace.records.last_mut().expect("pushed above");
        last.halvings = halvings;
        match accepted {
            Ok((proposal, trial_pack, sol)) => {
                last.eta = trial_eta;
                eta = dynamic_eta(gamma, proposal, false, config.eta_floor);
                creeping = (proposal - gamma).abs() <= config.eta_floor;
                gamma = proposal;
                pack = trial_pack;
                alpha = sol.state;
                inner = (sol.iterations, sol.converged);
            }
            Err(reason) => break reason,
        }
    };

    Ok(GbResult {
        alpha,
        gamma,
        pack,
        trace,
        stop,
        models_trained,
    })
}
