//! Inner-solver interface and the name-keyed registry.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::dual::{AlphaState, Feasibility};
use crate::kernel::{Classes, GramPack};

/// Iterations between full gradient recomputations.
pub(crate) const REFRESH_EVERY: usize = 100;

/// Worst values seen during one solve, for the feasibility and descent checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveTrack {
    /// Largest per-iteration objective increase (≤ 0 for strict descent).
    pub max_ascent: f64,
    pub max_sum_error: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
}

impl SolveTrack {
    pub(crate) fn new() -> SolveTrack {
        SolveTrack {
            max_ascent: f64::NEG_INFINITY,
            max_sum_error: 0.0,
            min_alpha: f64::INFINITY,
            max_alpha: f64::NEG_INFINITY,
        }
    }

    pub(crate) fn observe(&mut self, before: f64, after: f64, alpha: &[f64], classes: &Classes) {
        self.max_ascent = self.max_ascent.max(after - before);
        self.observe_alpha(alpha, classes);
    }

    pub(crate) fn observe_alpha(&mut self, alpha: &[f64], classes: &Classes) {
        let f = Feasibility::of(alpha, classes);
        self.max_sum_error = self.max_sum_error.max(f.max_sum_error);
        self.min_alpha = self.min_alpha.min(f.min_alpha);
        self.max_alpha = self.max_alpha.max(f.max_alpha);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub state: AlphaState,
    pub iterations: usize,
    pub converged: bool,
    pub track: SolveTrack,
}

/// A method for the inner minimization over α at fixed (γ, C).
pub trait DualSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Minimizes from `init` (its cached gradient is recomputed against
    /// `pack`, so a state from another γ is a valid warm start) until the KKT violation is at most `eps1` or
    /// `max_epochs` iterations have run.
    fn solve(&self, pack: &GramPack, init: AlphaState, eps1: f64, max_epochs: usize) -> SolveOutcome;
}

pub struct Pga;
pub struct Smo;

impl DualSolver for Pga {
    fn name(&self) -> &'static str {
        "pga"
    }

    fn solve(&self, pack: &GramPack, init: AlphaState, eps1: f64, max_epochs: usize) -> SolveOutcome {
        crate::pga::pga_solve(pack, init, eps1, max_epochs)
    }
}

impl DualSolver for Smo {
    fn name(&self) -> &'static str {
        "smo"
    }

    fn solve(&self, pack: &GramPack, init: AlphaState, eps1: f64, max_epochs: usize) -> SolveOutcome {
        crate::smo::smo_solve(pack, init, eps1, max_epochs)
    }
}

#[derive(Default)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn DualSolver>>,
}

impl SolverRegistry {
    pub fn new() -> SolverRegistry {
        SolverRegistry::default()
    }

    /// Registry holding "pga" and "smo".
    pub fn with_defaults() -> SolverRegistry {
        let mut r = SolverRegistry::new();
        r.register(Box::new(Pga));
        r.register(Box::new(Smo));
        r
    }

    /// Adds `solver`, replacing any solver already registered under its name.
    pub fn register(&mut self, solver: Box<dyn DualSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Option<&dyn DualSolver> {
        self.solvers.get(name).map(|b| b.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}

/// Built-in solver choice, as carried in configs and CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    Pga,
    Smo,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Pga => "pga",
            SolverKind::Smo => "smo",
        }
    }

    pub fn solver(self) -> &'static dyn DualSolver {
        match self {
            SolverKind::Pga => &Pga,
            SolverKind::Smo => &Smo,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("unknown solver {0:?} (expected pga or smo)")]
pub struct UnknownSolver(pub String);

impl FromStr for SolverKind {
    type Err = UnknownSolver;

    fn from_str(s: &str) -> Result<SolverKind, UnknownSolver> {
        match s {
            "pga" => Ok(SolverKind::Pga),
            "smo" => Ok(SolverKind::Smo),
            _ => Err(UnknownSolver(s.to_string())),
        }
    }
}
