//! Hyperparameter selection strategies and the end-to-end fit.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{StandardizationStats, TrainingSet};
use crate::dual::AlphaState;
use crate::kernel::{Classes, GramPack, GramPrecision, KernelError, KernelParams, SqDistMatrix};
use crate::maxmin::{gb_train, GammaTrace, MaxMinConfig, MaxMinError, StopReason};
use crate::model::{ModelError, SvcModel};
use crate::solver::SolverKind;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectError {
    #[error(transparent)]
    MaxMin(#[from] MaxMinError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cross-validation needs at least {folds} samples per class")]
    TooFewForFolds { folds: usize },
    #[error("empty parameter grid")]
    EmptyGrid,
}

/// Outcome of a selector on a standardized training set.
#[derive(Debug, Clone)]
pub struct Selection {
    pub gamma: f64,
    pub c_reg: f64,
    pub alpha: Vec<f64>,
    /// Every inner solve run, including rejected trials and CV folds.
    pub models_trained: usize,
    pub trace: Option<GammaTrace>,
    pub stop: Option<StopReason>,
}

/// A way of choosing (γ, C) and the matching dual solution.
pub trait ParamSelector: Send + Sync {
    fn name(&self) -> &'static str;

    /// `data` is already standardized.
    fn select(&self, data: &TrainingSet) -> Result<Selection, SelectError>;
}

/// Gradient ascent on γ with C fixed.
pub struct MaxMinSelector {
    pub config: MaxMinConfig,
}

impl ParamSelector for MaxMinSelector {
    fn name(&self) -> &'static str {
        "maxmin"
    }

    fn select(&self, data: &TrainingSet) -> Result<Selection, SelectError> {
        let r = gb_train(data, &self.config)?;
        Ok(Selection {
            gamma: r.gamma,
            c_reg: self.config.c_reg,
            alpha: r.alpha.into_alpha(),
            models_trained: r.models_trained,
            trace: Some(r.trace),
            stop: Some(r.stop),
        })
    }
}

/// Exhaustive k-fold cross-validated grid search.
#[derive(Debug, Clone)]
pub struct CvSelector {
    pub gammas: Vec<f64>,
    pub cs: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub eps1: f64,
    pub epoch_alpha: usize,
    pub solver: SolverKind,
}

/// 2^lo, 2^(lo+2), ..., 2^hi.
pub fn odd_power_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).step_by(2).map(|e| 2f64.powi(e)).collect()
}

impl Default for CvSelector {
    fn default() -> CvSelector {
        CvSelector {
            gammas: odd_power_grid(-15, 3),
            cs: odd_power_grid(-5, 15),
            folds: 5,
            seed: 0,
            eps1: 1e-6,
            epoch_alpha: 2000,
            solver: SolverKind::Pga,
        }
    }
}

impl CvSelector {
    /// Stratified fold assignment: each class is shuffled and dealt round-robin.
    pub fn fold_of(&self, data: &TrainingSet) -> Result<Vec<usize>, SelectError> {
        if data.pos_idx().len() < self.folds || data.neg_idx().len() < self.folds {
            return Err(SelectError::TooFewForFolds { folds: self.folds });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut fold = vec![0; data.len()];
        for class in [data.pos_idx(), data.neg_idx()] {
            let mut idx = class.to_vec();
            idx.shuffle(&mut rng);
            for (k, i) in idx.into_iter().enumerate() {
                fold[i] = k % self.folds;
            }
        }
        Ok(fold)
    }

    fn solve(&self, pack: &GramPack) -> Vec<f64> {
        self.solver
            .solver()
            .solve(pack, AlphaState::uniform(pack), self.eps1, self.epoch_alpha)
            .state
            .into_alpha()
    }

    /// Mean held-out accuracy of every grid cell, in (γ-major, C-minor) order.
    pub fn grid_scores(&self, data: &TrainingSet) -> Result<Vec<(f64, f64, f64)>, SelectError> {
        if self.gammas.is_empty() || self.cs.is_empty() {
            return Err(SelectError::EmptyGrid);
        }
        let fold = self.fold_of(data)?;
        let identity = StandardizationStats {
            mean: vec![0.0; data.dim()],
            scale: vec![1.0; data.dim()],
        };
        let parts: Vec<(TrainingSet, TrainingSet, Arc<SqDistMatrix>, Arc<Classes>)> = (0..self.folds)
            .map(|k| {
                let tr: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != k).collect();
                let te: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == k).collect();
                let tr = data.select(&tr).expect("indices in range");
                let te = data.select(&te).expect("indices in range");
                let sq = Arc::new(SqDistMatrix::from_set(&tr, GramPrecision::F64));
                let cl = Arc::new(Classes::from_set(&tr));
                (tr, te, sq, cl)
            })
            .collect();
        let cells: Vec<(f64, f64)> = self
            .gammas
            .iter()
            .flat_map(|&g| self.cs.iter().map(move |&c| (g, c)))
            .collect();
        cells
            .par_iter()
            .map(|&(g, c)| {
                let params = KernelParams::new(g, c)?;
                let mut correct = 0;
                for (tr, te, sq, cl) in &parts {
                    let pack = GramPack::from_sqdist(sq.clone(), cl.clone(), params, GramPrecision::F64);
                    let alpha = self.solve(&pack);
                    let m = SvcModel::from_solution(tr, &alpha, params, identity.clone())?;
                    correct += m.accuracy(te)?.n_correct;
                }
                Ok((g, c, correct as f64 / data.len() as f64))
            })
            .collect()
    }
}

impl ParamSelector for CvSelector {
    fn name(&self) -> &'static str {
        "cv"
    }

    /// Picks the best mean accuracy (earliest grid cell on ties) and refits
    /// on all of `data`.
    fn select(&self, data: &TrainingSet) -> Result<Selection, SelectError> {
        let scores = self.grid_scores(data)?;
        let (gamma, c_reg, _) = scores
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64, f64)>, s| match best {
                Some(b) if b.2 >= s.2 => Some(b),
                _ => Some(s),
            })
            .expect("grid is nonempty");
        let pack = GramPack::build(data, KernelParams::new(gamma, c_reg)?, GramPrecision::F64);
        Ok(Selection {
            gamma,
            c_reg,
            alpha: self.solve(&pack),
            models_trained: scores.len() * self.folds + 1,
            trace: None,
            stop: None,
        })
    }
}

#[derive(Default)]
pub struct SelectorRegistry {
    selectors: BTreeMap<&'static str, Box<dyn ParamSelector>>,
}

impl SelectorRegistry {
    pub fn new() -> SelectorRegistry {
        SelectorRegistry::default()
    }

    /// "maxmin" with `config` and "cv" with the standard grid and the same
    /// inner solver settings.
    pub fn with_defaults(config: MaxMinConfig) -> SelectorRegistry {
        let mut r = SelectorRegistry::new();
        r.register(Box::new(MaxMinSelector { config }));
        r.register(Box::new(CvSelector {
            eps1: config.eps1,
            epoch_alpha: config.epoch_alpha,
            solver: config.inner_solver,
            ..CvSelector::default()
        }));
        r
    }

    pub fn register(&mut self, selector: Box<dyn ParamSelector>) {
        self.selectors.insert(selector.name(), selector);
    }

    pub fn get(&self, name: &str) -> Option<&dyn ParamSelector> {
        self.selectors.get(name).map(|b| b.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.selectors.keys().copied().collect()
    }
}

/// A fitted model with the selection that produced it.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: SvcModel,
    pub selection: Selection,
}

/// Standardizes `train`, runs `selector` and builds the model.
pub fn fit(selector: &dyn ParamSelector, train: &TrainingSet) -> Result<Fit, SelectError> {
    let stats = StandardizationStats::fit(train);
    let std_train = stats.transform(train);
    let selection = selector.select(&std_train)?;
    let params = KernelParams::new(selection.gamma, selection.c_reg)?;
    let model = SvcModel::from_solution(&std_train, &selection.alpha, params, stats)?;
    Ok(Fit { model, selection })
}
