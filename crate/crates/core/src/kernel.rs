//! Gaussian kernel, the labeled Gram matrix and its γ-derivative.
//!
//! Squared distances are computed once per training set and shared
//! (`Arc`) between every [`GramPack`] built during a γ search, so moving
//! to a new γ costs one elementwise `exp` over a fixed matrix.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::TrainingSet;

/// Row count above which matrix work is split across threads.
const PAR_THRESHOLD: usize = 256;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
}

/// exp(-γ‖a − b‖²).
pub fn gaussian_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64, KernelError> {
    if a.len() != b.len() {
        return Err(KernelError::LengthMismatch(a.len(), b.len()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(KernelError::BadGamma(gamma));
    }
    Ok((-gamma * squared_distance(a, b)).exp())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian width γ and penalty C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub gamma: f64,
    pub c_reg: f64,
}

impl KernelParams {
    pub fn new(gamma: f64, c_reg: f64) -> Result<KernelParams, KernelError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(KernelError::BadGamma(gamma));
        }
        if !(c_reg > 0.0 && c_reg.is_finite()) {
            return Err(KernelError::BadC(c_reg));
        }
        Ok(KernelParams { gamma, c_reg })
    }
}

/// Storage precision for the l×l matrices. Solver arithmetic is always f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramPrecision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone)]
enum Storage {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

/// Dense symmetric matrix stored in full row-major order.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    storage: Storage,
}

impl SymMatrix {
    fn from_rows<F>(n: usize, precision: GramPrecision, fill: F) -> SymMatrix
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let mut data = vec![0.0f64; n * n];
        if n >= PAR_THRESHOLD {
            data.par_chunks_mut(n.max(1))
                .enumerate()
                .for_each(|(i, row)| fill(i, row));
        } else {
            data.chunks_mut(n.max(1))
                .enumerate()
                .for_each(|(i, row)| fill(i, row));
        }
        let storage = match precision {
            GramPrecision::F64 => Storage::F64(data),
            GramPrecision::F32 => Storage::F32(data.into_iter().map(|v| v as f32).collect()),
        };
        SymMatrix { n, storage }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn precision(&self) -> GramPrecision {
        match self.storage {
            Storage::F64(_) => GramPrecision::F64,
            Storage::F32(_) => GramPrecision::F32,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::F64(d) => d[i * self.n + j],
            Storage::F32(d) => d[i * self.n + j] as f64,
        }
    }

    /// Σ_j M[i][j]·v[j].
    #[inline]
    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        let n = self.n;
        match &self.storage {
            Storage::F64(d) => dot(&d[i * n..(i + 1) * n], v),
            Storage::F32(d) => d[i * n..(i + 1) * n]
                .iter()
                .zip(v)
                .map(|(&a, b)| a as f64 * b)
                .sum(),
        }
    }

    /// out += s·M[:, j] (equal to row j by symmetry).
    #[inline]
    pub fn add_col_scaled(&self, j: usize, s: f64, out: &mut [f64]) {
        let n = self.n;
        match &self.storage {
            Storage::F64(d) => {
                for (o, &a) in out.iter_mut().zip(&d[j * n..(j + 1) * n]) {
                    *o += s * a;
                }
            }
            Storage::F32(d) => {
                for (o, &a) in out.iter_mut().zip(&d[j * n..(j + 1) * n]) {
                    *o += s * a as f64;
                }
            }
        }
    }

    fn map<F: Fn(usize, usize, f64) -> f64 + Sync>(&self, precision: GramPrecision, f: F) -> SymMatrix {
        SymMatrix::from_rows(self.n, precision, |i, row| {
            for (j, out) in row.iter_mut().enumerate() {
                *out = f(i, j, self.get(i, j));
            }
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise ‖x_i − x_j‖² for a fixed training set.
#[derive(Debug, Clone)]
pub struct SqDistMatrix(SymMatrix);

impl SqDistMatrix {
    pub fn from_rows(rows: &[Vec<f64>], precision: GramPrecision) -> SqDistMatrix {
        SqDistMatrix(SymMatrix::from_rows(rows.len(), precision, |i, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = if i == j { 0.0 } else { squared_distance(&rows[i], &rows[j]) };
            }
        }))
    }

    pub fn from_set(data: &TrainingSet, precision: GramPrecision) -> SqDistMatrix {
        SqDistMatrix::from_rows(&data.dense_rows(), precision)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sample signs and per-class index lists, shared between Gram packs.
#[derive(Debug, Clone, PartialEq)]
pub struct Classes {
    pub signs: Vec<f64>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl Classes {
    pub fn from_set(data: &TrainingSet) -> Classes {
        Classes {
            signs: data.signs(),
            pos: data.pos_idx().to_vec(),
            neg: data.neg_idx().to_vec(),
        }
    }

    pub fn from_signs(signs: Vec<f64>) -> Classes {
        let pos = (0..signs.len()).filter(|&i| signs[i] > 0.0).collect();
        let neg = (0..signs.len()).filter(|&i| signs[i] < 0.0).collect();
        Classes { signs, pos, neg }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    #[inline]
    pub fn is_pos(&self, i: usize) -> bool {
        self.signs[i] > 0.0
    }

    /// Index list of the class `i` belongs to.
    pub fn class_of(&self, i: usize) -> &[usize] {
        if self.is_pos(i) {
            &self.pos
        } else {
            &self.neg
        }
    }

    /// Both index lists, positive first.
    pub fn both(&self) -> [&[usize]; 2] {
        [&self.pos, &self.neg]
    }
}

/// Cached matrices of the dual problem at one (γ, C).
///
/// `labeled(i, j)` is G[i][j] = y_i·y_j·exp(−γ‖x_i − x_j‖²); the regularized
/// matrix G + I/C is never stored, its diagonal is added on the fly.
#[derive(Debug, Clone)]
pub struct GramPack {
    sqdist: Arc<SqDistMatrix>,
    classes: Arc<Classes>,
    gram: SymMatrix,
    params: KernelParams,
    inv_c: f64,
}

impl GramPack {
    pub fn build(data: &TrainingSet, params: KernelParams, precision: GramPrecision) -> GramPack {
        let sq = Arc::new(SqDistMatrix::from_set(data, precision));
        GramPack::from_sqdist(sq, Arc::new(Classes::from_set(data)), params, precision)
    }

    pub fn from_sqdist(
        sqdist: Arc<SqDistMatrix>,
        classes: Arc<Classes>,
        params: KernelParams,
        precision: GramPrecision,
    ) -> GramPack {
        assert_eq!(sqdist.len(), classes.len(), "distance matrix and labels differ in size");
        let y = &classes.signs;
        let gamma = params.gamma;
        let gram = sqdist
            .matrix()
            .map(precision, |i, j, d2| y[i] * y[j] * (-gamma * d2).exp());
        GramPack {
            sqdist,
            classes,
            gram,
            params,
            inv_c: 1.0 / params.c_reg,
        }
    }

    /// Same data and C at a different γ, reusing the distance matrix.
    pub fn with_gamma(&self, gamma: f64) -> Result<GramPack, KernelError> {
        let params = KernelParams::new(gamma, self.params.c_reg)?;
        Ok(GramPack::from_sqdist(
            Arc::clone(&self.sqdist),
            Arc::clone(&self.classes),
            params,
            self.gram.precision(),
        ))
    }

    pub fn len(&self) -> usize {
        self.gram.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.is_empty()
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn c_reg(&self) -> f64 {
        self.params.c_reg
    }

    pub fn inv_c(&self) -> f64 {
        self.inv_c
    }

    pub fn classes(&self) -> &Classes {
        &self.classes
    }

    pub fn shared_classes(&self) -> Arc<Classes> {
        Arc::clone(&self.classes)
    }

    pub fn sqdist(&self) -> &Arc<SqDistMatrix> {
        &self.sqdist
    }

    /// G[i][j].
    #[inline]
    pub fn labeled(&self, i: usize, j: usize) -> f64 {
        self.gram.get(i, j)
    }

    /// (G + I/C)[i][j].
    #[inline]
    pub fn reg(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.gram.get(i, i) + self.inv_c
        } else {
            self.gram.get(i, j)
        }
    }

    /// Σ_j (G + I/C)[i][j]·v[j].
    #[inline]
    pub fn reg_row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.gram.row_dot(i, v) + self.inv_c * v[i]
    }

    /// out = (G + I/C)·v.
    pub fn reg_matvec(&self, v: &[f64], out: &mut [f64]) {
        if self.len() >= PAR_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = self.reg_row_dot(i, v));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.reg_row_dot(i, v);
            }
        }
    }

    /// out += s·(G + I/C)[:, j].
    #[inline]
    pub fn add_reg_col_scaled(&self, j: usize, s: f64, out: &mut [f64]) {
        self.gram.add_col_scaled(j, s, out);
        out[j] += s * self.inv_c;
    }

    /// ∂f/∂γ at fixed α: ½·Σ_ij α_i α_j G_ij·(−‖x_i − x_j‖²). The 1/C
    /// diagonal does not depend on γ and drops out.
    pub fn gamma_derivative(&self, alpha: &[f64]) -> f64 {
        let row = |i: usize| -> f64 {
            if alpha[i] == 0.0 {
                return 0.0;
            }
            let s: f64 = (0..self.len())
                .filter(|&j| alpha[j] != 0.0)
                .map(|j| self.gram.get(i, j) * self.sqdist.get(i, j) * alpha[j])
                .sum();
            alpha[i] * s
        };
        let rows: Vec<f64> = if self.len() >= PAR_THRESHOLD {
            (0..self.len()).into_par_iter().map(row).collect()
        } else {
            (0..self.len()).map(row).collect()
        };
        -0.5 * rows.iter().sum::<f64>()
    }

    /// The full (G + I/C) as nested vectors; intended for tests and oracles.
    pub fn reg_gram_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.reg(i, j)).collect())
            .collect()
    }
}
