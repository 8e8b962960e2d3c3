//! Brute-force reference computations for tests and acceptance runs.
//!
//! Nothing here touches the solver code paths: objectives are evaluated from
//! raw points with [`gaussian_kernel`], projections are built from explicit
//! constraint matrices and solved by Gaussian elimination.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Label, TrainingSet};
use crate::dual::{at_lower, at_upper};
use crate::kernel::{gaussian_kernel, Classes, KernelParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for the oracle: {0}")]
    TooLarge(String),
    #[error("grid step must lie in (0, 1], got {0}")]
    BadStep(f64),
    #[error("singular system (pivot {0:e})")]
    Singular(f64),
}

/// Random points in [−1, 1]^dim, `n_pos` positives followed by `n_neg`
/// negatives. Returns the set and its dense rows.
pub fn random_instance(seed: u64, n_pos: usize, n_neg: usize, dim: usize) -> (TrainingSet, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n_pos + n_neg)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<Label> = (0..n_pos + n_neg)
        .map(|i| if i < n_pos { Label::Pos } else { Label::Neg })
        .collect();
    let set = TrainingSet::from_dense(&rows, &labels).expect("random instance has both classes");
    (set, rows)
}

/// Regularized labeled kernel matrix y_i y_j k(x_i, x_j) + δ_ij/C from raw rows.
pub fn reg_kernel_matrix(rows: &[Vec<f64>], signs: &[f64], params: KernelParams) -> Vec<Vec<f64>> {
    let n = rows.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let k = gaussian_kernel(&rows[i], &rows[j], params.gamma).expect("equal lengths");
                    signs[i] * signs[j] * k + if i == j { 1.0 / params.c_reg } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// ½·αᵀQα for a dense Q.
pub fn quad_form(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, row) in q.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            s += alpha[i] * v * alpha[j];
        }
    }
    0.5 * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOracleResult {
    pub alpha_hat: Vec<f64>,
    pub obj_hat: f64,
    pub grid_step: f64,
}

/// Points of the grid on the simplex of dimension `k − 1` (k ≤ 3).
fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / n as f64;
    match k {
        1 => vec![vec![1.0]],
        2 => (0..=n).map(|a| vec![a as f64 * h, (n - a) as f64 * h]).collect(),
        3 => {
            let mut out = Vec::new();
            for a in 0..=n {
                for b in 0..=(n - a) {
                    out.push(vec![a as f64 * h, b as f64 * h, (n - a - b) as f64 * h]);
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

/// Exhaustive minimization of the dual objective over a product grid on the
/// two class simplices. At most 3 samples per class.
pub fn grid_qp(data: &TrainingSet, params: KernelParams, step: f64) -> Result<GridOracleResult, OracleError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(OracleError::BadStep(step));
    }
    let (pos, neg) = (data.pos_idx(), data.neg_idx());
    if pos.len() > 3 || neg.len() > 3 {
        return Err(OracleError::TooLarge(format!(
            "{} positives and {} negatives (max 3 each)",
            pos.len(),
            neg.len()
        )));
    }
    let q = reg_kernel_matrix(&data.dense_rows(), &data.signs(), params);
    let n = (1.0 / step).round() as usize;
    let gp = simplex_grid(pos.len(), n);
    let gn = simplex_grid(neg.len(), n);

    // f = ½ a_pᵀQ_pp a_p + ½ a_nᵀQ_nn a_n + a_pᵀQ_pn a_n
    let self_term = |idx: &[usize], w: &[f64]| -> f64 {
        let mut s = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                s += w[a] * q[i][j] * w[b];
            }
        }
        0.5 * s
    };
    let fp: Vec<f64> = gp.iter().map(|w| self_term(pos, w)).collect();
    let fn_: Vec<f64> = gn.iter().map(|w| self_term(neg, w)).collect();
    // Cross term as a dot product: (Q_pn a_n) precomputed per negative grid point.
    let cross: Vec<Vec<f64>> = gn
        .iter()
        .map(|w| {
            pos.iter()
                .map(|&i| neg.iter().zip(w).map(|(&j, wj)| q[i][j] * wj).sum())
                .collect()
        })
        .collect();

    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (a, wp) in gp.iter().enumerate() {
        for (b, c) in cross.iter().enumerate() {
            let x: f64 = wp.iter().zip(c).map(|(u, v)| u * v).sum();
            let f = fp[a] + fn_[b] + x;
            if f < best.0 {
                best = (f, a, b);
            }
        }
    }
    let mut alpha = vec![0.0; data.len()];
    for (k, &i) in pos.iter().enumerate() {
        alpha[i] = gp[best.1][k];
    }
    for (k, &i) in neg.iter().enumerate() {
        alpha[i] = gn[best.2][k];
    }
    Ok(GridOracleResult {
        obj_hat: quad_form(&q, &alpha),
        alpha_hat: alpha,
        grid_step: 1.0 / n as f64,
    })
}

/// Solves A·X = B in place by Gaussian elimination with partial pivoting.
/// `b` holds the right-hand sides as columns (row-major, `b[i][k]`).
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= 1e-12 * scale {
            return Err(OracleError::Singular(a[piv][col]));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (pa, pb) = (a[col].clone(), b[col].clone());
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for (x, p) in a[r][col..].iter_mut().zip(&pa[col..]) {
                *x -= f * p;
            }
            for (x, p) in b[r].iter_mut().zip(&pb) {
                *x -= f * p;
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..b[col].len() {
            let mut s = b[col][k];
            for c in col + 1..n {
                s -= a[col][c] * b[c][k];
            }
            b[col][k] = s / a[col][col];
        }
    }
    Ok(b)
}

/// Kind of one row of the constraint matrix M.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRow {
    /// Class-sum row (indicator of the class).
    Sum(Label),
    /// α_i = 0 is active; the row is −e_iᵀ.
    Lower(usize),
    /// α_i = 1 is active; the row is +e_iᵀ.
    Upper(usize),
}

/// Result of projecting −∇f onto the null space of the active constraints.
#[derive(Debug, Clone)]
pub struct ExplicitProjection {
    pub d: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub rows: Vec<ConstraintRow>,
    /// λ = −(MMᵀ)⁻¹M∇f, one entry per row.
    pub lambda: Vec<f64>,
}

impl ExplicitProjection {
    pub fn bound_multiplier(&self, i: usize) -> Option<f64> {
        self.rows
            .iter()
            .position(|r| matches!(r, ConstraintRow::Lower(k) | ConstraintRow::Upper(k) if *k == i))
            .map(|r| self.lambda[r])
    }

    pub fn sum_multiplier(&self, class: Label) -> f64 {
        let r = self
            .rows
            .iter()
            .position(|r| *r == ConstraintRow::Sum(class))
            .expect("sum rows are always present");
        self.lambda[r]
    }
}

/// Builds M from the two class-sum rows and every active bound not listed in
/// `released`, then forms P = I − Mᵀ(MMᵀ)⁻¹M, d = −P∇f and λ.
pub fn explicit_projection(
    alpha: &[f64],
    classes: &Classes,
    grad: &[f64],
    released: &[usize],
) -> Result<ExplicitProjection, OracleError> {
    let l = alpha.len();
    if l > 12 {
        return Err(OracleError::TooLarge(format!("{l} samples (max 12)")));
    }
    let mut rows = vec![ConstraintRow::Sum(Label::Pos), ConstraintRow::Sum(Label::Neg)];
    for (i, &a) in alpha.iter().enumerate() {
        if released.contains(&i) {
            continue;
        }
        if at_lower(a) {
            rows.push(ConstraintRow::Lower(i));
        } else if at_upper(a) {
            rows.push(ConstraintRow::Upper(i));
        }
    }
    let m: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; l];
            match *r {
                ConstraintRow::Sum(Label::Pos) => classes.pos.iter().for_each(|&i| v[i] = 1.0),
                ConstraintRow::Sum(Label::Neg) => classes.neg.iter().for_each(|&i| v[i] = 1.0),
                ConstraintRow::Lower(i) => v[i] = -1.0,
                ConstraintRow::Upper(i) => v[i] = 1.0,
            }
            v
        })
        .collect();
    let k = rows.len();
    let mmt: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| (0..l).map(|i| m[a][i] * m[b][i]).sum()).collect())
        .collect();
    // X = (MMᵀ)⁻¹M, solved column by column.
    let x = solve_linear(mmt, m.clone())?;
    let mut p = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in 0..l {
            let s: f64 = (0..k).map(|r| m[r][i] * x[r][j]).sum();
            p[i][j] = if i == j { 1.0 } else { 0.0 } - s;
        }
    }
    let d = (0..l).map(|i| -(0..l).map(|j| p[i][j] * grad[j]).sum::<f64>()).collect();
    let lambda = (0..k).map(|r| -(0..l).map(|j| x[r][j] * grad[j]).sum::<f64>()).collect();
    Ok(ExplicitProjection { d, p, rows, lambda })
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Lower-triangular L with A = L·Lᵀ.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v <= 0.0 {
                    return Err(OracleError::Singular(v));
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Fisher ratio computed in an explicit feature space: the rows of the
/// Cholesky factor of the (unlabeled, unregularized) kernel matrix.
pub fn fisher_ratio_embedded(data: &TrainingSet, gamma: f64) -> Result<f64, OracleError> {
    let rows = data.dense_rows();
    let n = rows.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| gaussian_kernel(&rows[i], &rows[j], gamma).expect("equal lengths"))
                .collect()
        })
        .collect();
    let phi = cholesky(&k)?;
    let mean = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; n];
        for &i in idx {
            for (c, v) in m.iter_mut().zip(&phi[i]) {
                *c += v / idx.len() as f64;
            }
        }
        m
    };
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let (mp, mn) = (mean(data.pos_idx()), mean(data.neg_idx()));
    let inter = sq(&mp, &mn);
    let spread = |idx: &[usize], m: &[f64]| -> f64 {
        idx.iter().map(|&i| sq(&phi[i], m)).sum::<f64>() / idx.len() as f64
    };
    let inner = spread(data.pos_idx(), &mp) + spread(data.neg_idx(), &mn);
    Ok(inter / inner)
}

/// v_i and v_j of the two-variable subproblem summed literally over every
/// other sample: v_i = Σ_{k∉{i,j}} α_k·Q_ik.
pub fn pair_v_literal(q: &[Vec<f64>], alpha: &[f64], i: usize, j: usize) -> (f64, f64) {
    let v = |r: usize| -> f64 {
        (0..alpha.len())
            .filter(|&k| k != i && k != j)
            .map(|k| alpha[k] * q[r][k])
            .sum()
    };
    (v(i), v(j))
}
