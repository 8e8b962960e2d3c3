//! Trained classifier: support vectors, thresholds, decisions, the model
//! file format and evaluation metrics.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Label, Sample, StandardizationStats, TrainingSet};
use crate::dual::BOUND_TOL;
use crate::kernel::{gaussian_kernel, GramPack, GramPrecision, KernelParams};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "maxmin-svc-model";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("input has {got} features but the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model format version {found} is not supported (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("class {0} has no support vector")]
    MissingClass(&'static str),
    #[error("alpha has {alpha} entries for {samples} samples")]
    LengthMismatch { alpha: usize, samples: usize },
    #[error("cannot evaluate on an empty set")]
    EmptyTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    /// Standardized features, length `stats.dim()`.
    pub features: Vec<f64>,
    pub label: Label,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcModel {
    pub gamma: f64,
    pub c_reg: f64,
    pub support: Vec<SupportVector>,
    pub p_star: f64,
    pub q_star: f64,
    pub stats: StandardizationStats,
    pub format_version: u32,
}

/// Σ_{i∈S} y_i α_i k(x_j, x_i) + y_j α_j/C for every support vector j,
/// split by the class of j. `data` must be the (standardized) set `alpha`
/// was solved on.
pub fn threshold_terms(
    alpha: &[f64],
    data: &TrainingSet,
    params: KernelParams,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if alpha.len() != data.len() {
        return Err(ModelError::LengthMismatch {
            alpha: alpha.len(),
            samples: data.len(),
        });
    }
    let rows = data.dense_rows();
    let signs = data.signs();
    let sv: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > BOUND_TOL).collect();
    let term = |j: usize| -> f64 {
        let s: f64 = sv
            .iter()
            .map(|&i| signs[i] * alpha[i] * gaussian_kernel(&rows[j], &rows[i], params.gamma).expect("equal lengths"))
            .sum();
        s + signs[j] * alpha[j] / params.c_reg
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &j in &sv {
        if signs[j] > 0.0 {
            pos.push(term(j));
        } else {
            neg.push(term(j));
        }
    }
    Ok((pos, neg))
}

/// (p*, q*): the per-support-vector terms averaged within each class.
pub fn thresholds(alpha: &[f64], data: &TrainingSet, params: KernelParams) -> Result<(f64, f64), ModelError> {
    let (pos, neg) = threshold_terms(alpha, data, params)?;
    if pos.is_empty() {
        return Err(ModelError::MissingClass("+1"));
    }
    if neg.is_empty() {
        return Err(ModelError::MissingClass("-1"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&pos), mean(&neg)))
}

impl SvcModel {
    /// Builds the predictor from a solution on the standardized set `data`.
    pub fn from_solution(
        data: &TrainingSet,
        alpha: &[f64],
        params: KernelParams,
        stats: StandardizationStats,
    ) -> Result<SvcModel, ModelError> {
        let (p_star, q_star) = thresholds(alpha, data, params)?;
        let dim = stats.dim();
        let support = data
            .samples()
            .iter()
            .zip(alpha)
            .filter(|(_, &a)| a > BOUND_TOL)
            .map(|(s, &a)| SupportVector {
                features: s.dense(dim),
                label: s.label,
                alpha: a,
            })
            .collect();
        Ok(SvcModel {
            gamma: params.gamma,
            c_reg: params.c_reg,
            support,
            p_star,
            q_star,
            stats,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn threshold(&self) -> f64 {
        0.5 * (self.p_star + self.q_star)
    }

    fn check_dim(&self, got: usize) -> Result<(), ModelError> {
        if got != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Σ y_i α_i k(x, x_i) − (p* + q*)/2 for a raw (unstandardized) input.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x.len())?;
        let z = self.stats.apply(x);
        let s: f64 = self
            .support
            .iter()
            .map(|sv| sv.label.sign() * sv.alpha * gaussian_kernel(&z, &sv.features, self.gamma).expect("equal lengths"))
            .sum();
        Ok(s - self.threshold())
    }

    /// Predicted label; a decision value of exactly 0 maps to +1.
    pub fn decide(&self, x: &[f64]) -> Result<Label, ModelError> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        })
    }

    /// `decide` for a sparse sample; missing features are zero.
    pub fn decide_sample(&self, sample: &Sample) -> Result<Label, ModelError> {
        if sample.max_index() > self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                got: sample.max_index(),
            });
        }
        self.decide(&sample.dense(self.dim()))
    }

    /// Labels for many samples, computed in parallel, in input order.
    pub fn decide_batch(&self, samples: &[Sample]) -> Result<Vec<Label>, ModelError> {
        samples.par_iter().map(|s| self.decide_sample(s)).collect()
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "version {}", self.format_version);
        let _ = writeln!(s, "gamma {:e}", self.gamma);
        let _ = writeln!(s, "c {:e}", self.c_reg);
        let _ = writeln!(s, "p_star {:e}", self.p_star);
        let _ = writeln!(s, "q_star {:e}", self.q_star);
        let _ = writeln!(s, "dim {}", self.dim());
        let _ = writeln!(s, "mean {}", join(&self.stats.mean));
        let _ = writeln!(s, "scale {}", join(&self.stats.scale));
        let _ = writeln!(s, "support {}", self.support.len());
        for sv in &self.support {
            let _ = write!(s, "{} {:e}", sv.label.as_str(), sv.alpha);
            for (j, v) in sv.features.iter().enumerate() {
                if *v != 0.0 {
                    let _ = write!(s, " {}:{v:e}", j + 1);
                }
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    pub fn deserialize(text: &str) -> Result<SvcModel, ModelError> {
        let mut lines = text.lines();
        let bad = |m: String| ModelError::CorruptModel(m);
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header line".into()));
        }
        let mut field = |key: &str| -> Result<String, ModelError> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                None if line == key => Ok(String::new()),
                _ => Err(bad(format!("expected {key}, found {line:?}"))),
            }
        };
        let version: u32 = field("version")?.parse().map_err(|_| bad("version".into()))?;
        if version != FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let real = |key: &str, v: String| -> Result<f64, ModelError> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{key}: {v:?}")))
        };
        let gamma = real("gamma", field("gamma")?)?;
        let c_reg = real("c", field("c")?)?;
        let p_star = real("p_star", field("p_star")?)?;
        let q_star = real("q_star", field("q_star")?)?;
        let dim: usize = field("dim")?.parse().map_err(|_| bad("dim".into()))?;
        let reals = |key: &str, v: String| -> Result<Vec<f64>, ModelError> {
            let out = v
                .split_whitespace()
                .map(|t| real(key, t.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            if out.len() != dim {
                return Err(bad(format!("{key} has {} values, expected {dim}", out.len())));
            }
            Ok(out)
        };
        let mean = reals("mean", field("mean")?)?;
        let scale = reals("scale", field("scale")?)?;
        let n_sv: usize = field("support")?.parse().map_err(|_| bad("support".into()))?;
        let mut support = Vec::with_capacity(n_sv);
        for k in 0..n_sv {
            let line = lines.next().ok_or_else(|| bad(format!("support vector {k} missing")))?;
            support.push(parse_support_line(line, dim).map_err(|m| bad(format!("support vector {k}: {m}")))?);
        }
        if lines.next() != Some("end") {
            return Err(bad("missing end marker".into()));
        }
        for label in [Label::Pos, Label::Neg] {
            if !support.iter().any(|sv| sv.label == label) {
                return Err(bad(format!("no support vector of class {}", label.as_str())));
            }
        }
        Ok(SvcModel {
            gamma,
            c_reg,
            support,
            p_star,
            q_star,
            stats: StandardizationStats { mean, scale },
            format_version: version,
        })
    }

    /// Fraction of correctly labeled samples in `test`.
    pub fn accuracy(&self, test: &TrainingSet) -> Result<EvalReport, ModelError> {
        if test.is_empty() {
            return Err(ModelError::EmptyTest);
        }
        let predicted = self.decide_batch(test.samples())?;
        let n_correct = predicted
            .iter()
            .zip(test.samples())
            .filter(|(p, s)| **p == s.label)
            .count();
        Ok(EvalReport::new(n_correct, test.len()))
    }
}

fn parse_support_line(line: &str, dim: usize) -> Result<SupportVector, String> {
    let mut tok = line.split_whitespace();
    let label = match tok.next() {
        Some("+1") | Some("1") => Label::Pos,
        Some("-1") => Label::Neg,
        other => return Err(format!("bad label {other:?}")),
    };
    let alpha: f64 = tok
        .next()
        .and_then(|t| t.parse().ok())
        .filter(|a: &f64| *a > BOUND_TOL && *a <= 1.0 + BOUND_TOL)
        .ok_or("bad alpha")?;
    let mut features = vec![0.0; dim];
    for t in tok {
        let (i, v) = t.split_once(':').ok_or_else(|| format!("bad feature {t:?}"))?;
        let i: usize = i.parse().map_err(|_| format!("bad index {i:?}"))?;
        let v: f64 = v.parse().map_err(|_| format!("bad value {v:?}"))?;
        if i == 0 || i > dim || !v.is_finite() {
            return Err(format!("bad feature {t:?}"));
        }
        features[i - 1] = v;
    }
    Ok(SupportVector { features, label, alpha })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub fisher_ratio: Option<f64>,
}

impl EvalReport {
    pub fn new(n_correct: usize, n_total: usize) -> EvalReport {
        EvalReport {
            accuracy: n_correct as f64 / n_total as f64,
            n_correct,
            n_total,
            fisher_ratio: None,
        }
    }

    pub fn error_rate(&self) -> f64 {
        (self.n_total - self.n_correct) as f64 / self.n_total as f64
    }
}

/// Ratio of the squared distance between the class means to the summed
/// within-class variances, both in the Gaussian feature space of `params.gamma`.
pub fn fisher_ratio(data: &TrainingSet, params: KernelParams) -> f64 {
    fisher_ratio_pack(&GramPack::build(data, params, GramPrecision::F64))
}

/// `fisher_ratio` from an existing pack (its 1/C diagonal is not used).
/// Coincident class means give 0 even when both variances vanish.
pub fn fisher_ratio_pack(pack: &GramPack) -> f64 {
    let (inter, inner) = fisher_parts(pack);
    if inter <= 0.0 {
        0.0
    } else {
        inter / inner
    }
}

/// (D_inter, D_inner). With S_ab = Σ_{i∈a, j∈b} k(x_i, x_j):
/// D_inter = S₊₊/l₊² + S₋₋/l₋² − 2S₊₋/(l₊l₋) and
/// D_inner = (1 − S₊₊/l₊²) + (1 − S₋₋/l₋²), using k(x, x) = 1.
pub fn fisher_parts(pack: &GramPack) -> (f64, f64) {
    let classes = pack.classes();
    // labeled(i, j) carries y_i·y_j, which is +1 within a class and −1 across.
    let block = |a: &[usize], b: &[usize]| -> f64 {
        a.par_iter()
            .map(|&i| b.iter().map(|&j| pack.labeled(i, j)).sum::<f64>())
            .sum()
    };
    let (lp, ln) = (classes.pos.len() as f64, classes.neg.len() as f64);
    let spp = block(&classes.pos, &classes.pos) / (lp * lp);
    let snn = block(&classes.neg, &classes.neg) / (ln * ln);
    let spn = -block(&classes.pos, &classes.neg) / (lp * ln);
    (spp + snn - 2.0 * spn, (1.0 - spp) + (1.0 - snn))
}
