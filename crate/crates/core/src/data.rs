//! Sparse dataset parsing, standardization and seeded train/test splits.
//!
//! Input files use the LIBSVM text layout: one sample per line,
//! `<label> <index>:<value> ...` with 1-based ascending indices. A `#`
//! starts a comment that runs to the end of the line.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Errors produced while reading or splitting datasets.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("input contains no samples")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("dataset contains a single class (label {0})")]
    SingleClass(f64),
    #[error("dataset has {0} distinct labels; only binary problems are supported")]
    TooManyClasses(usize),
    #[error("each class needs at least {needed} samples to split (positives {pos}, negatives {neg})")]
    TooFewPerClass { needed: usize, pos: usize, neg: usize },
    #[error("invalid split fraction {0}; expected a value in (0, 1)")]
    BadFraction(f64),
    #[error("no split with both classes on each side after {0} attempts")]
    SplitExhausted(usize),
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    /// The label as `+1.0` / `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn from_sign(value: f64) -> Label {
        if value >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "+1",
            Label::Neg => "-1",
        }
    }
}

/// One labeled sample with sparse features sorted by (1-based) index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<(usize, f64)>,
    pub label: Label,
}

impl Sample {
    /// Dense copy of the features, padded with zeros up to `dim`.
    /// Indices beyond `dim` are dropped.
    pub fn dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(idx, v) in &self.features {
            if idx <= dim {
                out[idx - 1] = v;
            }
        }
        out
    }

    /// Largest feature index present, 0 for an empty sample.
    pub fn max_index(&self) -> usize {
        self.features.last().map_or(0, |&(i, _)| i)
    }
}

/// Labeled samples together with the positive/negative index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: Vec<Sample>,
    dim: usize,
    pos_idx: Vec<usize>,
    neg_idx: Vec<usize>,
}

impl TrainingSet {
    /// Builds a set from samples. `dim` is raised to the largest index seen.
    /// Fails if either class is missing.
    pub fn new(samples: Vec<Sample>, dim: usize) -> Result<TrainingSet, DataError> {
        if samples.is_empty() {
            return Err(DataError::EmptyInput);
        }
        let set = TrainingSet::unchecked(samples, dim);
        if set.pos_idx.is_empty() {
            return Err(DataError::SingleClass(-1.0));
        }
        if set.neg_idx.is_empty() {
            return Err(DataError::SingleClass(1.0));
        }
        Ok(set)
    }

    /// Builds a set without the two-class check; used for prediction inputs.
    pub fn unchecked(samples: Vec<Sample>, dim: usize) -> TrainingSet {
        let dim = samples.iter().map(Sample::max_index).fold(dim, usize::max);
        let mut pos_idx = Vec::new();
        let mut neg_idx = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            match s.label {
                Label::Pos => pos_idx.push(i),
                Label::Neg => neg_idx.push(i),
            }
        }
        TrainingSet {
            samples,
            dim,
            pos_idx,
            neg_idx,
        }
    }

    /// Builds a set from dense rows and `±1` labels.
    pub fn from_dense(rows: &[Vec<f64>], labels: &[Label]) -> Result<TrainingSet, DataError> {
        assert_eq!(rows.len(), labels.len(), "rows and labels differ in length");
        let dim = rows.iter().map(Vec::len).max().unwrap_or(0);
        let samples = rows
            .iter()
            .zip(labels)
            .map(|(row, &label)| Sample {
                features: row.iter().enumerate().map(|(j, &v)| (j + 1, v)).collect(),
                label,
            })
            .collect();
        TrainingSet::new(samples, dim)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pos_idx(&self) -> &[usize] {
        &self.pos_idx
    }

    pub fn neg_idx(&self) -> &[usize] {
        &self.neg_idx
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Labels as `±1.0`.
    pub fn signs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label.sign()).collect()
    }

    /// Dense row-major copy of the features, `len() x dim()`.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.dense(self.dim)).collect()
    }

    /// Subset in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<TrainingSet, DataError> {
        let samples = idx.iter().map(|&i| self.samples[i].clone()).collect();
        TrainingSet::new(samples, self.dim)
    }
}

/// Parses LIBSVM-formatted text.
///
/// Any two distinct numeric labels are accepted; the larger one maps to the
/// positive class, so `{-1,+1}`, `{0,1}` and `{1,2}` all work.
pub fn parse_sparse_dataset(text: &str) -> Result<TrainingSet, DataError> {
    let mut raw: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        raw.push(parse_line(content, line_no)?);
    }
    if raw.is_empty() {
        return Err(DataError::EmptyInput);
    }

    let mut distinct: Vec<f64> = Vec::new();
    for (y, _) in &raw {
        if !distinct.contains(y) {
            distinct.push(*y);
        }
    }
    match distinct.len() {
        1 => return Err(DataError::SingleClass(distinct[0])),
        2 => {}
        n => return Err(DataError::TooManyClasses(n)),
    }
    let positive = distinct[0].max(distinct[1]);

    let samples = raw
        .into_iter()
        .map(|(y, features)| Sample {
            features,
            label: if y == positive { Label::Pos } else { Label::Neg },
        })
        .collect();
    TrainingSet::new(samples, 0)
}

/// Parses prediction input: same layout, labels optional and unchecked.
/// Lines without a label get `Label::Pos`. Returns the samples and whether
/// every line carried a label.
pub fn parse_unlabeled(text: &str) -> Result<(Vec<Sample>, bool), DataError> {
    let mut out = Vec::new();
    let mut all_labeled = true;
    let mut raw_labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let first = content.split_whitespace().next().unwrap_or("");
        if first.contains(':') {
            all_labeled = false;
            let (_, feats) = parse_line(&format!("0 {content}"), line_no)?;
            raw_labels.push(None);
            out.push(feats);
        } else {
            let (y, feats) = parse_line(content, line_no)?;
            raw_labels.push(Some(y));
            out.push(feats);
        }
    }
    let mut distinct: Vec<f64> = raw_labels.iter().flatten().copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    // A lone label keeps its sign; otherwise the larger value is positive.
    let positive = match distinct.len() {
        0 => 0.0,
        1 => {
            if distinct[0] > 0.0 {
                distinct[0]
            } else {
                f64::INFINITY
            }
        }
        _ => *distinct.last().unwrap(),
    };
    let samples = out
        .into_iter()
        .zip(raw_labels)
        .map(|(features, y)| Sample {
            features,
            label: match y {
                Some(v) if v == positive => Label::Pos,
                Some(_) => Label::Neg,
                None => Label::Pos,
            },
        })
        .collect();
    Ok((samples, all_labeled))
}

fn parse_line(content: &str, line: usize) -> Result<(f64, Vec<(usize, f64)>), DataError> {
    let malformed = |reason: String| DataError::Malformed { line, reason };
    let mut tokens = content.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| malformed("missing label".into()))?;
    let label: f64 = label_tok
        .parse()
        .map_err(|_| malformed(format!("bad label {label_tok:?}")))?;
    if !label.is_finite() {
        return Err(malformed(format!("bad label {label_tok:?}")));
    }
    let mut features = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| malformed(format!("expected index:value, got {tok:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| malformed(format!("bad feature index {idx:?}")))?;
        if idx == 0 {
            return Err(malformed("feature indices are 1-based".into()));
        }
        if idx <= last {
            return Err(malformed(format!("feature index {idx} not ascending")));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| malformed(format!("bad feature value {val:?}")))?;
        if !val.is_finite() {
            return Err(malformed(format!("non-finite feature value {val:?}")));
        }
        features.push((idx, val));
        last = idx;
    }
    Ok((label, features))
}

/// Writes a set in LIBSVM format with `+1`/`-1` labels. Every stored
/// feature is written, including explicit zeros, so parsing the output
/// reproduces the set.
pub fn write_sparse_dataset(set: &TrainingSet) -> String {
    let mut out = String::new();
    for s in set.samples() {
        out.push_str(s.label.as_str());
        for &(idx, v) in &s.features {
            let _ = write!(out, " {idx}:{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Per-feature mean and scale taken from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizationStats {
    /// Population mean/standard deviation of each column of `set`.
    /// Columns with zero variance get scale 1.
    pub fn fit(set: &TrainingSet) -> StandardizationStats {
        let dim = set.dim();
        let n = set.len() as f64;
        let rows = set.dense_rows();
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in &rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        StandardizationStats { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes a dense vector of length `dim()`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Standardizes every sample of `set`; the result stores all `dim()`
    /// features explicitly.
    pub fn transform(&self, set: &TrainingSet) -> TrainingSet {
        let dim = self.dim();
        let samples = set
            .samples()
            .iter()
            .map(|s| Sample {
                features: self
                    .apply(&s.dense(dim))
                    .into_iter()
                    .enumerate()
                    .map(|(j, v)| (j + 1, v))
                    .collect(),
                label: s.label,
            })
            .collect();
        TrainingSet::unchecked(samples, dim)
    }
}

/// Fits statistics on `train` and applies them to both sets.
pub fn standardize(
    train: &TrainingSet,
    test: &TrainingSet,
) -> (TrainingSet, TrainingSet, StandardizationStats) {
    let dim = train.dim().max(test.dim());
    let widened = TrainingSet::unchecked(train.samples().to_vec(), dim);
    let stats = StandardizationStats::fit(&widened);
    (stats.transform(train), stats.transform(test), stats)
}

/// Train fraction and RNG seed for a random split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub const MAX_RETRIES: usize = 100;

    pub fn new(train_fraction: f64, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction,
            seed,
        }
    }
}

/// Random train/test split of `data`, `round(fraction * l)` samples on the
/// training side. A split that leaves a class absent from either side is
/// redrawn with the next seed, up to `SplitSpec::MAX_RETRIES` times.
pub fn split(data: &TrainingSet, spec: SplitSpec) -> Result<(TrainingSet, TrainingSet), DataError> {
    let (pos, neg) = (data.pos_idx().len(), data.neg_idx().len());
    if pos < 2 || neg < 2 {
        return Err(DataError::TooFewPerClass { needed: 2, pos, neg });
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::BadFraction(spec.train_fraction));
    }
    let l = data.len();
    let n_train = ((spec.train_fraction * l as f64).round() as usize).clamp(1, l - 1);
    let labels = data.labels();

    for attempt in 0..SplitSpec::MAX_RETRIES {
        let mut order: Vec<usize> = (0..l).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(attempt as u64));
        order.shuffle(&mut rng);
        let (tr, te) = order.split_at(n_train);
        let both = |idx: &[usize]| {
            idx.iter().any(|&i| labels[i] == Label::Pos) && idx.iter().any(|&i| labels[i] == Label::Neg)
        };
        if both(tr) && both(te) {
            return Ok((data.select(tr)?, data.select(te)?));
        }
    }
    Err(DataError::SplitExhausted(SplitSpec::MAX_RETRIES))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_basic_file() {
        let set = parse_sparse_dataset("+1 1:0.5 3:2.0\n-1 2:1.0").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), 3);
        assert_eq!(set.pos_idx(), &[0]);
        assert_eq!(set.neg_idx(), &[1]);
        assert_eq!(set.samples()[0].dense(3), vec![0.5, 0.0, 2.0]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(parse_sparse_dataset(""), Err(DataError::EmptyInput));
        assert_eq!(
            parse_sparse_dataset("# only a comment\n\n"),
            Err(DataError::EmptyInput)
        );
    }

    #[test]
    fn comments_and_crlf() {
        let set = parse_sparse_dataset("# header\r\n1 1:1 # trailing\r\n-1 1:2\r\n").unwrap();
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn label_mappings() {
        let zero_one = parse_sparse_dataset("0 1:1\n1 1:2\n").unwrap();
        assert_eq!(zero_one.labels(), vec![Label::Neg, Label::Pos]);
        let one_two = parse_sparse_dataset("2 1:1\n1 1:2\n").unwrap();
        assert_eq!(one_two.labels(), vec![Label::Pos, Label::Neg]);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = parse_sparse_dataset("+1 1:1\n-1 2:x\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
        let err = parse_sparse_dataset("+1 2:1 1:1\n-1 1:1\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));
        let err = parse_sparse_dataset("+1 0:1\n-1 1:1\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));
    }

    #[test]
    fn single_class_and_multiclass() {
        assert!(matches!(
            parse_sparse_dataset("1 1:1\n1 1:2\n"),
            Err(DataError::SingleClass(_))
        ));
        assert_eq!(
            parse_sparse_dataset("1 1:1\n2 1:2\n3 1:3\n"),
            Err(DataError::TooManyClasses(3))
        );
    }

    #[test]
    fn standardize_two_points() {
        let set = TrainingSet::from_dense(&[vec![1.0], vec![3.0]], &[Label::Pos, Label::Neg]).unwrap();
        let (tr, _, stats) = standardize(&set, &set);
        let col: Vec<f64> = tr.dense_rows().iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![-1.0, 1.0]);
        assert_eq!(stats.mean, vec![2.0]);
    }

    #[test]
    fn standardize_constant_column() {
        let rows = vec![vec![5.0], vec![5.0], vec![5.0]];
        let set = TrainingSet::from_dense(&rows, &[Label::Pos, Label::Neg, Label::Pos]).unwrap();
        let (tr, _, stats) = standardize(&set, &set);
        assert_eq!(stats.scale, vec![1.0]);
        assert!(tr.dense_rows().iter().all(|r| r[0] == 0.0));
    }

    fn random_set(seed: u64, l: usize, dim: usize) -> TrainingSet {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..7.0)).collect())
            .collect();
        let labels: Vec<Label> = (0..l)
            .map(|i| if i % 2 == 0 { Label::Pos } else { Label::Neg })
            .collect();
        TrainingSet::from_dense(&rows, &labels).unwrap()
    }

    #[test]
    fn standardized_moments_recomputed() {
        let set = random_set(11, 50, 8);
        let (tr, _, _) = standardize(&set, &set);
        let rows = tr.dense_rows();
        for j in 0..8 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() <= 1e-10, "col {j} mean {mean}");
            assert!((var - 1.0).abs() <= 1e-8, "col {j} var {var}");
        }
    }

    #[test]
    fn standardization_is_idempotent() {
        let set = random_set(5, 40, 6);
        let (once, _, _) = standardize(&set, &set);
        let (twice, _, _) = standardize(&once, &once);
        for (a, b) in once.dense_rows().iter().zip(twice.dense_rows()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let set = random_set(1, 10, 2);
        let (tr, te) = split(&set, SplitSpec::new(0.8, 7)).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split(&set, SplitSpec::new(0.8, 7)).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
    }

    #[test]
    fn split_four_points_half() {
        let set = random_set(3, 4, 2);
        match split(&set, SplitSpec::new(0.5, 0)) {
            Ok((tr, te)) => {
                for side in [&tr, &te] {
                    assert_eq!(side.pos_idx().len(), 1);
                    assert_eq!(side.neg_idx().len(), 1);
                }
            }
            Err(e) => assert_eq!(e, DataError::SplitExhausted(SplitSpec::MAX_RETRIES)),
        }
    }

    #[test]
    fn split_needs_two_per_class() {
        let set = TrainingSet::from_dense(
            &[vec![0.0], vec![1.0], vec![2.0]],
            &[Label::Pos, Label::Neg, Label::Neg],
        )
        .unwrap();
        assert!(matches!(
            split(&set, SplitSpec::new(0.5, 0)),
            Err(DataError::TooFewPerClass { .. })
        ));
    }

    #[test]
    fn distinct_seeds_cover_many_test_indices() {
        // Tag each sample with its index through the first feature.
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let labels: Vec<Label> = (0..100)
            .map(|i| if i % 3 == 0 { Label::Pos } else { Label::Neg })
            .collect();
        let set = TrainingSet::from_dense(&rows, &labels).unwrap();
        let mut perms = std::collections::HashSet::new();
        let mut covered = std::collections::HashSet::new();
        for seed in 0..30 {
            let (tr, te) = split(&set, SplitSpec::new(0.8, 1000 + seed)).unwrap();
            let key: Vec<u64> = tr
                .dense_rows()
                .iter()
                .chain(te.dense_rows().iter())
                .map(|r| r[0] as u64)
                .collect();
            perms.insert(key);
            for r in te.dense_rows() {
                covered.insert(r[0] as u64);
            }
        }
        assert_eq!(perms.len(), 30);
        assert!(covered.len() > 50, "covered {}", covered.len());
    }

    fn arb_dataset() -> impl Strategy<Value = String> {
        let line = (
            prop::bool::ANY,
            prop::collection::btree_map(1usize..40, -1e6f64..1e6, 0..8),
        );
        prop::collection::vec(line, 2..20).prop_map(|lines| {
            let mut text = String::from("+1 1:0.5\n-1 2:1\n");
            for (pos, feats) in lines {
                text.push_str(if pos { "+1" } else { "-1" });
                for (i, v) in feats {
                    text.push_str(&format!(" {i}:{v}"));
                }
                text.push('\n');
            }
            text
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn parse_write_parse_round_trip(text in arb_dataset()) {
            let first = parse_sparse_dataset(&text).unwrap();
            let again = parse_sparse_dataset(&write_sparse_dataset(&first)).unwrap();
            prop_assert_eq!(first, again);
        }
    }
}
