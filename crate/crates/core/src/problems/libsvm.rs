use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ProblemError, Result};
use crate::rng::{stream_rng, Stream};

/// Labelled binary classification data with a per-agent row partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryDataset {
    pub features: Array2<f64>,
    /// Entries are exactly −1.0 or +1.0.
    pub labels: Array1<f64>,
    /// Contiguous row ranges, one per agent, covering `0..m` in order.
    pub partition: Vec<Range<usize>>,
}

impl BinaryDataset {
    /// Single-block dataset.
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(ProblemError::Dimension(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(ProblemError::LabelDomain { line: 0, label: bad.to_string() });
        }
        let m = labels.len();
        Ok(Self { features, labels, partition: vec![0..m] })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_agents(&self) -> usize {
        self.partition.len()
    }

    pub fn agent_features(&self, i: usize) -> ArrayView2<'_, f64> {
        self.features.slice_axis(Axis(0), self.partition[i].clone().into())
    }

    pub fn agent_labels(&self, i: usize) -> ArrayView1<'_, f64> {
        self.labels.slice_axis(Axis(0), self.partition[i].clone().into())
    }

    /// Checks that the partition tiles `0..m` with non-empty blocks.
    pub fn validate_partition(&self) -> Result<()> {
        let mut next = 0;
        for (i, r) in self.partition.iter().enumerate() {
            if r.start != next || r.is_empty() {
                return Err(ProblemError::InvalidPartition(format!("agent {i} has block {r:?}")));
            }
            next = r.end;
        }
        if next != self.n_samples() {
            return Err(ProblemError::InvalidPartition(format!(
                "partition covers {next} of {} samples",
                self.n_samples()
            )));
        }
        Ok(())
    }
}

/// Reads a LIBSVM/SVMlight file (`label idx:val ...`, 1-based indices).
///
/// `dim` fixes the feature dimension; otherwise it is the largest index seen.
pub fn parse_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<BinaryDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ProblemError::Io { path: path.display().to_string(), source })?;
    parse_libsvm_str(&text, dim)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<BinaryDataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = tokens_with_columns(content);
        let Some((label_col, label_tok)) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok.parse().map_err(|_| ProblemError::Parse {
            line: line_no,
            column: label_col,
            message: format!("bad label `{label_tok}`"),
        })?;
        let label = if label == 1.0 {
            1.0
        } else if label == -1.0 || label == 0.0 {
            -1.0
        } else {
            return Err(ProblemError::LabelDomain { line: line_no, label: label_tok.to_string() });
        };

        let mut row = Vec::new();
        for (col, tok) in tokens {
            let parse_err = |message: String| ProblemError::Parse { line: line_no, column: col, message };
            let (idx, val) = tok.split_once(':').ok_or_else(|| parse_err(format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(format!("bad index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err("feature indices are 1-based".into()));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(parse_err(format!("index {idx} exceeds dimension {d}")));
                }
            }
            let val: f64 = val.parse().map_err(|_| parse_err(format!("bad value `{val}`")))?;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        labels.push(label);
        rows.push(row);
    }

    let p = dim.unwrap_or(max_index);
    let mut features = Array2::zeros((rows.len(), p));
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[[r, j]] = v;
        }
    }
    BinaryDataset::new(features, Array1::from(labels))
}

/// Whitespace-separated tokens with their 1-based character columns.
fn tokens_with_columns(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            return None;
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        let tok = &trimmed[..end];
        let col = line[..offset].chars().count() + 1;
        offset += end;
        rest = &trimmed[end..];
        Some((col, tok))
    })
}

/// Shuffles rows on the partition stream and splits them into `n_agents`
/// contiguous blocks whose sizes differ by at most one (larger blocks first).
pub fn partition_uniform(data: &BinaryDataset, n_agents: usize, seed: u64) -> Result<BinaryDataset> {
    let m = data.n_samples();
    if n_agents == 0 || n_agents > m {
        return Err(ProblemError::InvalidPartition(format!("cannot split {m} samples over {n_agents} agents")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Partition));
    let features = data.features.select(Axis(0), &order);
    let labels = data.labels.select(Axis(0), &order);

    let base = m / n_agents;
    let extra = m % n_agents;
    let mut partition = Vec::with_capacity(n_agents);
    let mut start = 0;
    for i in 0..n_agents {
        let len = base + usize::from(i < extra);
        partition.push(start..start + len);
        start += len;
    }
    Ok(BinaryDataset { features, labels, partition })
}

/// Levels per categorical attribute of [`synthetic_logistic`].
pub const SYNTHETIC_LEVELS: usize = 4;

/// Synthetic one-hot data in the style of categorical census records: the
/// `p` columns form groups of [`SYNTHETIC_LEVELS`] levels (the last group
/// takes the remainder) and each row activates exactly one level per group,
/// with random level frequencies. Labels are `sign(t + 0.5·noise)` where `t`
/// is the standardized score `⟨w, a⟩` of a hidden standard normal `w`.
pub fn synthetic_logistic(m: usize, p: usize, seed: u64) -> BinaryDataset {
    let mut rng = stream_rng(seed, Stream::Noise);
    let groups: Vec<Range<usize>> =
        (0..p).step_by(SYNTHETIC_LEVELS).map(|s| s..(s + SYNTHETIC_LEVELS).min(p)).collect();
    let cumulative: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let raw: Vec<f64> = g.clone().map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter()
                .scan(0.0, |acc, v| {
                    *acc += v / total;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let w: Array1<f64> = Array1::from_shape_fn(p, |_| StandardNormal.sample(&mut rng));
    let mut features = Array2::zeros((m, p));
    let mut scores = Array1::zeros(m);
    for r in 0..m {
        for (g, cum) in groups.iter().zip(&cumulative) {
            let u: f64 = rng.random();
            let level = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            features[[r, g.start + level]] = 1.0;
            scores[r] += w[g.start + level];
        }
    }
    let mean = scores.mean().unwrap_or(0.0);
    let sd = scores.std(0.0).max(f64::MIN_POSITIVE);
    let labels = scores.mapv(|t| {
        let noise: f64 = StandardNormal.sample(&mut rng);
        if (t - mean) / sd + 0.5 * noise >= 0.0 {
            1.0
        } else {
            -1.0
        }
    });
    BinaryDataset { features, labels, partition: vec![0..m] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_single_feature_and_empty_rows() {
        let d = parse_libsvm_str("+1 3:0.5\n-1\n", Some(4)).unwrap();
        assert_eq!(d.features, array![[0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(d.labels, array![1.0, -1.0]);
    }

    #[test]
    fn infers_dimension_and_maps_zero_labels() {
        let d = parse_libsvm_str("0 1:1 5:2\n1 2:3 # comment\n\n", None).unwrap();
        assert_eq!(d.dim(), 5);
        assert_eq!(d.labels, array![-1.0, 1.0]);
        assert_eq!(d.features[[1, 1]], 3.0);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_libsvm_str("1 1:1\n-1 2:x\n", None).unwrap_err();
        match err {
            ProblemError::Parse { line, column, .. } => assert_eq!((line, column), (2, 4)),
            e => panic!("unexpected {e}"),
        }
        let err = parse_libsvm_str("1  0:1\n", None).unwrap_err();
        assert!(matches!(err, ProblemError::Parse { line: 1, column: 4, .. }), "{err}");
    }

    #[test]
    fn rejects_foreign_labels() {
        let err = parse_libsvm_str("1 1:1\n2 1:1\n", None).unwrap_err();
        assert!(matches!(err, ProblemError::LabelDomain { line: 2, .. }));
    }

    #[test]
    fn rejects_index_beyond_dimension() {
        assert!(parse_libsvm_str("1 7:1\n", Some(4)).is_err());
    }

    fn dummy(m: usize) -> BinaryDataset {
        let features = Array2::from_shape_fn((m, 1), |(r, _)| r as f64);
        BinaryDataset::new(features, Array1::ones(m)).unwrap()
    }

    #[test]
    fn partition_block_sizes() {
        let sizes = |m, n| -> Vec<usize> {
            partition_uniform(&dummy(m), n, 0).unwrap().partition.iter().map(|r| r.len()).collect()
        };
        assert_eq!(sizes(10, 2), vec![5, 5]);
        assert_eq!(sizes(7, 3), vec![3, 2, 2]);
        let a9a = sizes(32_561, 50);
        assert_eq!(a9a.iter().filter(|&&s| s == 652).count(), 11);
        assert_eq!(a9a.iter().filter(|&&s| s == 651).count(), 39);
    }

    #[test]
    fn partition_is_a_permutation_and_deterministic() {
        let d = dummy(23);
        let a = partition_uniform(&d, 4, 9).unwrap();
        let b = partition_uniform(&d, 4, 9).unwrap();
        assert_eq!(a, b);
        a.validate_partition().unwrap();
        let mut seen: Vec<usize> = a.features.column(0).iter().map(|&v| v as usize).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        assert!(matches!(partition_uniform(&d, 24, 0), Err(ProblemError::InvalidPartition(_))));
    }

    #[test]
    fn synthetic_data_has_both_classes() {
        let d = synthetic_logistic(500, 20, 3);
        let pos = d.labels.iter().filter(|&&b| b > 0.0).count();
        assert!(pos > 100 && pos < 400, "{pos}");
        assert_eq!(d, synthetic_logistic(500, 20, 3));
    }
}
