//! Squared maximum mean discrepancy with an RBF kernel, and model selection
//! by which candidate sample set sits closest to a reference set.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::image::Field;
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MmdError {
    #[error("sample set is empty")]
    Empty,
    #[error("vector of dimension {got} in a set of dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {need} samples, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error("all samples coincide; median distance is zero")]
    Degenerate,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("non-finite sample value")]
    NonFinite,
}

/// Vectors of one common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    vectors: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, MmdError> {
        let dim = vectors.first().ok_or(MmdError::Empty)?.len();
        if dim == 0 {
            return Err(MmdError::Empty);
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(MmdError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MmdError::NonFinite);
            }
        }
        Ok(SampleSet { vectors })
    }

    /// Images flattened to raw pixel vectors.
    pub fn from_fields(images: &[Field]) -> Result<Self, MmdError> {
        SampleSet::new(images.iter().map(|f| f.data().to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_bandwidth(b: f64) -> Result<(), MmdError> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(MmdError::InvalidBandwidth(b))
    }
}

/// `exp(-|a - b|^2 / (2 bandwidth^2))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], bandwidth: f64) -> Result<f64, MmdError> {
    check_bandwidth(bandwidth)?;
    if a.len() != b.len() {
        return Err(MmdError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok((-sq_dist(a, b) / (2.0 * bandwidth * bandwidth)).exp())
}

/// Pairs used by [`median_bandwidth`] when there are more distinct pairs.
pub const MEDIAN_PAIRS: usize = 1000;

/// Median Euclidean distance between distinct points of the union of
/// `sets`: over every pair when there are at most [`MEDIAN_PAIRS`] of them,
/// otherwise over that many pairs drawn with replacement from `seed`.
pub fn median_bandwidth(sets: &[&SampleSet], seed: u64) -> Result<f64, MmdError> {
    let all: Vec<&[f64]> = sets
        .iter()
        .flat_map(|s| s.vectors.iter().map(Vec::as_slice))
        .collect();
    let n = all.len();
    if n < 2 {
        return Err(MmdError::TooSmall { need: 2, got: n });
    }
    let dim = all[0].len();
    if let Some(v) = all.iter().find(|v| v.len() != dim) {
        return Err(MmdError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let mut d: Vec<f64> = if n * (n - 1) / 2 <= MEDIAN_PAIRS {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| sq_dist(all[i], all[j]).sqrt())
            .collect()
    } else {
        let mut r = rng::stream(seed, "median-pairs");
        (0..MEDIAN_PAIRS)
            .map(|_| {
                let i = r.random_range(0..n);
                let mut j = r.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                sq_dist(all[i], all[j]).sqrt()
            })
            .collect()
    };
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med <= 0.0 {
        return Err(MmdError::Degenerate);
    }
    Ok(med)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub mmd2: f64,
    pub bandwidth: f64,
}

fn mean_offdiag(s: &SampleSet, bw: f64) -> f64 {
    let v = &s.vectors;
    let m = v.len();
    let k = -1.0 / (2.0 * bw * bw);
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            total += (k * sq_dist(&v[i], &v[j])).exp();
        }
    }
    2.0 * total / (m * (m - 1)) as f64
}

fn mean_cross(a: &SampleSet, b: &SampleSet, bw: f64) -> f64 {
    let k = -1.0 / (2.0 * bw * bw);
    let mut total = 0.0;
    for x in &a.vectors {
        for y in &b.vectors {
            total += (k * sq_dist(x, y)).exp();
        }
    }
    total / (a.len() * b.len()) as f64
}

fn check_pair(a: &SampleSet, b: &SampleSet) -> Result<(), MmdError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(MmdError::TooSmall { need: 2, got: s.len() });
        }
    }
    if a.dim() != b.dim() {
        return Err(MmdError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Unbiased estimate of the squared MMD. It can be negative.
pub fn mmd2_unbiased(a: &SampleSet, b: &SampleSet, bandwidth: f64) -> Result<MmdResult, MmdError> {
    check_bandwidth(bandwidth)?;
    check_pair(a, b)?;
    let mmd2 = mean_offdiag(a, bandwidth) + mean_offdiag(b, bandwidth)
        - 2.0 * mean_cross(a, b, bandwidth);
    Ok(MmdResult { mmd2, bandwidth })
}

/// `mmd2(reference, a) - mmd2(reference, b)`; negative when `a` is closer.
pub fn relative_similarity(
    reference: &SampleSet,
    a: &SampleSet,
    b: &SampleSet,
    bandwidth: f64,
) -> Result<f64, MmdError> {
    Ok(mmd2_unbiased(reference, a, bandwidth)?.mmd2 - mmd2_unbiased(reference, b, bandwidth)?.mmd2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BandwidthPolicy {
    /// Median heuristic over the reference and every candidate together.
    Median {
        #[serde(default)]
        seed: u64,
    },
    Fixed {
        value: f64,
    },
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        BandwidthPolicy::Median { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Index into the candidate list.
    pub chosen: usize,
    pub chosen_label: f64,
    pub bandwidth: f64,
    /// `(label, mmd2(reference, candidate))`, in candidate order.
    pub mmd2: Vec<(f64, f64)>,
    /// `(label_i, label_j, relative_similarity(reference, i, j))` for i < j.
    pub pairwise: Vec<(f64, f64, f64)>,
}

/// Picks the candidate with the smallest `mmd2` against `reference` under one
/// shared bandwidth. Ties go to the earlier candidate.
pub fn select_tradeoff(
    reference: &SampleSet,
    candidates: &[(f64, SampleSet)],
    policy: BandwidthPolicy,
) -> Result<Selection, MmdError> {
    if candidates.len() < 2 {
        return Err(MmdError::TooFewCandidates(candidates.len()));
    }
    let bandwidth = match policy {
        BandwidthPolicy::Fixed { value } => {
            check_bandwidth(value)?;
            value
        }
        BandwidthPolicy::Median { seed } => {
            let mut sets = vec![reference];
            sets.extend(candidates.iter().map(|(_, s)| s));
            median_bandwidth(&sets, seed)?
        }
    };
    let mmd2 = candidates
        .iter()
        .map(|(c, s)| Ok((*c, mmd2_unbiased(reference, s, bandwidth)?.mmd2)))
        .collect::<Result<Vec<_>, MmdError>>()?;
    let mut pairwise = Vec::new();
    for i in 0..mmd2.len() {
        for j in i + 1..mmd2.len() {
            pairwise.push((mmd2[i].0, mmd2[j].0, mmd2[i].1 - mmd2[j].1));
        }
    }
    let chosen = (0..mmd2.len())
        .min_by(|&i, &j| mmd2[i].1.total_cmp(&mmd2[j].1).then(i.cmp(&j)))
        .expect("at least two candidates");
    Ok(Selection {
        chosen,
        chosen_label: mmd2[chosen].0,
        bandwidth,
        mmd2,
        pairwise,
    })
}

/// `n` draws from `N(shift * 1, I)` in `dim` dimensions: the mean is moved
/// by `shift` along every coordinate.
pub fn gaussian_samples(n: usize, dim: usize, shift: f64, seed: u64) -> Result<SampleSet, MmdError> {
    let mut r = rng::stream(seed, "gaussian-samples");
    SampleSet::new(
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut r))
                    .collect()
            })
            .collect(),
    )
}
