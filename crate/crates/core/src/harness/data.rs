//! Synthetic, seed-deterministic classification datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Standard deviation of each blob around its center.
pub const BLOB_STD: f64 = 0.5;
/// Pixel noise for the bar images.
pub const PATTERN_NOISE: f64 = 0.1;
pub const PATTERN_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two isotropic Gaussian clusters whose centers are `separation` apart
    /// along the diagonal.
    Blobs2d { n: usize, separation: f64 },
    /// 8×8 single-channel images; class 0 is a horizontal bar, class 1 a
    /// vertical bar, at a random row/column.
    Patterns8x8 { n: usize },
}

impl DatasetSpec {
    pub fn n(&self) -> usize {
        match self {
            DatasetSpec::Blobs2d { n, .. } | DatasetSpec::Patterns8x8 { n } => *n,
        }
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            DatasetSpec::Blobs2d { .. } => vec![2],
            DatasetSpec::Patterns8x8 { .. } => vec![1, PATTERN_SIDE, PATTERN_SIDE],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.shape()[0]
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.inputs.len() / self.labels.len().max(1)
    }

    /// Gathers the given samples into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let width = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs.data()[i * width..(i + 1) * width]);
            labels.push(self.labels[i]);
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = indices.len();
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// Deterministic 80/20 train/validation split over sample order; the
    /// validation part always holds at least one sample.
    pub fn split(&self) -> Result<(Dataset, Dataset)> {
        let n_valid = (self.len() / 5).max(1);
        let all: Vec<usize> = (0..self.len()).collect();
        let (train_idx, valid_idx) = all.split_at(self.len() - n_valid);
        let (xt, yt) = self.batch(train_idx)?;
        let (xv, yv) = self.batch(valid_idx)?;
        Ok((Dataset::new(xt, yt)?, Dataset::new(xv, yv)?))
    }
}

/// Alternating labels, shuffled, so class counts differ by at most one.
fn balanced_labels(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    rng.shuffle(&mut labels);
    labels
}

/// Noise-free bar image: horizontal (`class == 0`) at row `pos` or vertical at column `pos`.
pub fn bar_image(class: usize, pos: usize) -> Vec<f64> {
    let mut img = vec![0.0; PATTERN_SIDE * PATTERN_SIDE];
    for k in 0..PATTERN_SIDE {
        let (r, c) = if class == 0 { (pos, k) } else { (k, pos) };
        img[r * PATTERN_SIDE + c] = 1.0;
    }
    img
}

pub fn make_dataset(spec: &DatasetSpec, rng: &mut Rng) -> Result<Dataset> {
    let n = spec.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "dataset needs at least 2 samples, got {n}"
        )));
    }
    let labels = balanced_labels(n, rng);
    match spec {
        DatasetSpec::Blobs2d { separation, .. } => {
            if !separation.is_finite() || *separation < 0.0 {
                return Err(Error::invalid(
                    "blob separation must be a finite non-negative number",
                ));
            }
            let offset = separation / 2.0 / std::f64::consts::SQRT_2;
            let mut data = Vec::with_capacity(2 * n);
            for &label in &labels {
                let sign = if label == 0 { -1.0 } else { 1.0 };
                for _ in 0..2 {
                    data.push(sign * offset + BLOB_STD * rng.standard_normal());
                }
            }
            Dataset::new(Tensor::new(vec![n, 2], data)?, labels)
        }
        DatasetSpec::Patterns8x8 { .. } => {
            let mut data = Vec::with_capacity(n * PATTERN_SIDE * PATTERN_SIDE);
            for &label in &labels {
                let pos = rng.below(PATTERN_SIDE);
                data.extend(
                    bar_image(label, pos)
                        .into_iter()
                        .map(|v| v + PATTERN_NOISE * rng.standard_normal()),
                );
            }
            Dataset::new(Tensor::new(vec![n, 1, PATTERN_SIDE, PATTERN_SIDE], data)?, labels)
        }
    }
}
