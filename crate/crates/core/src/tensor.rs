//! Dense row-major tensors, binary masks, and the primitives that combine them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major tensor of rank 1 to 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::invalid(format!(
            "tensor rank must be 1..=4, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("zero-sized axis in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        out[axis] = out[axis + 1] * shape[axis + 1];
    }
    out
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {shape:?} (expected {len})",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(strides(&self.shape)).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_shape(&other.shape)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_same_shape(&self, other: &[usize]) -> Result<()> {
        if self.shape != other {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                actual: other.to_vec(),
            });
        }
        Ok(())
    }
}

/// Binary keep/prune mask; 1 keeps a weight, 0 prunes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    shape: Vec<usize>,
    bits: Vec<u8>,
}

impl Mask {
    pub fn ones(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            bits: vec![1; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            bits: vec![0; len],
        })
    }

    /// Builds a mask, rejecting any value outside `{0, 1}`.
    pub fn from_bits(shape: Vec<usize>, bits: Vec<u8>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if bits.len() != len {
            return Err(Error::invalid(format!(
                "mask length {} does not match shape {shape:?} (expected {len})",
                bits.len()
            )));
        }
        if let Some((i, b)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(Error::invalid(format!(
                "mask value {b} at flat index {i} is not in {{0,1}}"
            )));
        }
        Ok(Self { shape, bits })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_kept(&self, flat: usize) -> bool {
        self.bits[flat] == 1
    }

    pub fn zeros_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 0).count()
    }

    pub(crate) fn set(&mut self, flat: usize, keep: bool) {
        self.bits[flat] = u8::from(keep);
    }
}

/// Zeroes every weight whose mask entry is 0 and leaves the rest untouched.
///
/// Pruned positions are written as `+0.0` (numerically equal to `w * 0`).
pub fn apply_mask(w: &Tensor, m: &Mask) -> Result<Tensor> {
    let mut out = w.clone();
    apply_mask_in_place(&mut out, m)?;
    Ok(out)
}

pub fn apply_mask_in_place(w: &mut Tensor, m: &Mask) -> Result<()> {
    w.ensure_same_shape(&m.shape)?;
    for (v, &b) in w.data.iter_mut().zip(&m.bits) {
        if b == 0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Fraction of mask entries equal to zero.
pub fn sparsity_of(m: &Mask) -> f64 {
    m.zeros_count() as f64 / m.len() as f64
}

/// Sparsity of several masks taken together, weighted by their sizes.
pub fn combined_sparsity<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> f64 {
    let (zeros, total) = masks
        .into_iter()
        .fold((0usize, 0usize), |(z, t), m| (z + m.zeros_count(), t + m.len()));
    if total == 0 {
        0.0
    } else {
        zeros as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum InitScheme {
    /// Uniform on `±sqrt(6 / fan_in)`.
    Uniform,
    Constant(f64),
}

/// Inputs feeding each output unit. Axis 1 is the output axis (`[I, O]` and
/// `[I, O, Kx, Ky]`); every other axis contributes.
pub fn fan_in(shape: &[usize]) -> usize {
    if shape.len() < 2 {
        return shape.iter().product();
    }
    shape
        .iter()
        .enumerate()
        .filter(|&(axis, _)| axis != 1)
        .map(|(_, &n)| n)
        .product()
}

pub fn init_weights(shape: &[usize], scheme: InitScheme, rng: &mut Rng) -> Result<Tensor> {
    let len = check_shape(shape)?;
    let data = match scheme {
        InitScheme::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::invalid("constant initializer must be finite"));
            }
            vec![c; len]
        }
        InitScheme::Uniform => {
            let bound = (6.0 / fan_in(shape) as f64).sqrt();
            (0..len).map(|_| rng.uniform(-bound, bound)).collect()
        }
    };
    Tensor::new(shape.to_vec(), data)
}
