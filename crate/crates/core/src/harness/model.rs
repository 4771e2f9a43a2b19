use crate::error::{Error, Result};
use crate::harness::data::Dataset;
use crate::harness::layers::{Layer, LayerSpec, Param, ParamGrad};
use crate::rng::Rng;
use crate::tensor::{combined_sparsity, InitScheme, Mask, Tensor};

/// Ordered stack of layers applied to per-sample inputs of `input_shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

/// Gradients aligned with `Model::layers`; `None` for parameter-free layers.
pub type Gradients = Vec<Option<ParamGrad>>;

impl Model {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::invalid(format!(
                "model must end in a flat logits vector, got per-sample shape {shape:?}"
            )));
        }
        Ok(Self { input_shape, layers })
    }

    pub fn from_specs(
        input_shape: &[usize],
        specs: &[LayerSpec],
        scheme: InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|&s| Layer::init(s, scheme, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_shape.to_vec(), layers)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn n_classes(&self) -> usize {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        shape[0]
    }

    /// Parameters of prunable layers, in model order.
    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().filter_map(Layer::param)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers.iter_mut().filter_map(Layer::param_mut)
    }

    pub fn prunable_count(&self) -> usize {
        self.params().count()
    }

    /// Masks of prunable layers; unpruned layers report an all-ones mask.
    pub fn masks(&self) -> Vec<Mask> {
        self.params()
            .map(|p| {
                p.mask
                    .clone()
                    .unwrap_or_else(|| Mask::ones(p.weight.shape()).expect("valid weight shape"))
            })
            .collect()
    }

    /// Fraction of prunable weights masked out.
    pub fn sparsity(&self) -> f64 {
        combined_sparsity(self.masks().iter())
    }

    pub fn reapply_masks(&mut self) {
        for p in self.params_mut() {
            p.reapply_mask();
        }
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        if x.rank() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::ShapeMismatch {
                expected: std::iter::once(x.shape()[0])
                    .chain(self.input_shape.iter().copied())
                    .collect(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_batch(x)?;
        self.layers
            .iter()
            .try_fold(x.clone(), |acc, layer| layer.forward(&acc))
    }

    /// Mean softmax cross-entropy over the batch and its gradients.
    pub fn backward(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.forward_backward(x, labels)
            .map(|(loss, grads, _)| (loss, grads))
    }

    /// As [`Model::backward`], also returning the logits of the forward pass.
    pub fn forward_backward(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Gradients, Tensor)> {
        self.check_batch(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&act)?;
            inputs.push(act);
            act = next;
        }
        let (loss, mut grad) = softmax_cross_entropy(&act, labels)?;
        let logits = act;
        let mut grads: Gradients = vec![None; self.layers.len()];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (dx, pg) = layer.backward(&inputs[idx], &grad)?;
            grads[idx] = pg;
            grad = dx;
        }
        Ok((loss, grads, logits))
    }

    /// Loss and accuracy over a whole dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Ok((0.0, 0.0));
        }
        let logits = self.forward(data.inputs())?;
        let (loss, _) = softmax_cross_entropy(&logits, data.labels())?;
        Ok((loss, accuracy(&logits, data.labels())))
    }

    /// Copies of every parameter tensor, for rewinding.
    pub fn snapshot(&self) -> Vec<(Tensor, Vec<f64>)> {
        self.params()
            .map(|p| (p.weight.clone(), p.bias.clone()))
            .collect()
    }
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::invalid(format!(
            "{} labels for logits of shape {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    Ok((b, c))
}

/// Mean cross-entropy of `softmax(logits)` and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = check_labels(logits, labels)?;
    let z = logits.data();
    let mut grad = vec![0.0; b * c];
    let mut loss = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        let zr = &z[row * c..(row + 1) * c];
        let max = zr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = zr.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - zr[label];
        for k in 0..c {
            let p = (zr[k] - log_sum).exp();
            grad[row * c + k] = (p - f64::from(u8::from(k == label))) / b as f64;
        }
    }
    Ok((loss / b as f64, Tensor::new(vec![b, c], grad)?))
}

/// Fraction of rows whose argmax (first maximum on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let c = logits.shape()[1];
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(row, &label)| {
            let zr = &logits.data()[row * c..(row + 1) * c];
            let mut best = 0;
            for k in 1..c {
                if zr[k] > zr[best] {
                    best = k;
                }
            }
            best == label
        })
        .count();
    correct as f64 / labels.len() as f64
}
