#![allow(dead_code)]

use prunekit::harness::{softmax_cross_entropy, LayerSpec, Model};
use prunekit::rng::Rng;
use prunekit::tensor::{InitScheme, Tensor};

pub fn specs(list: &[&str]) -> Vec<LayerSpec> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

pub const MLP: &[&str] = &["dense(3,5)", "relu", "dense(5,4)", "relu", "dense(4,3)"];
pub const CONV: &[&str] = &[
    "conv2d(2,3,3,3)",
    "relu",
    "conv2d(3,2,2,2)",
    "relu",
    "flatten",
    "dense(8,3)",
];

/// Small random model plus a batch for it: `(model, x, labels)`.
pub fn gradcheck_case(arch: &[&str], seed: u64) -> (Model, Tensor, Vec<usize>) {
    let mut rng = Rng::new(seed);
    let (input, batch_shape): (Vec<usize>, Vec<usize>) = if arch == MLP {
        (vec![3], vec![4, 3])
    } else {
        (vec![2, 5, 5], vec![3, 2, 5, 5])
    };
    let model = Model::from_specs(&input, &specs(arch), InitScheme::Uniform, &mut rng).unwrap();
    let mut model = model;
    // nonzero biases so their gradients are exercised
    for p in model.params_mut() {
        for b in p.bias.iter_mut() {
            *b = rng.uniform(-0.5, 0.5);
        }
    }
    let n: usize = batch_shape.iter().product();
    let x = Tensor::new(
        batch_shape.clone(),
        (0..n).map(|_| rng.standard_normal()).collect(),
    )
    .unwrap();
    let labels = (0..batch_shape[0]).map(|_| rng.below(3)).collect();
    (model, x, labels)
}

pub fn loss(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
    softmax_cross_entropy(&model.forward(x).unwrap(), labels)
        .unwrap()
        .0
}

/// Largest relative error between analytic gradients and central differences
/// with step `h`. Entries where both magnitudes are below `floor` are compared
/// against `floor` instead, so near-zero gradients do not inflate the ratio.
pub fn max_relative_error(model: &Model, x: &Tensor, labels: &[usize], h: f64, floor: f64) -> f64 {
    let (_, grads) = model.backward(x, labels).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (li, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let n_w = g.weight.len();
        for k in 0..n_w + g.bias.len() {
            let numeric = {
                let mut eval = |delta: f64| {
                    let p = probe.layers_mut()[li].param_mut().unwrap();
                    let orig;
                    if k < n_w {
                        orig = p.weight.data()[k];
                        p.weight.data_mut()[k] = orig + delta;
                    } else {
                        orig = p.bias[k - n_w];
                        p.bias[k - n_w] = orig + delta;
                    }
                    let l = loss(&probe, x, labels);
                    let p = probe.layers_mut()[li].param_mut().unwrap();
                    if k < n_w {
                        p.weight.data_mut()[k] = orig;
                    } else {
                        p.bias[k - n_w] = orig;
                    }
                    l
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            };
            let analytic = if k < n_w {
                g.weight.data()[k]
            } else {
                g.bias[k - n_w]
            };
            let scale = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
