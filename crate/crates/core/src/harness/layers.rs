//! Layer vocabulary with hand-written forward and backward passes.
//!
//! Activations carry the batch on axis 0: `[B, F]` for dense inputs and
//! `[B, C, H, W]` for images. Dense weights are `[I, O]` so the forward map
//! is `x·W + b`; conv weights are `[I, O, Kx, Ky]` with `Kx` running over
//! image rows. Convolutions are stride 1 with no padding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{apply_mask_in_place, init_weights, InitScheme, Mask, Tensor};

/// Architecture literal for a single layer, e.g. `dense(2,16)` or `conv2d(1,4,3,3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kx: usize,
        ky: usize,
    },
    Relu,
    Flatten,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense({inputs},{outputs})"),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kx,
                ky,
            } => {
                write!(f, "conv2d({in_ch},{out_ch},{kx},{ky})")
            }
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::Flatten => f.write_str("flatten"),
        }
    }
}

impl LayerSpec {
    /// Weight tensor shape, or `None` for parameter-free layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some(vec![inputs, outputs]),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kx,
                ky,
            } => Some(vec![in_ch, out_ch, kx, ky]),
            LayerSpec::Relu | LayerSpec::Flatten => None,
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("unbalanced parentheses in '{s}'")))?;
                let args = close[open + 1..]
                    .split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&v| v > 0)
                            .ok_or_else(|| Error::invalid(format!("bad layer argument '{a}' in '{s}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (&s[..open], args)
            }
            None => (s, Vec::new()),
        };
        match (name.trim(), args.as_slice()) {
            ("dense", &[inputs, outputs]) => Ok(LayerSpec::Dense { inputs, outputs }),
            ("conv2d", &[in_ch, out_ch, kx, ky]) => Ok(LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kx,
                ky,
            }),
            ("relu", []) => Ok(LayerSpec::Relu),
            ("flatten", []) => Ok(LayerSpec::Flatten),
            _ => Err(Error::invalid(format!("unknown layer literal '{s}'"))),
        }
    }
}

impl Serialize for LayerSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Trainable parameters of a dense or conv layer, plus its pruning mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub mask: Option<Mask>,
}

impl Param {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weight.rank() < 2 || bias.len() != weight.shape()[1] {
            return Err(Error::invalid(format!(
                "bias length {} does not match output axis of weight {:?}",
                bias.len(),
                weight.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            mask: None,
        })
    }

    /// Installs a mask and zeroes the pruned weights.
    pub fn set_mask(&mut self, mask: Mask) -> Result<()> {
        apply_mask_in_place(&mut self.weight, &mask)?;
        self.mask = Some(mask);
        Ok(())
    }

    pub fn reapply_mask(&mut self) {
        if let Some(mask) = &self.mask {
            apply_mask_in_place(&mut self.weight, mask).expect("mask congruent with weight");
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Param),
    Conv2d(Param),
    Relu,
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn init(spec: LayerSpec, scheme: InitScheme, rng: &mut Rng) -> Result<Self> {
        Ok(match spec {
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Param::new(
                init_weights(&[inputs, outputs], scheme, rng)?,
                vec![0.0; outputs],
            )?),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kx,
                ky,
            } => Layer::Conv2d(Param::new(
                init_weights(&[in_ch, out_ch, kx, ky], scheme, rng)?,
                vec![0.0; out_ch],
            )?),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(p) => LayerSpec::Dense {
                inputs: p.weight.shape()[0],
                outputs: p.weight.shape()[1],
            },
            Layer::Conv2d(p) => {
                let s = p.weight.shape();
                LayerSpec::Conv2d {
                    in_ch: s[0],
                    out_ch: s[1],
                    kx: s[2],
                    ky: s[3],
                }
            }
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    pub fn param(&self) -> Option<&Param> {
        match self {
            Layer::Dense(p) | Layer::Conv2d(p) => Some(p),
            _ => None,
        }
    }

    pub fn param_mut(&mut self) -> Option<&mut Param> {
        match self {
            Layer::Dense(p) | Layer::Conv2d(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_prunable(&self) -> bool {
        self.param().is_some()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = || {
            Error::invalid(format!(
                "layer {} cannot accept per-sample input of shape {input:?}",
                self.spec()
            ))
        };
        match self {
            Layer::Dense(p) => {
                if input != [p.weight.shape()[0]] {
                    return Err(mismatch());
                }
                Ok(vec![p.weight.shape()[1]])
            }
            Layer::Conv2d(p) => {
                let w = p.weight.shape();
                if input.len() != 3 || input[0] != w[0] || input[1] < w[2] || input[2] < w[3] {
                    return Err(mismatch());
                }
                Ok(vec![w[1], input[1] - w[2] + 1, input[2] - w[3] + 1])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(p) => dense_forward(p, x),
            Layer::Conv2d(p) => conv_forward(p, x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Flatten => {
                let b = x.shape()[0];
                Tensor::new(vec![b, x.len() / b], x.data().to_vec())
            }
        }
    }

    /// Given the layer input `x` and the upstream gradient `dy`, returns the
    /// gradient with respect to `x` and, for parametrized layers, the
    /// parameter gradients.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Option<ParamGrad>)> {
        match self {
            Layer::Dense(p) => dense_backward(p, x, dy).map(|(dx, g)| (dx, Some(g))),
            Layer::Conv2d(p) => conv_backward(p, x, dy).map(|(dx, g)| (dx, Some(g))),
            Layer::Relu => {
                let dx = x.zip_map(dy, |xi, g| if xi > 0.0 { g } else { 0.0 })?;
                Ok((dx, None))
            }
            Layer::Flatten => Ok((Tensor::new(x.shape().to_vec(), dy.data().to_vec())?, None)),
        }
    }
}

fn dense_forward(p: &Param, x: &Tensor) -> Result<Tensor> {
    let (i_n, o_n) = (p.weight.shape()[0], p.weight.shape()[1]);
    if x.rank() != 2 || x.shape()[1] != i_n {
        return Err(Error::ShapeMismatch {
            expected: vec![x.shape()[0], i_n],
            actual: x.shape().to_vec(),
        });
    }
    let b_n = x.shape()[0];
    let (xd, w) = (x.data(), p.weight.data());
    let mut y = vec![0.0; b_n * o_n];
    for b in 0..b_n {
        let row = &mut y[b * o_n..(b + 1) * o_n];
        row.copy_from_slice(&p.bias);
        for i in 0..i_n {
            let xv = xd[b * i_n + i];
            for (o, out) in row.iter_mut().enumerate() {
                *out += xv * w[i * o_n + o];
            }
        }
    }
    Tensor::new(vec![b_n, o_n], y)
}

fn dense_backward(p: &Param, x: &Tensor, dy: &Tensor) -> Result<(Tensor, ParamGrad)> {
    let (i_n, o_n) = (p.weight.shape()[0], p.weight.shape()[1]);
    let b_n = x.shape()[0];
    let (xd, g, w) = (x.data(), dy.data(), p.weight.data());
    let mut dw = vec![0.0; i_n * o_n];
    let mut db = vec![0.0; o_n];
    let mut dx = vec![0.0; b_n * i_n];
    for b in 0..b_n {
        for o in 0..o_n {
            let gv = g[b * o_n + o];
            db[o] += gv;
            for i in 0..i_n {
                dw[i * o_n + o] += xd[b * i_n + i] * gv;
                dx[b * i_n + i] += gv * w[i * o_n + o];
            }
        }
    }
    Ok((
        Tensor::new(vec![b_n, i_n], dx)?,
        ParamGrad {
            weight: Tensor::new(vec![i_n, o_n], dw)?,
            bias: db,
        },
    ))
}

struct ConvDims {
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kx: usize,
    ky: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims(p: &Param, x: &Tensor) -> Result<ConvDims> {
    let ws = p.weight.shape();
    let xs = x.shape();
    if xs.len() != 4 || xs[1] != ws[0] || xs[2] < ws[2] || xs[3] < ws[3] {
        return Err(Error::ShapeMismatch {
            expected: vec![xs.first().copied().unwrap_or(0), ws[0], ws[2], ws[3]],
            actual: xs.to_vec(),
        });
    }
    Ok(ConvDims {
        batch: xs[0],
        cin: ws[0],
        cout: ws[1],
        h: xs[2],
        w: xs[3],
        kx: ws[2],
        ky: ws[3],
        oh: xs[2] - ws[2] + 1,
        ow: xs[3] - ws[3] + 1,
    })
}

fn conv_forward(p: &Param, x: &Tensor) -> Result<Tensor> {
    let d = conv_dims(p, x)?;
    let (xd, wd) = (x.data(), p.weight.data());
    let mut y = vec![0.0; d.batch * d.cout * d.oh * d.ow];
    for b in 0..d.batch {
        for o in 0..d.cout {
            for r in 0..d.oh {
                for c in 0..d.ow {
                    let mut acc = p.bias[o];
                    for i in 0..d.cin {
                        for u in 0..d.kx {
                            for v in 0..d.ky {
                                let xv = xd[((b * d.cin + i) * d.h + r + u) * d.w + c + v];
                                let wv = wd[((i * d.cout + o) * d.kx + u) * d.ky + v];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((b * d.cout + o) * d.oh + r) * d.ow + c] = acc;
                }
            }
        }
    }
    Tensor::new(vec![d.batch, d.cout, d.oh, d.ow], y)
}

fn conv_backward(p: &Param, x: &Tensor, dy: &Tensor) -> Result<(Tensor, ParamGrad)> {
    let d = conv_dims(p, x)?;
    let (xd, wd, g) = (x.data(), p.weight.data(), dy.data());
    let mut dw = vec![0.0; p.weight.len()];
    let mut db = vec![0.0; d.cout];
    let mut dx = vec![0.0; x.len()];
    for b in 0..d.batch {
        for o in 0..d.cout {
            for r in 0..d.oh {
                for c in 0..d.ow {
                    let gv = g[((b * d.cout + o) * d.oh + r) * d.ow + c];
                    db[o] += gv;
                    for i in 0..d.cin {
                        for u in 0..d.kx {
                            for v in 0..d.ky {
                                let xi = ((b * d.cin + i) * d.h + r + u) * d.w + c + v;
                                let wi = ((i * d.cout + o) * d.kx + u) * d.ky + v;
                                dw[wi] += gv * xd[xi];
                                dx[xi] += gv * wd[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        ParamGrad {
            weight: Tensor::new(p.weight.shape().to_vec(), dw)?,
            bias: db,
        },
    ))
}
