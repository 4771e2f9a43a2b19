//! Versioned JSON checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so `load(save(x)) == x` bit for bit and save→load→save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::WeightHistory;
use crate::error::{Error, Result};
use crate::harness::{EpochSummary, Layer, LayerSpec, Model, Param};
use crate::selection::Context;
use crate::sparsifier::{Sparsifier, SparsifyPlan};
use crate::tensor::{Mask, Tensor};

pub const FORMAT_VERSION: u32 = 1;

/// Echo of the pruning configuration that produced a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEcho {
    pub granularity: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<f64>>,
    pub criterion: String,
    pub schedule: String,
    pub final_sparsity: f64,
    pub start_epoch: usize,
    pub end_epoch: usize,
    pub update_frequency: usize,
    pub lth: bool,
    pub rewind_epoch: usize,
    pub reset_end: bool,
}

impl PlanEcho {
    pub fn from_plan(plan: &SparsifyPlan) -> Self {
        let mut echo = Self::from_sparsifier(&plan.sparsifier(), "", plan.schedule.final_sparsity);
        echo.schedule = plan.schedule.kind.name().to_string();
        echo.start_epoch = plan.schedule.start_epoch;
        echo.end_epoch = plan.schedule.end_epoch;
        echo.update_frequency = plan.schedule.update_frequency;
        echo.lth = plan.lth;
        echo.rewind_epoch = plan.rewind_epoch;
        echo.reset_end = plan.reset_end;
        echo
    }

    /// Echo for a static `prune_model` call.
    pub fn from_sparsifier(sp: &Sparsifier, schedule: &str, sparsity: f64) -> Self {
        Self {
            granularity: sp.granularity.0.clone(),
            context: sp.context.name().to_string(),
            per_layer: match &sp.context {
                Context::PerLayer(list) => Some(list.clone()),
                _ => None,
            },
            criterion: sp.criterion.name().to_string(),
            schedule: schedule.to_string(),
            final_sparsity: sparsity,
            start_epoch: 0,
            end_epoch: 0,
            update_frequency: 0,
            lth: false,
            rewind_epoch: 0,
            reset_end: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// One per prunable layer, when a history-based criterion may be used later.
    pub histories: Option<Vec<WeightHistory>>,
    pub rewind_snapshot: Option<Vec<(Tensor, Vec<f64>)>>,
    pub plan: Option<PlanEcho>,
    pub metrics_tail: Vec<EpochSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    format_version: u32,
    input_shape: Vec<usize>,
    layers: Vec<LayerRepr>,
    #[serde(default)]
    histories: Option<Vec<HistoryRepr>>,
    #[serde(default)]
    rewind_snapshot: Option<Vec<ParamRepr>>,
    #[serde(default)]
    plan: Option<PlanEcho>,
    #[serde(default)]
    metrics_tail: Vec<EpochSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    kind: LayerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryRepr {
    initialized_at: usize,
    weight: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRepr {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            histories: None,
            rewind_snapshot: None,
            plan: None,
            metrics_tail: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .model
            .layers()
            .iter()
            .map(|layer| {
                let p = layer.param();
                LayerRepr {
                    kind: layer.spec(),
                    shape: p.map(|p| p.weight.shape().to_vec()),
                    weight: p.map(|p| p.weight.data().to_vec()),
                    bias: p.map(|p| p.bias.clone()),
                    mask: p.and_then(|p| p.mask.as_ref()).map(|m| m.bits().to_vec()),
                }
            })
            .collect();
        let file = FileRepr {
            format_version: FORMAT_VERSION,
            input_shape: self.model.input_shape().to_vec(),
            layers,
            histories: self.histories.as_ref().map(|hs| {
                hs.iter()
                    .map(|h| HistoryRepr {
                        initialized_at: h.initialized_at(),
                        weight: h.values().data().to_vec(),
                    })
                    .collect()
            }),
            rewind_snapshot: self.rewind_snapshot.as_ref().map(|snap| {
                snap.iter()
                    .map(|(w, b)| ParamRepr {
                        weight: w.data().to_vec(),
                        bias: b.clone(),
                    })
                    .collect()
            }),
            plan: self.plan.clone(),
            metrics_tail: self.metrics_tail.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::invalid(format!("cannot serialize checkpoint: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    /// Parses and validates a checkpoint. `origin` labels errors.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let corrupt = |message: String| Error::Corrupt {
            path: origin.to_path_buf(),
            message,
        };
        let mut de = serde_json::Deserializer::from_str(text);
        let file: FileRepr = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            corrupt(format!(
                "at field '{path}' (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        de.end().map_err(|e| {
            corrupt(format!(
                "trailing data at line {}, column {}",
                e.line(),
                e.column()
            ))
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }

        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, rec) in file.layers.into_iter().enumerate() {
            let at = |field: &str, msg: String| corrupt(format!("layers[{i}].{field}: {msg}"));
            let Some(expected) = rec.kind.weight_shape() else {
                if rec.weight.is_some() || rec.bias.is_some() || rec.mask.is_some() || rec.shape.is_some() {
                    return Err(at("kind", format!("{} layer carries parameters", rec.kind)));
                }
                layers.push(match rec.kind {
                    LayerSpec::Relu => Layer::Relu,
                    _ => Layer::Flatten,
                });
                continue;
            };
            let shape = rec.shape.ok_or_else(|| at("shape", "missing".into()))?;
            if shape != expected {
                return Err(at(
                    "shape",
                    format!("{shape:?} does not match {} ({expected:?})", rec.kind),
                ));
            }
            let weight = rec.weight.ok_or_else(|| at("weight", "missing".into()))?;
            let bias = rec.bias.ok_or_else(|| at("bias", "missing".into()))?;
            let weight = Tensor::new(shape.clone(), weight).map_err(|e| at("weight", e.to_string()))?;
            let mut param = Param::new(weight, bias).map_err(|e| at("bias", e.to_string()))?;
            if let Some(bits) = rec.mask {
                if let Some((j, b)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
                    return Err(at(&format!("mask[{j}]"), format!("value {b} is not 0 or 1")));
                }
                let mask = Mask::from_bits(shape, bits).map_err(|e| at("mask", e.to_string()))?;
                if let Some(j) = (0..mask.len()).find(|&j| !mask.is_kept(j) && param.weight.data()[j] != 0.0)
                {
                    return Err(at(&format!("weight[{j}]"), "nonzero at a pruned position".into()));
                }
                param.mask = Some(mask);
            }
            layers.push(match rec.kind {
                LayerSpec::Dense { .. } => Layer::Dense(param),
                _ => Layer::Conv2d(param),
            });
        }
        let model = Model::new(file.input_shape, layers).map_err(|e| corrupt(format!("layers: {e}")))?;
        let shapes: Vec<Vec<usize>> = model.params().map(|p| p.weight.shape().to_vec()).collect();
        let check_count = |field: &str, n: usize| {
            if n != shapes.len() {
                return Err(corrupt(format!(
                    "{field}: {n} entries for {} prunable layers",
                    shapes.len()
                )));
            }
            Ok(())
        };

        let histories = match file.histories {
            None => None,
            Some(hs) => {
                check_count("histories", hs.len())?;
                let mut out = Vec::with_capacity(hs.len());
                for (l, (h, shape)) in hs.into_iter().zip(&shapes).enumerate() {
                    let t = Tensor::new(shape.clone(), h.weight)
                        .map_err(|e| corrupt(format!("histories[{l}].weight: {e}")))?;
                    out.push(WeightHistory::new(t, h.initialized_at));
                }
                Some(out)
            }
        };
        let rewind_snapshot = match file.rewind_snapshot {
            None => None,
            Some(snap) => {
                check_count("rewind_snapshot", snap.len())?;
                let mut out = Vec::with_capacity(snap.len());
                for (l, (p, shape)) in snap.into_iter().zip(&shapes).enumerate() {
                    let t = Tensor::new(shape.clone(), p.weight)
                        .map_err(|e| corrupt(format!("rewind_snapshot[{l}].weight: {e}")))?;
                    if p.bias.len() != shape[1] {
                        return Err(corrupt(format!(
                            "rewind_snapshot[{l}].bias: length {} for {} outputs",
                            p.bias.len(),
                            shape[1]
                        )));
                    }
                    out.push((t, p.bias));
                }
                Some(out)
            }
        };
        Ok(Self {
            model,
            histories,
            rewind_snapshot,
            plan: file.plan,
            metrics_tail: file.metrics_tail,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
