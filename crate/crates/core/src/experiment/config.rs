//! Declarative experiment description, read from TOML.
//!
//! ```toml
//! name = "blobs-gradual"
//! seed = 7
//!
//! [model]
//! layers = ["dense(2,16)", "relu", "dense(16,2)"]
//!
//! [dataset]
//! kind = "blobs2d"
//! n = 400
//! separation = 4.0
//!
//! [train]
//! epochs = 30
//! batch_size = 16
//! learning_rate = 0.1
//!
//! [sparsify]
//! sparsity = 50.0
//! granularity = "weight"
//! context = "local"
//! criterion = "large_final"
//! schedule = "gradual"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::harness::{DatasetSpec, LayerSpec, Model, TrainConfig};
use crate::rng::Rng;
use crate::schedule::{ScheduleKind, ScheduleSpec, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_N_STEPS};
use crate::selection::Context;
use crate::sparsifier::SparsifyPlan;
use crate::tensor::InitScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub dataset: DatasetSpec,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify: Option<SparsifySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_init")]
    pub init: InitScheme,
}

fn default_init() -> InitScheme {
    InitScheme::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
}

/// A single percentage, or one percentage per prunable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SparsityTarget {
    Uniform(f64),
    PerLayer(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsifySection {
    pub sparsity: SparsityTarget,
    pub granularity: String,
    #[serde(default = "default_context")]
    pub context: String,
    pub criterion: String,
    pub schedule: String,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub start_epoch: usize,
    /// Defaults to the last training epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_epoch: Option<usize>,
    #[serde(default = "default_update_frequency")]
    pub update_frequency: usize,
    #[serde(default)]
    pub lth: bool,
    #[serde(default)]
    pub rewind_epoch: usize,
    #[serde(default)]
    pub reset_end: bool,
    #[serde(default)]
    pub save_tickets: bool,
}

fn default_context() -> String {
    "local".into()
}

fn default_n_steps() -> usize {
    DEFAULT_N_STEPS
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_update_frequency() -> usize {
    1
}

/// Strips the variant prefix so field-path errors read naturally.
fn reason(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path.is_empty() || path == "." {
                None
            } else {
                Some(path)
            };
            let message = e.into_inner().message().trim().to_string();
            // serde reports a missing key at its parent; name the key itself
            let missing = message
                .strip_prefix("missing field `")
                .and_then(|rest| rest.split('`').next());
            let field = match (path, missing) {
                (Some(p), Some(m)) => format!("{p}.{m}"),
                (None, Some(m)) => m.to_string(),
                (Some(p), None) => p,
                (None, None) => "<document>".to_string(),
            };
            Error::config(field, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, message } if field == "<document>" => Error::Config {
                field: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            seed: self.seed,
        }
    }

    /// Initializes the configured model from the INIT stream of `seed`.
    pub fn build_model(&self) -> Result<Model> {
        let mut rng = Rng::with_stream(self.seed, crate::rng::streams::INIT);
        Model::from_specs(
            &self.dataset.input_shape(),
            &self.model.layers,
            self.model.init,
            &mut rng,
        )
        .map_err(|e| Error::config("model.layers", reason(e)))
    }

    /// Resolves the `[sparsify]` section, if present.
    pub fn plan(&self) -> Result<Option<SparsifyPlan>> {
        let Some(sp) = &self.sparsify else {
            return Ok(None);
        };
        let criterion: Criterion = sp
            .criterion
            .parse()
            .map_err(|e| Error::config("sparsify.criterion", reason(e)))?;
        let kind = ScheduleKind::parse(&sp.schedule, sp.n_steps, sp.alpha, sp.beta)
            .map_err(|e| Error::config("sparsify.schedule", reason(e)))?;
        let (context, final_sparsity) = match (&sp.sparsity, sp.context.as_str()) {
            (SparsityTarget::Uniform(s), "local" | "global") => {
                (Context::parse(&sp.context).expect("matched above"), *s)
            }
            (SparsityTarget::PerLayer(list), "per_layer") => {
                let max = list.iter().copied().fold(0.0, f64::max);
                (Context::PerLayer(list.clone()), max)
            }
            (SparsityTarget::Uniform(_), "per_layer") => {
                return Err(Error::config(
                    "sparsify.sparsity",
                    "per_layer context needs a list with one sparsity per prunable layer",
                ))
            }
            (SparsityTarget::PerLayer(_), "local" | "global") => {
                return Err(Error::config(
                    "sparsify.sparsity",
                    "a list of sparsities requires context = \"per_layer\"",
                ))
            }
            (_, other) => {
                return Err(Error::config(
                    "sparsify.context",
                    format!("unknown context '{other}' (expected local, global or per_layer)"),
                ))
            }
        };
        let mut schedule = ScheduleSpec::new(
            kind,
            final_sparsity,
            sp.start_epoch,
            sp.end_epoch.unwrap_or(self.train.epochs),
        );
        schedule.update_frequency = sp.update_frequency;
        let mut plan = SparsifyPlan::new(sp.granularity.as_str(), context, criterion, schedule);
        plan.lth = sp.lth;
        plan.rewind_epoch = sp.rewind_epoch;
        plan.reset_end = sp.reset_end;
        plan.save_tickets = sp.save_tickets;
        Ok(Some(plan))
    }

    /// Checks every field, reporting the first problem with its dotted path.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must not contain path separators"));
        }
        if self.dataset.n() < 2 {
            return Err(Error::config("dataset.n", "need at least 2 samples"));
        }
        if let DatasetSpec::Blobs2d { separation, .. } = self.dataset {
            if !separation.is_finite() {
                return Err(Error::config("dataset.separation", "must be finite"));
            }
        }
        self.train_config().validate()?;
        let model = self.build_model()?;
        let Some(plan) = self.plan()? else {
            return Ok(());
        };
        let sp = self.sparsify.as_ref().expect("plan implies section");
        for p in model.params() {
            plan.granularity
                .resolve(p.weight.rank())
                .map_err(|e| Error::config("sparsify.granularity", reason(e)))?;
        }
        if let Context::PerLayer(list) = &plan.context {
            if list.len() != model.prunable_count() {
                return Err(Error::config(
                    "sparsify.sparsity",
                    format!(
                        "{} entries for {} prunable layers",
                        list.len(),
                        model.prunable_count()
                    ),
                ));
            }
            if let Some(i) = list.iter().position(|s| !(0.0..=100.0).contains(s)) {
                return Err(Error::config(
                    format!("sparsify.sparsity[{i}]"),
                    "must lie in [0, 100]",
                ));
            }
        } else if !(0.0..=100.0).contains(&plan.schedule.final_sparsity) {
            return Err(Error::config("sparsify.sparsity", "must lie in [0, 100]"));
        }
        let window_field = if sp.end_epoch.is_some() {
            "sparsify.end_epoch"
        } else {
            "sparsify.start_epoch"
        };
        if plan.schedule.update_frequency == 0 {
            return Err(Error::config("sparsify.update_frequency", "must be >= 1"));
        }
        plan.schedule
            .validate(self.train.epochs)
            .map_err(|e| Error::config(window_field, reason(e)))?;
        if plan.lth && sp.rewind_epoch >= sp.start_epoch {
            return Err(Error::config(
                "sparsify.rewind_epoch",
                format!(
                    "must be earlier than start_epoch ({}) so the rewind point precedes the first round",
                    sp.start_epoch
                ),
            ));
        }
        if sp.rewind_epoch >= self.train.epochs {
            return Err(Error::config("sparsify.rewind_epoch", "is past the last epoch"));
        }
        if sp.save_tickets && !sp.lth {
            return Err(Error::config("sparsify.save_tickets", "requires lth = true"));
        }
        plan.validate(&model, self.train.epochs)
            .map_err(|e| Error::config("sparsify", reason(e)))
    }
}
