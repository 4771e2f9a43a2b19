//! Sparsity schedules: training progress in, target sparsity (percent) out.
//!
//! A schedule runs inside a pruning window `[start_epoch, end_epoch]`. Before
//! the window the target is 0; after it the final value is held so the mask
//! stays frozen while the network fine-tunes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const DEFAULT_N_STEPS: usize = 5;
pub const DEFAULT_ALPHA: f64 = 14.0;
pub const DEFAULT_BETA: f64 = 6.0;

/// User schedule `f(final_sparsity, t) -> sparsity`.
pub type ScheduleFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomSchedule {
    name: String,
    f: ScheduleFn,
}

impl CustomSchedule {
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSchedule")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ScheduleKind {
    OneShot,
    Iterative { n_steps: usize },
    Gradual,
    OneCycle { alpha: f64, beta: f64 },
    Dsd,
    Custom(CustomSchedule),
}

impl ScheduleKind {
    pub fn name(&self) -> &str {
        match self {
            ScheduleKind::OneShot => "one_shot",
            ScheduleKind::Iterative { .. } => "iterative",
            ScheduleKind::Gradual => "gradual",
            ScheduleKind::OneCycle { .. } => "one_cycle",
            ScheduleKind::Dsd => "dsd",
            ScheduleKind::Custom(c) => &c.name,
        }
    }

    /// Resolves a schedule name. Parameters not used by the named kind are ignored.
    pub fn parse(name: &str, n_steps: usize, alpha: f64, beta: f64) -> Result<Self> {
        match name {
            "one_shot" => Ok(ScheduleKind::OneShot),
            "iterative" => {
                if n_steps == 0 {
                    return Err(Error::invalid("iterative schedule needs n_steps >= 1"));
                }
                Ok(ScheduleKind::Iterative { n_steps })
            }
            "gradual" => Ok(ScheduleKind::Gradual),
            "one_cycle" => {
                if !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::invalid("one_cycle alpha and beta must be finite"));
                }
                Ok(ScheduleKind::OneCycle { alpha, beta })
            }
            "dsd" => Ok(ScheduleKind::Dsd),
            "gradual_literal" => gradual_literal(),
            "dsd_literal" => dsd_literal(),
            other => Err(Error::invalid(format!("unknown schedule '{other}'"))),
        }
    }

    pub const NAMES: [&'static str; 7] = [
        "one_shot",
        "iterative",
        "gradual",
        "one_cycle",
        "dsd",
        "gradual_literal",
        "dsd_literal",
    ];
}

/// Sparsity at normalized progress `t` for a schedule ending at `sparsity`.
pub fn eval_schedule(kind: &ScheduleKind, sparsity: f64, t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    match kind {
        ScheduleKind::OneShot => sparsity,
        ScheduleKind::Iterative { n_steps } => {
            let n = *n_steps as f64;
            (sparsity / n) * (t * n).ceil()
        }
        ScheduleKind::Gradual => sparsity * (1.0 - (1.0 - t).powi(3)),
        ScheduleKind::OneCycle { alpha, beta } => {
            (1.0 + (-alpha + beta).exp()) / (1.0 + (-alpha * t + beta).exp()) * sparsity
        }
        ScheduleKind::Dsd => sparsity * (1.0 - (2.0 * PI * t).cos()) / 2.0,
        ScheduleKind::Custom(c) => (c.f)(sparsity, t),
    }
}

const PROBES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Wraps `f` as a schedule after probing it at a handful of progress values
/// with a 100% target; every probe must land in `[0, 100]`.
pub fn register_custom_schedule(
    name: &str,
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Result<ScheduleKind> {
    for t in PROBES {
        let v = f(100.0, t);
        if !v.is_finite() || !(0.0..=100.0).contains(&v) {
            return Err(Error::invalid(format!(
                "custom schedule '{name}' returned {v} at t={t}, outside [0, 100]"
            )));
        }
    }
    Ok(ScheduleKind::Custom(CustomSchedule {
        name: name.to_string(),
        f: Arc::new(f),
    }))
}

/// `s * (1 - t)^3`. Decays from `s` to 0, unlike `gradual`.
fn gradual_literal() -> Result<ScheduleKind> {
    register_custom_schedule("gradual_literal", |s, t| s * (1.0 - t).powi(3))
}

/// Two-branch cosine whose second half rises back to `s` instead of decaying.
fn dsd_literal() -> Result<ScheduleKind> {
    register_custom_schedule("dsd_literal", |s, t| {
        if t < 0.5 {
            (1.0 + (PI * (1.0 - t * 2.0)).cos()) * s / 2.0
        } else {
            (1.0 - (PI * (1.0 - t * 2.0)).cos()) * s / 2.0
        }
    })
}

#[derive(Debug, Clone)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub final_sparsity: f64,
    pub start_epoch: usize,
    pub end_epoch: usize,
    /// Mask updates per epoch inside the window.
    pub update_frequency: usize,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, final_sparsity: f64, start_epoch: usize, end_epoch: usize) -> Self {
        Self {
            kind,
            final_sparsity,
            start_epoch,
            end_epoch,
            update_frequency: 1,
        }
    }

    pub fn validate(&self, total_epochs: usize) -> Result<()> {
        if !(0.0..=100.0).contains(&self.final_sparsity) {
            return Err(Error::invalid(format!(
                "final sparsity {} is outside [0, 100]",
                self.final_sparsity
            )));
        }
        if self.start_epoch >= self.end_epoch {
            return Err(Error::invalid(format!(
                "pruning window is empty: start_epoch {} >= end_epoch {}",
                self.start_epoch, self.end_epoch
            )));
        }
        if self.end_epoch > total_epochs {
            return Err(Error::invalid(format!(
                "end_epoch {} exceeds the {total_epochs} training epochs",
                self.end_epoch
            )));
        }
        if self.update_frequency == 0 {
            return Err(Error::invalid("update_frequency must be >= 1"));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_schedule(&self.kind, self.final_sparsity, t)
    }
}

/// Position in training, counted in optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressClock {
    pub current_step: usize,
    pub steps_per_epoch: usize,
    pub total_epochs: usize,
}

impl ProgressClock {
    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.total_epochs
    }
}

pub fn normalized_t(clock: &ProgressClock, spec: &ScheduleSpec) -> Result<f64> {
    let start = spec.start_epoch * clock.steps_per_epoch;
    let end = spec.end_epoch * clock.steps_per_epoch;
    if end <= start {
        return Err(Error::invalid(format!(
            "degenerate pruning window [{start}, {end}] in steps"
        )));
    }
    let t = (clock.current_step as f64 - start as f64) / (end - start) as f64;
    Ok(t.clamp(0.0, 1.0))
}

/// Target sparsity at the clock position: 0 before the window, the schedule
/// inside it, and the schedule's final value after it.
pub fn current_target(clock: &ProgressClock, spec: &ScheduleSpec) -> Result<f64> {
    if clock.current_step < spec.start_epoch * clock.steps_per_epoch {
        return Ok(0.0);
    }
    Ok(spec.eval(normalized_t(clock, spec)?))
}

/// Step boundaries (steps completed) at which masks may be recomputed:
/// `update_frequency` evenly spaced points per epoch, from the window start
/// through the window end inclusive.
pub fn update_boundaries(spec: &ScheduleSpec, steps_per_epoch: usize) -> Vec<usize> {
    let start = spec.start_epoch * steps_per_epoch;
    let end = spec.end_epoch * steps_per_epoch;
    let k = spec.update_frequency.max(1);
    let mut out = Vec::new();
    for epoch in spec.start_epoch..spec.end_epoch {
        for j in 0..k {
            let b = epoch * steps_per_epoch + j * steps_per_epoch / k;
            if b >= start && b < end && out.last() != Some(&b) {
                out.push(b);
            }
        }
    }
    out.push(end);
    out
}
