//! Importance scores. Higher scores survive; the lowest-scoring blocks are pruned.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Independent standard-normal score per weight, redrawn at every mask update.
    Random,
    /// `|wf|`
    LargeFinal,
    /// `|wf| - |wi|`
    MagnitudeIncrease,
    /// `|wf - wi|`
    Movement,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Random,
        Criterion::LargeFinal,
        Criterion::MagnitudeIncrease,
        Criterion::Movement,
    ];

    pub fn needs_history(self) -> bool {
        matches!(self, Criterion::MagnitudeIncrease | Criterion::Movement)
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Random => "random",
            Criterion::LargeFinal => "large_final",
            Criterion::MagnitudeIncrease => "magnitude_increase",
            Criterion::Movement => "movement",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown criterion '{s}'")))
    }
}

/// Weight values captured at the previous mask-update event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistory {
    wi: Tensor,
    initialized_at: usize,
}

impl WeightHistory {
    pub fn new(wi: Tensor, step: usize) -> Self {
        Self {
            wi,
            initialized_at: step,
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.wi
    }

    /// Step at which the current snapshot was taken.
    pub fn initialized_at(&self) -> usize {
        self.initialized_at
    }

    /// Replaces the snapshot with a copy of `wf`.
    pub fn update(&mut self, wf: &Tensor, step: usize) -> Result<()> {
        self.wi.ensure_same_shape(wf.shape())?;
        self.wi = wf.clone();
        self.initialized_at = step;
        Ok(())
    }
}

pub fn score(
    criterion: Criterion,
    wf: &Tensor,
    wi: Option<&Tensor>,
    rng: Option<&mut Rng>,
) -> Result<Tensor> {
    if !wf.all_finite() {
        return Err(Error::invalid("weights contain non-finite values"));
    }
    let history = || {
        wi.ok_or_else(|| {
            Error::invalid(format!(
                "criterion '{criterion}' requires a weight history but none was provided"
            ))
        })
    };
    match criterion {
        Criterion::Random => {
            let rng =
                rng.ok_or_else(|| Error::invalid("criterion 'random' requires a random number generator"))?;
            let draws = (0..wf.len()).map(|_| rng.standard_normal()).collect();
            Tensor::new(wf.shape().to_vec(), draws)
        }
        Criterion::LargeFinal => Ok(wf.map(f64::abs)),
        Criterion::MagnitudeIncrease => wf.zip_map(history()?, |f, i| f.abs() - i.abs()),
        Criterion::Movement => wf.zip_map(history()?, |f, i| (f - i).abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn large_final_is_absolute_value() {
        let s = score(Criterion::LargeFinal, &t(&[0.5, -2.0, 0.1]), None, None).unwrap();
        assert_eq!(s.data(), &[0.5, 2.0, 0.1]);
    }

    #[test]
    fn magnitude_increase_by_hand() {
        let s = score(Criterion::MagnitudeIncrease, &t(&[0.5]), Some(&t(&[0.2])), None).unwrap();
        assert!((s.data()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn movement_by_hand() {
        let s = score(Criterion::Movement, &t(&[0.5]), Some(&t(&[-0.2])), None).unwrap();
        assert!((s.data()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn movement_without_displacement_is_zero() {
        let w = t(&[0.3, -1.0, 4.0]);
        let s = score(Criterion::Movement, &w, Some(&w), None).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_history_or_rng_is_an_error() {
        let w = t(&[1.0]);
        let err = score(Criterion::Movement, &w, None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("movement"), "{err}");
        assert!(score(Criterion::MagnitudeIncrease, &w, None, None).is_err());
        assert!(score(Criterion::Random, &w, None, None).is_err());
    }

    #[test]
    fn history_shape_must_match() {
        assert!(score(Criterion::Movement, &t(&[1.0, 2.0]), Some(&t(&[1.0])), None).is_err());
        let mut h = WeightHistory::new(t(&[1.0, 2.0]), 0);
        assert!(h.update(&t(&[1.0]), 3).is_err());
    }

    #[test]
    fn update_history_copies_weights() {
        let mut h = WeightHistory::new(t(&[0.0, 0.0]), 0);
        let wf = t(&[0.4, -0.1]);
        h.update(&wf, 5).unwrap();
        assert_eq!(h.values(), &wf);
        assert_eq!(h.initialized_at(), 5);
        let moved = score(Criterion::Movement, &wf, Some(h.values()), None).unwrap();
        assert!(moved.data().iter().all(|&v| v == 0.0));
        h.update(&wf, 6).unwrap();
        assert_eq!(h.values(), &wf);
    }

    #[test]
    fn random_scores_are_reproducible() {
        let w = t(&[1.0; 16]);
        let a = score(Criterion::Random, &w, None, Some(&mut Rng::new(11))).unwrap();
        let b = score(Criterion::Random, &w, None, Some(&mut Rng::new(11))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
        }
        assert!("l1".parse::<Criterion>().is_err());
        assert!(Criterion::Movement.needs_history());
        assert!(!Criterion::LargeFinal.needs_history());
    }
}
