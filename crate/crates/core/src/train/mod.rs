//! Pretraining of the baseline and noise-aware models, and accuracy
//! evaluation.

mod adam;
mod eval;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use eval::{argmax_rows, evaluate, evaluate_features, predict, EvalReport, EvalRow, CLEAN};
pub use schedule::{plateau_scheduler, PlateauScheduler};
pub use trainer::{build_baseline, build_noise_aware, train_model, EpochLog, TrainLog};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, NoiseCondition, NoiseSource};
use crate::frontend::Spectrogram;
use crate::nn::{NnError, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Multiply the learning rate by `factor` after `patience_epochs` epochs
/// without a strict increase in validation accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience_epochs: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.1,
            patience_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau: PlateauConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 50,
            plateau: PlateauConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.optimizer.lr0 > 0.0 && self.optimizer.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.optimizer.beta1) || !(0.0..1.0).contains(&self.optimizer.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.optimizer.eps <= 0.0 {
            return bad("Adam eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.plateau.patience_epochs == 0 {
            return bad("plateau patience must be at least 1");
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return bad("plateau factor must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Extra noisy data for noise-aware pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseAwareMix {
    pub extra_fraction: f64,
    pub pool: Vec<NoiseCondition>,
}

impl NoiseAwareMix {
    pub const FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

    /// `extra_fraction` of the clean training set again, spread evenly over
    /// the six pretraining sources at every grid SNR.
    pub fn new(extra_fraction: f64) -> Result<Self, TrainError> {
        if !Self::FRACTIONS.contains(&extra_fraction) {
            return Err(TrainError::InvalidConfig(format!(
                "noise-aware fraction {extra_fraction} not one of 0.2, 0.4, 0.6, 0.8, 1.0"
            )));
        }
        Ok(Self {
            extra_fraction,
            pool: NoiseCondition::grid(&NoiseSource::PRETRAINING),
        })
    }
}

/// Stacks spectrograms into a `[N][1][frames][mels]` batch.
pub fn stack_inputs<'a>(inputs: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Tensor<f32>, TrainError> {
    let mut data = Vec::new();
    let mut shape = None;
    let mut n = 0;
    for s in inputs {
        let dims = (s.n_frames, s.n_mels);
        if *shape.get_or_insert(dims) != dims {
            return Err(NnError::ShapeMismatch(format!("spectrogram {dims:?} in a batch of {shape:?}")).into());
        }
        data.extend_from_slice(&s.values);
        n += 1;
    }
    let (h, w) = shape.ok_or(TrainError::EmptySet("batch"))?;
    Ok(Tensor::from_vec(&[n, 1, h, w], data)?)
}
