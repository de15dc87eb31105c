use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{stack_inputs, TrainError};
use crate::dataset::{LabeledSet, NoiseCondition};
use crate::nn::{fc_forward, Model, Tensor};

/// `noise_source` value for rows evaluated on clean audio.
pub const CLEAN: &str = "clean";

const EVAL_BATCH: usize = 32;

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor<f32>) -> Vec<usize> {
    let o = logits.dims()[1];
    logits
        .data()
        .chunks_exact(o)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Pooled features for a whole set, batch-norm in inference mode.
pub(crate) fn set_features(model: &Model<f32>, set: &LabeledSet) -> Result<Tensor<f32>, TrainError> {
    let c = model.arch.feature_dim();
    let mut data = Vec::with_capacity(set.len() * c);
    for chunk in set.inputs.chunks(EVAL_BATCH) {
        data.extend_from_slice(model.features(&stack_inputs(chunk)?)?.data());
    }
    Ok(Tensor::from_vec(&[set.len(), c], data)?)
}

pub fn predict(model: &Model<f32>, set: &LabeledSet) -> Result<Vec<usize>, TrainError> {
    let features = set_features(model, set)?;
    let logits = fc_forward(&features, &model.params.fc_weights, &model.params.fc_bias)?;
    Ok(argmax_rows(&logits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model_id: String,
    pub noise_source: String,
    pub snr_db: Option<i32>,
    pub accuracy: f64,
    pub n_examples: usize,
}

impl EvalRow {
    fn new(model_id: &str, condition: Option<NoiseCondition>, correct: usize, n: usize) -> Self {
        Self {
            model_id: model_id.to_string(),
            noise_source: condition.map_or(CLEAN.to_string(), |c| c.source.to_string()),
            snr_db: condition.map(|c| c.snr_db),
            accuracy: correct as f64 / n as f64,
            n_examples: n,
        }
    }
}

/// Top-1 accuracy of `model` on `set`, recorded under `condition`
/// (`None` for clean audio).
pub fn evaluate(
    model: &Model<f32>,
    set: &LabeledSet,
    model_id: &str,
    condition: Option<NoiseCondition>,
) -> Result<EvalRow, TrainError> {
    let features = set_features(model, set)?;
    evaluate_features(&features, &set.labels_idx(), &model.params.fc_weights, &model.params.fc_bias, model_id, condition)
}

/// Accuracy of a classifier head on precomputed features.
pub fn evaluate_features(
    features: &Tensor<f32>,
    labels: &[usize],
    fc_weights: &Tensor<f32>,
    fc_bias: &Tensor<f32>,
    model_id: &str,
    condition: Option<NoiseCondition>,
) -> Result<EvalRow, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let logits = fc_forward(features, fc_weights, fc_bias)?;
    let correct = argmax_rows(&logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(EvalRow::new(model_id, condition, correct, labels.len()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub const HEADER: &'static str = "model_id,noise_source,snr_db,accuracy,n_examples";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TrainError> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            let snr = r.snr_db.map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{:.6},{}", r.model_id, r.noise_source, snr, r.accuracy, r.n_examples)?;
        }
        Ok(())
    }
}

impl LabeledSet {
    pub fn labels_idx(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }
}
