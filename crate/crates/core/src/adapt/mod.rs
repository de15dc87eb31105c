//! Few-shot adaptation of a pretrained model to an on-site noise condition.
//! Only the final fully-connected layer changes. Features come from the
//! frozen network (batch-norm in inference mode), are computed once per shot
//! and reused every epoch, and drive per-sample SGD on the classifier head.

mod sweep;

pub use sweep::{adaptation_sweep, condition_seed, SweepGrid, SweepRow};

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{derive_seed, DatasetError, NoiseCondition, ShotSet};
use crate::nn::{encode_weights, save_weights, softmax, Model, NnError, Provenance, Tensor};
use crate::train::{stack_inputs, TrainError};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("invalid adaptation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub shots_per_class: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            shots_per_class: 1,
            epochs: 1,
            lr: 1e-4,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if !(1..=5).contains(&self.shots_per_class) {
            return Err(AdaptError::InvalidConfig(format!(
                "{} shots per class, expected 1..=5",
                self.shots_per_class
            )));
        }
        if !(1..=5).contains(&self.epochs) {
            return Err(AdaptError::InvalidConfig(format!("{} epochs, expected 1..=5", self.epochs)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(AdaptError::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// A pretrained model with a replacement classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedModel {
    pub base: Arc<Model<f32>>,
    pub fc_weights: Tensor<f32>,
    pub fc_bias: Tensor<f32>,
    pub condition: Option<NoiseCondition>,
    pub config: AdaptConfig,
    pub seed: u64,
    /// SGD updates applied.
    pub steps: usize,
}

impl AdaptedModel {
    /// Full model: the base with this head swapped in.
    pub fn to_model(&self) -> Model<f32> {
        let mut m = (*self.base).clone();
        m.params.fc_weights = self.fc_weights.clone();
        m.params.fc_bias = self.fc_bias.clone();
        m
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            base_checksum: weights_checksum(&self.base),
            noise_source: self.condition.map_or_else(String::new, |c| c.source.to_string()),
            snr_db: self.condition.map_or(0, |c| c.snr_db),
            shots: self.config.shots_per_class,
            epochs: self.config.epochs,
            seed: self.seed,
        }
    }

    /// Writes the adapted model with its provenance record; returns the file CRC.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<u32, AdaptError> {
        Ok(save_weights(&self.to_model(), Some(&self.provenance()), path)?)
    }
}

/// CRC of the weight file `model` would be saved as (without provenance).
pub fn weights_checksum(model: &Model<f32>) -> u32 {
    let bytes = encode_weights(model, None);
    u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("four trailing bytes"))
}

/// Pooled features of a batch of shots: the input of the classifier head.
pub fn extract_features(model: &Model<f32>, shots: &ShotSet) -> Result<Tensor<f32>, AdaptError> {
    if shots.is_empty() {
        return Ok(Tensor::zeros(&[0, model.arch.feature_dim()]));
    }
    Ok(model.features(&stack_inputs(shots.items.iter().map(|s| &s.input))?)?)
}

/// One cross-entropy SGD step on a single example:
/// `p = softmax(W f + b)`, `W -= lr (p - onehot(y)) ⊗ f`, `b -= lr (p - onehot(y))`.
pub fn fc_sgd_step(
    fc_weights: &mut Tensor<f32>,
    fc_bias: &mut Tensor<f32>,
    features: &[f32],
    label: usize,
    lr: f32,
) -> Result<(), AdaptError> {
    let (o, c) = (fc_bias.numel(), features.len());
    if fc_weights.dims() != [o, c] || label >= o {
        return Err(NnError::ShapeMismatch(format!(
            "fc {:?}, bias [{o}], {c} features, label {label}",
            fc_weights.dims()
        ))
        .into());
    }
    let w = fc_weights.data_mut();
    let mut logits = Tensor::zeros(&[1, o]);
    for (k, z) in logits.data_mut().iter_mut().enumerate() {
        *z = fc_bias.data()[k] + w[k * c..(k + 1) * c].iter().zip(features).map(|(a, b)| a * b).sum::<f32>();
    }
    let p = softmax(&logits)?;
    for k in 0..o {
        let d = p.data()[k] - if k == label { 1.0 } else { 0.0 };
        for (wk, &f) in w[k * c..(k + 1) * c].iter_mut().zip(features) {
            *wk -= lr * d * f;
        }
        fc_bias.data_mut()[k] -= lr * d;
    }
    Ok(())
}

fn check_shots(shots: &ShotSet, cfg: &AdaptConfig) -> Result<(), AdaptError> {
    cfg.validate()?;
    if !shots.is_empty() && shots.shots_per_class != cfg.shots_per_class {
        return Err(AdaptError::InvalidConfig(format!(
            "shot set has {} shots per class, config asks for {}",
            shots.shots_per_class, cfg.shots_per_class
        )));
    }
    Ok(())
}

fn run_sgd(
    base: Arc<Model<f32>>,
    shots: &ShotSet,
    cfg: &AdaptConfig,
    seed: u64,
    mut features_for_epoch: impl FnMut(usize) -> Result<Tensor<f32>, AdaptError>,
) -> Result<AdaptedModel, AdaptError> {
    let mut fc_weights = base.params.fc_weights.clone();
    let mut fc_bias = base.params.fc_bias.clone();
    let c = base.arch.feature_dim();
    let mut order: Vec<usize> = (0..shots.len()).collect();
    let mut steps = 0;
    if !shots.is_empty() {
        for epoch in 0..cfg.epochs {
            let features = features_for_epoch(epoch)?;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 70, epoch as u64)));
            for &i in &order {
                let f = &features.data()[i * c..(i + 1) * c];
                fc_sgd_step(&mut fc_weights, &mut fc_bias, f, shots.items[i].label.index(), cfg.lr as f32)?;
                steps += 1;
            }
        }
    }
    Ok(AdaptedModel {
        base,
        fc_weights,
        fc_bias,
        condition: shots.condition,
        config: *cfg,
        seed,
        steps,
    })
}

/// Fine-tunes the classifier head of `base` on `shots`: `cfg.epochs` passes
/// of per-sample SGD, each in a seeded shuffled order. Every other tensor is
/// shared with `base`, untouched.
pub fn adapt(base: Arc<Model<f32>>, shots: &ShotSet, cfg: &AdaptConfig, seed: u64) -> Result<AdaptedModel, AdaptError> {
    check_shots(shots, cfg)?;
    let features = extract_features(&base, shots)?;
    run_sgd(base, shots, cfg, seed, |_| Ok(features.clone()))
}

/// Same as [`adapt`] but runs the frozen network again every epoch instead
/// of caching features. Kept as a reference for the caching path.
pub fn adapt_recomputing(
    base: Arc<Model<f32>>,
    shots: &ShotSet,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<AdaptedModel, AdaptError> {
    check_shots(shots, cfg)?;
    let frozen = base.clone();
    run_sgd(base, shots, cfg, seed, |_| extract_features(&frozen, shots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassLabel, NoiseSource, ShotItem};
    use crate::frontend::Spectrogram;
    use crate::nn::{fc_backward, softmax_cross_entropy, ArchSpec};
    use rand::Rng;

    fn arch() -> ArchSpec {
        ArchSpec::with_channels(&[4, 4, 6, 6, 8])
    }

    fn shot_set(k: usize, classes: &[ClassLabel], seed: u64) -> ShotSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = Vec::new();
        for (i, &label) in classes.iter().enumerate() {
            for _ in 0..k {
                let values = (0..12 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
                items.push(ShotItem {
                    input: Spectrogram { n_frames: 12, n_mels: 9, values },
                    label,
                    example: i,
                });
            }
        }
        ShotSet {
            shots_per_class: k,
            classes: classes.to_vec(),
            condition: NoiseCondition::new(NoiseSource::CarHorn, -3).ok(),
            items,
        }
    }

    fn base(seed: u64) -> Arc<Model<f32>> {
        let mut m: Model<f32> = Model::init(&arch(), seed).unwrap();
        // Non-trivial running statistics, so a leak into them would show.
        for (i, b) in m.params.blocks.iter_mut().enumerate() {
            b.bn.running_mean.fill(0.01 * i as f32);
            b.bn.running_var.fill(1.0 + 0.1 * i as f32);
        }
        Arc::new(m)
    }

    fn non_fc_bytes(m: &Model<f32>) -> Vec<u32> {
        let t = m.params.all_tensors();
        t[..t.len() - 2].iter().flat_map(|x| x.data().iter().map(|v| v.to_bits())).collect()
    }

    #[test]
    fn step_counts() {
        let b = base(1);
        let one = adapt(b.clone(), &shot_set(1, &ClassLabel::ALL, 2), &AdaptConfig::default(), 3).unwrap();
        assert_eq!(one.steps, 12);
        let cfg = AdaptConfig {
            shots_per_class: 5,
            epochs: 5,
            ..AdaptConfig::default()
        };
        let five = adapt(b, &shot_set(5, &ClassLabel::ALL, 2), &cfg, 3).unwrap();
        assert_eq!(five.steps, 300);
    }

    #[test]
    fn frozen_scope_is_bitwise_intact() {
        let b = base(4);
        let before = non_fc_bytes(&b);
        let cfg = AdaptConfig {
            shots_per_class: 2,
            epochs: 3,
            lr: 0.5,
        };
        let a = adapt(b.clone(), &shot_set(2, &ClassLabel::ALL, 5), &cfg, 6).unwrap();
        assert_eq!(non_fc_bytes(&a.to_model()), before);
        assert_eq!(non_fc_bytes(&b), before);
        assert_ne!(a.fc_weights, b.params.fc_weights);
    }

    #[test]
    fn no_op_cases() {
        let b = base(7);
        let zero_lr = AdaptConfig {
            lr: 0.0,
            ..AdaptConfig::default()
        };
        let a = adapt(b.clone(), &shot_set(1, &ClassLabel::ALL, 8), &zero_lr, 1).unwrap();
        assert_eq!(a.fc_weights, b.params.fc_weights);
        assert_eq!(a.fc_bias, b.params.fc_bias);
        let e = adapt(b.clone(), &ShotSet::empty(), &AdaptConfig::default(), 1).unwrap();
        assert_eq!((e.steps, &e.fc_weights, &e.fc_bias), (0, &b.params.fc_weights, &b.params.fc_bias));
    }

    #[test]
    fn confident_correct_prediction_does_not_move() {
        let mut w = Tensor::zeros(&[12, 3]);
        let mut bias = Tensor::zeros(&[12]);
        bias.data_mut()[4] = 200.0;
        let (w0, b0) = (w.clone(), bias.clone());
        fc_sgd_step(&mut w, &mut bias, &[1.0, -2.0, 0.5], 4, 0.1).unwrap();
        assert_eq!((w, bias), (w0, b0));
    }

    #[test]
    fn closed_form_matches_generic_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let c = rng.gen_range(1..20);
            let w: Vec<f32> = (0..12 * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f: Vec<f32> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = rng.gen_range(0..12);
            let lr = 10f32.powf(rng.gen_range(-4.0..-1.0));
            let (mut wt, mut bt) = (Tensor::from_vec(&[12, c], w.clone()).unwrap(), Tensor::from_vec(&[12], b.clone()).unwrap());
            fc_sgd_step(&mut wt, &mut bt, &f, y, lr).unwrap();

            let ft = Tensor::from_vec(&[1, c], f).unwrap();
            let (w0, b0) = (Tensor::from_vec(&[12, c], w).unwrap(), Tensor::from_vec(&[12], b).unwrap());
            let logits = crate::nn::fc_forward(&ft, &w0, &b0).unwrap();
            let (_, g) = softmax_cross_entropy(&logits, &[y]).unwrap();
            let grads = fc_backward(&ft, &w0, &g).unwrap();
            for (i, (&got, (&orig, &gw))) in wt.data().iter().zip(w0.data().iter().zip(grads.weights.data())).enumerate() {
                assert!((got - (orig - lr * gw)).abs() < 1e-6, "case {case} weight {i}");
            }
            for (&got, (&orig, &gb)) in bt.data().iter().zip(b0.data().iter().zip(grads.bias.data())) {
                assert!((got - (orig - lr * gb)).abs() < 1e-6, "case {case} bias");
            }
        }
    }

    #[test]
    fn cached_features_equal_recomputed() {
        let b = base(12);
        let shots = shot_set(3, &ClassLabel::ALL, 13);
        let cfg = AdaptConfig {
            shots_per_class: 3,
            epochs: 4,
            lr: 0.05,
        };
        let a = adapt(b.clone(), &shots, &cfg, 14).unwrap();
        let r = adapt_recomputing(b, &shots, &cfg, 14).unwrap();
        assert_eq!(a, r);
    }

    #[test]
    fn features_are_deterministic_and_sized() {
        let b = base(15);
        let shots = shot_set(1, &ClassLabel::ALL, 16);
        let f1 = extract_features(&b, &shots).unwrap();
        let f2 = extract_features(&b, &shots).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.dims(), &[12, 8]);
        // With an identity head the full forward pass returns the features.
        let mut probe = (*b).clone();
        probe.arch.n_classes = 8;
        probe.params.fc_weights = Tensor::from_vec(&[8, 8], (0..64).map(|i| if i % 9 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        probe.params.fc_bias = Tensor::zeros(&[8]);
        let x = stack_inputs(shots.items.iter().map(|s| &s.input)).unwrap();
        assert_eq!(probe.forward(&x).unwrap(), f1);
    }

    #[test]
    fn provenance_and_config_checks() {
        let b = base(17);
        let a = adapt(b.clone(), &shot_set(1, &ClassLabel::ALL, 18), &AdaptConfig::default(), 99).unwrap();
        let p = a.provenance();
        assert_eq!((p.noise_source.as_str(), p.snr_db, p.shots, p.epochs, p.seed), ("car_horn", -3, 1, 1, 99));
        assert_eq!(p.base_checksum, weights_checksum(&b));
        let bad = AdaptConfig {
            shots_per_class: 6,
            ..AdaptConfig::default()
        };
        assert!(adapt(b.clone(), &shot_set(1, &ClassLabel::ALL, 18), &bad, 1).is_err());
        let mismatch = AdaptConfig {
            shots_per_class: 2,
            ..AdaptConfig::default()
        };
        assert!(adapt(b, &shot_set(1, &ClassLabel::ALL, 18), &mismatch, 1).is_err());
    }
}
