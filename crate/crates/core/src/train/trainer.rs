use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::set_features;
use super::{adam_step, argmax_rows, stack_inputs, AdamState, NoiseAwareMix, PlateauScheduler, TrainConfig, TrainError};
use crate::dataset::{derive_seed, plan_noisy_set, Benchmark, ClipLoader, LabeledSet, NoiseBank, Split};
use crate::frontend::FrontendConfig;
use crate::nn::{fc_forward, softmax_cross_entropy, ArchSpec, Model};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Loss of the very first mini-batch, before any update.
    pub initial_loss: f64,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,lr,train_loss,train_acc,val_acc";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TrainError> {
        writeln!(out, "{}", Self::HEADER)?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{:e},{:.6},{:.6},{:.6}",
                e.epoch, e.lr, e.train_loss, e.train_acc, e.val_acc
            )?;
        }
        Ok(())
    }
}

/// Mini-batch Adam on `train` for exactly `cfg.max_epochs` epochs, with the
/// learning rate decayed on validation-accuracy plateaus. Returns the
/// weights after the last epoch. `on_epoch` sees each log row as it is
/// produced.
pub fn train_model(
    arch: &ArchSpec,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model<f32>, TrainLog), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    let mut model: Model<f32> = Model::init(arch, cfg.seed)?;
    let mut adam = AdamState::new(model.params.learnable_mut().into_iter().map(|t| &*t));
    let mut sched = PlateauScheduler::new(cfg.optimizer.lr0, cfg.plateau);
    let labels = train.labels_idx();
    let val_labels = val.labels_idx();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 60, epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let x = stack_inputs(batch.iter().map(|&i| &train.inputs[i]))?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let trace = model.forward_train(&x)?;
            let (loss, grad) = softmax_cross_entropy(&trace.logits, &y)?;
            if epoch == 0 && loss_sum == 0.0 {
                log.initial_loss = loss as f64;
            }
            loss_sum += loss as f64 * batch.len() as f64;
            correct += argmax_rows(&trace.logits).iter().zip(&y).filter(|(p, t)| p == t).count();
            let grads = model.backward(&trace, &grad)?;
            adam_step(&mut model.params.learnable_mut(), &grads.tensors(), &mut adam, lr, &cfg.optimizer)?;
        }
        let features = set_features(&model, val)?;
        let logits = fc_forward(&features, &model.params.fc_weights, &model.params.fc_bias)?;
        let val_correct = argmax_rows(&logits).iter().zip(&val_labels).filter(|(p, t)| p == t).count();
        let row = EpochLog {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc: val_correct as f64 / val.len() as f64,
        };
        sched.step(row.val_acc);
        on_epoch(&row);
        log.epochs.push(row);
    }
    Ok((model, log))
}

/// Clean-only pretraining on the benchmark's training split.
pub fn build_baseline(
    bench: &Benchmark,
    loader: &mut ClipLoader,
    frontend: &FrontendConfig,
    arch: &ArchSpec,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model<f32>, TrainLog), TrainError> {
    let train = bench.featurize(Split::Train, loader, frontend)?;
    let val = bench.featurize(Split::Val, loader, frontend)?;
    train_model(arch, &train, &val, cfg, on_epoch)
}

/// Pretraining on the clean training split plus a balanced noisy copy of
/// `mix.extra_fraction` of it, shuffled together every epoch. Noisy
/// examples are mixed once, up front.
pub fn build_noise_aware(
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    frontend: &FrontendConfig,
    arch: &ArchSpec,
    mix: &NoiseAwareMix,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model<f32>, TrainLog), TrainError> {
    let mut train = bench.featurize(Split::Train, loader, frontend)?;
    let plan = plan_noisy_set(bench, Split::Train, &mix.pool, mix.extra_fraction, derive_seed(cfg.seed, 61, 0))?;
    train.extend(bench.featurize_noisy(&plan, loader, bank, frontend)?);
    let val = bench.featurize(Split::Val, loader, frontend)?;
    train_model(arch, &train, &val, cfg, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassLabel;
    use crate::frontend::Spectrogram;
    use rand::Rng;

    fn toy_set(n: usize, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = LabeledSet::default();
        for i in 0..n {
            let values = (0..10 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            set.push(Spectrogram { n_frames: 10, n_mels: 8, values }, ClassLabel::ALL[i % 12]);
        }
        set
    }

    fn arch() -> ArchSpec {
        ArchSpec::with_channels(&[4, 4, 8, 8, 8])
    }

    #[test]
    fn same_seed_same_weights() {
        let set = toy_set(20, 1);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 6,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, la) = train_model(&arch(), &set, &set, &cfg, |_| {}).unwrap();
        let (b, lb) = train_model(&arch(), &set, &set, &cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.epochs.len(), 3);
        let (c, _) = train_model(&arch(), &set, &set, &TrainConfig { seed: 10, ..cfg }, |_| {}).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn first_loss_is_near_ln12() {
        let set = toy_set(32, 2);
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let (_, log) = train_model(&arch(), &set, &set, &cfg, |_| {}).unwrap();
        assert!((log.initial_loss - 12f64.ln()).abs() < 0.3, "{}", log.initial_loss);
    }

    #[test]
    fn log_csv_has_one_row_per_epoch() {
        let set = toy_set(8, 3);
        let cfg = TrainConfig {
            max_epochs: 4,
            ..TrainConfig::default()
        };
        let (_, log) = train_model(&arch(), &set, &set, &cfg, |_| {}).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TrainLog::HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,1e-4,"));
    }

    #[test]
    fn empty_sets_and_bad_configs_fail() {
        let set = toy_set(4, 4);
        let cfg = TrainConfig::default();
        assert!(train_model(&arch(), &LabeledSet::default(), &set, &cfg, |_| {}).is_err());
        assert!(train_model(&arch(), &set, &LabeledSet::default(), &cfg, |_| {}).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..cfg
        };
        assert!(train_model(&arch(), &set, &set, &bad, |_| {}).is_err());
    }
}
