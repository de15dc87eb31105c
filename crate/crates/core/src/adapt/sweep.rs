use std::collections::BTreeMap;
use std::sync::Arc;

use super::{adapt, AdaptConfig, AdaptError};
use crate::dataset::{
    derive_seed, plan_noisy_set, sample_shots, Benchmark, ClipLoader, NoiseBank, NoiseCondition, NoiseSource,
    Split,
};
use crate::frontend::FrontendConfig;
use crate::nn::{Model, Tensor};
use crate::train::{evaluate_features, stack_inputs};

/// Conditions and settings to sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub sources: Vec<NoiseSource>,
    /// SNRs the model is adapted at.
    pub adapt_snrs: Vec<i32>,
    /// SNRs every adapted model is tested at; `None` tests only at the
    /// adaptation SNR.
    pub test_snrs: Option<Vec<i32>>,
    pub shots: Vec<usize>,
    pub epochs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub lr: f64,
    /// Also report the unadapted model (rows with zero shots and epochs).
    pub include_before: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub source: NoiseSource,
    /// `None` for the unadapted model.
    pub train_snr_db: Option<i32>,
    pub test_snr_db: i32,
    pub shots: usize,
    pub epochs: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub n_examples: usize,
}

struct TestFeatures {
    features: Tensor<f32>,
    labels: Vec<usize>,
}

/// Seed of the noisy test set for `cond` in a run seeded with `seed`.
/// Shared by every evaluation so they all see the same mixtures.
pub fn condition_seed(seed: u64, cond: NoiseCondition) -> u64 {
    let id = cond.source as u64 * 100 + (cond.snr_db + 10) as u64;
    derive_seed(seed, 80, id)
}

fn test_features(
    base: &Model<f32>,
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    frontend: &FrontendConfig,
    cond: NoiseCondition,
    seed: u64,
) -> Result<TestFeatures, AdaptError> {
    let plan = plan_noisy_set(bench, Split::Test, &[cond], 1.0, condition_seed(seed, cond))?;
    let set = bench.featurize_noisy(&plan, loader, bank, frontend)?;
    let c = base.arch.feature_dim();
    let mut data = Vec::with_capacity(set.len() * c);
    for chunk in set.inputs.chunks(32) {
        data.extend_from_slice(base.features(&stack_inputs(chunk)?)?.data());
    }
    Ok(TestFeatures {
        features: Tensor::from_vec(&[set.len(), c], data)?,
        labels: set.labels_idx(),
    })
}

struct Ctx<'a> {
    base: &'a Model<f32>,
    bench: &'a Benchmark,
    bank: &'a NoiseBank,
    frontend: &'a FrontendConfig,
    source: NoiseSource,
    seed: u64,
}

impl Ctx<'_> {
    fn cached<'c>(
        &self,
        cache: &'c mut BTreeMap<i32, TestFeatures>,
        snr: i32,
        loader: &mut ClipLoader,
    ) -> Result<&'c TestFeatures, AdaptError> {
        if !cache.contains_key(&snr) {
            let cond = NoiseCondition::new(self.source, snr)?;
            let t = test_features(self.base, self.bench, loader, self.bank, self.frontend, cond, self.seed)?;
            cache.insert(snr, t);
        }
        Ok(&cache[&snr])
    }
}

/// Adapts `base` at every grid cell and tests each adapted head on the full
/// noisy test split. Test features come from the frozen network, so they are
/// computed once per (source, test SNR, seed) and shared by all heads.
/// Rows are ordered by source, seed, train SNR, shots, epochs, test SNR.
pub fn adaptation_sweep(
    base: Arc<Model<f32>>,
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    frontend: &FrontendConfig,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>, AdaptError> {
    for &snr in grid.adapt_snrs.iter().chain(grid.test_snrs.iter().flatten()) {
        NoiseCondition::new(NoiseSource::White, snr)?;
    }
    for &k in &grid.shots {
        AdaptConfig { shots_per_class: k, ..AdaptConfig::default() }.validate()?;
    }
    for &e in &grid.epochs {
        AdaptConfig { epochs: e, ..AdaptConfig::default() }.validate()?;
    }

    let mut rows = Vec::new();
    for &source in &grid.sources {
        for &seed in &grid.seeds {
            let mut cache: BTreeMap<i32, TestFeatures> = BTreeMap::new();
            let ctx = Ctx { base: &base, bench, bank, frontend, source, seed };
            let before_snrs: Vec<i32> = grid.test_snrs.clone().unwrap_or_else(|| grid.adapt_snrs.clone());
            if grid.include_before {
                for &snr in &before_snrs {
                    let t = ctx.cached(&mut cache, snr, loader)?;
                    let r = evaluate_features(&t.features, &t.labels, &base.params.fc_weights, &base.params.fc_bias, "", None)?;
                    rows.push(SweepRow {
                        source,
                        train_snr_db: None,
                        test_snr_db: snr,
                        shots: 0,
                        epochs: 0,
                        seed,
                        accuracy: r.accuracy,
                        n_examples: r.n_examples,
                    });
                }
            }
            for &train_snr in &grid.adapt_snrs {
                let cond = NoiseCondition::new(source, train_snr)?;
                for &k in &grid.shots {
                    let shot_seed = derive_seed(seed, 81, (train_snr + 10) as u64 * 10 + k as u64);
                    let shots = sample_shots(bench, loader, bank, frontend, cond, k, shot_seed)?;
                    for &epochs in &grid.epochs {
                        let cfg = AdaptConfig { shots_per_class: k, epochs, lr: grid.lr };
                        let adapted = adapt(base.clone(), &shots, &cfg, derive_seed(shot_seed, 82, epochs as u64))?;
                        let test_snrs = grid.test_snrs.clone().unwrap_or_else(|| vec![train_snr]);
                        for snr in test_snrs {
                            let t = ctx.cached(&mut cache, snr, loader)?;
                            let r = evaluate_features(&t.features, &t.labels, &adapted.fc_weights, &adapted.fc_bias, "", None)?;
                            rows.push(SweepRow {
                                source,
                                train_snr_db: Some(train_snr),
                                test_snr_db: snr,
                                shots: k,
                                epochs,
                                seed,
                                accuracy: r.accuracy,
                                n_examples: r.n_examples,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}
