use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::dataset::{BenchmarkConfig, ClassLabel, SplitCaps, SNR_GRID};
use crate::frontend::FrontendConfig;
use crate::nn::ArchSpec;
use crate::train::{AdamConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full benchmark and the published training protocol. Long-running.
    Paper,
    /// Three keywords plus Unknown and Silence, at most 200 clips per class,
    /// a narrower network and 10 pretraining epochs.
    #[default]
    Desk,
}

impl FromStr for Profile {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(BenchError::Usage(format!("unknown profile '{other}' (paper|desk)"))),
        }
    }
}

/// Everything that determines an experiment's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Seeds for repeated experiment runs; each one trains its own models.
    pub seeds: Vec<u64>,
    pub frontend: FrontendConfig,
    pub benchmark: BenchmarkConfig,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub adapt_lr: f64,
    /// Fraction of the noise-aware model compared against the baseline.
    pub selected_fraction: f64,
    pub fig5_adapt_snrs: Vec<i32>,
    pub fig6_snrs: Vec<i32>,
    pub fig6_shots: Vec<usize>,
    pub fig6_epochs: Vec<usize>,
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let paper = Self {
            profile,
            seeds: vec![0],
            frontend: FrontendConfig::default(),
            benchmark: BenchmarkConfig::default(),
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
            adapt_lr: 1e-4,
            selected_fraction: 1.0,
            fig5_adapt_snrs: vec![-3, 24],
            fig6_snrs: SNR_GRID.to_vec(),
            fig6_shots: vec![1, 5],
            fig6_epochs: (1..=5).collect(),
        };
        match profile {
            Profile::Paper => paper,
            Profile::Desk => Self {
                seeds: (0..5).collect(),
                benchmark: BenchmarkConfig {
                    seed: 0,
                    max_per_class: SplitCaps {
                        train: Some(160),
                        val: Some(20),
                        test: Some(20),
                    },
                    keywords: Some(vec![ClassLabel::Yes, ClassLabel::No, ClassLabel::Up]),
                },
                arch: ArchSpec::with_channels(&[8, 8, 16, 16, 16]),
                train: TrainConfig {
                    optimizer: AdamConfig {
                        lr0: 1e-3,
                        ..AdamConfig::default()
                    },
                    max_epochs: 10,
                    ..TrainConfig::default()
                },
                ..paper
            },
        }
    }

    /// Profile defaults with `overrides` (a TOML document) merged on top.
    /// Tables merge key by key; any other value replaces the default.
    pub fn with_overrides(profile: Profile, overrides: &str) -> Result<Self, BenchError> {
        let base = toml::Value::try_from(Self::for_profile(profile)).map_err(|e| BenchError::Config(e.to_string()))?;
        let patch: toml::Value = toml::from_str(overrides).map_err(|e| BenchError::Config(e.to_string()))?;
        let merged = merge(base, patch);
        let mut cfg: Self = merged.try_into().map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        cfg.profile = profile;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Self, BenchError> {
        match path {
            None => Ok(Self::for_profile(profile)),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(BenchError::io(p))?;
                Self::with_overrides(profile, &text)
            }
        }
    }

    /// Sets every seed from one value.
    pub fn reseed(&mut self, seed: u64) {
        self.seeds = vec![seed];
        self.train.seed = seed;
        self.benchmark.seed = seed;
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.train.validate()?;
        self.arch.validate()?;
        self.frontend.validate()?;
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must not be empty".into()));
        }
        for &snr in self.fig5_adapt_snrs.iter().chain(&self.fig6_snrs) {
            if !SNR_GRID.contains(&snr) {
                return Err(BenchError::Config(format!("SNR {snr} dB is off the grid")));
            }
        }
        Ok(())
    }
}

fn merge(base: toml::Value, patch: toml::Value) -> toml::Value {
    match (base, patch) {
        (toml::Value::Table(mut b), toml::Value::Table(p)) => {
            for (k, v) in p {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, p) => p,
    }
}
