//! The 12-class speech-commands benchmark: labels, corpus scanning, balanced
//! split construction, SNR-exact noise mixing and few-shot sampling.

mod benchmark;
mod corpus;
mod mix;
mod noise;
pub mod synth;

pub use benchmark::{
    build_benchmark, build_noisy_set, plan_noisy_set, read_manifest, sample_shots,
    write_manifest, write_noisy_manifest, Benchmark, BenchmarkConfig, ClipLoader, ClipSource,
    Example, LabeledSet, NoisyItem, ShotItem, ShotSet, SplitCaps,
};
pub use corpus::{scan_corpus, scan_default, CorpusEntry, CorpusIndex, BACKGROUND_DIR};
pub use mix::{extract_silence, mix_at_snr, mix_at_snr_detailed, silence_offsets, Mixture};
pub use noise::{pink_noise, white_noise, NoiseBank};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::FrontendError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("'{0}' is not a speech-commands word")]
    UnknownWord(String),
    #[error("list file not found: {0}")]
    MissingListFile(String),
    #[error("corpus at {0} contains no utterances")]
    EmptyCorpus(String),
    #[error("no {BACKGROUND_DIR} directory with recordings under {0}")]
    MissingBackgroundNoise(String),
    #[error("source has {len} samples, need at least {need}")]
    SourceTooShort { len: usize, need: usize },
    #[error("{0} signal has zero power")]
    ZeroPowerSignal(&'static str),
    #[error("class {class} has {available} training clips, {requested} requested")]
    InsufficientSamples {
        class: &'static str,
        available: usize,
        requested: usize,
    },
    #[error("SNR {0} dB is not on the -3..=24 dB grid")]
    OffGridSnr(i32),
    #[error("unknown noise source '{0}'")]
    UnknownNoiseSource(String),
    #[error("noise recording for '{source_name}' not found at {path}")]
    MissingNoiseFile { source_name: String, path: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Word folder token standing for noise-only clips.
pub const SILENCE_TOKEN: &str = "_silence_";

/// The 35 words of the speech-commands v2 vocabulary.
pub const GSC_WORDS: [&str; 35] = [
    "backward", "bed", "bird", "cat", "dog", "down", "eight", "five", "follow", "forward", "four",
    "go", "happy", "house", "learn", "left", "marvin", "nine", "no", "off", "on", "one", "right",
    "seven", "sheila", "six", "stop", "three", "tree", "two", "up", "visual", "wow", "yes", "zero",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Yes,
    No,
    Up,
    Down,
    Left,
    Right,
    On,
    Off,
    Stop,
    Go,
    Unknown,
    Silence,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 12] = [
        ClassLabel::Yes,
        ClassLabel::No,
        ClassLabel::Up,
        ClassLabel::Down,
        ClassLabel::Left,
        ClassLabel::Right,
        ClassLabel::On,
        ClassLabel::Off,
        ClassLabel::Stop,
        ClassLabel::Go,
        ClassLabel::Unknown,
        ClassLabel::Silence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Yes => "Yes",
            ClassLabel::No => "No",
            ClassLabel::Up => "Up",
            ClassLabel::Down => "Down",
            ClassLabel::Left => "Left",
            ClassLabel::Right => "Right",
            ClassLabel::On => "On",
            ClassLabel::Off => "Off",
            ClassLabel::Stop => "Stop",
            ClassLabel::Go => "Go",
            ClassLabel::Unknown => "Unknown",
            ClassLabel::Silence => "Silence",
        }
    }

    pub fn is_keyword(self) -> bool {
        self.index() < 10
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a corpus folder name to its benchmark class.
pub fn assign_class(raw_word: &str) -> Result<ClassLabel, DatasetError> {
    if raw_word == SILENCE_TOKEN {
        return Ok(ClassLabel::Silence);
    }
    if !GSC_WORDS.contains(&raw_word) {
        return Err(DatasetError::UnknownWord(raw_word.to_string()));
    }
    Ok(ClassLabel::ALL[..10]
        .iter()
        .copied()
        .find(|c| c.name().eq_ignore_ascii_case(raw_word))
        .unwrap_or(ClassLabel::Unknown))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Fraction of a long recording reserved for this split: the first 80 %
    /// for training, then 10 % each for validation and test.
    pub fn region(self) -> (f64, f64) {
        match self {
            Split::Train => (0.0, 0.8),
            Split::Val => (0.8, 0.9),
            Split::Test => (0.9, 1.0),
        }
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    White,
    Pink,
    Babble,
    Office,
    Kitchen,
    LivingRoom,
    CarHorn,
    DogBark,
    StreetMusic,
}

impl NoiseSource {
    pub const ALL: [NoiseSource; 9] = [
        NoiseSource::White,
        NoiseSource::Pink,
        NoiseSource::Babble,
        NoiseSource::Office,
        NoiseSource::Kitchen,
        NoiseSource::LivingRoom,
        NoiseSource::CarHorn,
        NoiseSource::DogBark,
        NoiseSource::StreetMusic,
    ];
    /// Colored and indoor sources mixed into noise-aware pretraining.
    pub const PRETRAINING: [NoiseSource; 6] = [
        NoiseSource::White,
        NoiseSource::Pink,
        NoiseSource::Babble,
        NoiseSource::Office,
        NoiseSource::Kitchen,
        NoiseSource::LivingRoom,
    ];
    /// Deployment noise unseen during pretraining.
    pub const ON_SITE: [NoiseSource; 3] =
        [NoiseSource::CarHorn, NoiseSource::DogBark, NoiseSource::StreetMusic];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseSource::White => "white",
            NoiseSource::Pink => "pink",
            NoiseSource::Babble => "babble",
            NoiseSource::Office => "office",
            NoiseSource::Kitchen => "kitchen",
            NoiseSource::LivingRoom => "living_room",
            NoiseSource::CarHorn => "car_horn",
            NoiseSource::DogBark => "dog_bark",
            NoiseSource::StreetMusic => "street_music",
        }
    }

    /// White and pink noise are synthesized; the rest come from recordings.
    pub fn is_generated(self) -> bool {
        matches!(self, NoiseSource::White | NoiseSource::Pink)
    }
}

impl fmt::Display for NoiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseSource {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownNoiseSource(s.to_string()))
    }
}

/// Test and adaptation SNRs: -3 to 24 dB in 3 dB steps.
pub const SNR_GRID: [i32; 10] = [-3, 0, 3, 6, 9, 12, 15, 18, 21, 24];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoiseCondition {
    pub source: NoiseSource,
    pub snr_db: i32,
}

impl NoiseCondition {
    pub fn new(source: NoiseSource, snr_db: i32) -> Result<Self, DatasetError> {
        if !SNR_GRID.contains(&snr_db) {
            return Err(DatasetError::OffGridSnr(snr_db));
        }
        Ok(Self { source, snr_db })
    }

    /// Every grid SNR for each of `sources`, source-major.
    pub fn grid(sources: &[NoiseSource]) -> Vec<NoiseCondition> {
        sources
            .iter()
            .flat_map(|&source| SNR_GRID.iter().map(move |&snr_db| NoiseCondition { source, snr_db }))
            .collect()
    }
}

impl fmt::Display for NoiseCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.snr_db)
    }
}

/// SplitMix64 finalizer used to derive independent per-item seeds.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream.wrapping_add(1)))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_map_to_themselves() {
        assert_eq!(assign_class("yes").unwrap(), ClassLabel::Yes);
        assert_eq!(assign_class("go").unwrap(), ClassLabel::Go);
        assert_eq!(assign_class("off").unwrap(), ClassLabel::Off);
        assert_eq!(assign_class(SILENCE_TOKEN).unwrap(), ClassLabel::Silence);
    }

    #[test]
    fn other_vocabulary_is_unknown() {
        assert_eq!(assign_class("bed").unwrap(), ClassLabel::Unknown);
        assert_eq!(assign_class("zero").unwrap(), ClassLabel::Unknown);
        let unknown = GSC_WORDS
            .iter()
            .filter(|w| assign_class(w).unwrap() == ClassLabel::Unknown)
            .count();
        assert_eq!(unknown, 25);
        assert!(matches!(assign_class("hello"), Err(DatasetError::UnknownWord(_))));
        assert!(matches!(assign_class("Yes"), Err(DatasetError::UnknownWord(_))));
    }

    #[test]
    fn label_index_bijection() {
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(ClassLabel::from_index(i), Some(*c));
        }
        assert_eq!(ClassLabel::from_index(12), None);
        let mut names: Vec<_> = ClassLabel::ALL.iter().map(|c| c.name()).collect();
        names.dedup();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn snr_grid_has_ten_levels() {
        assert_eq!(SNR_GRID.len(), 10);
        assert!(SNR_GRID.windows(2).all(|w| w[1] - w[0] == 3));
        assert!(NoiseCondition::new(NoiseSource::CarHorn, 4).is_err());
        assert_eq!(NoiseCondition::grid(&NoiseSource::PRETRAINING).len(), 60);
    }

    #[test]
    fn noise_source_names_roundtrip() {
        for s in NoiseSource::ALL {
            assert_eq!(s.as_str().parse::<NoiseSource>().unwrap(), s);
        }
    }
}
