use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assign_class, derive_seed, silence_offsets, ClassLabel, CorpusIndex, DatasetError,
    NoiseBank, NoiseCondition, NoiseSource, Split, SILENCE_TOKEN,
};
use crate::frontend::{
    log_mel_batch, mel_filterbank, pad_or_trim, read_wav_file, AudioClip, FrontendConfig,
    MelFilterbank, Spectrogram, CLIP_LEN,
};

/// Optional per-class caps for each split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCaps {
    pub train: Option<usize>,
    pub val: Option<usize>,
    pub test: Option<usize>,
}

impl SplitCaps {
    pub fn get(&self, split: Split) -> Option<usize> {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub max_per_class: SplitCaps,
    /// Keyword classes to keep; `None` keeps all ten. Clips of dropped
    /// keywords are left out entirely rather than relabelled Unknown.
    pub keywords: Option<Vec<ClassLabel>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClipSource {
    /// Utterance file, relative to the corpus root.
    File(String),
    /// One-second window of a background recording.
    Silence { file: String, offset: usize },
}

impl ClipSource {
    pub fn manifest_path(&self) -> String {
        match self {
            ClipSource::File(p) => p.clone(),
            ClipSource::Silence { file, offset } => format!("{file}#{offset}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: ClipSource,
    pub word: String,
    pub label: ClassLabel,
    pub split: Split,
}

/// Class-balanced example lists for every split.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub root: PathBuf,
    pub seed: u64,
    pub examples: Vec<Example>,
}

impl Benchmark {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.examples.len())
            .filter(|&i| self.examples[i].split == split)
            .collect()
    }

    /// Classes with at least one example in `split`, in label order.
    pub fn classes(&self, split: Split) -> Vec<ClassLabel> {
        let mut seen: Vec<ClassLabel> = self
            .examples
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.label)
            .collect();
        seen.sort();
        seen.dedup();
        seen
    }

    pub fn class_counts(&self, split: Split) -> BTreeMap<ClassLabel, usize> {
        let mut out = BTreeMap::new();
        for e in self.examples.iter().filter(|e| e.split == split) {
            *out.entry(e.label).or_insert(0) += 1;
        }
        out
    }

    /// Clean log-Mel features of a split, in benchmark order.
    pub fn featurize(
        &self,
        split: Split,
        loader: &mut ClipLoader,
        frontend: &FrontendConfig,
    ) -> Result<LabeledSet, DatasetError> {
        let fb = mel_filterbank(frontend)?;
        let mut set = LabeledSet::default();
        for i in self.indices(split) {
            let clip = loader.load(&self.examples[i])?;
            set.push(featurize_one(&clip, frontend, &fb)?, self.examples[i].label);
        }
        Ok(set)
    }

    /// Mixes and featurizes planned noisy items one clip at a time.
    pub fn featurize_noisy(
        &self,
        items: &[NoisyItem],
        loader: &mut ClipLoader,
        bank: &NoiseBank,
        frontend: &FrontendConfig,
    ) -> Result<LabeledSet, DatasetError> {
        let fb = mel_filterbank(frontend)?;
        let mut set = LabeledSet::default();
        for item in items {
            let ex = &self.examples[item.example];
            let clip = bank.contaminate(&loader.load(ex)?, item.condition, ex.split, item.seed)?;
            set.push(featurize_one(&clip, frontend, &fb)?, ex.label);
        }
        Ok(set)
    }
}

fn featurize_one(
    clip: &AudioClip,
    frontend: &FrontendConfig,
    fb: &MelFilterbank,
) -> Result<Spectrogram, DatasetError> {
    Ok(crate::frontend::log_mel_with_filterbank(clip, frontend, fb)?)
}

/// Reads benchmark clips, caching background recordings.
#[derive(Debug, Default)]
pub struct ClipLoader {
    root: PathBuf,
    backgrounds: HashMap<String, Arc<AudioClip>>,
}

impl ClipLoader {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            root: root.as_ref().to_path_buf(),
            backgrounds: HashMap::new(),
        }
    }

    fn background(&mut self, file: &str) -> Result<Arc<AudioClip>, DatasetError> {
        if let Some(c) = self.backgrounds.get(file) {
            return Ok(c.clone());
        }
        let clip = Arc::new(read_wav_file(self.root.join(file))?);
        self.backgrounds.insert(file.to_string(), clip.clone());
        Ok(clip)
    }

    /// One-second clip for `example`; utterances are padded or trimmed.
    pub fn load(&mut self, example: &Example) -> Result<AudioClip, DatasetError> {
        match &example.source {
            ClipSource::File(p) => Ok(pad_or_trim(read_wav_file(self.root.join(p))?, CLIP_LEN)),
            ClipSource::Silence { file, offset } => {
                let src = self.background(file)?;
                let window = src.samples.get(*offset..offset + CLIP_LEN).ok_or(
                    DatasetError::SourceTooShort {
                        len: src.len(),
                        need: offset + CLIP_LEN,
                    },
                )?;
                Ok(AudioClip::new(window.to_vec(), src.sample_rate_hz))
            }
        }
    }
}

/// Featurized inputs with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<Spectrogram>,
    pub labels: Vec<ClassLabel>,
}

impl LabeledSet {
    pub fn push(&mut self, input: Spectrogram, label: ClassLabel) {
        self.inputs.push(input);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn from_clips(
        clips: &[(AudioClip, ClassLabel)],
        frontend: &FrontendConfig,
    ) -> Result<Self, DatasetError> {
        let audio: Vec<AudioClip> = clips.iter().map(|(c, _)| c.clone()).collect();
        Ok(Self {
            inputs: log_mel_batch(&audio, frontend)?,
            labels: clips.iter().map(|(_, l)| *l).collect(),
        })
    }

    /// Concatenation, `self` first.
    pub fn extend(&mut self, other: LabeledSet) {
        self.inputs.extend(other.inputs);
        self.labels.extend(other.labels);
    }
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

fn split_stream(split: Split) -> u64 {
    split as u64
}

/// Selects a balanced benchmark from the corpus. Per split: every keyword
/// class (capped), Unknown downsampled to the mean keyword count, and as
/// many Silence windows cut from the split's region of the background
/// recordings.
pub fn build_benchmark(index: &CorpusIndex, cfg: &BenchmarkConfig) -> Result<Benchmark, DatasetError> {
    let mut loader = ClipLoader::new(&index.root);
    let mut background_lens = Vec::new();
    for file in &index.silence_sources {
        background_lens.push((file.clone(), loader.background(file)?.len()));
    }
    let usable: Vec<&(String, usize)> = background_lens.iter().filter(|(_, l)| *l >= CLIP_LEN).collect();
    if usable.is_empty() {
        return Err(DatasetError::SourceTooShort {
            len: background_lens.iter().map(|(_, l)| *l).max().unwrap_or(0),
            need: CLIP_LEN,
        });
    }

    let mut examples = Vec::new();
    for split in Split::ALL {
        let stream = split_stream(split);
        let cap = cfg.max_per_class.get(split);
        let mut by_class: BTreeMap<ClassLabel, Vec<&super::CorpusEntry>> = BTreeMap::new();
        for e in index.split(split) {
            by_class.entry(e.label).or_default().push(e);
        }

        let mut keyword_total = 0;
        let mut keyword_classes = 0;
        let wanted = |l: &ClassLabel| cfg.keywords.as_ref().is_none_or(|k| k.contains(l));
        for (label, entries) in by_class.iter().filter(|(l, _)| l.is_keyword() && wanted(l)) {
            let mut chosen = entries.clone();
            if let Some(cap) = cap.filter(|&c| c < chosen.len()) {
                chosen = shuffled(&chosen, derive_seed(cfg.seed, 10 + stream, label.index() as u64));
                chosen.truncate(cap);
                chosen.sort_by(|a, b| a.path.cmp(&b.path));
            }
            keyword_total += chosen.len();
            keyword_classes += 1;
            examples.extend(chosen.into_iter().map(|e| Example {
                source: ClipSource::File(e.path.clone()),
                word: e.word.clone(),
                label: *label,
                split,
            }));
        }

        let pool = by_class.get(&ClassLabel::Unknown).cloned().unwrap_or_default();
        let mut per_class = if keyword_classes > 0 {
            (keyword_total as f64 / keyword_classes as f64).round() as usize
        } else {
            pool.len()
        };
        if let Some(c) = cap {
            per_class = per_class.min(c);
        }

        let mut unknown = shuffled(&pool, derive_seed(cfg.seed, 20 + stream, 0));
        unknown.truncate(per_class);
        unknown.sort_by(|a, b| a.path.cmp(&b.path));
        examples.extend(unknown.into_iter().map(|e| Example {
            source: ClipSource::File(e.path.clone()),
            word: e.word.clone(),
            label: ClassLabel::Unknown,
            split,
        }));

        let (lo, hi) = split.region();
        for j in 0..per_class {
            let (file, len) = usable[j % usable.len()];
            let (mut start, mut end) = ((lo * *len as f64) as usize, (hi * *len as f64) as usize);
            if end - start < CLIP_LEN {
                (start, end) = (0, *len);
            }
            let offset = start + silence_offsets(end - start, derive_seed(cfg.seed, 30 + stream, j as u64), 1)?[0];
            examples.push(Example {
                source: ClipSource::Silence {
                    file: file.clone(),
                    offset,
                },
                word: SILENCE_TOKEN.to_string(),
                label: ClassLabel::Silence,
                split,
            });
        }
    }
    if examples.is_empty() {
        return Err(DatasetError::EmptyCorpus(index.root.display().to_string()));
    }
    Ok(Benchmark {
        root: index.root.clone(),
        seed: cfg.seed,
        examples,
    })
}

/// One planned noisy example: which clip, which condition, which mixing seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoisyItem {
    pub example: usize,
    pub condition: NoiseCondition,
    pub seed: u64,
}

/// Picks `round(fraction × |split|)` examples, balanced over classes
/// (round-robin over seeded per-class orders), and spreads them evenly
/// over `pool` conditions.
pub fn plan_noisy_set(
    bench: &Benchmark,
    split: Split,
    pool: &[NoiseCondition],
    fraction: f64,
    seed: u64,
) -> Result<Vec<NoisyItem>, DatasetError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::InvalidArgument(format!("fraction {fraction} not in (0, 1]")));
    }
    if pool.is_empty() {
        return Err(DatasetError::InvalidArgument("empty noise condition pool".into()));
    }
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for i in bench.indices(split) {
        by_class.entry(bench.examples[i].label).or_default().push(i);
    }
    let total: usize = by_class.values().map(Vec::len).sum();
    let target = (fraction * total as f64).round() as usize;
    let queues: Vec<Vec<usize>> = by_class
        .iter()
        .map(|(label, idx)| shuffled(idx, derive_seed(seed, 40, label.index() as u64)))
        .collect();

    let mut chosen = Vec::with_capacity(target);
    let mut round = 0;
    while chosen.len() < target {
        for q in &queues {
            if chosen.len() == target {
                break;
            }
            if let Some(&i) = q.get(round) {
                chosen.push(i);
            }
        }
        round += 1;
    }
    let chosen = shuffled(&chosen, derive_seed(seed, 41, 0));
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(k, example)| NoisyItem {
            example,
            condition: pool[k % pool.len()],
            seed: derive_seed(seed, 42, k as u64),
        })
        .collect())
}

/// Noisy copy of a seeded, class-balanced fraction of `split` at `cond`.
pub fn build_noisy_set(
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    split: Split,
    cond: NoiseCondition,
    fraction: f64,
    seed: u64,
) -> Result<Vec<(AudioClip, ClassLabel)>, DatasetError> {
    plan_noisy_set(bench, split, &[cond], fraction, seed)?
        .into_iter()
        .map(|item| {
            let ex = &bench.examples[item.example];
            let clip = bank.contaminate(&loader.load(ex)?, item.condition, split, item.seed)?;
            Ok((clip, ex.label))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotItem {
    pub input: Spectrogram,
    pub label: ClassLabel,
    /// Index into [`Benchmark::examples`].
    pub example: usize,
}

/// `shots_per_class` noisy training examples for each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSet {
    pub shots_per_class: usize,
    pub classes: Vec<ClassLabel>,
    pub condition: Option<NoiseCondition>,
    pub items: Vec<ShotItem>,
}

impl ShotSet {
    pub fn empty() -> Self {
        Self {
            shots_per_class: 0,
            classes: Vec::new(),
            condition: None,
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Draws `k` training clips per class present in the training split and
/// contaminates each at `cond`. Silence shots are noise-only windows mixed
/// the same way.
pub fn sample_shots(
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    frontend: &FrontendConfig,
    cond: NoiseCondition,
    k: usize,
    seed: u64,
) -> Result<ShotSet, DatasetError> {
    if !(1..=5).contains(&k) {
        return Err(DatasetError::InvalidArgument(format!("{k} shots per class, expected 1..=5")));
    }
    let fb = mel_filterbank(frontend)?;
    let classes = bench.classes(Split::Train);
    let mut items = Vec::with_capacity(k * classes.len());
    for &class in &classes {
        let pool: Vec<usize> = bench
            .indices(Split::Train)
            .into_iter()
            .filter(|&i| bench.examples[i].label == class)
            .collect();
        if pool.len() < k {
            return Err(DatasetError::InsufficientSamples {
                class: class.name(),
                available: pool.len(),
                requested: k,
            });
        }
        let picks = shuffled(&pool, derive_seed(seed, 50, class.index() as u64));
        for &i in &picks[..k] {
            let mix_seed = derive_seed(seed, 51, items.len() as u64);
            let clip = bank.contaminate(&loader.load(&bench.examples[i])?, cond, Split::Train, mix_seed)?;
            items.push(ShotItem {
                input: featurize_one(&clip, frontend, &fb)?,
                label: class,
                example: i,
            });
        }
    }
    Ok(ShotSet {
        shots_per_class: k,
        classes,
        condition: Some(cond),
        items,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    word: String,
    class_index: usize,
    split: Split,
    noise_source: Option<NoiseSource>,
    snr_db: Option<i32>,
    seed: u64,
}

/// Benchmark manifest: one CSV row per example; noise columns empty.
pub fn write_manifest<W: Write>(bench: &Benchmark, out: W) -> Result<(), DatasetError> {
    write_rows(
        out,
        bench.examples.iter().map(|e| ManifestRow {
            path: e.source.manifest_path(),
            word: e.word.clone(),
            class_index: e.label.index(),
            split: e.split,
            noise_source: None,
            snr_db: None,
            seed: bench.seed,
        }),
    )
}

/// Manifest of a noisy set with its per-item condition and mixing seed.
pub fn write_noisy_manifest<W: Write>(bench: &Benchmark, items: &[NoisyItem], out: W) -> Result<(), DatasetError> {
    write_rows(
        out,
        items.iter().map(|it| {
            let e = &bench.examples[it.example];
            ManifestRow {
                path: e.source.manifest_path(),
                word: e.word.clone(),
                class_index: e.label.index(),
                split: e.split,
                noise_source: Some(it.condition.source),
                snr_db: Some(it.condition.snr_db),
                seed: it.seed,
            }
        }),
    )
}

fn write_rows<W: Write>(out: W, rows: impl Iterator<Item = ManifestRow>) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a benchmark from a manifest written by [`write_manifest`].
pub fn read_manifest<R: Read>(input: R, root: impl AsRef<Path>) -> Result<Benchmark, DatasetError> {
    let mut examples = Vec::new();
    let mut seed = None;
    for row in csv::Reader::from_reader(input).deserialize::<ManifestRow>() {
        let row = row?;
        let label = assign_class(&row.word)?;
        if label.index() != row.class_index {
            return Err(DatasetError::MalformedManifest(format!(
                "{}: class index {} does not match word '{}'",
                row.path, row.class_index, row.word
            )));
        }
        let source = if label == ClassLabel::Silence {
            let (file, offset) = row
                .path
                .rsplit_once('#')
                .and_then(|(f, o)| o.parse().ok().map(|o| (f.to_string(), o)))
                .ok_or_else(|| DatasetError::MalformedManifest(format!("bad silence path {}", row.path)))?;
            ClipSource::Silence { file, offset }
        } else {
            ClipSource::File(row.path)
        };
        seed.get_or_insert(row.seed);
        examples.push(Example {
            source,
            word: row.word,
            label,
            split: row.split,
        });
    }
    if examples.is_empty() {
        return Err(DatasetError::MalformedManifest("no rows".into()));
    }
    Ok(Benchmark {
        root: root.as_ref().to_path_buf(),
        seed: seed.unwrap_or(0),
        examples,
    })
}
