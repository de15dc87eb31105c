use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{assign_class, ClassLabel, DatasetError, Split};

pub const BACKGROUND_DIR: &str = "_background_noise_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    /// Path relative to the corpus root, `/`-separated as in the list files.
    pub path: String,
    pub word: String,
    pub label: ClassLabel,
    pub split: Split,
}

/// Every utterance under a speech-commands root with its split, plus the
/// background recordings used for the Silence class.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
    /// Relative paths of background-noise WAV files.
    pub silence_sources: Vec<String>,
}

impl CorpusIndex {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn read_list(path: &Path) -> Result<HashSet<String>, DatasetError> {
    let text = fs::read_to_string(path)
        .map_err(|_| DatasetError::MissingListFile(path.display().to_string()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn sorted_dir(path: &Path) -> Result<Vec<fs::DirEntry>, DatasetError> {
    let mut items = fs::read_dir(path)?.collect::<Result<Vec<_>, _>>()?;
    items.sort_by_key(|e| e.file_name());
    Ok(items)
}

fn is_wav(entry: &fs::DirEntry) -> bool {
    entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Walks a speech-commands layout: one folder per word plus
/// `_background_noise_`. Files named in `test_list` go to test, those in
/// `val_list` to validation, everything else to train.
pub fn scan_corpus(
    root: impl AsRef<Path>,
    val_list: impl AsRef<Path>,
    test_list: impl AsRef<Path>,
) -> Result<CorpusIndex, DatasetError> {
    let root = root.as_ref();
    let val = read_list(val_list.as_ref())?;
    let test = read_list(test_list.as_ref())?;

    let mut words: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut silence_sources = Vec::new();
    for dir in sorted_dir(root)? {
        if !dir.file_type()?.is_dir() {
            continue;
        }
        let name = dir.file_name().to_string_lossy().into_owned();
        let files: Vec<String> = sorted_dir(&dir.path())?
            .into_iter()
            .filter(is_wav)
            .map(|f| format!("{name}/{}", f.file_name().to_string_lossy()))
            .collect();
        if name == BACKGROUND_DIR {
            silence_sources = files;
        } else if !name.starts_with('.') {
            words.insert(name, files);
        }
    }

    let mut entries = Vec::new();
    for (word, files) in words {
        let label = assign_class(&word)?;
        for path in files {
            let split = if test.contains(&path) {
                Split::Test
            } else if val.contains(&path) {
                Split::Val
            } else {
                Split::Train
            };
            entries.push(CorpusEntry {
                path,
                word: word.clone(),
                label,
                split,
            });
        }
    }
    if entries.is_empty() {
        return Err(DatasetError::EmptyCorpus(root.display().to_string()));
    }
    if silence_sources.is_empty() {
        return Err(DatasetError::MissingBackgroundNoise(root.display().to_string()));
    }
    Ok(CorpusIndex {
        root: root.to_path_buf(),
        entries,
        silence_sources,
    })
}

/// Scans `root` using the list files that ship with the corpus.
pub fn scan_default(root: impl AsRef<Path>) -> Result<CorpusIndex, DatasetError> {
    let root = root.as_ref();
    scan_corpus(root, root.join("validation_list.txt"), root.join("testing_list.txt"))
}
