//! Synthetic stand-in for a speech-commands corpus and on-site noise
//! recordings. Each word gets a fixed spectro-temporal template (pitch
//! contour, two formants, amplitude modulation, a fricative burst) and every
//! "speaker" perturbs pitch, duration, onset and loudness. Output uses the
//! real corpus layout so the rest of the pipeline cannot tell the difference.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, pink_noise, white_noise, DatasetError, NoiseSource, BACKGROUND_DIR, GSC_WORDS};
use crate::frontend::{encode_wav, AudioClip, CLIP_LEN, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Clips per keyword folder.
    pub keyword_clips: usize,
    /// Clips per non-keyword folder.
    pub other_clips: usize,
    /// Non-keyword vocabulary folders to write (taken in vocabulary order).
    pub other_words: usize,
    /// Length of each background and noise recording.
    pub recording_secs: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            keyword_clips: 40,
            other_clips: 12,
            other_words: 10,
            recording_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub utterances: usize,
    pub background_files: usize,
}

#[derive(Debug, Clone, Copy)]
struct WordTemplate {
    f0: (f64, f64),
    f1: (f64, f64),
    f2: (f64, f64),
    am_hz: f64,
    am_depth: f64,
    /// Fricative position as a fraction of the word, negative for none.
    burst_at: f64,
    burst_len: f64,
    burst_hp: f64,
    duration: f64,
}

fn word_hash(word: &str) -> u64 {
    word.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn template(word: &str) -> WordTemplate {
    let mut rng = ChaCha8Rng::seed_from_u64(word_hash(word));
    let mut t = WordTemplate {
        f0: (rng.gen_range(90.0..220.0), rng.gen_range(90.0..220.0)),
        f1: (rng.gen_range(300.0..900.0), rng.gen_range(300.0..900.0)),
        f2: (rng.gen_range(900.0..2800.0), rng.gen_range(900.0..2800.0)),
        am_hz: rng.gen_range(2.0..30.0),
        am_depth: rng.gen_range(0.0..0.8),
        burst_at: if rng.gen_bool(0.6) { rng.gen_range(0.0..1.0) } else { -1.0 },
        burst_len: rng.gen_range(0.05..0.15),
        burst_hp: rng.gen_range(0.3..0.95),
        duration: rng.gen_range(0.35..0.7),
    };
    // Hand-set contrasts for a few keywords so the easy cases stay easy.
    match word {
        "yes" => {
            t.f0 = (110.0, 200.0);
            t.burst_at = 0.9;
            t.burst_hp = 0.95;
        }
        "no" => {
            t.f0 = (200.0, 100.0);
            t.burst_at = -1.0;
        }
        "up" => {
            t.am_hz = 25.0;
            t.am_depth = 0.8;
            t.burst_at = 0.95;
            t.burst_len = 0.03;
        }
        _ => {}
    }
    t
}

fn lerp(a: (f64, f64), x: f64) -> f64 {
    a.0 + (a.1 - a.0) * x
}

/// Renders one utterance of `word` for the speaker drawn from `seed`.
/// Returns the clip, which may be shorter than one second.
pub fn render_word(word: &str, seed: u64) -> AudioClip {
    let t = template(word);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitch = rng.gen_range(0.8..1.25);
    let formant = rng.gen_range(0.9..1.1);
    let dur = t.duration * rng.gen_range(0.8..1.2);
    let amp = rng.gen_range(0.1..0.5);
    let total_secs = if rng.gen_bool(0.2) { rng.gen_range(dur + 0.05..1.0) } else { 1.0 };
    let total = ((total_secs * SAMPLE_RATE_HZ as f64) as usize).min(CLIP_LEN);
    let word_len = (dur * SAMPLE_RATE_HZ as f64) as usize;
    let onset = rng.gen_range(0..=total.saturating_sub(word_len).max(1) - 1);

    let sr = SAMPLE_RATE_HZ as f64;
    let floor = Normal::new(0.0, 0.002).unwrap();
    let mut out: Vec<f64> = (0..total).map(|_| floor.sample(&mut rng)).collect();
    let mut phase = 0.0;
    for n in 0..word_len.min(total - onset) {
        let x = n as f64 / word_len as f64;
        let f0 = lerp(t.f0, x) * pitch;
        phase += 2.0 * PI * f0 / sr;
        let (f1, f2) = (lerp(t.f1, x) * formant, lerp(t.f2, x) * formant);
        let mut v = 0.0;
        let mut h = 1;
        while h as f64 * f0 < 4000.0 && h <= 16 {
            let f = h as f64 * f0;
            let g = (-((f - f1) / 150.0).powi(2)).exp() + 0.6 * (-((f - f2) / 250.0).powi(2)).exp();
            v += g * (h as f64 * phase).sin();
            h += 1;
        }
        let envelope = (PI * x).sin().powf(0.5);
        let am = 1.0 - t.am_depth * 0.5 * (1.0 + (2.0 * PI * t.am_hz * n as f64 / sr).cos());
        out[onset + n] += amp * envelope * am * v;
    }
    if t.burst_at >= 0.0 {
        let len = (t.burst_len * sr) as usize;
        let start = onset + ((t.burst_at * word_len as f64) as usize).saturating_sub(len / 2);
        let mut prev = 0.0;
        for n in start..(start + len).min(total) {
            let w: f64 = rng.gen_range(-1.0..1.0);
            let hp = w - t.burst_hp * prev;
            prev = w;
            let x = (n - start) as f64 / len as f64;
            out[n] += 0.5 * amp * (PI * x).sin() * hp;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    AudioClip::new(out.into_iter().map(|v| (v * amp / peak) as f32).collect(), SAMPLE_RATE_HZ)
}

fn write_clip(path: &Path, clip: &AudioClip) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_wav(clip)?)?;
    Ok(())
}

fn samples_for(secs: f64) -> usize {
    (secs * SAMPLE_RATE_HZ as f64) as usize
}

fn scaled(mut clip: AudioClip, rms: f64) -> AudioClip {
    let gain = rms / clip.power().sqrt().max(1e-12);
    clip.samples.iter_mut().for_each(|s| *s = (*s as f64 * gain) as f32);
    clip
}

/// Writes a corpus in speech-commands layout under `root`, including the
/// background folder and both list files. Every tenth clip of a word with
/// index 8 goes to validation and index 9 to test.
pub fn write_corpus(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<SynthSummary, DatasetError> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let keywords = ["yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"];
    let others: Vec<&str> = GSC_WORDS
        .iter()
        .copied()
        .filter(|w| !keywords.contains(w))
        .take(cfg.other_words)
        .collect();

    let (mut val, mut test) = (String::new(), String::new());
    let mut utterances = 0;
    for (w, word) in keywords.iter().chain(others.iter()).enumerate() {
        let count = if keywords.contains(word) { cfg.keyword_clips } else { cfg.other_clips };
        for k in 0..count {
            let seed = derive_seed(cfg.seed, w as u64, k as u64);
            let rel = format!("{word}/{:08x}_nohash_0.wav", seed as u32);
            write_clip(&root.join(&rel), &render_word(word, seed))?;
            match k % 10 {
                8 => val.push_str(&format!("{rel}\n")),
                9 => test.push_str(&format!("{rel}\n")),
                _ => {}
            }
            utterances += 1;
        }
    }
    fs::write(root.join("validation_list.txt"), val)?;
    fs::write(root.join("testing_list.txt"), test)?;

    let len = samples_for(cfg.recording_secs);
    let bg = root.join(BACKGROUND_DIR);
    let backgrounds = [
        ("white_noise.wav", scaled(white_noise(len, derive_seed(cfg.seed, 100, 0)), 0.05)),
        ("pink_noise.wav", scaled(pink_noise(len, derive_seed(cfg.seed, 100, 1)), 0.05)),
        ("running_tap.wav", scaled(hum_and_hiss(len, derive_seed(cfg.seed, 100, 2)), 0.03)),
    ];
    for (name, clip) in &backgrounds {
        write_clip(&bg.join(name), clip)?;
    }
    fs::write(bg.join("README.md"), "Synthetic background recordings.\n")?;
    Ok(SynthSummary {
        root: root.to_path_buf(),
        utterances,
        background_files: backgrounds.len(),
    })
}

/// Writes `<dir>/<source>.wav` for every recorded (non-generated) noise source.
pub fn write_noise_recordings(dir: impl AsRef<Path>, secs: f64, seed: u64) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = dir.as_ref();
    let len = samples_for(secs);
    let mut written = Vec::new();
    for (i, source) in NoiseSource::ALL.into_iter().filter(|s| !s.is_generated()).enumerate() {
        let clip = scaled(noise_recording(source, len, derive_seed(seed, 200, i as u64)), 0.1);
        let path = dir.join(format!("{source}.wav"));
        write_clip(&path, &clip)?;
        written.push(path);
    }
    Ok(written)
}

fn hum_and_hiss(len: usize, seed: u64) -> AudioClip {
    let hiss = white_noise(len, seed);
    let samples = hiss
        .samples
        .iter()
        .enumerate()
        .map(|(n, &w)| {
            let t = n as f64 / SAMPLE_RATE_HZ as f64;
            (0.3 * (2.0 * PI * 120.0 * t).sin() + w as f64) as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE_HZ)
}

fn add_tone_burst(out: &mut [f64], start: usize, len: usize, f0: (f64, f64), harmonics: usize, amp: f64) {
    let sr = SAMPLE_RATE_HZ as f64;
    let mut phase = 0.0;
    for n in 0..len.min(out.len().saturating_sub(start)) {
        let x = n as f64 / len as f64;
        phase += 2.0 * PI * lerp(f0, x) / sr;
        let env = (PI * x).sin().min(0.3) / 0.3;
        let v: f64 = (1..=harmonics).map(|h| (h as f64 * phase).sin() / h as f64).sum();
        out[start + n] += amp * env * v;
    }
}

fn noise_recording(source: NoiseSource, len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE_HZ as usize;
    let mut out = vec![0.0f64; len];
    let white = white_noise(len, derive_seed(seed, 1, 0));
    let pink = pink_noise(len, derive_seed(seed, 2, 0));
    match source {
        NoiseSource::Babble => {
            let words: Vec<&str> = GSC_WORDS.to_vec();
            for talker in 0..6u64 {
                let mut pos = rng.gen_range(0..sr / 2);
                let mut k = 0;
                while pos < len {
                    let w = words[rng.gen_range(0..words.len())];
                    let clip = render_word(w, derive_seed(seed, 10 + talker, k));
                    for (o, s) in out[pos..].iter_mut().zip(&clip.samples) {
                        *o += *s as f64;
                    }
                    pos += rng.gen_range(sr / 2..sr);
                    k += 1;
                }
            }
        }
        NoiseSource::Office => {
            for (o, p) in out.iter_mut().zip(&pink.samples) {
                *o = 0.3 * *p as f64;
            }
            let mut pos = 0;
            while pos < len {
                let click = sr / 200;
                for n in 0..click.min(len - pos) {
                    out[pos + n] += (1.0 - n as f64 / click as f64) * white.samples[pos + n] as f64 * 3.0;
                }
                pos += rng.gen_range(sr / 20..sr / 4);
            }
        }
        NoiseSource::Kitchen => {
            let mut pos = 0;
            while pos < len {
                let f = rng.gen_range(1500.0..5000.0);
                let decay = rng.gen_range(20.0..60.0);
                for n in 0..(sr / 4).min(len - pos) {
                    let t = n as f64 / sr as f64;
                    out[pos + n] += (-decay * t).exp() * (2.0 * PI * f * t).sin();
                }
                pos += rng.gen_range(sr / 5..sr);
            }
            for (o, p) in out.iter_mut().zip(&white.samples) {
                *o += 0.2 * *p as f64;
            }
        }
        NoiseSource::LivingRoom => {
            let mut brown = 0.0;
            for (n, o) in out.iter_mut().enumerate() {
                brown = 0.995 * brown + white.samples[n] as f64 * 0.1;
                let t = n as f64 / sr as f64;
                *o = brown + 0.05 * (2.0 * PI * 300.0 * t).sin() * (2.0 * PI * 0.5 * t).sin();
            }
        }
        NoiseSource::CarHorn => {
            let mut pos = rng.gen_range(0..sr / 2);
            while pos < len {
                let blen = rng.gen_range(sr * 3 / 10..sr);
                let f = rng.gen_range(380.0..520.0);
                add_tone_burst(&mut out, pos, blen, (f, f), 8, 1.0);
                add_tone_burst(&mut out, pos, blen, (f * 1.26, f * 1.26), 8, 0.7);
                pos += blen + rng.gen_range(sr / 4..sr * 2);
            }
            for (o, p) in out.iter_mut().zip(&pink.samples) {
                *o += 0.05 * *p as f64;
            }
        }
        NoiseSource::DogBark => {
            let mut pos = rng.gen_range(0..sr / 2);
            while pos < len {
                for _ in 0..rng.gen_range(1..4) {
                    let blen = rng.gen_range(sr / 8..sr / 4);
                    let f = rng.gen_range(400.0..800.0);
                    add_tone_burst(&mut out, pos, blen, (f, f * 0.6), 6, 1.0);
                    for n in 0..blen.min(len.saturating_sub(pos)) {
                        out[pos + n] += 0.4 * white.samples[pos + n] as f64;
                    }
                    pos += blen + sr / 10;
                }
                pos += rng.gen_range(sr / 2..sr * 2);
            }
        }
        NoiseSource::StreetMusic => {
            let scale = [261.6, 293.7, 329.6, 392.0, 440.0, 523.3];
            let note = sr / 4;
            let mut pos = 0;
            while pos < len {
                let f = scale[rng.gen_range(0..scale.len())];
                add_tone_burst(&mut out, pos, note, (f, f), 5, 1.0);
                if (pos / note) % 2 == 0 {
                    for n in 0..(sr / 40).min(len - pos) {
                        out[pos + n] += 2.0 * white.samples[pos + n] as f64 * (1.0 - n as f64 / (sr / 40) as f64);
                    }
                }
                pos += note;
            }
        }
        NoiseSource::White | NoiseSource::Pink => unreachable!("generated sources have no recording"),
    }
    // A faint pink floor keeps every segment audible, as in a real room.
    for (o, p) in out.iter_mut().zip(&pink.samples) {
        *o += 0.01 * *p as f64;
    }
    AudioClip::new(out.into_iter().map(|v| v as f32).collect(), SAMPLE_RATE_HZ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{scan_default, ClassLabel, NoiseBank, Split};

    #[test]
    fn rendering_is_deterministic_and_bounded() {
        let a = render_word("yes", 5);
        assert_eq!(a, render_word("yes", 5));
        assert_ne!(a, render_word("yes", 6));
        assert!(a.len() <= CLIP_LEN);
        assert!(a.samples.iter().all(|s| s.abs() < 1.0));
        assert!(a.power() > 1e-5);
    }

    #[test]
    fn written_corpus_scans_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            keyword_clips: 10,
            other_clips: 10,
            other_words: 2,
            recording_secs: 3.0,
            ..SynthConfig::default()
        };
        let summary = write_corpus(dir.path(), &cfg).unwrap();
        assert_eq!(summary.utterances, 120);
        let index = scan_default(dir.path()).unwrap();
        assert_eq!(index.entries.len(), 120);
        assert_eq!(index.silence_sources.len(), 3);
        assert_eq!(index.split(Split::Test).count(), 12);
        assert_eq!(index.split(Split::Val).count(), 12);
        let unknown = index.entries.iter().filter(|e| e.label == ClassLabel::Unknown).count();
        assert_eq!(unknown, 20);
    }

    #[test]
    fn noise_recordings_load_into_a_bank() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_noise_recordings(dir.path(), 2.0, 1).unwrap();
        assert_eq!(paths.len(), 7);
        let bank = NoiseBank::load(dir.path(), &NoiseSource::ALL).unwrap();
        let m = bank.material(NoiseSource::DogBark, Split::Train, 0).unwrap();
        assert!(m.power() > 0.0);
    }
}
