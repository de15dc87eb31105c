use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{derive_seed, mix_at_snr, DatasetError, NoiseCondition, NoiseSource, Split};
use crate::frontend::{read_wav_file, AudioClip, CLIP_LEN, SAMPLE_RATE_HZ};

/// Gaussian white noise with standard deviation 0.1.
pub fn white_noise(len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE_HZ)
}

const PINK_ROWS: usize = 16;

/// Voss–McCartney pink noise: row `k` is redrawn every `2^k` samples and
/// the rows are summed with a fresh white term.
pub fn pink_noise(len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: [f64; PINK_ROWS] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let mut running: f64 = rows.iter().sum();
    let scale = 0.1 / (PINK_ROWS as f64 + 1.0).sqrt();
    let samples = (1..=len as u64)
        .map(|counter| {
            let k = counter.trailing_zeros() as usize;
            if k < PINK_ROWS {
                let fresh = rng.gen_range(-1.0..1.0);
                running += fresh - rows[k];
                rows[k] = fresh;
            }
            let white: f64 = rng.gen_range(-1.0..1.0);
            ((running + white) * scale) as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE_HZ)
}

/// Noise signals by source: colored noise is generated per request, the
/// other sources are `<dir>/<source>.wav` recordings of any length.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    dir: Option<PathBuf>,
    recordings: HashMap<NoiseSource, AudioClip>,
}

impl NoiseBank {
    /// A bank that can only serve generated sources.
    pub fn generated_only() -> Self {
        Self::default()
    }

    pub fn load(dir: impl AsRef<Path>, sources: &[NoiseSource]) -> Result<Self, DatasetError> {
        let dir = dir.as_ref();
        let mut bank = Self {
            dir: Some(dir.to_path_buf()),
            recordings: HashMap::new(),
        };
        for &s in sources {
            bank.ensure(s)?;
        }
        Ok(bank)
    }

    pub fn insert(&mut self, source: NoiseSource, recording: AudioClip) {
        self.recordings.insert(source, recording);
    }

    pub fn ensure(&mut self, source: NoiseSource) -> Result<(), DatasetError> {
        if source.is_generated() || self.recordings.contains_key(&source) {
            return Ok(());
        }
        let Some(dir) = &self.dir else {
            return Err(DatasetError::MissingNoiseFile {
                source_name: source.to_string(),
                path: "<no noise directory configured>".into(),
            });
        };
        let path = dir.join(format!("{source}.wav"));
        if !path.is_file() {
            return Err(DatasetError::MissingNoiseFile {
                source_name: source.to_string(),
                path: path.display().to_string(),
            });
        }
        let clip = read_wav_file(&path)?;
        if clip.len() < CLIP_LEN {
            return Err(DatasetError::SourceTooShort {
                len: clip.len(),
                need: CLIP_LEN,
            });
        }
        self.recordings.insert(source, clip);
        Ok(())
    }

    /// Noise material for one mixture. Generated sources yield a fresh
    /// one-second clip; recordings yield the split's time region (the whole
    /// recording when that region is shorter than one second).
    pub fn material(&self, source: NoiseSource, split: Split, seed: u64) -> Result<AudioClip, DatasetError> {
        match source {
            NoiseSource::White => Ok(white_noise(CLIP_LEN, seed)),
            NoiseSource::Pink => Ok(pink_noise(CLIP_LEN, seed)),
            other => {
                let rec = self.recordings.get(&other).ok_or_else(|| DatasetError::MissingNoiseFile {
                    source_name: other.to_string(),
                    path: "<not loaded>".into(),
                })?;
                let (lo, hi) = split.region();
                let start = (lo * rec.len() as f64) as usize;
                let end = (hi * rec.len() as f64) as usize;
                if end - start < CLIP_LEN {
                    return Ok(rec.clone());
                }
                Ok(AudioClip::new(rec.samples[start..end].to_vec(), rec.sample_rate_hz))
            }
        }
    }

    /// Mixes `clean` with this bank's noise for `cond`.
    pub fn contaminate(
        &self,
        clean: &AudioClip,
        cond: NoiseCondition,
        split: Split,
        seed: u64,
    ) -> Result<AudioClip, DatasetError> {
        let noise = self.material(cond.source, split, derive_seed(seed, 1, 0))?;
        mix_at_snr(clean, &noise, cond.snr_db as f64, derive_seed(seed, 2, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn band_power(clip: &AudioClip, lo: usize, hi: usize) -> f64 {
        let n = 4096;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let mut total = 0.0;
        for chunk in clip.samples.chunks_exact(n) {
            let mut buf: Vec<Complex<f64>> = chunk.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
            fft.process(&mut buf);
            total += buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        total / (hi - lo) as f64
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(white_noise(1000, 3), white_noise(1000, 3));
        assert_ne!(white_noise(1000, 3), white_noise(1000, 4));
        assert_eq!(pink_noise(1000, 3), pink_noise(1000, 3));
    }

    #[test]
    fn pink_noise_tilts_toward_low_frequencies() {
        let p = pink_noise(16000 * 4, 9);
        let w = white_noise(16000 * 4, 9);
        let pink_ratio = band_power(&p, 10, 40) / band_power(&p, 1000, 1600);
        let white_ratio = band_power(&w, 10, 40) / band_power(&w, 1000, 1600);
        assert!(pink_ratio > 10.0 * white_ratio, "{pink_ratio} vs {white_ratio}");
    }

    #[test]
    fn recordings_are_split_by_region() {
        let mut bank = NoiseBank::generated_only();
        bank.insert(
            NoiseSource::CarHorn,
            AudioClip::new((0..200_000).map(|i| i as f32).collect(), 16000),
        );
        let train = bank.material(NoiseSource::CarHorn, Split::Train, 0).unwrap();
        let test = bank.material(NoiseSource::CarHorn, Split::Test, 0).unwrap();
        assert_eq!(train.len(), 160_000);
        assert_eq!(test.samples[0], 180_000.0);
        assert!(matches!(
            bank.material(NoiseSource::DogBark, Split::Train, 0),
            Err(DatasetError::MissingNoiseFile { .. })
        ));
    }
}
