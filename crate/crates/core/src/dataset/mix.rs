use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::frontend::{AudioClip, CLIP_LEN};

/// `count` seeded window starts, uniform over every position where a
/// one-second window fits in `len` samples.
pub fn silence_offsets(len: usize, seed: u64, count: usize) -> Result<Vec<usize>, DatasetError> {
    if len < CLIP_LEN {
        return Err(DatasetError::SourceTooShort {
            len,
            need: CLIP_LEN,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| rng.gen_range(0..=len - CLIP_LEN)).collect())
}

/// Cuts `count` one-second windows from a long noise-only recording.
pub fn extract_silence(source: &AudioClip, seed: u64, count: usize) -> Result<Vec<AudioClip>, DatasetError> {
    Ok(silence_offsets(source.len(), seed, count)?
        .into_iter()
        .map(|o| AudioClip::new(source.samples[o..o + CLIP_LEN].to_vec(), source.sample_rate_hz))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub clip: AudioClip,
    /// Amplitude factor applied to the noise segment.
    pub noise_gain: f64,
    /// Start of the noise segment within the supplied noise signal.
    pub noise_offset: usize,
}

/// Adds `noise` scaled so that `10·log10(P_clean / P_scaled_noise) = snr_db`,
/// with powers taken as mean squares over the whole clip. Longer noise
/// signals contribute a seeded random segment. No clipping is applied.
pub fn mix_at_snr_detailed(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    seed: u64,
) -> Result<Mixture, DatasetError> {
    let len = clean.len();
    if noise.len() < len {
        return Err(DatasetError::SourceTooShort {
            len: noise.len(),
            need: len,
        });
    }
    let offset = if noise.len() > len {
        ChaCha8Rng::seed_from_u64(seed).gen_range(0..=noise.len() - len)
    } else {
        0
    };
    let segment = &noise.samples[offset..offset + len];
    let p_clean = clean.power();
    let p_noise = segment.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / len.max(1) as f64;
    if !(p_clean > 0.0) {
        return Err(DatasetError::ZeroPowerSignal("clean"));
    }
    if !(p_noise > 0.0) {
        return Err(DatasetError::ZeroPowerSignal("noise"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(segment)
        .map(|(&c, &n)| (c as f64 + gain * n as f64) as f32)
        .collect();
    Ok(Mixture {
        clip: AudioClip::new(samples, clean.sample_rate_hz),
        noise_gain: gain,
        noise_offset: offset,
    })
}

pub fn mix_at_snr(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    seed: u64,
) -> Result<AudioClip, DatasetError> {
    mix_at_snr_detailed(clean, noise, snr_db, seed).map(|m| m.clip)
}
