use super::{stft_power, AudioClip, FrontendConfig, FrontendError, Spectrogram, CLIP_LEN};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, row-major `[n_mels][n_bins]`, unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    /// Peak frequency of each filter.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }
}

pub fn mel_filterbank(cfg: &FrontendConfig) -> Result<MelFilterbank, FrontendError> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let n_mels = cfg.n_mels;
    let nyquist = cfg.sample_rate_hz as f64 / 2.0;
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| nyquist * k as f64 / (n_bins - 1) as f64)
        .collect();

    let lo = hz_to_mel(cfg.f_min_hz);
    let hi = hz_to_mel(cfg.f_max_hz);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (w, &f) in row.iter_mut().zip(&bin_hz) {
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w <= 0.0) {
            return Err(FrontendError::ConfigInvalid(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin"
            )));
        }
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        centers_hz: edges[1..=n_mels].to_vec(),
    })
}

/// `ln(filterbank · power + log_floor)` for a one-second clip.
pub fn log_mel(clip: &AudioClip, cfg: &FrontendConfig) -> Result<Spectrogram, FrontendError> {
    if clip.len() != CLIP_LEN {
        return Err(FrontendError::WrongLength {
            expected: CLIP_LEN,
            actual: clip.len(),
        });
    }
    let fb = mel_filterbank(cfg)?;
    log_mel_with_filterbank(clip, cfg, &fb)
}

/// Same as [`log_mel`] with a precomputed filterbank.
pub fn log_mel_with_filterbank(
    clip: &AudioClip,
    cfg: &FrontendConfig,
    fb: &MelFilterbank,
) -> Result<Spectrogram, FrontendError> {
    let power = stft_power(clip, cfg)?;
    let mut values = Vec::with_capacity(power.n_frames * fb.n_mels);
    for t in 0..power.n_frames {
        let frame = power.frame(t);
        for m in 0..fb.n_mels {
            let energy: f64 = fb.row(m).iter().zip(frame).map(|(w, p)| w * p).sum();
            values.push((energy + cfg.log_floor).ln() as f32);
        }
    }
    Ok(Spectrogram {
        n_frames: power.n_frames,
        n_mels: fb.n_mels,
        values,
    })
}

/// Featurizes many clips with a shared filterbank.
pub fn log_mel_batch(
    clips: &[AudioClip],
    cfg: &FrontendConfig,
) -> Result<Vec<Spectrogram>, FrontendError> {
    let fb = mel_filterbank(cfg)?;
    clips
        .iter()
        .map(|c| {
            if c.len() != CLIP_LEN {
                return Err(FrontendError::WrongLength {
                    expected: CLIP_LEN,
                    actual: c.len(),
                });
            }
            log_mel_with_filterbank(c, cfg, &fb)
        })
        .collect()
}
