use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, FrontendConfig, FrontendError};

/// Per-frame power spectrum, row-major `[n_frames][n_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrum {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }
}

/// Periodic Hann window of `win` samples, zero-padded symmetrically to `fft_size`.
pub(crate) fn padded_hann(win: usize, fft_size: usize) -> Vec<f64> {
    let mut w = vec![0.0; fft_size];
    let left = (fft_size - win) / 2;
    for n in 0..win {
        w[left + n] = 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos();
    }
    w
}

/// Reflects the clip by `pad` samples on each side (edge sample not repeated).
pub(crate) fn reflect_pad(samples: &[f32], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(samples[i] as f64);
    }
    out.extend(samples.iter().map(|&s| s as f64));
    for i in 0..pad {
        out.push(samples[n - 2 - i] as f64);
    }
    out
}

/// Centered short-time power spectrum (|X|²) with a Hann window.
pub fn stft_power(clip: &AudioClip, cfg: &FrontendConfig) -> Result<PowerSpectrum, FrontendError> {
    cfg.validate()?;
    let win = cfg.win_length();
    let hop = cfg.hop_length();
    let n_fft = cfg.fft_size;
    let pad = n_fft / 2;
    if clip.len() <= pad {
        return Err(FrontendError::WrongLength {
            expected: pad + 1,
            actual: clip.len(),
        });
    }
    let window = padded_hann(win, n_fft);
    let padded = reflect_pad(&clip.samples, pad);
    let n_frames = cfg.n_frames(clip.len());
    let n_bins = cfg.n_bins();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * hop;
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(padded[start + k] * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrum {
        n_frames,
        n_bins,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64) -> AudioClip {
        AudioClip::new(
            (0..16000)
                .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
                .collect(),
            16000,
        )
    }

    /// O(N²) DFT of one frame, independent of the FFT path.
    fn naive_frame_power(samples: &[f32], cfg: &FrontendConfig, t: usize) -> Vec<f64> {
        let n_fft = cfg.fft_size;
        let win = cfg.win_length();
        let pad = n_fft as isize / 2;
        let left = (n_fft - win) / 2;
        let len = samples.len() as isize;
        let sample_at = |i: isize| -> f64 {
            let j = if i < 0 {
                -i
            } else if i >= len {
                2 * (len - 1) - i
            } else {
                i
            };
            samples[j as usize] as f64
        };
        let frame: Vec<f64> = (0..n_fft)
            .map(|k| {
                let w = if k >= left && k < left + win {
                    let n = (k - left) as f64;
                    0.5 * (1.0 - (2.0 * PI * n / win as f64).cos())
                } else {
                    0.0
                };
                w * sample_at((t * cfg.hop_length()) as isize + k as isize - pad)
            })
            .collect();
        (0..n_fft / 2 + 1)
            .map(|b| {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (b * k) as f64 / n_fft as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn zero_clip_gives_zero_power() {
        let cfg = FrontendConfig::default();
        let p = stft_power(&AudioClip::zeros(16000), &cfg).unwrap();
        assert_eq!((p.n_frames, p.n_bins), (101, 257));
        assert!(p.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_matches_centered_framing_arithmetic() {
        let cfg = FrontendConfig::default();
        // padded length 16000 + 512, frames of 512 every 160 samples
        let padded_len = 16000 + 2 * (cfg.fft_size / 2);
        let count = (padded_len - cfg.fft_size) / cfg.hop_length() + 1;
        assert_eq!(count, 101);
        let p = stft_power(&AudioClip::zeros(16000), &cfg).unwrap();
        assert_eq!(p.n_frames, count);
    }

    #[test]
    fn sine_peaks_at_nearest_bin() {
        let cfg = FrontendConfig::default();
        let clip = sine(1000.0, 1.0);
        let p = stft_power(&clip, &cfg).unwrap();
        for t in [10, 50, 90] {
            let row = p.frame(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, 32);
            let oracle = naive_frame_power(&clip.samples, &cfg, t);
            let oracle_argmax =
                (0..oracle.len()).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
            assert_eq!(oracle_argmax, 32);
        }
    }

    #[test]
    fn matches_naive_dft_including_edges() {
        let cfg = FrontendConfig::default();
        let clip = AudioClip::new(
            (0..16000)
                .map(|i| ((i * 7919 % 1000) as f32 / 1000.0 - 0.5) * 0.8)
                .collect(),
            16000,
        );
        let p = stft_power(&clip, &cfg).unwrap();
        for t in [0, 1, 50, 99, 100] {
            let oracle = naive_frame_power(&clip.samples, &cfg, t);
            let peak = oracle.iter().cloned().fold(0.0, f64::max);
            for (a, b) in p.frame(t).iter().zip(&oracle) {
                let rel = (a - b).abs() / b.abs().max(peak * 1e-6);
                assert!(rel < 1e-4, "frame {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn window_larger_than_fft_is_rejected() {
        let cfg = FrontendConfig {
            fft_size: 256,
            ..FrontendConfig::default()
        };
        assert!(matches!(
            stft_power(&AudioClip::zeros(16000), &cfg),
            Err(FrontendError::ConfigInvalid(_))
        ));
    }
}
