//! Audio decoding and log-Mel feature extraction.
//!
//! A one-second 16 kHz clip becomes a 101×64 log-Mel image: 25 ms Hann
//! windows, 10 ms hop, centered reflect padding, 512-point FFT, 64 HTK-scale
//! triangular filters between 50 and 7500 Hz, natural log with a small floor.

mod mel;
mod stft;
mod wav;

pub use mel::{
    hz_to_mel, log_mel, log_mel_batch, log_mel_with_filterbank, mel_filterbank, mel_to_hz,
    MelFilterbank,
};
pub use stft::{stft_power, PowerSpectrum};
pub use wav::{decode_wav, encode_wav, pad_or_trim, read_wav_file};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate every clip in the pipeline is expected to use.
pub const SAMPLE_RATE_HZ: u32 = 16_000;
/// One second at [`SAMPLE_RATE_HZ`].
pub const CLIP_LEN: usize = 16_000;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV data: {0}")]
    CorruptHeader(String),
    #[error("invalid frontend configuration: {0}")]
    ConfigInvalid(String),
    #[error("expected a clip of {expected} samples, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("malformed spectrogram dump: {0}")]
    MalformedDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len], SAMPLE_RATE_HZ)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of squares, accumulated in 64-bit.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        sum / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub win_ms: u32,
    pub hop_ms: u32,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            win_ms: 25,
            hop_ms: 10,
            n_mels: 64,
            f_min_hz: 50.0,
            f_max_hz: 7500.0,
            fft_size: 512,
            log_floor: 1e-6,
        }
    }
}

impl FrontendConfig {
    pub fn win_length(&self) -> usize {
        (self.sample_rate_hz as usize * self.win_ms as usize) / 1000
    }

    pub fn hop_length(&self) -> usize {
        (self.sample_rate_hz as usize * self.hop_ms as usize) / 1000
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a clip of `len` samples with centered framing.
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop_length()
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        let win = self.win_length();
        if win == 0 || self.hop_length() == 0 {
            return Err(FrontendError::ConfigInvalid(
                "window and hop must be at least one sample".into(),
            ));
        }
        if win > self.fft_size {
            return Err(FrontendError::ConfigInvalid(format!(
                "window of {win} samples exceeds fft size {}",
                self.fft_size
            )));
        }
        if self.n_mels == 0 {
            return Err(FrontendError::ConfigInvalid("n_mels must be positive".into()));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.f_min_hz >= 0.0 && self.f_min_hz < self.f_max_hz && self.f_max_hz <= nyquist) {
            return Err(FrontendError::ConfigInvalid(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(FrontendError::ConfigInvalid("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Log-Mel image, row-major `[n_frames][n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub n_frames: usize,
    pub n_mels: usize,
    pub values: Vec<f32>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Debug dump: two little-endian u32 dims followed by row-major f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FrontendError> {
        if bytes.len() < 8 {
            return Err(FrontendError::MalformedDump("missing dimensions".into()));
        }
        let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload = &bytes[8..];
        if payload.len() != rows * cols * 4 {
            return Err(FrontendError::MalformedDump(format!(
                "{rows}x{cols} needs {} bytes, found {}",
                rows * cols * 4,
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            n_frames: rows,
            n_mels: cols,
            values,
        })
    }
}
