use std::io::Cursor;
use std::path::Path;

use super::{AudioClip, FrontendError, SAMPLE_RATE_HZ};

/// Decodes a RIFF/WAVE byte stream holding 16-bit mono PCM at 16 kHz.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, FrontendError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(FrontendError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(FrontendError::UnsupportedFormat(format!(
            "{} Hz, expected {SAMPLE_RATE_HZ} Hz",
            spec.sample_rate
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(FrontendError::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    Ok(AudioClip::new(samples, SAMPLE_RATE_HZ))
}

pub fn read_wav_file(path: impl AsRef<Path>) -> Result<AudioClip, FrontendError> {
    let bytes = std::fs::read(path)?;
    decode_wav(&bytes)
}

/// Encodes a clip as 16-bit mono PCM, saturating samples outside [-1, 1).
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>, FrontendError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).map_err(map_hound)?;
        for &s in &clip.samples {
            let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(cursor.into_inner())
}

/// Zero-pads or truncates at the end so the clip has exactly `target_len` samples.
pub fn pad_or_trim(mut clip: AudioClip, target_len: usize) -> AudioClip {
    clip.samples.resize(target_len, 0.0);
    clip
}

fn map_hound(err: hound::Error) -> FrontendError {
    match err {
        hound::Error::Unsupported => FrontendError::UnsupportedFormat("unsupported encoding".into()),
        hound::Error::FormatError(msg) => FrontendError::CorruptHeader(msg.to_string()),
        hound::Error::TooWide => FrontendError::UnsupportedFormat("sample too wide".into()),
        hound::Error::UnfinishedSample => FrontendError::CorruptHeader("unfinished sample".into()),
        hound::Error::InvalidSampleFormat => {
            FrontendError::UnsupportedFormat("invalid sample format".into())
        }
        hound::Error::IoError(e) => FrontendError::CorruptHeader(e.to_string()),
    }
}
