//! Self-describing weight files.
//!
//! Layout: `b"NKWS"`, u32 LE format version, u32 LE header length, UTF-8
//! JSON header (architecture, tensor manifest, optional provenance), raw
//! f32 LE tensor data, and a trailing u32 LE CRC32 of all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchSpec, Model, ModelParams, BlockParams, BnState, NnError, Tensor};

pub const MAGIC: &[u8; 4] = b"NKWS";
pub const FORMAT_VERSION: u32 = 1;

/// Where an adapted model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// CRC32 trailer of the pretrained weight file the adaptation started from.
    pub base_checksum: u32,
    pub noise_source: String,
    pub snr_db: i32,
    pub shots: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub model: Model<f32>,
    pub provenance: Option<Provenance>,
    /// The file's CRC32 trailer.
    pub checksum: u32,
}

pub fn encode_weights(model: &Model<f32>, provenance: Option<&Provenance>) -> Vec<u8> {
    let tensors = model.params.all_tensors();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for ((name, _), t) in model.arch.tensor_layout().into_iter().zip(&tensors) {
        entries.push(TensorEntry {
            name,
            dims: t.dims().to_vec(),
            offset,
        });
        offset += 4 * t.numel();
    }
    let header = Header {
        arch: model.arch.clone(),
        tensors: entries,
        provenance: provenance.cloned(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(16 + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightFile, NnError> {
    if bytes.len() < 16 {
        return Err(NnError::ChecksumMismatch {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(NnError::ChecksumMismatch { stored, computed });
    }
    if &body[0..4] != MAGIC {
        return Err(NnError::FormatVersionMismatch("missing NKWS magic".into()));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(NnError::FormatVersionMismatch(format!(
            "file version {version}, reader supports {FORMAT_VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let data_start = 12 + header_len;
    if data_start > body.len() {
        return Err(NnError::FormatVersionMismatch("header runs past end of file".into()));
    }
    let header: Header = serde_json::from_slice(&body[12..data_start])
        .map_err(|e| NnError::FormatVersionMismatch(format!("unreadable header: {e}")))?;
    header
        .arch
        .validate()
        .map_err(|e| NnError::FormatVersionMismatch(e.to_string()))?;
    let data = &body[data_start..];

    let layout = header.arch.tensor_layout();
    if layout.len() != header.tensors.len() {
        return Err(NnError::FormatVersionMismatch(format!(
            "architecture implies {} tensors, manifest lists {}",
            layout.len(),
            header.tensors.len()
        )));
    }
    let mut tensors = Vec::with_capacity(layout.len());
    let mut expected_offset = 0;
    for ((name, dims), entry) in layout.iter().zip(&header.tensors) {
        if &entry.name != name || &entry.dims != dims || entry.offset != expected_offset {
            return Err(NnError::FormatVersionMismatch(format!(
                "tensor {} {:?}@{} disagrees with architecture ({name} {dims:?}@{expected_offset})",
                entry.name, entry.dims, entry.offset
            )));
        }
        let len = 4 * dims.iter().product::<usize>();
        let chunk = data.get(entry.offset..entry.offset + len).ok_or_else(|| {
            NnError::FormatVersionMismatch(format!("tensor {name} runs past end of data"))
        })?;
        let values = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(dims, values)?);
        expected_offset += len;
    }
    if expected_offset != data.len() {
        return Err(NnError::FormatVersionMismatch(format!(
            "{} trailing data bytes",
            data.len() - expected_offset
        )));
    }

    let fc_bias = tensors.pop().expect("layout has fc bias");
    let fc_weights = tensors.pop().expect("layout has fc weights");
    let mut it = tensors.into_iter();
    let mut blocks = Vec::with_capacity(header.arch.conv_blocks.len());
    while let Some(conv_weight) = it.next() {
        let mut next = || it.next().expect("layout groups six tensors per block");
        blocks.push(BlockParams {
            conv_weight,
            conv_bias: next(),
            gamma: next(),
            beta: next(),
            bn: BnState {
                running_mean: next(),
                running_var: next(),
            },
        });
    }
    let params = ModelParams {
        blocks,
        fc_weights,
        fc_bias,
    };
    let model = Model::from_parts(header.arch, params)
        .map_err(|e| NnError::FormatVersionMismatch(e.to_string()))?;
    Ok(WeightFile {
        model,
        provenance: header.provenance,
        checksum: stored,
    })
}

/// Writes the model and returns the file's CRC32 trailer.
pub fn save_weights(
    model: &Model<f32>,
    provenance: Option<&Provenance>,
    path: impl AsRef<Path>,
) -> Result<u32, NnError> {
    let bytes = encode_weights(model, provenance);
    std::fs::write(path, &bytes)?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightFile, NnError> {
    decode_weights(&std::fs::read(path)?)
}
