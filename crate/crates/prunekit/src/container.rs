//! Single-file tensor container: bit-exact checkpoint reading and writing.
//!
//! The on-disk layout matches the common safetensors single-file format:
//!
//!   ┌──────────────┬──────────────────────┬───────────────────────┐
//!   │ 8 bytes      │ N bytes              │ raw data bytes        │
//!   │ header size  │ JSON header (UTF-8)  │ (contiguous, LE f32)  │
//!   │ (u64 LE)     │                      │                       │
//!   └──────────────┴──────────────────────┴───────────────────────┘
//!
//! Header example:
//!
//!   {
//!     "__metadata__": { "source": "fixture" },
//!     "layer.weight": {
//!       "dtype": "F32",
//!       "shape": [64, 128],
//!       "data_offsets": [0, 32768]
//!     }
//!   }
//!
//! Only F32 tensors are accepted; any other dtype is a load error. Payload
//! spans must tile the data region exactly (no gaps, no overlap), and every
//! value must be finite. The writer is byte-deterministic: compact JSON,
//! `__metadata__` first (when non-empty), tensor keys in stored order,
//! offsets assigned contiguously from zero.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

// ── Tensor ───────────────────────────────────────────────────────────────

/// A named, shaped, row-major f32 array. The unit of pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, validating that the shape is non-empty, every
    /// dimension is at least 1, and the data length matches the shape.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() {
            return Err(Error::BadShape {
                tensor: name,
                detail: "shape must be non-empty".into(),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::BadShape {
                tensor: name,
                detail: format!("every dimension must be >= 1, got {shape:?}"),
            });
        }
        let expected = checked_numel(&name, &shape)?;
        if data.len() != expected {
            return Err(Error::BadShape {
                tensor: name,
                detail: format!(
                    "data length {} does not match shape {:?} ({} elements)",
                    data.len(),
                    shape,
                    expected
                ),
            });
        }
        Ok(Tensor { name, shape, data })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of dimensions.
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total element count.
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Replace the flat data, keeping name and shape. Length must match.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Tensor::new(self.name.clone(), self.shape.clone(), data)
    }

    /// Row count and row length for rank >= 2 tensors, treating the first
    /// dimension as rows over the row-major flattening of the rest.
    pub fn row_layout(&self) -> Option<(usize, usize)> {
        if self.rank() < 2 {
            return None;
        }
        let rows = self.shape[0];
        Some((rows, self.numel() / rows))
    }
}

fn checked_numel(name: &str, shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::BadShape {
            tensor: name.to_string(),
            detail: format!("shape {shape:?} overflows element count"),
        })
}

/// Per-tensor zero statistics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TensorStats {
    pub count: usize,
    pub zeros: usize,
    pub sparsity: f64,
}

/// Exact integer count of entries equal to 0.0 (either sign), and the
/// resulting sparsity fraction.
pub fn tensor_stats(t: &Tensor) -> TensorStats {
    let zeros = t.data.iter().filter(|&&v| v == 0.0).count();
    TensorStats {
        count: t.numel(),
        zeros,
        sparsity: zeros as f64 / t.numel() as f64,
    }
}

// ── Checkpoint ───────────────────────────────────────────────────────────

/// An ordered collection of uniquely named tensors plus string metadata.
/// Iteration order is the on-disk header order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a tensor; names must be unique and must not shadow the
    /// reserved `__metadata__` header key.
    pub fn insert(&mut self, tensor: Tensor) -> Result<()> {
        if tensor.name() == "__metadata__" {
            return Err(Error::InvalidArgument {
                detail: "tensor name '__metadata__' is reserved for the header".into(),
            });
        }
        if self.by_name.contains_key(tensor.name()) {
            return Err(Error::DuplicateTensor {
                name: tensor.name().to_string(),
            });
        }
        self.by_name
            .insert(tensor.name().to_string(), self.tensors.len());
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensors in stored order.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }

    /// Sum of element counts over all tensors.
    pub fn total_params(&self) -> u64 {
        self.tensors.iter().map(|t| t.numel() as u64).sum()
    }
}

// ── Reader ───────────────────────────────────────────────────────────────

/// Parse a checkpoint from raw container bytes.
pub fn read_checkpoint_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 {
        return Err(Error::MalformedHeader {
            detail: format!("file is {} bytes, need at least 8", bytes.len()),
        });
    }
    let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let header_len = usize::try_from(header_len).map_err(|_| Error::MalformedHeader {
        detail: format!("header length {header_len} does not fit in memory"),
    })?;
    let payload_start = 8usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::MalformedHeader {
            detail: format!(
                "declared header length {} exceeds file size {}",
                header_len,
                bytes.len()
            ),
        })?;

    let header_str =
        std::str::from_utf8(&bytes[8..payload_start]).map_err(|e| Error::MalformedHeader {
            detail: format!("header is not valid UTF-8: {e}"),
        })?;
    let header: serde_json::Value =
        serde_json::from_str(header_str).map_err(|e| Error::MalformedHeader {
            detail: format!("header is not valid JSON: {e}"),
        })?;
    let entries = header.as_object().ok_or_else(|| Error::MalformedHeader {
        detail: "header must be a JSON object".into(),
    })?;

    let payload = &bytes[payload_start..];
    let mut ckpt = Checkpoint::new();
    let mut spans: Vec<(usize, usize, String)> = Vec::new();

    for (name, value) in entries {
        if name == "__metadata__" {
            let map = value.as_object().ok_or_else(|| Error::MalformedHeader {
                detail: "__metadata__ must be an object".into(),
            })?;
            for (k, v) in map {
                let s = v.as_str().ok_or_else(|| Error::MalformedHeader {
                    detail: format!("__metadata__ value for '{k}' must be a string"),
                })?;
                ckpt.metadata.insert(k.clone(), s.to_string());
            }
            continue;
        }

        let entry = value.as_object().ok_or_else(|| Error::MalformedHeader {
            detail: format!("entry for tensor '{name}' must be an object"),
        })?;

        let dtype = entry
            .get("dtype")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedHeader {
                detail: format!("tensor '{name}' is missing a string 'dtype'"),
            })?;
        if dtype != "F32" {
            return Err(Error::UnsupportedDtype {
                tensor: name.clone(),
                dtype: dtype.to_string(),
            });
        }

        let shape = entry
            .get("shape")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedHeader {
                detail: format!("tensor '{name}' is missing an array 'shape'"),
            })?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::MalformedHeader {
                        detail: format!("tensor '{name}' has a non-integer shape entry"),
                    })
            })
            .collect::<Result<Vec<usize>>>()?;

        let offsets = entry
            .get("data_offsets")
            .and_then(|v| v.as_array())
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::MalformedHeader {
                detail: format!("tensor '{name}' is missing 'data_offsets' [begin, end]"),
            })?;
        let begin = offsets[0].as_u64().ok_or_else(|| Error::MalformedHeader {
            detail: format!("tensor '{name}' has a non-integer offset"),
        })? as usize;
        let end = offsets[1].as_u64().ok_or_else(|| Error::MalformedHeader {
            detail: format!("tensor '{name}' has a non-integer offset"),
        })? as usize;

        if end < begin || end > payload.len() {
            return Err(Error::BadOffsets {
                tensor: name.clone(),
                detail: format!(
                    "data_offsets [{begin}, {end}] fall outside the {}-byte payload",
                    payload.len()
                ),
            });
        }

        // Validate span length against shape before decoding.
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::BadShape {
                tensor: name.clone(),
                detail: format!("invalid shape {shape:?}"),
            });
        }
        let numel = checked_numel(name, &shape)?;
        let expected_bytes = numel.checked_mul(4).ok_or_else(|| Error::BadShape {
            tensor: name.clone(),
            detail: format!("shape {shape:?} overflows byte count"),
        })?;
        if end - begin != expected_bytes {
            return Err(Error::BadOffsets {
                tensor: name.clone(),
                detail: format!(
                    "span is {} bytes but shape {:?} requires {} ({} f32 values)",
                    end - begin,
                    shape,
                    expected_bytes,
                    numel
                ),
            });
        }

        let mut data = Vec::with_capacity(numel);
        for (i, chunk) in payload[begin..end].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    tensor: name.clone(),
                    byte_offset: (payload_start + begin + i * 4) as u64,
                });
            }
            data.push(v);
        }

        spans.push((begin, end, name.clone()));
        ckpt.insert(Tensor::new(name.clone(), shape, data)?)?;
    }

    // Spans must tile the payload exactly: no gaps, no overlap.
    spans.sort_by_key(|&(begin, end, _)| (begin, end));
    let mut cursor = 0usize;
    for (begin, end, name) in &spans {
        if *begin != cursor {
            let detail = if *begin < cursor {
                format!("span [{begin}, {end}] overlaps the previous tensor (expected begin {cursor})")
            } else {
                format!("gap before span [{begin}, {end}] (expected begin {cursor})")
            };
            return Err(Error::BadOffsets {
                tensor: name.clone(),
                detail,
            });
        }
        cursor = *end;
    }
    if cursor != payload.len() {
        return Err(Error::MalformedHeader {
            detail: format!(
                "payload is {} bytes but tensor spans cover only {}",
                payload.len(),
                cursor
            ),
        });
    }

    Ok(ckpt)
}

/// Read a checkpoint file.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_bytes(&bytes)
}

// ── Writer ───────────────────────────────────────────────────────────────

/// Serialize a checkpoint to container bytes. Byte-deterministic for a
/// given checkpoint.
pub fn write_checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut header = serde_json::Map::new();

    if !ckpt.metadata.is_empty() {
        let meta: serde_json::Map<String, serde_json::Value> = ckpt
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        header.insert("__metadata__".into(), serde_json::Value::Object(meta));
    }

    let mut offset = 0usize;
    for tensor in ckpt.iter() {
        let nbytes = tensor.numel() * 4;
        let entry = serde_json::json!({
            "dtype": "F32",
            "shape": tensor.shape(),
            "data_offsets": [offset, offset + nbytes],
        });
        header.insert(tensor.name().to_string(), entry);
        offset += nbytes;
    }

    let header_json = serde_json::to_string(&serde_json::Value::Object(header))
        .expect("header serialization cannot fail");
    let header_bytes = header_json.as_bytes();

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(header_bytes);
    for tensor in ckpt.iter() {
        for v in tensor.data() {
            if !v.is_finite() {
                // Same contract as the reader: name the tensor and the
                // absolute byte offset the bad value would occupy.
                return Err(Error::NonFinite {
                    tensor: tensor.name().to_string(),
                    byte_offset: out.len() as u64,
                });
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Write a checkpoint file.
pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint_bytes(ckpt)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
