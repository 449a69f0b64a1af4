//! Calibration runtime: run toy feed-forward models over calibration rows
//! to collect the per-input-feature activation norms ‖X_j‖₂ that Wanda and
//! OWL score against, and measure dense-vs-pruned output divergence.
//!
//! File formats owned by this module:
//!
//!   * calibration data — 16-byte header (magic "CALB", u32 LE rows,
//!     u32 LE cols, 4 reserved bytes) followed by row-major LE f32 values;
//!   * activation norms — JSON {layer: {"rows_seen": N, "norms": [...]}};
//!   * model spec — JSON, see [`ToyModelSpec`].

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Checkpoint;
use crate::error::{Error, Result};

// ── Matrix ───────────────────────────────────────────────────────────────

/// Dense row-major f32 matrix; rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument {
                detail: format!(
                    "matrix data length {} does not match {rows}x{cols}",
                    data.len()
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy a contiguous range of rows.
    pub fn row_slice(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

// ── Model spec ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Linear,
    Relu,
    Gelu,
}

/// One layer of the toy model. `weight`/`bias` name checkpoint tensors and
/// only apply to linear layers; a linear weight is [outputs, inputs].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
}

impl LayerSpec {
    pub fn linear(weight: &str, bias: Option<&str>) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Linear,
            weight: Some(weight.to_string()),
            bias: bias.map(str::to_string),
        }
    }

    pub fn activation(kind: LayerKind) -> LayerSpec {
        LayerSpec {
            kind,
            weight: None,
            bias: None,
        }
    }
}

/// A small feed-forward stand-in for a real model component: an ordered
/// chain of linear and activation layers over a fixed input width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyModelSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl ToyModelSpec {
    pub fn parse(json: &str) -> Result<ToyModelSpec> {
        serde_json::from_str(json).map_err(|e| Error::Json {
            what: "model spec".into(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ToyModelSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ToyModelSpec::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Weight tensor names of the linear layers, in order.
    pub fn linear_weights(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter_map(|l| l.weight.as_deref())
            .collect()
    }

    /// Check the layer chain against a checkpoint: linear layers must name
    /// existing rank-2 tensors whose input width matches the incoming
    /// dimension, and biases (when present) must be rank-1 of the output
    /// width.
    pub fn validate(&self, ckpt: &Checkpoint) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument {
                detail: "model input_dim must be >= 1".into(),
            });
        }
        let mut dim = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer.kind {
                LayerKind::Relu | LayerKind::Gelu => {
                    if layer.weight.is_some() || layer.bias.is_some() {
                        return Err(Error::InvalidArgument {
                            detail: format!(
                                "layer {i}: activation layers take no weight or bias"
                            ),
                        });
                    }
                }
                LayerKind::Linear => {
                    let weight_name =
                        layer.weight.as_deref().ok_or_else(|| Error::InvalidArgument {
                            detail: format!("layer {i}: linear layer needs a weight name"),
                        })?;
                    let w = ckpt.get(weight_name).ok_or_else(|| Error::MissingTensor {
                        name: weight_name.to_string(),
                    })?;
                    if w.rank() != 2 {
                        return Err(Error::DimensionMismatch {
                            detail: format!(
                                "layer {i}: weight '{weight_name}' must be rank 2, got rank {}",
                                w.rank()
                            ),
                        });
                    }
                    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
                    if in_dim != dim {
                        return Err(Error::DimensionMismatch {
                            detail: format!(
                                "layer {i}: weight '{weight_name}' expects {in_dim} inputs \
                                 but the chain provides {dim}"
                            ),
                        });
                    }
                    if let Some(bias_name) = layer.bias.as_deref() {
                        let b = ckpt.get(bias_name).ok_or_else(|| Error::MissingTensor {
                            name: bias_name.to_string(),
                        })?;
                        if b.shape() != [out_dim] {
                            return Err(Error::DimensionMismatch {
                                detail: format!(
                                    "layer {i}: bias '{bias_name}' must have shape [{out_dim}], \
                                     got {:?}",
                                    b.shape()
                                ),
                            });
                        }
                    }
                    dim = out_dim;
                }
            }
        }
        Ok(())
    }
}

// ── Forward pass ─────────────────────────────────────────────────────────

/// Output of a forward pass plus the input each linear layer saw, keyed by
/// weight tensor name.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub output: Matrix,
    pub layer_inputs: BTreeMap<String, Matrix>,
}

fn gelu(x: f64) -> f64 {
    // tanh approximation of the Gaussian error linear unit
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

/// Run the model over a batch. Linear layers compute x·Wᵀ + b with f64
/// accumulation; activations apply elementwise.
pub fn forward(spec: &ToyModelSpec, ckpt: &Checkpoint, batch: &Matrix) -> Result<ForwardTrace> {
    spec.validate(ckpt)?;
    if batch.cols() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "batch has {} columns but the model expects input_dim {}",
                batch.cols(),
                spec.input_dim
            ),
        });
    }

    let mut current = batch.clone();
    let mut layer_inputs = BTreeMap::new();

    for layer in &spec.layers {
        match layer.kind {
            LayerKind::Relu => {
                for v in &mut current.data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            LayerKind::Gelu => {
                for v in &mut current.data {
                    *v = gelu(*v as f64) as f32;
                }
            }
            LayerKind::Linear => {
                let weight_name = layer.weight.as_deref().expect("validated");
                let w = ckpt.get(weight_name).expect("validated");
                let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
                let bias = layer
                    .bias
                    .as_deref()
                    .map(|name| ckpt.get(name).expect("validated").data());

                layer_inputs.insert(weight_name.to_string(), current.clone());

                let mut next = Matrix::zeros(current.rows, out_dim);
                for r in 0..current.rows {
                    let x = current.row(r);
                    let out = &mut next.data[r * out_dim..(r + 1) * out_dim];
                    for (o, slot) in out.iter_mut().enumerate() {
                        let w_row = &w.data()[o * in_dim..(o + 1) * in_dim];
                        let mut acc = bias.map_or(0.0f64, |b| b[o] as f64);
                        for j in 0..in_dim {
                            acc += x[j] as f64 * w_row[j] as f64;
                        }
                        *slot = acc as f32;
                    }
                }
                current = next;
            }
        }
    }

    Ok(ForwardTrace {
        output: current,
        layer_inputs,
    })
}

// ── Norm accumulation ────────────────────────────────────────────────────

/// Running per-input-feature Σx² for one linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerActivationStats {
    pub layer: String,
    pub sq_sum: Vec<f64>,
    pub rows_seen: u64,
}

impl LayerActivationStats {
    fn new(layer: &str, width: usize) -> LayerActivationStats {
        LayerActivationStats {
            layer: layer.to_string(),
            sq_sum: vec![0.0; width],
            rows_seen: 0,
        }
    }

    /// ‖X_j‖₂ per input feature: sqrt of the accumulated square sums.
    pub fn norms(&self) -> Vec<f64> {
        self.sq_sum.iter().map(|&s| s.sqrt()).collect()
    }

    fn absorb_trace(&mut self, inputs: &Matrix) {
        for r in 0..inputs.rows() {
            for (j, &x) in inputs.row(r).iter().enumerate() {
                self.sq_sum[j] += (x as f64) * (x as f64);
            }
        }
        self.rows_seen += inputs.rows() as u64;
    }

    fn merge(&mut self, other: &LayerActivationStats) {
        for (a, b) in self.sq_sum.iter_mut().zip(&other.sq_sum) {
            *a += b;
        }
        self.rows_seen += other.rows_seen;
    }
}

fn stats_from_trace(
    spec: &ToyModelSpec,
    ckpt: &Checkpoint,
    chunk: &Matrix,
) -> Result<BTreeMap<String, LayerActivationStats>> {
    let trace = forward(spec, ckpt, chunk)?;
    let mut stats = BTreeMap::new();
    for (layer, inputs) in &trace.layer_inputs {
        let mut s = LayerActivationStats::new(layer, inputs.cols());
        s.absorb_trace(inputs);
        stats.insert(layer.clone(), s);
    }
    Ok(stats)
}

/// Accumulate activation norms over calibration rows, strictly in row
/// order — bit-exact and single-threaded.
pub fn accumulate_norms(
    spec: &ToyModelSpec,
    ckpt: &Checkpoint,
    data: &Matrix,
) -> Result<BTreeMap<String, LayerActivationStats>> {
    if data.rows() == 0 {
        return Err(Error::EmptyCalibration);
    }
    stats_from_trace(spec, ckpt, data)
}

/// Accumulate activation norms over row chunks in parallel, merging the
/// partial square sums. Merge order is unspecified, so results can differ
/// from the sequential path by floating-point reassociation (bounded in
/// practice to ~1e-6 relative).
pub fn accumulate_norms_parallel(
    spec: &ToyModelSpec,
    ckpt: &Checkpoint,
    data: &Matrix,
    chunk_rows: usize,
) -> Result<BTreeMap<String, LayerActivationStats>> {
    if data.rows() == 0 {
        return Err(Error::EmptyCalibration);
    }
    let chunk_rows = chunk_rows.max(1);
    let bounds: Vec<(usize, usize)> = (0..data.rows())
        .step_by(chunk_rows)
        .map(|start| (start, (start + chunk_rows).min(data.rows())))
        .collect();

    let partials: Vec<BTreeMap<String, LayerActivationStats>> = bounds
        .par_iter()
        .map(|&(start, end)| stats_from_trace(spec, ckpt, &data.row_slice(start, end)))
        .collect::<Result<_>>()?;

    let mut merged: BTreeMap<String, LayerActivationStats> = BTreeMap::new();
    for partial in partials {
        for (layer, stats) in partial {
            merged
                .entry(layer)
                .and_modify(|m| m.merge(&stats))
                .or_insert(stats);
        }
    }
    Ok(merged)
}

// ── Divergence ───────────────────────────────────────────────────────────

/// Relative ℓ₂ distance between dense and pruned outputs over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub mean_rel_l2: f64,
    pub max_rel_l2: f64,
}

const DIVERGENCE_EPS: f64 = 1e-12;

/// Per row: ‖y_dense − y_pruned‖₂ / max(‖y_dense‖₂, 1e−12); returns the
/// mean and max over rows. A cheap proxy for output degradation.
pub fn output_divergence(
    spec: &ToyModelSpec,
    dense: &Checkpoint,
    pruned: &Checkpoint,
    batch: &Matrix,
) -> Result<Divergence> {
    if batch.rows() == 0 {
        return Err(Error::EmptyCalibration);
    }
    let y_dense = forward(spec, dense, batch)?.output;
    let y_pruned = forward(spec, pruned, batch)?.output;

    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    for r in 0..y_dense.rows() {
        let (d_row, p_row) = (y_dense.row(r), y_pruned.row(r));
        let mut diff_sq = 0.0f64;
        let mut dense_sq = 0.0f64;
        for (d, p) in d_row.iter().zip(p_row) {
            let delta = *d as f64 - *p as f64;
            diff_sq += delta * delta;
            dense_sq += (*d as f64) * (*d as f64);
        }
        let rel = diff_sq.sqrt() / dense_sq.sqrt().max(DIVERGENCE_EPS);
        sum += rel;
        max = max.max(rel);
    }
    Ok(Divergence {
        mean_rel_l2: sum / y_dense.rows() as f64,
        max_rel_l2: max,
    })
}

// ── Calibration data file ────────────────────────────────────────────────

const CALB_MAGIC: &[u8; 4] = b"CALB";
const CALB_HEADER_LEN: usize = 16;

/// Serialize a calibration matrix into the CALB container.
pub fn write_calibration_bytes(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(CALB_HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(CALB_MAGIC);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a CALB container.
pub fn read_calibration_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < CALB_HEADER_LEN {
        return Err(Error::MalformedHeader {
            detail: format!(
                "calibration file is {} bytes, need a {CALB_HEADER_LEN}-byte header",
                bytes.len()
            ),
        });
    }
    if &bytes[0..4] != CALB_MAGIC {
        return Err(Error::MalformedHeader {
            detail: "calibration file magic is not 'CALB'".into(),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedHeader {
            detail: format!("calibration dimensions {rows}x{cols} overflow"),
        })?;
    let payload = &bytes[CALB_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::MalformedHeader {
            detail: format!(
                "calibration payload is {} bytes but {rows}x{cols} f32 needs {expected}",
                payload.len()
            ),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                tensor: "calibration data".into(),
                byte_offset: (CALB_HEADER_LEN + i * 4) as u64,
            });
        }
        data.push(v);
    }
    Matrix::new(rows, cols, data)
}

pub fn write_calibration(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_calibration_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn read_calibration(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_calibration_bytes(&bytes)
}

// ── Norms file ───────────────────────────────────────────────────────────

/// One layer's entry in a norms file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormsEntry {
    pub rows_seen: u64,
    pub norms: Vec<f64>,
}

/// Convert accumulated stats into the serializable norms map.
pub fn norms_entries(
    stats: &BTreeMap<String, LayerActivationStats>,
) -> BTreeMap<String, NormsEntry> {
    stats
        .iter()
        .map(|(layer, s)| {
            (
                layer.clone(),
                NormsEntry {
                    rows_seen: s.rows_seen,
                    norms: s.norms(),
                },
            )
        })
        .collect()
}

/// Flatten a norms map to layer → norms vector, as the kernels consume it.
pub fn norms_vectors(entries: &BTreeMap<String, NormsEntry>) -> BTreeMap<String, Vec<f64>> {
    entries
        .iter()
        .map(|(layer, e)| (layer.clone(), e.norms.clone()))
        .collect()
}

pub fn write_norms(
    entries: &BTreeMap<String, NormsEntry>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let json =
        serde_json::to_string_pretty(entries).expect("norms serialization cannot fail");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_norms(path: impl AsRef<Path>) -> Result<BTreeMap<String, NormsEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        what: format!("norms file {}", path.display()),
        source: e,
    })
}
