//! Outlier-weighted layerwise sparsity: measure each layer's density of
//! activation-scaled outlier weights, then spread a target sparsity
//! unevenly so that outlier-heavy (more important) layers are pruned less.
//!
//! The allocation is closed-form. With D̄ = mean(D) and m = max|D_l − D̄|:
//!
//!   S_l = S + λ·(D̄ − D_l)/m        (S_l = S for all layers when m = 0)
//!
//! which lands the extreme layer exactly at S ± λ and keeps the unweighted
//! mean of the assigned sparsities at S.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::error::{Error, Result};
use crate::kernels::{prune_layer, CompareGroup, Method, PruneMask};

// ── Configuration ────────────────────────────────────────────────────────

pub const DEFAULT_LAMBDA: f64 = 0.08;
pub const DEFAULT_OUTLIER_MULTIPLIER: f64 = 5.0;

/// OWL hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwlConfig {
    /// Mean sparsity across layers.
    pub target_sparsity: f64,
    /// Maximum per-layer deviation from the target.
    pub lambda: f64,
    /// An entry counts as an outlier when it exceeds this multiple of the
    /// layer's mean activation-scaled magnitude.
    pub outlier_multiplier: f64,
}

impl OwlConfig {
    /// Validated constructor: 0 ≤ S ≤ 1, 0 ≤ λ ≤ min(S, 1−S), M > 1.
    pub fn new(target_sparsity: f64, lambda: f64, outlier_multiplier: f64) -> Result<OwlConfig> {
        if !(0.0..=1.0).contains(&target_sparsity) {
            return Err(Error::InvalidSparsity {
                value: target_sparsity,
            });
        }
        let bound = target_sparsity.min(1.0 - target_sparsity);
        if !(0.0..=1.0).contains(&lambda) || lambda > bound {
            return Err(Error::InvalidArgument {
                detail: format!(
                    "owl lambda {lambda} must satisfy 0 <= lambda <= min(S, 1-S) = {bound}"
                ),
            });
        }
        if !(outlier_multiplier > 1.0) {
            return Err(Error::InvalidArgument {
                detail: format!("owl outlier multiplier {outlier_multiplier} must be > 1"),
            });
        }
        Ok(OwlConfig {
            target_sparsity,
            lambda,
            outlier_multiplier,
        })
    }

    /// Default λ and M at the given target sparsity.
    pub fn with_defaults(target_sparsity: f64) -> Result<OwlConfig> {
        OwlConfig::new(target_sparsity, DEFAULT_LAMBDA, DEFAULT_OUTLIER_MULTIPLIER)
    }
}

// ── Outlier ratio ────────────────────────────────────────────────────────

/// Fraction of activation-scaled weight entries A[i][j] = |W[i][j]|·norms[j]
/// exceeding M · mean(A). Returns 0 when mean(A) = 0.
pub fn layer_outlier_ratio(w: &Tensor, norms: &[f64], outlier_multiplier: f64) -> Result<f64> {
    if w.rank() != 2 {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "outlier ratio requires a rank-2 weight, tensor '{}' has rank {}",
                w.name(),
                w.rank()
            ),
        });
    }
    let cols = w.shape()[1];
    if norms.len() != cols {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "tensor '{}' has {} input columns but {} activation norms were given",
                w.name(),
                cols,
                norms.len()
            ),
        });
    }
    if !(outlier_multiplier > 1.0) {
        return Err(Error::InvalidArgument {
            detail: format!("outlier multiplier {outlier_multiplier} must be > 1"),
        });
    }

    let numel = w.numel();
    let mut sum = 0.0f64;
    for (i, &v) in w.data().iter().enumerate() {
        sum += v.abs() as f64 * norms[i % cols];
    }
    let mean = sum / numel as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let threshold = outlier_multiplier * mean;
    let outliers = w
        .data()
        .iter()
        .enumerate()
        .filter(|(i, v)| v.abs() as f64 * norms[i % cols] > threshold)
        .count();
    Ok(outliers as f64 / numel as f64)
}

// ── Allocation ───────────────────────────────────────────────────────────

/// One layer's share of the sparsity budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsityEntry {
    pub layer: String,
    pub outlier_ratio: f64,
    pub assigned_sparsity: f64,
}

/// Per-layer sparsity assignments whose unweighted mean equals the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsityPlan {
    pub entries: Vec<LayerSparsityEntry>,
}

impl LayerSparsityPlan {
    pub fn sparsities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.assigned_sparsity).collect()
    }

    pub fn get(&self, layer: &str) -> Option<&LayerSparsityEntry> {
        self.entries.iter().find(|e| e.layer == layer)
    }
}

/// Distribute `cfg.target_sparsity` across layers from their outlier
/// ratios: layers with more outliers get lower sparsity, the extreme layer
/// sits exactly λ away from the target, and the mean stays at the target.
pub fn allocate_layer_sparsities(
    layers: &[(String, f64)],
    cfg: &OwlConfig,
) -> Result<LayerSparsityPlan> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument {
            detail: "cannot allocate sparsity over an empty layer list".into(),
        });
    }
    for (name, d) in layers {
        if !(0.0..=1.0).contains(d) {
            return Err(Error::InvalidArgument {
                detail: format!("outlier ratio {d} for layer '{name}' is outside [0, 1]"),
            });
        }
    }

    let n = layers.len() as f64;
    let mean: f64 = layers.iter().map(|(_, d)| d).sum::<f64>() / n;
    let max_dev = layers
        .iter()
        .map(|(_, d)| (d - mean).abs())
        .fold(0.0f64, f64::max);

    let entries = layers
        .iter()
        .map(|(name, d)| {
            let assigned = if max_dev == 0.0 {
                cfg.target_sparsity
            } else {
                cfg.target_sparsity + cfg.lambda * (mean - d) / max_dev
            };
            LayerSparsityEntry {
                layer: name.clone(),
                outlier_ratio: *d,
                assigned_sparsity: assigned,
            }
        })
        .collect();
    Ok(LayerSparsityPlan { entries })
}

// ── Component pruning ────────────────────────────────────────────────────

/// Pruned tensors plus the plan that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct OwlPruneOutcome {
    pub tensors: Vec<Tensor>,
    pub masks: Vec<PruneMask>,
    pub plan: LayerSparsityPlan,
}

/// OWL-prune a set of layers: compute each layer's outlier ratio, allocate
/// per-layer sparsities, then select and apply a mask per layer at its
/// assigned sparsity. Every layer needs activation norms for the outlier
/// scan (and for scoring when `method` is Wanda); selection under
/// magnitude remains pure |w| ranking.
pub fn owl_prune_component(
    tensors: &[&Tensor],
    norms: &BTreeMap<String, Vec<f64>>,
    method: Method,
    cfg: &OwlConfig,
    group: CompareGroup,
) -> Result<OwlPruneOutcome> {
    let mut ratios = Vec::with_capacity(tensors.len());
    for t in tensors {
        let layer_norms = norms.get(t.name()).ok_or_else(|| Error::MissingNorms {
            layer: t.name().to_string(),
        })?;
        let d = layer_outlier_ratio(t, layer_norms, cfg.outlier_multiplier)?;
        ratios.push((t.name().to_string(), d));
    }
    let plan = allocate_layer_sparsities(&ratios, cfg)?;

    let mut out_tensors = Vec::with_capacity(tensors.len());
    let mut masks = Vec::with_capacity(tensors.len());
    for (t, entry) in tensors.iter().zip(&plan.entries) {
        let layer_norms = norms.get(t.name()).expect("checked above");
        let pruned = prune_layer(
            t,
            method,
            entry.assigned_sparsity,
            Some(layer_norms),
            group,
        )?;
        out_tensors.push(pruned.tensor);
        masks.push(pruned.mask);
    }
    Ok(OwlPruneOutcome {
        tensors: out_tensors,
        masks,
        plan,
    })
}
