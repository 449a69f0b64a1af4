//! Pruning kernels: weight scoring (magnitude, Wanda), deterministic
//! bottom-k mask selection within a comparison group, and mask application.
//!
//! Selection is exact and platform-independent: within each comparison
//! group of n entries, k = floor(sparsity·n + 0.5) lowest-scoring entries
//! are pruned, ties broken by ascending flat index. Pre-existing zeros
//! score 0 and are therefore selected first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::error::{Error, Result};

// ── Enums ────────────────────────────────────────────────────────────────

/// Weight scoring method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Score by |w| alone.
    Magnitude,
    /// Score by |w| scaled by the input activation norm of its column.
    Wanda,
}

impl Method {
    /// The comparison group the method conventionally uses: plain argmin
    /// over the whole tensor for magnitude, per-output-row for Wanda.
    pub fn default_group(self) -> CompareGroup {
        match self {
            Method::Magnitude => CompareGroup::PerTensor,
            Method::Wanda => CompareGroup::PerRow,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Magnitude => "magnitude",
            Method::Wanda => "wanda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(Method::Magnitude),
            "wanda" => Ok(Method::Wanda),
            other => Err(Error::InvalidArgument {
                detail: format!("unknown method '{other}' (expected 'magnitude' or 'wanda')"),
            }),
        }
    }
}

/// The set of weights ranked together when choosing the bottom k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareGroup {
    /// One group spanning the whole tensor.
    PerTensor,
    /// One group per leading-dimension row (output neuron); for rank ≥ 3
    /// the trailing dimensions are flattened into the row.
    PerRow,
}

impl CompareGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareGroup::PerTensor => "per_tensor",
            CompareGroup::PerRow => "per_row",
        }
    }
}

impl fmt::Display for CompareGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompareGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_tensor" => Ok(CompareGroup::PerTensor),
            "per_row" => Ok(CompareGroup::PerRow),
            other => Err(Error::InvalidArgument {
                detail: format!("unknown group '{other}' (expected 'per_tensor' or 'per_row')"),
            }),
        }
    }
}

// ── Scores ───────────────────────────────────────────────────────────────

/// Non-negative importance scores, one per weight, same shape as the
/// scored tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// (group count, group length) under a comparison group. Per-row
    /// grouping splits along the leading dimension.
    fn group_layout(&self, group: CompareGroup) -> (usize, usize) {
        match group {
            CompareGroup::PerTensor => (1, self.values.len()),
            CompareGroup::PerRow => {
                let rows = self.shape[0];
                (rows, self.values.len() / rows)
            }
        }
    }
}

/// Magnitude scores: |w| elementwise.
pub fn magnitude_scores(w: &Tensor) -> ScoreMatrix {
    ScoreMatrix {
        shape: w.shape().to_vec(),
        values: w.data().iter().map(|&v| v.abs() as f64).collect(),
    }
}

/// Wanda scores for a rank-2 weight [rows = outputs, cols = inputs]:
/// score[i][j] = |W[i][j]| · norms[j].
pub fn wanda_scores(w: &Tensor, norms: &[f64]) -> Result<ScoreMatrix> {
    if w.rank() != 2 {
        return Err(Error::WandaRequiresRank2 {
            tensor: w.name().to_string(),
            rank: w.rank(),
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
    if let Some(bad) = norms.iter().find(|n| !n.is_finite() || **n < 0.0) {
        return Err(Error::InvalidArgument {
            detail: format!("activation norms must be finite and >= 0, got {bad}"),
        });
    }
    let values = w
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v.abs() as f64 * norms[i % cols])
        .collect();
    Ok(ScoreMatrix {
        shape: w.shape().to_vec(),
        values,
    })
}

// ── Masks ────────────────────────────────────────────────────────────────

/// Boolean prune decisions over a tensor's flat layout (true = zero it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    shape: Vec<usize>,
    pruned: Vec<bool>,
    group: CompareGroup,
}

impl PruneMask {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn group(&self) -> CompareGroup {
        self.group
    }

    pub fn pruned(&self) -> &[bool] {
        &self.pruned
    }

    /// Total number of pruned entries.
    pub fn count(&self) -> usize {
        self.pruned.iter().filter(|&&p| p).count()
    }

    /// Pruned count per comparison group, in group order.
    pub fn group_counts(&self) -> Vec<usize> {
        let (groups, len) = match self.group {
            CompareGroup::PerTensor => (1, self.pruned.len()),
            CompareGroup::PerRow => (self.shape[0], self.pruned.len() / self.shape[0]),
        };
        (0..groups)
            .map(|g| {
                self.pruned[g * len..(g + 1) * len]
                    .iter()
                    .filter(|&&p| p)
                    .count()
            })
            .collect()
    }

    /// True when every entry pruned here is also pruned in `other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.shape == other.shape
            && self
                .pruned
                .iter()
                .zip(&other.pruned)
                .all(|(&a, &b)| !a || b)
    }

    /// Run-length encoding of the pruned flat indices: (start, length)
    /// pairs in ascending order.
    pub fn runs(&self) -> Vec<(u64, u64)> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.pruned.len() {
            if self.pruned[i] {
                let start = i;
                while i < self.pruned.len() && self.pruned[i] {
                    i += 1;
                }
                runs.push((start as u64, (i - start) as u64));
            } else {
                i += 1;
            }
        }
        runs
    }

    /// Rebuild a mask from its run-length encoding.
    pub fn from_runs(
        shape: Vec<usize>,
        group: CompareGroup,
        runs: &[(u64, u64)],
    ) -> Result<PruneMask> {
        let numel: usize = shape.iter().product();
        let mut pruned = vec![false; numel];
        for &(start, len) in runs {
            let (start, len) = (start as usize, len as usize);
            if start + len > numel {
                return Err(Error::InvalidArgument {
                    detail: format!(
                        "run [{start}, +{len}] exceeds mask length {numel}"
                    ),
                });
            }
            pruned[start..start + len].fill(true);
        }
        Ok(PruneMask {
            shape,
            pruned,
            group,
        })
    }
}

/// Entries to prune in a group of n at the given sparsity: round-half-up.
pub fn expected_prune_count(sparsity: f64, n: usize) -> usize {
    ((sparsity * n as f64 + 0.5).floor() as usize).min(n)
}

/// Mark the k lowest-scoring entries of each comparison group, where
/// k = floor(sparsity·n + 0.5) and ties break by ascending flat index.
pub fn select_prune_mask(
    scores: &ScoreMatrix,
    sparsity: f64,
    group: CompareGroup,
) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidSparsity { value: sparsity });
    }
    let (groups, len) = scores.group_layout(group);
    let mut pruned = vec![false; scores.values.len()];
    let k = expected_prune_count(sparsity, len);

    for g in 0..groups {
        let base = g * len;
        if k == 0 {
            continue;
        }
        if k == len {
            pruned[base..base + len].fill(true);
            continue;
        }
        let slice = &scores.values[base..base + len];
        let mut order: Vec<usize> = (0..len).collect();
        // Total order (score, index) makes the bottom-k set unique, so the
        // unstable selection cannot introduce nondeterminism.
        order.select_nth_unstable_by(k - 1, |&a, &b| {
            slice[a].total_cmp(&slice[b]).then(a.cmp(&b))
        });
        for &idx in &order[..k] {
            pruned[base + idx] = true;
        }
    }

    Ok(PruneMask {
        shape: scores.shape.clone(),
        pruned,
        group,
    })
}

/// Zero the masked entries; the input tensor is untouched.
pub fn apply_mask(w: &Tensor, mask: &PruneMask) -> Result<Tensor> {
    if w.shape() != mask.shape() {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "tensor '{}' has shape {:?} but the mask has shape {:?}",
                w.name(),
                w.shape(),
                mask.shape()
            ),
        });
    }
    let data = w
        .data()
        .iter()
        .zip(&mask.pruned)
        .map(|(&v, &p)| if p { 0.0 } else { v })
        .collect();
    w.with_data(data)
}

// ── Layer pruning ────────────────────────────────────────────────────────

/// A pruned tensor together with the mask that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedLayer {
    pub tensor: Tensor,
    pub mask: PruneMask,
}

/// Score, select, and apply in one step. Wanda requires rank-2 weights and
/// activation norms; rank ≥ 3 tensors (convolutions) are magnitude-only.
pub fn prune_layer(
    w: &Tensor,
    method: Method,
    sparsity: f64,
    norms: Option<&[f64]>,
    group: CompareGroup,
) -> Result<PrunedLayer> {
    let scores = match method {
        Method::Magnitude => magnitude_scores(w),
        Method::Wanda => {
            let norms = norms.ok_or(Error::WandaRequiresNorms)?;
            wanda_scores(w, norms)?
        }
    };
    let mask = select_prune_mask(&scores, sparsity, group)?;
    let tensor = apply_mask(w, &mask)?;
    Ok(PrunedLayer { tensor, mask })
}
