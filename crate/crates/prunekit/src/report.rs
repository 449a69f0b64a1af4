//! Machine-readable pruning reports, file digests, and mask export.
//!
//! The report surfaces both sparsity interpretations side by side: the
//! target over prunable weights that execution actually used, and the
//! achieved fraction over each component's full parameter count.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{CompareGroup, Method, PruneMask};
use crate::manifest::Component;
use crate::owl::LayerSparsityPlan;

/// Hex SHA-256 of a byte slice; used to pin the exact bytes read/written.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

// ── Report ───────────────────────────────────────────────────────────────

/// Outcome for one pruned tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub component: Component,
    pub method: Method,
    pub group: CompareGroup,
    pub target_sparsity: f64,
    pub params: u64,
    /// Entries that were nonzero before and are zero now.
    pub newly_zeroed: u64,
    /// All zero entries after pruning, including pre-existing ones.
    pub total_zeros: u64,
    pub achieved_sparsity: f64,
}

/// Aggregated outcome for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: Component,
    /// Requested sparsity; absent for the excluded component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sparsity: Option<f64>,
    pub total_params: u64,
    pub prunable_params: u64,
    /// Zeros within prunable tensors / prunable parameter count.
    pub achieved_over_prunable: f64,
    /// Zeros within all member tensors / total parameter count.
    pub achieved_over_total: f64,
}

/// Everything a pruning run produced, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub tool_version: String,
    pub method: Method,
    pub group: CompareGroup,
    pub tensors: Vec<TensorReport>,
    pub components: Vec<ComponentReport>,
    /// Zeros across the whole checkpoint / total parameter count.
    pub global_achieved_sparsity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owl_plan: Option<LayerSparsityPlan>,
    /// SHA-256 of the input checkpoint bytes (filled by the caller that
    /// performed the I/O; empty for in-memory runs).
    #[serde(default)]
    pub input_digest: String,
    /// SHA-256 of the output checkpoint bytes.
    #[serde(default)]
    pub output_digest: String,
}

impl PruneReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn parse(json: &str) -> Result<PruneReport> {
        serde_json::from_str(json).map_err(|e| Error::Json {
            what: "prune report".into(),
            source: e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PruneReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PruneReport::parse(&text)
    }
}

// ── Mask export ──────────────────────────────────────────────────────────

/// Serializable form of one tensor's prune mask: the comparison group, the
/// per-group pruned counts, and the pruned flat indices as run-length
/// encoded [start, length] pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub group: CompareGroup,
    pub k: Vec<u64>,
    pub runs: Vec<(u64, u64)>,
}

/// Convert masks to their export form, keyed by tensor name.
pub fn mask_export(masks: &[(String, PruneMask)]) -> BTreeMap<String, MaskEntry> {
    masks
        .iter()
        .map(|(name, mask)| {
            (
                name.clone(),
                MaskEntry {
                    group: mask.group(),
                    k: mask.group_counts().iter().map(|&c| c as u64).collect(),
                    runs: mask.runs(),
                },
            )
        })
        .collect()
}

pub fn write_masks(masks: &[(String, PruneMask)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&mask_export(masks))
        .expect("mask serialization cannot fail");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<BTreeMap<String, MaskEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        what: format!("mask file {}", path.display()),
        source: e,
    })
}
