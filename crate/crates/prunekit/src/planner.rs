//! Full-model sparsity planning across a two-component checkpoint.
//!
//! Two strategies are supported:
//!
//!   * ratio allocation — split a total sparsity budget so that each
//!     component contributes a fixed share of the pruned weights, flagging
//!     splits that would require pruning a component past 100%;
//!   * threshold sweep — start both components at their quality drop-off
//!     thresholds and walk both down in fixed steps, tabulating the total
//!     sparsity of each configuration.
//!
//! Totals are parameter-weighted over full component parameter counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Method;

/// Text-encoder parameter count of the reference two-component model
/// (a CLIP encoder at roughly 28% of 1.2B parameters).
pub const SD2_TEXT_PARAMS: u64 = 340_000_000;
/// Image-generator (U-Net) parameter count of the reference model.
pub const SD2_IMAGE_PARAMS: u64 = 860_000_000;

// ── Ratio allocation ─────────────────────────────────────────────────────

/// A total sparsity budget split between the two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityPlan {
    pub total_sparsity: f64,
    pub ratio_text: f64,
    pub ratio_image: f64,
    pub n_text: u64,
    pub n_image: u64,
    /// Required text-component sparsity; may exceed 1 when infeasible.
    pub s_text: f64,
    /// Required image-component sparsity; may exceed 1 when infeasible.
    pub s_image: f64,
    pub feasible: bool,
}

/// Split `total` sparsity so the text component contributes `ratio_text`
/// of all pruned weights (and the image component the rest). Infeasible
/// splits — where a component would need sparsity above 1 — are returned
/// with their out-of-range values rather than erroring, so tables can
/// render them as N/A.
pub fn allocate_by_ratio(
    total: f64,
    ratio_text: f64,
    n_text: u64,
    n_image: u64,
) -> Result<SparsityPlan> {
    if !(0.0..=1.0).contains(&total) {
        return Err(Error::InvalidSparsity { value: total });
    }
    if !(0.0..=1.0).contains(&ratio_text) {
        return Err(Error::InvalidArgument {
            detail: format!("ratio {ratio_text} is outside [0, 1]"),
        });
    }
    if n_text == 0 || n_image == 0 {
        return Err(Error::InvalidArgument {
            detail: "component parameter counts must be positive".into(),
        });
    }

    let pruned_total = total * (n_text + n_image) as f64;
    let s_text = ratio_text * pruned_total / n_text as f64;
    let s_image = (1.0 - ratio_text) * pruned_total / n_image as f64;
    Ok(SparsityPlan {
        total_sparsity: total,
        ratio_text,
        ratio_image: 1.0 - ratio_text,
        n_text,
        n_image,
        s_text,
        s_image,
        feasible: s_text <= 1.0 && s_image <= 1.0,
    })
}

/// Parameter-weighted total sparsity of a two-component configuration.
pub fn total_sparsity(s_text: f64, s_image: f64, n_text: u64, n_image: u64) -> f64 {
    (s_text * n_text as f64 + s_image * n_image as f64) / (n_text + n_image) as f64
}

// ── Threshold sweep ──────────────────────────────────────────────────────

pub const DEFAULT_SWEEP_STEP: f64 = 0.025;
pub const DEFAULT_SWEEP_COUNT: usize = 9;

/// One sweep configuration: both component sparsities and their total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s_text: f64,
    pub s_image: f64,
    pub total: f64,
    /// True when a negative sparsity was clamped to 0.
    pub clamped: bool,
}

/// A descending sweep from the drop-off thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub text_threshold: f64,
    pub image_threshold: f64,
    pub step: f64,
    pub count: usize,
    pub n_text: u64,
    pub n_image: u64,
    pub rows: Vec<SweepRow>,
}

/// Tabulate `count` configurations, decreasing both component sparsities
/// from their thresholds in increments of `step`. Values that would go
/// negative are clamped to 0 and flagged.
pub fn threshold_sweep(
    thr_text: f64,
    thr_image: f64,
    step: f64,
    count: usize,
    n_text: u64,
    n_image: u64,
) -> Result<SweepConfig> {
    for (what, v) in [("text threshold", thr_text), ("image threshold", thr_image)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument {
                detail: format!("{what} {v} is outside [0, 1]"),
            });
        }
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument {
            detail: format!("sweep step must be positive, got {step}"),
        });
    }
    if count == 0 {
        return Err(Error::InvalidArgument {
            detail: "sweep count must be at least 1".into(),
        });
    }
    if n_text == 0 || n_image == 0 {
        return Err(Error::InvalidArgument {
            detail: "component parameter counts must be positive".into(),
        });
    }

    let rows = (0..count)
        .map(|i| {
            let raw_text = thr_text - i as f64 * step;
            let raw_image = thr_image - i as f64 * step;
            let s_text = raw_text.max(0.0);
            let s_image = raw_image.max(0.0);
            SweepRow {
                s_text,
                s_image,
                total: total_sparsity(s_text, s_image, n_text, n_image),
                clamped: raw_text < 0.0 || raw_image < 0.0,
            }
        })
        .collect();

    Ok(SweepConfig {
        text_threshold: thr_text,
        image_threshold: thr_image,
        step,
        count,
        n_text,
        n_image,
        rows,
    })
}

// ── Drop-off thresholds ──────────────────────────────────────────────────

/// A pair of component sparsity targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub text: f64,
    pub image: f64,
}

/// The component sparsities beyond which generation quality collapses,
/// per scoring method: text 62.5% (magnitude) / 60% (Wanda), image 50%.
pub fn default_thresholds(method: Method) -> Thresholds {
    match method {
        Method::Magnitude => Thresholds {
            text: 0.625,
            image: 0.50,
        },
        Method::Wanda => Thresholds {
            text: 0.60,
            image: 0.50,
        },
    }
}

/// The recommended operating point: text 47.5% / image 35%, a 38.5% total
/// on the reference component sizes, sitting safely below both drop-offs.
pub fn recommended_config() -> Thresholds {
    Thresholds {
        text: 0.475,
        image: 0.35,
    }
}
