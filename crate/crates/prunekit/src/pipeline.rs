//! End-to-end checkpoint pruning: classify tensors, resolve per-layer
//! sparsities (uniform or OWL-weighted), prune in parallel, and assemble
//! the report.
//!
//! Output is byte-deterministic regardless of thread count: every
//! per-tensor result is fully determined by its inputs, and results are
//! collected back in stored tensor order.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::container::{tensor_stats, Checkpoint};
use crate::error::{Error, Result};
use crate::kernels::{prune_layer, CompareGroup, Method, PruneMask};
use crate::manifest::{classify_tensors, component_profiles, prunable_set, Component, Manifest};
use crate::owl::{allocate_layer_sparsities, layer_outlier_ratio, LayerSparsityPlan, OwlConfig};
use crate::report::{ComponentReport, PruneReport, TensorReport};

/// OWL knobs for a pruning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwlParams {
    pub lambda: f64,
    pub outlier_multiplier: f64,
}

impl Default for OwlParams {
    fn default() -> Self {
        OwlParams {
            lambda: crate::owl::DEFAULT_LAMBDA,
            outlier_multiplier: crate::owl::DEFAULT_OUTLIER_MULTIPLIER,
        }
    }
}

/// Settings for [`prune_checkpoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOptions {
    pub method: Method,
    /// Target sparsity over the text encoder's prunable tensors.
    pub text_sparsity: f64,
    /// Target sparsity over the image generator's prunable tensors.
    pub image_sparsity: f64,
    /// Comparison group; defaults to the method's convention.
    pub group: Option<CompareGroup>,
    /// When set, distribute the text-encoder budget across its layers by
    /// outlier density instead of uniformly. Requires activation norms for
    /// every prunable text tensor. The image generator stays uniform.
    pub owl: Option<OwlParams>,
    /// Worker threads for per-tensor pruning; 0 uses the rayon default.
    pub threads: usize,
}

impl PruneOptions {
    pub fn new(method: Method, text_sparsity: f64, image_sparsity: f64) -> PruneOptions {
        PruneOptions {
            method,
            text_sparsity,
            image_sparsity,
            group: None,
            owl: None,
            threads: 0,
        }
    }
}

/// Result of a pruning run.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub checkpoint: Checkpoint,
    pub report: PruneReport,
    /// Masks for the pruned tensors, in stored order.
    pub masks: Vec<(String, PruneMask)>,
}

/// Prune both components of a checkpoint at their target sparsities.
/// Digest fields of the returned report are left empty; callers that
/// perform file I/O fill them from the exact bytes.
pub fn prune_checkpoint(
    ckpt: &Checkpoint,
    manifest: &Manifest,
    norms: Option<&BTreeMap<String, Vec<f64>>>,
    opts: &PruneOptions,
) -> Result<PruneOutcome> {
    for s in [opts.text_sparsity, opts.image_sparsity] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidSparsity { value: s });
        }
    }
    let group = opts.group.unwrap_or_else(|| opts.method.default_group());
    let classification = classify_tensors(ckpt, manifest)?;
    let profiles = component_profiles(ckpt, manifest)?;

    // Resolve per-tensor target sparsities for both components.
    let mut jobs: Vec<(String, f64)> = Vec::new();
    let mut owl_plan: Option<LayerSparsityPlan> = None;
    for (component, target) in [
        (Component::TextEncoder, opts.text_sparsity),
        (Component::ImageGenerator, opts.image_sparsity),
    ] {
        let names = prunable_set(ckpt, manifest, component)?;
        if names.is_empty() {
            continue;
        }
        if component == Component::TextEncoder && opts.owl.is_some() {
            let params = opts.owl.as_ref().expect("checked");
            let cfg = OwlConfig::new(target, params.lambda, params.outlier_multiplier)?;
            let ratios = names
                .iter()
                .map(|name| {
                    let t = ckpt.get(name).expect("prunable names exist");
                    let layer_norms = lookup_norms(norms, name)?;
                    let d = layer_outlier_ratio(t, layer_norms, cfg.outlier_multiplier)?;
                    Ok((name.clone(), d))
                })
                .collect::<Result<Vec<_>>>()?;
            let plan = allocate_layer_sparsities(&ratios, &cfg)?;
            jobs.extend(
                plan.entries
                    .iter()
                    .map(|e| (e.layer.clone(), e.assigned_sparsity)),
            );
            owl_plan = Some(plan);
        } else {
            jobs.extend(names.into_iter().map(|n| (n, target)));
        }
    }

    // Wanda needs norms before any work is scheduled, so errors are
    // reported deterministically.
    if opts.method == Method::Wanda {
        if norms.is_none() {
            return Err(Error::WandaRequiresNorms);
        }
        for (name, _) in &jobs {
            lookup_norms(norms, name)?;
        }
    }

    // Prune in parallel; collect preserves job order.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::InvalidArgument {
            detail: format!("cannot build a {}-thread pool: {e}", opts.threads),
        })?;
    let pruned = pool.install(|| {
        jobs.par_iter()
            .map(|(name, sparsity)| {
                let tensor = ckpt.get(name).expect("prunable names exist");
                let layer_norms = match opts.method {
                    Method::Wanda => Some(lookup_norms(norms, name)?.as_slice()),
                    Method::Magnitude => None,
                };
                prune_layer(tensor, opts.method, *sparsity, layer_norms, group)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Reassemble the checkpoint in stored order.
    let by_name: HashMap<&str, usize> = jobs
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.as_str(), i))
        .collect();
    let mut out = Checkpoint::new();
    out.metadata = ckpt.metadata.clone();
    for tensor in ckpt.iter() {
        match by_name.get(tensor.name()) {
            Some(&i) => out.insert(pruned[i].tensor.clone())?,
            None => out.insert(tensor.clone())?,
        }
    }

    // Per-tensor rows, in stored order.
    let mut tensor_reports = Vec::new();
    let mut masks = Vec::new();
    for tensor in ckpt.iter() {
        let Some(&i) = by_name.get(tensor.name()) else {
            continue;
        };
        let (job, result) = (&jobs[i], &pruned[i]);
        let before = tensor_stats(tensor);
        let after = tensor_stats(&result.tensor);
        tensor_reports.push(TensorReport {
            name: tensor.name().to_string(),
            component: classification.assignment[tensor.name()],
            method: opts.method,
            group,
            target_sparsity: job.1,
            params: tensor.numel() as u64,
            newly_zeroed: (after.zeros - before.zeros) as u64,
            total_zeros: after.zeros as u64,
            achieved_sparsity: after.sparsity,
        });
        masks.push((tensor.name().to_string(), result.mask.clone()));
    }

    // Component aggregates over the pruned checkpoint.
    let mut component_reports = Vec::new();
    let mut global_zeros = 0u64;
    for profile in &profiles {
        let mut prunable_zeros = 0u64;
        let mut total_zeros = 0u64;
        for name in &profile.tensor_names {
            let zeros = tensor_stats(out.get(name).expect("same tensor set")).zeros as u64;
            total_zeros += zeros;
            if by_name.contains_key(name.as_str()) {
                prunable_zeros += zeros;
            }
        }
        global_zeros += total_zeros;
        let target = match profile.component {
            Component::TextEncoder => Some(opts.text_sparsity),
            Component::ImageGenerator => Some(opts.image_sparsity),
            Component::Excluded => None,
        };
        component_reports.push(ComponentReport {
            component: profile.component,
            target_sparsity: target,
            total_params: profile.total_params,
            prunable_params: profile.prunable_params,
            achieved_over_prunable: ratio(prunable_zeros, profile.prunable_params),
            achieved_over_total: ratio(total_zeros, profile.total_params),
        });
    }

    let report = PruneReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        method: opts.method,
        group,
        tensors: tensor_reports,
        components: component_reports,
        global_achieved_sparsity: ratio(global_zeros, ckpt.total_params()),
        owl_plan,
        input_digest: String::new(),
        output_digest: String::new(),
    };

    Ok(PruneOutcome {
        checkpoint: out,
        report,
        masks,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn lookup_norms<'a>(
    norms: Option<&'a BTreeMap<String, Vec<f64>>>,
    layer: &str,
) -> Result<&'a Vec<f64>> {
    norms
        .and_then(|m| m.get(layer))
        .ok_or_else(|| Error::MissingNorms {
            layer: layer.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{accumulate_norms, norms_entries, norms_vectors};
    use crate::container::write_checkpoint_bytes;
    use crate::fixture::toy_fixture;
    use crate::kernels::expected_prune_count;

    fn fixture_norms(
        fx: &crate::fixture::Fixture,
    ) -> BTreeMap<String, Vec<f64>> {
        let stats = accumulate_norms(&fx.model_spec, &fx.checkpoint, &fx.calibration).unwrap();
        norms_vectors(&norms_entries(&stats))
    }

    #[test]
    fn zero_sparsity_is_byte_identity() {
        let fx = toy_fixture(7);
        let opts = PruneOptions::new(Method::Magnitude, 0.0, 0.0);
        let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts).unwrap();
        assert_eq!(
            write_checkpoint_bytes(&out.checkpoint).unwrap(),
            write_checkpoint_bytes(&fx.checkpoint).unwrap()
        );
        assert_eq!(out.report.global_achieved_sparsity, 0.0);
    }

    #[test]
    fn magnitude_run_hits_exact_counts_per_tensor() {
        let fx = toy_fixture(11);
        let opts = PruneOptions::new(Method::Magnitude, 0.475, 0.35);
        let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts).unwrap();

        for row in &out.report.tensors {
            let k = expected_prune_count(row.target_sparsity, row.params as usize);
            assert_eq!(row.newly_zeroed, k as u64, "tensor {}", row.name);
            assert_eq!(row.total_zeros, k as u64);
        }
        // Component report aggregates its member tensors.
        let text = &out.report.components[0];
        assert_eq!(text.component, Component::TextEncoder);
        assert_eq!(text.target_sparsity, Some(0.475));
        let text_zeros: u64 = out
            .report
            .tensors
            .iter()
            .filter(|t| t.component == Component::TextEncoder)
            .map(|t| t.total_zeros)
            .sum();
        assert_eq!(
            text.achieved_over_prunable,
            text_zeros as f64 / text.prunable_params as f64
        );
        assert!(text.achieved_over_total < text.achieved_over_prunable);
    }

    #[test]
    fn untouched_tensors_are_preserved() {
        let fx = toy_fixture(3);
        let opts = PruneOptions::new(Method::Magnitude, 0.9, 0.9);
        let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts).unwrap();
        // Biases, the excluded-by-glob embed, and the unmatched tensor
        // survive verbatim.
        for name in ["text.embed.weight", "text.l1.bias", "head.scale"] {
            assert_eq!(out.checkpoint.get(name), fx.checkpoint.get(name));
        }
        assert!(out.masks.iter().all(|(n, _)| n != "text.embed.weight"));
    }

    #[test]
    fn wanda_requires_norms_up_front() {
        let fx = toy_fixture(5);
        let opts = PruneOptions::new(Method::Wanda, 0.5, 0.5);
        assert!(matches!(
            prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts),
            Err(Error::WandaRequiresNorms)
        ));

        let mut norms = fixture_norms(&fx);
        norms.remove("unet.l2.weight");
        assert!(matches!(
            prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts),
            Err(Error::MissingNorms { layer }) if layer == "unet.l2.weight"
        ));
    }

    #[test]
    fn wanda_run_defaults_to_per_row() {
        let fx = toy_fixture(5);
        let norms = fixture_norms(&fx);
        let opts = PruneOptions::new(Method::Wanda, 0.5, 0.25);
        let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts).unwrap();
        assert_eq!(out.report.group, CompareGroup::PerRow);
        // Every row of every pruned tensor hits its per-row count.
        for (name, mask) in &out.masks {
            let target = out
                .report
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .unwrap()
                .target_sparsity;
            let row_len = mask.shape()[1];
            let k = expected_prune_count(target, row_len);
            assert!(mask.group_counts().iter().all(|&c| c == k));
        }
    }

    #[test]
    fn owl_reweights_text_layers_and_reports_the_plan() {
        let fx = toy_fixture(9);
        let norms = fixture_norms(&fx);
        let mut opts = PruneOptions::new(Method::Magnitude, 0.5, 0.25);
        opts.owl = Some(OwlParams::default());
        let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts).unwrap();

        let plan = out.report.owl_plan.as_ref().expect("plan recorded");
        // The fixture has one prunable text tensor, so its assignment is
        // exactly the target.
        assert_eq!(plan.entries.len(), 1);
        assert_eq!(plan.entries[0].layer, "text.l1.weight");
        assert_eq!(plan.entries[0].assigned_sparsity, 0.5);

        // OWL on text never changes image-component targets.
        for row in &out.report.tensors {
            if row.component == Component::ImageGenerator {
                assert_eq!(row.target_sparsity, 0.25);
            }
        }

        // Missing norms fail even under magnitude, because the outlier
        // scan needs them.
        assert!(matches!(
            prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts),
            Err(Error::MissingNorms { .. })
        ));
    }

    #[test]
    fn owl_lambda_must_fit_the_target() {
        let fx = toy_fixture(9);
        let norms = fixture_norms(&fx);
        let mut opts = PruneOptions::new(Method::Magnitude, 0.03, 0.25);
        opts.owl = Some(OwlParams::default()); // λ = 0.08 > min(S, 1−S)
        assert!(prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts).is_err());
    }

    #[test]
    fn thread_count_does_not_change_the_bytes() {
        let fx = toy_fixture(42);
        let norms = fixture_norms(&fx);
        let mut bytes = Vec::new();
        for threads in [1, 4] {
            let mut opts = PruneOptions::new(Method::Wanda, 0.6, 0.5);
            opts.threads = threads;
            let out = prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts).unwrap();
            bytes.push(write_checkpoint_bytes(&out.checkpoint).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn invalid_sparsity_is_rejected() {
        let fx = toy_fixture(1);
        let opts = PruneOptions::new(Method::Magnitude, 1.2, 0.0);
        assert!(matches!(
            prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts),
            Err(Error::InvalidSparsity { .. })
        ));
    }
}
