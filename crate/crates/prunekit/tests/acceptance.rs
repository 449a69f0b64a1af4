//! Acceptance gate: ten numbered criteria, one test and one PASS/FAIL
//! line each. Run `cargo test --test acceptance -- --nocapture` to see
//! every line; a failing criterion prints its line either way.
//!
//! Criterion 1 is expected to FAIL: see its comment for the arithmetic.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prunekit::calibration::{accumulate_norms, output_divergence};
use prunekit::container::{read_checkpoint_bytes, write_checkpoint_bytes, Checkpoint, Tensor};
use prunekit::fixture::toy_fixture;
use prunekit::kernels::{
    magnitude_scores, select_prune_mask, wanda_scores, CompareGroup, Method, PruneMask,
};
use prunekit::owl::{allocate_layer_sparsities, OwlConfig};
use prunekit::pipeline::{prune_checkpoint, PruneOptions};
use prunekit::planner::{
    allocate_by_ratio, recommended_config, threshold_sweep, total_sparsity, SD2_IMAGE_PARAMS,
    SD2_TEXT_PARAMS,
};

fn verdict(ok: bool, line: &str) -> bool {
    println!("[{}] {line}", if ok { "PASS" } else { "FAIL" });
    ok
}

// ── Shared oracle helpers ────────────────────────────────────────────────

/// Independent bottom-k oracle: indices of `scores` in ascending score
/// order, ties broken by ascending index, via a full stable sort.
fn sorted_ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// The round-half-up count the contract promises per comparison group.
fn oracle_count(sparsity: f64, n: usize) -> usize {
    ((sparsity * n as f64 + 0.5).floor() as usize).min(n)
}

/// Build the expected mask by sorting each group and taking the first k.
fn oracle_mask(scores: &[f64], group_len: usize, sparsity: f64) -> Vec<bool> {
    let mut pruned = vec![false; scores.len()];
    if group_len == 0 {
        return pruned;
    }
    for (g, chunk) in scores.chunks(group_len).enumerate() {
        let k = oracle_count(sparsity, chunk.len());
        for &local in sorted_ascending(chunk).iter().take(k) {
            pruned[g * group_len + local] = true;
        }
    }
    pruned
}

/// Group length for a mask over `shape`: rows for per_row, all for
/// per_tensor.
fn group_len(shape: &[usize], group: CompareGroup) -> usize {
    let numel: usize = shape.iter().product();
    match group {
        CompareGroup::PerTensor => numel,
        CompareGroup::PerRow => numel / shape[0],
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, name: &str, rank2: bool, quantized: bool) -> Tensor {
    let shape = if rank2 {
        let rows = rng.gen_range(1..=64usize);
        let cols = rng.gen_range(1..=(4096 / rows).min(256));
        vec![rows, cols]
    } else {
        vec![rng.gen_range(1..=4096usize)]
    };
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| {
            if quantized {
                // Heavy ties: a handful of repeated magnitudes plus zeros.
                [-1.0f32, -0.5, 0.0, 0.0, 0.5, 0.5, 1.0][rng.gen_range(0..7)]
            } else {
                rng.gen_range(-1.0f32..1.0)
            }
        })
        .collect();
    Tensor::new(name, shape, data).unwrap()
}

// ── Criteria ─────────────────────────────────────────────────────────────

/// EXPECTED FAILURE. With the full parameter counts n_text = 340e6 and
/// n_image = 860e6, the ratio formula reproduces eight of the published
/// table's eleven rows within ±0.5 pp, but three text-encoder entries
/// land outside it: 30% at 75:25 gives 79.41% vs the tabulated 80%
/// (0.59 pp), 30% at 25:75 gives 26.47% vs 27% (0.53 pp), and 50% at
/// 50:50 gives 88.24% vs 89% (0.76 pp). Every row fits if the component
/// shares are first rounded to 28%/72% — which is evidently how the
/// reference table was computed — but this suite pins the stated counts
/// rather than tuning them to pass.
#[test]
fn criterion_01_ratio_allocation_matches_reference_table() {
    let started = Instant::now();
    // (total, ratio_text, published s_text, published s_image)
    let rows: [(f64, f64, f64, f64); 11] = [
        (0.20, 0.75, 0.53, 0.07),
        (0.20, 0.50, 0.35, 0.14),
        (0.20, 0.25, 0.18, 0.21),
        (0.30, 0.75, 0.80, 0.10),
        (0.30, 0.50, 0.53, 0.21),
        (0.30, 0.25, 0.27, 0.31),
        (0.40, 0.50, 0.71, 0.28),
        (0.40, 0.25, 0.35, 0.42),
        (0.50, 0.50, 0.89, 0.35),
        (0.50, 0.25, 0.44, 0.52),
        (0.60, 0.25, 0.53, 0.63),
    ];

    let mut off_rows = Vec::new();
    for (total, ratio_text, text, image) in rows {
        let plan = allocate_by_ratio(total, ratio_text, SD2_TEXT_PARAMS, SD2_IMAGE_PARAMS).unwrap();
        let text_pp = (plan.s_text - text).abs() * 100.0;
        let image_pp = (plan.s_image - image).abs() * 100.0;
        if text_pp > 0.5 || image_pp > 0.5 {
            off_rows.push(format!(
                "total {:.0}% ratio {:.0}:{:.0} → text {:.2}% vs {:.0}% ({:.2} pp), \
                 image {:.2}% vs {:.0}% ({:.2} pp)",
                total * 100.0,
                ratio_text * 100.0,
                (1.0 - ratio_text) * 100.0,
                plan.s_text * 100.0,
                text * 100.0,
                text_pp,
                plan.s_image * 100.0,
                image * 100.0,
                image_pp,
            ));
        }
    }
    let in_time = started.elapsed() < Duration::from_secs(1);

    let ok = verdict(
        off_rows.is_empty() && in_time,
        "criterion 01 — all 11 ratio-table rows within ±0.5 pp of the reference values",
    );
    assert!(
        ok,
        "rows outside ±0.5 pp with n_text = 340e6, n_image = 860e6:\n{}",
        off_rows.join("\n")
    );
}

#[test]
fn criterion_02_threshold_sweep_reproduces_reference_totals() {
    let started = Instant::now();
    let sweep = threshold_sweep(0.625, 0.50, 0.025, 9, SD2_TEXT_PARAMS, SD2_IMAGE_PARAMS).unwrap();
    let rendered: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("{:.1}", r.total * 100.0))
        .collect();
    let expected = [
        "53.5", "51.0", "48.5", "46.0", "43.5", "41.0", "38.5", "36.0", "33.5",
    ];

    let rec = recommended_config();
    let rec_total = total_sparsity(rec.text, rec.image, SD2_TEXT_PARAMS, SD2_IMAGE_PARAMS);

    let totals_ok = rendered == expected;
    let rec_ok = (rec.text, rec.image) == (0.475, 0.35)
        && format!("{:.1}", rec_total * 100.0) == "38.5";
    let in_time = started.elapsed() < Duration::from_secs(1);

    let ok = verdict(
        totals_ok && rec_ok && in_time,
        "criterion 02 — sweep totals {53.5 … 33.5}% exact at one decimal; recommended 47.5/35.0 → 38.5%",
    );
    assert!(ok, "rendered totals {rendered:?}, recommended total {rec_total}");
}

#[test]
fn criterion_03_infeasibility_detection() {
    let infeasible = allocate_by_ratio(0.50, 0.75, SD2_TEXT_PARAMS, SD2_IMAGE_PARAMS).unwrap();
    let infeasible_ok = !infeasible.feasible
        && infeasible.s_text > 1.30
        && infeasible.s_text < 1.35
        && infeasible.s_image <= 1.0;

    let feasible = allocate_by_ratio(0.30, 0.75, SD2_TEXT_PARAMS, SD2_IMAGE_PARAMS).unwrap();
    let feasible_ok = feasible.feasible && (feasible.s_text - 0.794).abs() <= 1e-3;

    let ok = verdict(
        infeasible_ok && feasible_ok,
        "criterion 03 — 50%@75:25 infeasible with implied text in (1.30, 1.35); 30%@75:25 text ≈ 0.794",
    );
    assert!(
        ok,
        "infeasible row: feasible={} s_text={}; feasible row: feasible={} s_text={}",
        infeasible.feasible, infeasible.s_text, feasible.feasible, feasible.s_text
    );
}

#[test]
fn criterion_04_magnitude_masks_match_the_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let sparsities: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();

    let mut tensors_checked = 0usize;
    let mut mismatches = Vec::new();
    for case in 0..1_050usize {
        let rank2 = case % 2 == 0;
        let quantized = case % 3 == 0;
        let t = random_tensor(&mut rng, &format!("t{case}"), rank2, quantized);
        let group = if rank2 && case % 4 == 0 {
            CompareGroup::PerRow
        } else {
            CompareGroup::PerTensor
        };

        let scores = magnitude_scores(&t);
        let len = group_len(t.shape(), group);
        for &s in &sparsities {
            let mask = select_prune_mask(&scores, s, group).unwrap();
            let expect = oracle_mask(scores.values(), len, s);
            if mask.pruned() != expect.as_slice() {
                mismatches.push(format!("tensor {case} ({group}) at sparsity {s}"));
            }
        }
        tensors_checked += 1;
    }

    let ok = verdict(
        mismatches.is_empty() && tensors_checked >= 1_000,
        "criterion 04 — 1,050 seeded tensors × 11 sparsities equal the sort-and-take-k oracle",
    );
    assert!(ok, "oracle mismatches: {mismatches:?}");
}

#[test]
fn criterion_05_wanda_scores_and_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);

    // (a) 0-ULP scores on exactly representable inputs: small-integer
    // weights and norms, expected value computed in integer arithmetic.
    let mut ulp_exact = true;
    for _ in 0..50 {
        let rows = rng.gen_range(1..=16usize);
        let cols = rng.gen_range(1..=16usize);
        let ints: Vec<i32> = (0..rows * cols).map(|_| rng.gen_range(-8..=8)).collect();
        let norm_ints: Vec<i64> = (0..cols).map(|_| rng.gen_range(0..=8)).collect();

        let w = Tensor::new(
            "w",
            vec![rows, cols],
            ints.iter().map(|&v| v as f32).collect(),
        )
        .unwrap();
        let norms: Vec<f64> = norm_ints.iter().map(|&v| v as f64).collect();
        let scores = wanda_scores(&w, &norms).unwrap();

        for (i, &got) in scores.values().iter().enumerate() {
            let expect = (i64::from(ints[i].abs()) * norm_ints[i % cols]) as f64;
            if got.to_bits() != expect.to_bits() {
                ulp_exact = false;
            }
        }
    }

    // (b) per-row masks match a brute-force per-row bottom-k.
    let mut rows_match = true;
    for _ in 0..50 {
        let rows = rng.gen_range(1..=24usize);
        let cols = rng.gen_range(1..=96usize);
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
        let norms: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.0..3.0)).collect();
        let w = Tensor::new("w", vec![rows, cols], data.clone()).unwrap();

        for s in [0.1, 0.5, 0.9] {
            let mask = select_prune_mask(&wanda_scores(&w, &norms).unwrap(), s, CompareGroup::PerRow)
                .unwrap();
            // Brute force straight from the raw weight data.
            let mut expect = vec![false; rows * cols];
            for r in 0..rows {
                let row_scores: Vec<f64> = (0..cols)
                    .map(|c| f64::from(data[r * cols + c].abs()) * norms[c])
                    .collect();
                let k = oracle_count(s, cols);
                for &c in sorted_ascending(&row_scores).iter().take(k) {
                    expect[r * cols + c] = true;
                }
            }
            if mask.pruned() != expect.as_slice() {
                rows_match = false;
            }
        }
    }

    // (c) uniform norms reduce wanda to magnitude (power-of-two scale).
    let mut uniform_equal = true;
    for _ in 0..50 {
        let rows = rng.gen_range(1..=16usize);
        let cols = rng.gen_range(1..=64usize);
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
        let w = Tensor::new("w", vec![rows, cols], data).unwrap();
        let uniform = vec![2.0f64; cols];

        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for group in [CompareGroup::PerTensor, CompareGroup::PerRow] {
                let wanda_mask =
                    select_prune_mask(&wanda_scores(&w, &uniform).unwrap(), s, group).unwrap();
                let magnitude_mask = select_prune_mask(&magnitude_scores(&w), s, group).unwrap();
                if wanda_mask.pruned() != magnitude_mask.pruned() {
                    uniform_equal = false;
                }
            }
        }
    }

    let ok = verdict(
        ulp_exact && rows_match && uniform_equal,
        "criterion 05 — wanda scores 0-ULP exact; per-row masks match brute force; uniform norms = magnitude",
    );
    assert!(
        ok,
        "ulp_exact={ulp_exact} rows_match={rows_match} uniform_equal={uniform_equal}"
    );
}

#[test]
fn criterion_06_owl_allocation_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC6);
    let mut mean_ok = true;
    let mut bound_ok = true;
    let mut monotone_ok = true;

    for layers in 1..=64usize {
        for _draw in 0..4 {
            let target: f64 = rng.gen_range(0.1..0.9);
            let lambda = rng.gen_range(0.0..target.min(1.0 - target));
            let cfg = OwlConfig::new(target, lambda, 5.0).unwrap();

            let d: Vec<(String, f64)> = (0..layers)
                .map(|i| (format!("l{i}"), rng.gen_range(0.0..0.2)))
                .collect();
            let plan = allocate_layer_sparsities(&d, &cfg).unwrap();
            let s: Vec<f64> = plan.entries.iter().map(|e| e.assigned_sparsity).collect();

            let mean = s.iter().sum::<f64>() / s.len() as f64;
            if (mean - target).abs() > 1e-9 {
                mean_ok = false;
            }

            let d_min = d.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
            let d_max = d.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            if d_max > d_min {
                let max_dev = s
                    .iter()
                    .map(|&v| (v - target).abs())
                    .fold(0.0f64, f64::max);
                if (max_dev - lambda).abs() > 1e-12 {
                    bound_ok = false;
                }
            }

            for i in 0..layers {
                for j in 0..layers {
                    if d[i].1 > d[j].1 && s[i] > s[j] {
                        monotone_ok = false;
                    }
                }
            }
        }
    }

    let ok = verdict(
        mean_ok && bound_ok && monotone_ok,
        "criterion 06 — OWL: mean(S_l)=S to 1e-9; max|S_l−S|=λ when non-uniform; denser ⇒ sparser never",
    );
    assert!(ok, "mean_ok={mean_ok} bound_ok={bound_ok} monotone_ok={monotone_ok}");
}

#[test]
fn criterion_07_exact_counts_and_nesting() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC7);
    let sparsities: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let mut counts_ok = true;
    let mut nesting_ok = true;

    for case in 0..300usize {
        let rank2 = case % 2 == 0;
        let t = random_tensor(&mut rng, &format!("t{case}"), rank2, case % 3 == 0);
        let scores = magnitude_scores(&t);
        let groups: &[CompareGroup] = if rank2 {
            &[CompareGroup::PerTensor, CompareGroup::PerRow]
        } else {
            &[CompareGroup::PerTensor]
        };

        for &group in groups {
            let len = group_len(t.shape(), group);
            let mut previous: Option<PruneMask> = None;
            for &s in &sparsities {
                let mask = select_prune_mask(&scores, s, group).unwrap();
                if mask
                    .group_counts()
                    .iter()
                    .any(|&count| count != oracle_count(s, len))
                {
                    counts_ok = false;
                }
                if let Some(prev) = &previous {
                    if !prev.is_subset_of(&mask) {
                        nesting_ok = false;
                    }
                }
                previous = Some(mask);
            }
        }
    }

    let ok = verdict(
        counts_ok && nesting_ok,
        "criterion 07 — per-group pruned count = floor(s·n + 0.5); masks nest monotonically in s",
    );
    assert!(ok, "counts_ok={counts_ok} nesting_ok={nesting_ok}");
}

#[test]
fn criterion_08_end_to_end_determinism() {
    let fx = toy_fixture(8);
    let baseline = write_checkpoint_bytes(&fx.checkpoint).unwrap();

    let stats = accumulate_norms(&fx.model_spec, &fx.checkpoint, &fx.calibration).unwrap();
    let norms: BTreeMap<String, Vec<f64>> = stats
        .iter()
        .map(|(layer, s)| (layer.clone(), s.norms()))
        .collect();

    // Two repetitions at each thread count, all four byte-identical.
    let mut outputs = Vec::new();
    for _rep in 0..2 {
        for threads in [1, 8] {
            let opts = PruneOptions {
                threads,
                ..PruneOptions::new(Method::Wanda, 0.475, 0.35)
            };
            let outcome = prune_checkpoint(&fx.checkpoint, &fx.manifest, Some(&norms), &opts).unwrap();
            outputs.push(write_checkpoint_bytes(&outcome.checkpoint).unwrap());
        }
    }
    let deterministic = outputs.windows(2).all(|pair| pair[0] == pair[1]);

    let identity_outcome = prune_checkpoint(
        &fx.checkpoint,
        &fx.manifest,
        None,
        &PruneOptions::new(Method::Magnitude, 0.0, 0.0),
    )
    .unwrap();
    let identity = write_checkpoint_bytes(&identity_outcome.checkpoint).unwrap() == baseline;

    let ok = verdict(
        deterministic && identity,
        "criterion 08 — 1-thread and 8-thread runs byte-identical twice over; sparsity 0 is byte-identity",
    );
    assert!(ok, "deterministic={deterministic} identity={identity}");
}

#[test]
fn criterion_09_degradation_ordering_on_the_toy_model() {
    let started = Instant::now();
    let fx = toy_fixture(42);

    let divergence_at = |image_sparsity: f64| {
        let opts = PruneOptions::new(Method::Magnitude, 0.0, image_sparsity);
        let pruned = prune_checkpoint(&fx.checkpoint, &fx.manifest, None, &opts)
            .unwrap()
            .checkpoint;
        output_divergence(&fx.model_spec, &fx.checkpoint, &pruned, &fx.calibration).unwrap()
    };

    let light = divergence_at(0.1);
    let heavy = divergence_at(0.9);
    let in_time = started.elapsed() < Duration::from_secs(10);

    let ok = verdict(
        heavy.mean_rel_l2 > light.mean_rel_l2 && in_time,
        "criterion 09 — seed-42 toy model: divergence at image sparsity 0.9 exceeds 0.1",
    );
    assert!(
        ok,
        "mean divergence at 0.9 = {}, at 0.1 = {}, elapsed {:?}",
        heavy.mean_rel_l2, light.mean_rel_l2, started.elapsed()
    );
}

#[test]
fn criterion_10_container_round_trip_and_diagnostics() {
    // Property: read(write(C)) = C over random checkpoints.
    let shape = prop_oneof![
        3 => (1usize..=4096).prop_map(|n| vec![n]),
        1 => (1usize..=100_000).prop_map(|n| vec![n]),
        3 => (1usize..=24, 1usize..=24).prop_map(|(r, c)| vec![r, c]),
        1 => (1usize..=12, 1usize..=12, 1usize..=12).prop_map(|(a, b, c)| vec![a, b, c]),
    ];
    let tensors = prop::collection::vec((shape, any::<u64>()), 0..=32);
    let metadata = prop::collection::btree_map("[a-z]{1,8}", "[ -~]{0,12}", 0..=3);
    let checkpoints = (tensors, metadata).prop_map(|(specs, metadata)| {
        let mut ckpt = Checkpoint::new();
        ckpt.metadata = metadata.into_iter().collect();
        for (i, (shape, seed)) in specs.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|_| match rng.gen_range(0..8u8) {
                    0 => 0.0,
                    1 => -0.0,
                    2 => f32::MIN_POSITIVE / 2.0, // subnormal
                    3 => rng.gen_range(-1e30f32..1e30),
                    _ => rng.gen_range(-2.0f32..2.0),
                })
                .collect();
            let prefix = ["", "enc.", "blocks/0/", "w\"é "][i % 4];
            ckpt.insert(Tensor::new(format!("{prefix}t{i}"), shape, data).unwrap())
                .unwrap();
        }
        ckpt
    });

    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let round_trip = runner.run(&checkpoints, |ckpt| {
        let bytes = write_checkpoint_bytes(&ckpt).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = read_checkpoint_bytes(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &ckpt);
        Ok(())
    });

    // Malformed headers must be rejected, naming the offending tensor.
    let raw = |header: &str, payload_words: usize| {
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend(std::iter::repeat(1.0f32.to_le_bytes()).take(payload_words).flatten());
        bytes
    };
    let named_cases: Vec<(&str, Vec<u8>)> = vec![
        (
            // Declared shape [2,3] over a 5-float span.
            "w",
            raw(r#"{"w":{"dtype":"F32","shape":[2,3],"data_offsets":[0,20]}}"#, 5),
        ),
        (
            // Overlapping spans.
            "b",
            raw(
                concat!(
                    r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"#,
                    r#""b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#
                ),
                3,
            ),
        ),
        (
            // Gap between spans.
            "gap",
            raw(
                concat!(
                    r#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"#,
                    r#""gap":{"dtype":"F32","shape":[1],"data_offsets":[8,12]}}"#
                ),
                3,
            ),
        ),
        (
            // Unsupported dtype.
            "half",
            raw(r#"{"half":{"dtype":"F16","shape":[2],"data_offsets":[0,4]}}"#, 1),
        ),
    ];
    let mut diagnostics_ok = true;
    for (name, bytes) in &named_cases {
        match read_checkpoint_bytes(bytes) {
            Err(err) => {
                if !err.to_string().contains(name) {
                    diagnostics_ok = false;
                }
            }
            Ok(_) => diagnostics_ok = false,
        }
    }
    // Truncation and garbage must error too (no particular tensor to name).
    let truncated = 1_000u64.to_le_bytes().to_vec();
    if read_checkpoint_bytes(&truncated).is_ok() || read_checkpoint_bytes(b"abc").is_ok() {
        diagnostics_ok = false;
    }

    let ok = verdict(
        round_trip.is_ok() && diagnostics_ok,
        "criterion 10 — random checkpoints round-trip exactly; malformed headers name the tensor",
    );
    assert!(ok, "round_trip={round_trip:?} diagnostics_ok={diagnostics_ok}");
}
