//! prunekit command line: inspect checkpoints, plan sparsity budgets,
//! calibrate activation norms, prune, and compare dense vs pruned outputs.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use prunekit::calibration::{
    accumulate_norms, accumulate_norms_parallel, norms_entries, norms_vectors, output_divergence,
    read_calibration, read_norms, write_norms, ToyModelSpec,
};
use prunekit::container::{
    read_checkpoint, read_checkpoint_bytes, tensor_stats, write_checkpoint_bytes,
};
use prunekit::error::{Error, Result};
use prunekit::fixture::write_fixture;
use prunekit::kernels::{CompareGroup, Method};
use prunekit::manifest::{classify_tensors, component_profiles, Component, Manifest};
use prunekit::owl::{DEFAULT_LAMBDA, DEFAULT_OUTLIER_MULTIPLIER};
use prunekit::pipeline::{prune_checkpoint, OwlParams, PruneOptions};
use prunekit::planner::{
    allocate_by_ratio, default_thresholds, threshold_sweep, DEFAULT_SWEEP_COUNT,
    DEFAULT_SWEEP_STEP, SD2_IMAGE_PARAMS, SD2_TEXT_PARAMS,
};
use prunekit::report::{sha256_hex, write_masks};

// ── Argument types ───────────────────────────────────────────────────────

/// A text:image split such as `75:25`. Terms are weights, not required to
/// sum to 100.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    text: f64,
    image: f64,
}

impl Ratio {
    fn text_fraction(self) -> f64 {
        self.text / (self.text + self.image)
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Ratio, String> {
        let (t, i) = s
            .split_once(':')
            .ok_or_else(|| format!("expected TEXT:IMAGE (e.g. 75:25), got {s:?}"))?;
        let text: f64 = t
            .trim()
            .parse()
            .map_err(|_| format!("ratio term {t:?} is not a number"))?;
        let image: f64 = i
            .trim()
            .parse()
            .map_err(|_| format!("ratio term {i:?} is not a number"))?;
        if !text.is_finite() || !image.is_finite() || text < 0.0 || image < 0.0 {
            return Err(format!("ratio terms must be finite and nonnegative, got {s:?}"));
        }
        if text + image == 0.0 {
            return Err("ratio terms must not both be zero".into());
        }
        Ok(Ratio { text, image })
    }
}

#[derive(Parser)]
#[command(
    name = "prunekit",
    version,
    about = "Post-training pruning for multi-component model checkpoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a checkpoint's tensors, zeros, and component split
    Inspect(InspectArgs),
    /// Split a total sparsity budget between components by ratio
    Plan(PlanArgs),
    /// Walk component sparsities downward from thresholds and tabulate totals
    Sweep(SweepArgs),
    /// Run calibration data through a model spec and save activation norms
    Calibrate(CalibrateArgs),
    /// Prune a checkpoint and write the result, report, and masks
    Prune(PruneArgs),
    /// Compare dense vs pruned model outputs on a calibration batch
    Eval(EvalArgs),
    /// Diff two checkpoints and report the sparsity added by pruning
    Report(ReportArgs),
    /// Generate a seeded toy fixture (checkpoint, manifest, model, data)
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint to inspect
    #[arg(long)]
    checkpoint: PathBuf,
    /// Component manifest; adds per-component summaries
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write machine-readable output to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Total sparsity over both components, in [0,1]
    #[arg(long)]
    total: f64,
    /// Share of pruned weights per component, as TEXT:IMAGE (e.g. 75:25)
    #[arg(long)]
    ratio: Ratio,
    /// Text-encoder parameter count
    #[arg(long, default_value_t = SD2_TEXT_PARAMS)]
    n_text: u64,
    /// Image-generator parameter count
    #[arg(long, default_value_t = SD2_IMAGE_PARAMS)]
    n_image: u64,
    /// Write the plan as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Method whose performance-threshold pair seeds the sweep
    #[arg(long, default_value = "magnitude")]
    method: Method,
    /// Starting text-encoder sparsity; defaults to the method's threshold
    #[arg(long)]
    text_threshold: Option<f64>,
    /// Starting image-generator sparsity; defaults to the method's threshold
    #[arg(long)]
    image_threshold: Option<f64>,
    /// Decrement applied to both sparsities per row
    #[arg(long, default_value_t = DEFAULT_SWEEP_STEP)]
    step: f64,
    /// Number of rows
    #[arg(long, default_value_t = DEFAULT_SWEEP_COUNT)]
    count: usize,
    /// Text-encoder parameter count
    #[arg(long, default_value_t = SD2_TEXT_PARAMS)]
    n_text: u64,
    /// Image-generator parameter count
    #[arg(long, default_value_t = SD2_IMAGE_PARAMS)]
    n_image: u64,
    /// Write the sweep as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Model spec (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Checkpoint holding the model's weights
    #[arg(long)]
    checkpoint: PathBuf,
    /// Calibration matrix (CALB file)
    #[arg(long)]
    data: PathBuf,
    /// Where to write the norms JSON
    #[arg(long)]
    out: PathBuf,
    /// Accumulate strictly in row order (bit-exact, single-threaded)
    #[arg(long)]
    deterministic: bool,
    /// Write a run summary as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    /// Checkpoint to prune
    #[arg(long)]
    checkpoint: PathBuf,
    /// Component manifest
    #[arg(long)]
    manifest: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Scoring method: magnitude or wanda
    #[arg(long, default_value = "magnitude")]
    method: Method,
    /// Target sparsity for the text encoder's prunable tensors
    #[arg(long)]
    text_sparsity: f64,
    /// Target sparsity for the image generator's prunable tensors
    #[arg(long)]
    image_sparsity: f64,
    /// Activation norms JSON (required for wanda and --owl)
    #[arg(long)]
    norms: Option<PathBuf>,
    /// Comparison group (per_tensor or per_row); defaults by method
    #[arg(long)]
    group: Option<CompareGroup>,
    /// Distribute the text-encoder budget by layer outlier density
    #[arg(long)]
    owl: bool,
    /// Bound on per-layer deviation from the target sparsity
    #[arg(long, default_value_t = DEFAULT_LAMBDA, requires = "owl")]
    owl_lambda: f64,
    /// Outlier threshold as a multiple of the mean score
    #[arg(long, default_value_t = DEFAULT_OUTLIER_MULTIPLIER, requires = "owl")]
    owl_m: f64,
    /// Worker threads for tensor pruning; 0 uses the default pool size
    #[arg(long, env = "PRUNEKIT_THREADS", default_value_t = 0)]
    threads: usize,
    /// Write the full JSON report to this path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write run-length-encoded prune masks to this path
    #[arg(long)]
    masks: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model spec (JSON)
    #[arg(long)]
    model: PathBuf,
    /// Dense (reference) checkpoint
    #[arg(long)]
    dense: PathBuf,
    /// Pruned checkpoint
    #[arg(long)]
    pruned: PathBuf,
    /// Evaluation batch (CALB file)
    #[arg(long)]
    data: PathBuf,
    /// Write divergence numbers as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Dense (reference) checkpoint
    #[arg(long)]
    dense: PathBuf,
    /// Pruned checkpoint
    #[arg(long)]
    pruned: PathBuf,
    /// Component manifest; adds per-component aggregation
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write machine-readable output to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    /// Directory to write into (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; identical seeds give identical files
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

// ── Entry point ──────────────────────────────────────────────────────────

fn main() -> ExitCode {
    // Die quietly on a closed pipe (`prunekit ... | head`) instead of
    // panicking when stdout goes away mid-write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Inspect(args) => cmd_inspect(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Prune(args) => cmd_prune(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::Fixture(args) => cmd_fixture(args),
    }
}

// ── Commands ─────────────────────────────────────────────────────────────

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let manifest = args.manifest.as_deref().map(Manifest::load).transpose()?;

    let assignment = match &manifest {
        Some(m) => {
            let classification = classify_tensors(&ckpt, m)?;
            for warning in &classification.warnings {
                eprintln!("warning: {warning}");
            }
            classification.assignment
        }
        None => BTreeMap::new(),
    };

    println!(
        "checkpoint {} ({} tensors, {} params)",
        args.checkpoint.display(),
        ckpt.len(),
        ckpt.total_params()
    );
    for (key, value) in &ckpt.metadata {
        println!("  metadata {key} = {value}");
    }

    let rows: Vec<Vec<String>> = ckpt
        .iter()
        .map(|t| {
            let stats = tensor_stats(t);
            let component = assignment
                .get(t.name())
                .map_or_else(|| "-".to_string(), |c| c.to_string());
            vec![
                t.name().to_string(),
                format!("{:?}", t.shape()),
                stats.count.to_string(),
                stats.zeros.to_string(),
                pct(stats.sparsity),
                component,
            ]
        })
        .collect();
    print_table(
        &["tensor", "shape", "params", "zeros", "sparsity", "component"],
        &rows,
    );

    let profiles = match &manifest {
        Some(m) => {
            let profiles = component_profiles(&ckpt, m)?;
            let rows: Vec<Vec<String>> = profiles
                .iter()
                .map(|p| {
                    vec![
                        p.component.to_string(),
                        p.tensor_names.len().to_string(),
                        p.total_params.to_string(),
                        p.prunable_params.to_string(),
                    ]
                })
                .collect();
            println!();
            print_table(&["component", "tensors", "params", "prunable"], &rows);
            Some(profiles)
        }
        None => None,
    };

    if let Some(path) = &args.json {
        let tensors: Vec<serde_json::Value> = ckpt
            .iter()
            .map(|t| {
                let stats = tensor_stats(t);
                json!({
                    "name": t.name(),
                    "shape": t.shape(),
                    "params": stats.count,
                    "zeros": stats.zeros,
                    "sparsity": stats.sparsity,
                    "component": assignment.get(t.name()),
                })
            })
            .collect();
        write_json_file(
            path,
            &json!({
                "path": args.checkpoint,
                "metadata": ckpt.metadata,
                "tensors": tensors,
                "components": profiles,
            }),
        )?;
    }
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let plan = allocate_by_ratio(args.total, args.ratio.text_fraction(), args.n_text, args.n_image)?;
    println!(
        "plan: total {} split {}:{} (n_text {}, n_image {})",
        pct(plan.total_sparsity),
        args.ratio.text,
        args.ratio.image,
        plan.n_text,
        plan.n_image
    );
    print_table(
        &["component", "target"],
        &[
            vec!["text_encoder".into(), pct(plan.s_text)],
            vec!["image_generator".into(), pct(plan.s_image)],
        ],
    );
    if plan.feasible {
        println!("feasible: yes");
    } else {
        println!("feasible: no (a component target exceeds 100%)");
    }
    if let Some(path) = &args.json {
        write_json_file(path, &plan)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let defaults = default_thresholds(args.method);
    let text = args.text_threshold.unwrap_or(defaults.text);
    let image = args.image_threshold.unwrap_or(defaults.image);
    let sweep = threshold_sweep(text, image, args.step, args.count, args.n_text, args.n_image)?;

    println!(
        "sweep: from text {} / image {} in steps of {} ({} rows)",
        pct(sweep.text_threshold),
        pct(sweep.image_threshold),
        pct(sweep.step),
        sweep.count
    );
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mark = if row.clamped { " *" } else { "" };
            vec![
                (i + 1).to_string(),
                pct(row.s_text),
                pct(row.s_image),
                format!("{}{}", pct(row.total), mark),
            ]
        })
        .collect();
    print_table(&["row", "text", "image", "total"], &rows);
    if sweep.rows.iter().any(|r| r.clamped) {
        println!("* sparsity clamped at 0");
    }
    if let Some(path) = &args.json {
        write_json_file(path, &sweep)?;
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let spec = ToyModelSpec::load(&args.model)?;
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let data = read_calibration(&args.data)?;

    let stats = if args.deterministic {
        accumulate_norms(&spec, &ckpt, &data)?
    } else {
        accumulate_norms_parallel(&spec, &ckpt, &data, 16)?
    };
    let entries = norms_entries(&stats);
    write_norms(&entries, &args.out)?;

    println!(
        "calibrated {} rows through {} linear layers",
        data.rows(),
        entries.len()
    );
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|(layer, e)| {
            vec![
                layer.clone(),
                e.rows_seen.to_string(),
                e.norms.len().to_string(),
            ]
        })
        .collect();
    print_table(&["layer", "rows seen", "width"], &rows);
    println!("norms written to {}", args.out.display());

    if let Some(path) = &args.json {
        write_json_file(
            path,
            &json!({
                "rows": data.rows(),
                "deterministic": args.deterministic,
                "norms_path": args.out,
                "layers": entries,
            }),
        )?;
    }
    Ok(())
}

fn cmd_prune(args: PruneArgs) -> Result<()> {
    for (flag, value) in [
        ("--text-sparsity", args.text_sparsity),
        ("--image-sparsity", args.image_sparsity),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument {
                detail: format!("{flag} must be in [0, 1], got {value}"),
            });
        }
    }
    if args.method == Method::Wanda && args.norms.is_none() {
        return Err(Error::InvalidArgument {
            detail: "wanda requires --norms".into(),
        });
    }
    if args.owl && args.norms.is_none() {
        return Err(Error::InvalidArgument {
            detail: "--owl requires --norms".into(),
        });
    }

    let input_bytes = fs::read(&args.checkpoint).map_err(|e| Error::Io {
        path: args.checkpoint.clone(),
        source: e,
    })?;
    let ckpt = read_checkpoint_bytes(&input_bytes)?;
    let manifest = Manifest::load(&args.manifest)?;
    let norms = match &args.norms {
        Some(path) => Some(norms_vectors(&read_norms(path)?)),
        None => None,
    };

    let opts = PruneOptions {
        method: args.method,
        text_sparsity: args.text_sparsity,
        image_sparsity: args.image_sparsity,
        group: args.group,
        owl: args.owl.then_some(OwlParams {
            lambda: args.owl_lambda,
            outlier_multiplier: args.owl_m,
        }),
        threads: args.threads,
    };
    let mut outcome = prune_checkpoint(&ckpt, &manifest, norms.as_ref(), &opts)?;

    let output_bytes = write_checkpoint_bytes(&outcome.checkpoint)?;
    fs::write(&args.out, &output_bytes).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    outcome.report.input_digest = sha256_hex(&input_bytes);
    outcome.report.output_digest = sha256_hex(&output_bytes);

    let report = &outcome.report;
    println!(
        "pruned {} of {} tensors with {} ({})",
        report.tensors.len(),
        ckpt.len(),
        report.method,
        report.group
    );
    let rows: Vec<Vec<String>> = report
        .components
        .iter()
        .map(|c| {
            vec![
                c.component.to_string(),
                c.target_sparsity.map_or_else(|| "-".into(), pct),
                pct(c.achieved_over_prunable),
                pct(c.achieved_over_total),
            ]
        })
        .collect();
    print_table(
        &["component", "target", "achieved/prunable", "achieved/total"],
        &rows,
    );
    println!(
        "global achieved sparsity {}",
        pct(report.global_achieved_sparsity)
    );

    if let Some(plan) = &report.owl_plan {
        println!(
            "owl plan (lambda {}, multiplier {})",
            args.owl_lambda, args.owl_m
        );
        let rows: Vec<Vec<String>> = plan
            .entries
            .iter()
            .map(|e| {
                vec![
                    e.layer.clone(),
                    pct(e.outlier_ratio),
                    pct(e.assigned_sparsity),
                ]
            })
            .collect();
        print_table(&["layer", "outliers", "sparsity"], &rows);
    }

    println!("checkpoint written to {}", args.out.display());
    if let Some(path) = &args.report {
        outcome.report.save(path)?;
        println!("report written to {}", path.display());
    }
    if let Some(path) = &args.masks {
        write_masks(&outcome.masks, path)?;
        println!("masks written to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let spec = ToyModelSpec::load(&args.model)?;
    let dense = read_checkpoint(&args.dense)?;
    let pruned = read_checkpoint(&args.pruned)?;
    let batch = read_calibration(&args.data)?;

    let divergence = output_divergence(&spec, &dense, &pruned, &batch)?;
    println!("output divergence over {} rows", batch.rows());
    println!("  mean rel l2  {:.6}", divergence.mean_rel_l2);
    println!("  max rel l2   {:.6}", divergence.max_rel_l2);

    if let Some(path) = &args.json {
        write_json_file(
            path,
            &json!({
                "rows": batch.rows(),
                "mean_rel_l2": divergence.mean_rel_l2,
                "max_rel_l2": divergence.max_rel_l2,
            }),
        )?;
    }
    Ok(())
}

/// Per-tensor diff between a dense checkpoint and its pruned counterpart.
#[derive(Serialize)]
struct TensorDiff {
    name: String,
    params: u64,
    /// Entries zero in the pruned tensor but nonzero in the dense one.
    newly_zeroed: u64,
    added_sparsity: f64,
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let dense = read_checkpoint(&args.dense)?;
    let pruned = read_checkpoint(&args.pruned)?;
    let manifest = args.manifest.as_deref().map(Manifest::load).transpose()?;
    let assignment = match &manifest {
        Some(m) => classify_tensors(&dense, m)?.assignment,
        None => BTreeMap::new(),
    };

    if dense.len() != pruned.len() {
        return Err(Error::InvalidArgument {
            detail: format!(
                "checkpoints disagree: {} vs {} tensors",
                dense.len(),
                pruned.len()
            ),
        });
    }

    let mut diffs = Vec::with_capacity(dense.len());
    for d in dense.iter() {
        let p = pruned.get(d.name()).ok_or_else(|| Error::MissingTensor {
            name: d.name().to_string(),
        })?;
        if p.shape() != d.shape() {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "tensor {} has shape {:?} dense vs {:?} pruned",
                    d.name(),
                    d.shape(),
                    p.shape()
                ),
            });
        }
        let newly_zeroed = d
            .data()
            .iter()
            .zip(p.data())
            .filter(|(dv, pv)| **dv != 0.0 && **pv == 0.0)
            .count() as u64;
        diffs.push(TensorDiff {
            name: d.name().to_string(),
            params: d.numel() as u64,
            newly_zeroed,
            added_sparsity: ratio(newly_zeroed, d.numel() as u64),
        });
    }

    println!(
        "added sparsity: {} vs {}",
        args.pruned.display(),
        args.dense.display()
    );
    let rows: Vec<Vec<String>> = diffs
        .iter()
        .map(|t| {
            vec![
                t.name.clone(),
                t.params.to_string(),
                t.newly_zeroed.to_string(),
                pct(t.added_sparsity),
            ]
        })
        .collect();
    print_table(&["tensor", "params", "newly zeroed", "added"], &rows);

    let components = manifest.as_ref().map(|_| {
        let mut totals: BTreeMap<Component, (u64, u64)> = BTreeMap::new();
        for diff in &diffs {
            let component = assignment[&diff.name];
            let entry = totals.entry(component).or_insert((0, 0));
            entry.0 += diff.params;
            entry.1 += diff.newly_zeroed;
        }
        let rows: Vec<Vec<String>> = totals
            .iter()
            .map(|(c, (params, newly))| {
                vec![
                    c.to_string(),
                    params.to_string(),
                    newly.to_string(),
                    pct(ratio(*newly, *params)),
                ]
            })
            .collect();
        println!();
        print_table(&["component", "params", "newly zeroed", "added"], &rows);
        totals
            .into_iter()
            .map(|(c, (params, newly))| {
                json!({
                    "component": c,
                    "params": params,
                    "newly_zeroed": newly,
                    "added_sparsity": ratio(newly, params),
                })
            })
            .collect::<Vec<_>>()
    });

    let params: u64 = diffs.iter().map(|t| t.params).sum();
    let newly: u64 = diffs.iter().map(|t| t.newly_zeroed).sum();
    let global = ratio(newly, params);
    println!("global added sparsity {}", pct(global));

    if let Some(path) = &args.json {
        write_json_file(
            path,
            &json!({
                "tensors": diffs,
                "components": components,
                "global": {
                    "params": params,
                    "newly_zeroed": newly,
                    "added_sparsity": global,
                },
            }),
        )?;
    }
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Result<()> {
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let files = write_fixture(&args.out, args.seed)?;
    println!("fixture written (seed {})", args.seed);
    println!("  checkpoint   {}", files.checkpoint.display());
    println!("  manifest     {}", files.manifest.display());
    println!("  model spec   {}", files.model_spec.display());
    println!("  calibration  {}", files.calibration.display());
    Ok(())
}

// ── Output helpers ───────────────────────────────────────────────────────

/// Render a fraction as a percentage with one decimal, e.g. 0.385 → "38.5%".
fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Two-space-indented aligned table; first column left-aligned, the rest
/// right-aligned.
fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let header: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    for row in std::iter::once(&header).chain(rows) {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            line.push_str("  ");
            if i == 0 {
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            } else {
                line.push_str(&format!("{cell:>width$}", width = widths[i]));
            }
        }
        println!("{}", line.trim_end());
    }
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("CLI JSON cannot fail to serialize");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
