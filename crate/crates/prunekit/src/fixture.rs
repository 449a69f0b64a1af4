//! Seeded toy fixtures: a small two-component checkpoint, its manifest,
//! a matching feed-forward model spec, and calibration data. Used by the
//! CLI's `fixture` command, examples, and end-to-end tests.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calibration::{write_calibration, LayerKind, LayerSpec, Matrix, ToyModelSpec};
use crate::container::{write_checkpoint, Checkpoint, Tensor};
use crate::error::Result;
use crate::manifest::{Component, Manifest, PrunablePolicy, Rule};

const INPUT_DIM: usize = 16;
const HIDDEN_1: usize = 32;
const HIDDEN_2: usize = 24;
const OUTPUT_DIM: usize = 8;
const CALIBRATION_ROWS: usize = 64;

/// A complete in-memory toy setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub checkpoint: Checkpoint,
    pub manifest: Manifest,
    pub model_spec: ToyModelSpec,
    pub calibration: Matrix,
}

/// Deterministic toy fixture: a text encoder (one prunable linear layer
/// plus an excluded embedding) feeding an image generator (two linear
/// layers), with biases, an unclassified tensor, and 64 calibration rows.
/// Identical seeds produce identical fixtures, bit for bit.
pub fn toy_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize| -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    };

    let mut checkpoint = Checkpoint::new();
    checkpoint
        .metadata
        .insert("source".into(), "prunekit fixture".into());
    checkpoint.metadata.insert("seed".into(), seed.to_string());

    let tensors = [
        ("text.embed.weight", vec![INPUT_DIM, INPUT_DIM]),
        ("text.l1.weight", vec![HIDDEN_1, INPUT_DIM]),
        ("text.l1.bias", vec![HIDDEN_1]),
        ("unet.l1.weight", vec![HIDDEN_2, HIDDEN_1]),
        ("unet.l1.bias", vec![HIDDEN_2]),
        ("unet.l2.weight", vec![OUTPUT_DIM, HIDDEN_2]),
        ("unet.l2.bias", vec![OUTPUT_DIM]),
        ("head.scale", vec![OUTPUT_DIM]),
    ];
    for (name, shape) in tensors {
        let n = shape.iter().product();
        let tensor = Tensor::new(name, shape, uniform(n)).expect("fixture shapes are valid");
        checkpoint.insert(tensor).expect("fixture names are unique");
    }

    let manifest = Manifest {
        rules: vec![
            Rule {
                pattern: "text.*".into(),
                component: Component::TextEncoder,
            },
            Rule {
                pattern: "unet.*".into(),
                component: Component::ImageGenerator,
            },
        ],
        prunable: PrunablePolicy {
            min_rank: 2,
            exclude: vec!["*embed*".into()],
        },
    };

    let model_spec = ToyModelSpec {
        input_dim: INPUT_DIM,
        layers: vec![
            LayerSpec::linear("text.l1.weight", Some("text.l1.bias")),
            LayerSpec::activation(LayerKind::Relu),
            LayerSpec::linear("unet.l1.weight", Some("unet.l1.bias")),
            LayerSpec::activation(LayerKind::Gelu),
            LayerSpec::linear("unet.l2.weight", Some("unet.l2.bias")),
        ],
    };

    let calibration = Matrix::new(
        CALIBRATION_ROWS,
        INPUT_DIM,
        uniform(CALIBRATION_ROWS * INPUT_DIM),
    )
    .expect("fixture matrix dimensions are valid");

    Fixture {
        checkpoint,
        manifest,
        model_spec,
        calibration,
    }
}

/// Paths of a fixture written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFiles {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub model_spec: PathBuf,
    pub calibration: PathBuf,
}

/// Write all four fixture files into `dir`.
pub fn write_fixture(dir: impl AsRef<Path>, seed: u64) -> Result<FixtureFiles> {
    let dir = dir.as_ref();
    let fx = toy_fixture(seed);
    let files = FixtureFiles {
        checkpoint: dir.join("checkpoint.safetensors"),
        manifest: dir.join("manifest.json"),
        model_spec: dir.join("model.json"),
        calibration: dir.join("calibration.calb"),
    };
    write_checkpoint(&fx.checkpoint, &files.checkpoint)?;
    fx.manifest.save(&files.manifest)?;
    fx.model_spec.save(&files.model_spec)?;
    write_calibration(&fx.calibration, &files.calibration)?;
    Ok(files)
}
