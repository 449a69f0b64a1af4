//! Component assignment: map tensor names to model components via ordered
//! glob rules, decide which tensors are prunable, and total up parameters.
//!
//! Manifest file format (JSON):
//!
//!   {
//!     "rules": [
//!       { "pattern": "text.*", "component": "text_encoder" },
//!       { "pattern": "unet.*", "component": "image_generator" }
//!     ],
//!     "prunable": { "min_rank": 2, "exclude": ["*embed*"] }
//!   }
//!
//! Rules apply first-match-wins; tensors matching no rule fall into the
//! `excluded` component with a recorded warning. The prunable policy keeps
//! weight matrices (rank >= min_rank) and drops anything matching an
//! exclude glob; `excluded`-component tensors are never prunable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use globset::{Glob, GlobMatcher};
use serde::{Deserialize, Serialize};

use crate::container::Checkpoint;
use crate::error::{Error, Result};

// ── Components ───────────────────────────────────────────────────────────

/// The named sub-models a checkpoint splits into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    TextEncoder,
    ImageGenerator,
    Excluded,
}

impl Component {
    /// All components, in reporting order.
    pub const ALL: [Component; 3] = [
        Component::TextEncoder,
        Component::ImageGenerator,
        Component::Excluded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::TextEncoder => "text_encoder",
            Component::ImageGenerator => "image_generator",
            Component::Excluded => "excluded",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_encoder" => Ok(Component::TextEncoder),
            "image_generator" => Ok(Component::ImageGenerator),
            "excluded" => Ok(Component::Excluded),
            other => Err(Error::UnknownComponent {
                name: other.to_string(),
            }),
        }
    }
}

// ── Manifest ─────────────────────────────────────────────────────────────

/// One classification rule: tensors whose name matches `pattern` belong to
/// `component`. `*` matches any name fragment (names use `.` separators,
/// which globs treat as literal characters).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub pattern: String,
    pub component: Component,
}

/// Which tensors may be pruned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunablePolicy {
    /// Minimum tensor rank; rank-1 biases and scales are skipped by default.
    #[serde(default = "default_min_rank")]
    pub min_rank: usize,
    /// Name globs that are never pruned (embeddings, norm scales, ...).
    #[serde(default)]
    pub exclude: Vec<String>,
}

fn default_min_rank() -> usize {
    2
}

impl Default for PrunablePolicy {
    fn default() -> Self {
        PrunablePolicy {
            min_rank: default_min_rank(),
            exclude: Vec::new(),
        }
    }
}

/// Ordered classification rules plus the prunable policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub prunable: PrunablePolicy,
}

impl Manifest {
    /// Parse and validate a manifest from its JSON text.
    pub fn parse(json: &str) -> Result<Manifest> {
        let manifest: Manifest = serde_json::from_str(json).map_err(|e| Error::Json {
            what: "manifest".into(),
            source: e,
        })?;
        manifest.compile()?;
        Ok(manifest)
    }

    /// Load and validate a manifest file.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    /// Save the manifest as JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Check every glob compiles; returns the compiled matcher set.
    fn compile(&self) -> Result<CompiledManifest> {
        let compile_glob = |pattern: &str| -> Result<GlobMatcher> {
            Glob::new(pattern)
                .map(|g| g.compile_matcher())
                .map_err(|e| Error::InvalidManifest {
                    detail: format!("invalid glob '{pattern}': {e}"),
                })
        };
        let rules = self
            .rules
            .iter()
            .map(|r| Ok((compile_glob(&r.pattern)?, r.component)))
            .collect::<Result<Vec<_>>>()?;
        let exclude = self
            .prunable
            .exclude
            .iter()
            .map(|p| compile_glob(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledManifest {
            rules,
            exclude,
            min_rank: self.prunable.min_rank,
        })
    }

    /// Validate rule and exclude globs without classifying anything.
    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }
}

struct CompiledManifest {
    rules: Vec<(GlobMatcher, Component)>,
    exclude: Vec<GlobMatcher>,
    min_rank: usize,
}

impl CompiledManifest {
    fn classify(&self, name: &str) -> Option<Component> {
        self.rules
            .iter()
            .find(|(m, _)| m.is_match(name))
            .map(|&(_, c)| c)
    }

    fn is_prunable(&self, name: &str, rank: usize) -> bool {
        rank >= self.min_rank && !self.exclude.iter().any(|m| m.is_match(name))
    }
}

// ── Classification ───────────────────────────────────────────────────────

/// Result of assigning every tensor to a component.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Tensor name → component, covering every tensor in the checkpoint.
    pub assignment: BTreeMap<String, Component>,
    /// One warning per tensor that matched no rule (assigned `excluded`).
    pub warnings: Vec<String>,
}

/// Assign every tensor to a component, first matching rule wins. Tensors
/// matching no rule go to `excluded` and produce a warning.
pub fn classify_tensors(ckpt: &Checkpoint, manifest: &Manifest) -> Result<Classification> {
    let compiled = manifest.compile()?;
    let mut assignment = BTreeMap::new();
    let mut warnings = Vec::new();
    for tensor in ckpt.iter() {
        let component = match compiled.classify(tensor.name()) {
            Some(c) => c,
            None => {
                warnings.push(format!(
                    "tensor '{}' matched no manifest rule; assigned to 'excluded'",
                    tensor.name()
                ));
                Component::Excluded
            }
        };
        assignment.insert(tensor.name().to_string(), component);
    }
    Ok(Classification {
        assignment,
        warnings,
    })
}

// ── Profiles ─────────────────────────────────────────────────────────────

/// Parameter totals for one component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentProfile {
    pub component: Component,
    pub total_params: u64,
    pub prunable_params: u64,
    /// Member tensor names in checkpoint (stored) order.
    pub tensor_names: Vec<String>,
}

/// Exact per-component parameter totals under the manifest's assignment and
/// prunable policy. Always returns one profile per component, in
/// `Component::ALL` order.
pub fn component_profiles(ckpt: &Checkpoint, manifest: &Manifest) -> Result<Vec<ComponentProfile>> {
    let compiled = manifest.compile()?;
    let classification = classify_tensors(ckpt, manifest)?;

    let mut profiles: Vec<ComponentProfile> = Component::ALL
        .iter()
        .map(|&component| ComponentProfile {
            component,
            total_params: 0,
            prunable_params: 0,
            tensor_names: Vec::new(),
        })
        .collect();

    for tensor in ckpt.iter() {
        let component = classification.assignment[tensor.name()];
        let profile = &mut profiles[Component::ALL
            .iter()
            .position(|&c| c == component)
            .expect("component is one of ALL")];
        profile.total_params += tensor.numel() as u64;
        if component != Component::Excluded && compiled.is_prunable(tensor.name(), tensor.rank()) {
            profile.prunable_params += tensor.numel() as u64;
        }
        profile.tensor_names.push(tensor.name().to_string());
    }
    Ok(profiles)
}

/// Names of the prunable tensors of one component, in stored order.
/// The `excluded` component never has prunable tensors.
pub fn prunable_set(
    ckpt: &Checkpoint,
    manifest: &Manifest,
    component: Component,
) -> Result<Vec<String>> {
    if component == Component::Excluded {
        return Ok(Vec::new());
    }
    let compiled = manifest.compile()?;
    let classification = classify_tensors(ckpt, manifest)?;
    Ok(ckpt
        .iter()
        .filter(|t| classification.assignment[t.name()] == component)
        .filter(|t| compiled.is_prunable(t.name(), t.rank()))
        .map(|t| t.name().to_string())
        .collect())
}
