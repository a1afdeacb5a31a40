//! Declarative run configuration and its canonical hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::AnnotRules;
use crate::augment::AugConfig;
use crate::composer::{ComposerConfig, SynthCounts};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Input and output locations. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Single-object images with `<stem>.mask.png` masks (or plain images
    /// when `reference_image` is set).
    pub annotate_images: Option<PathBuf>,
    /// `stem,category` CSV for the images to annotate.
    pub annotate_manifest: Option<PathBuf>,
    /// Empty-scene shot for controlled segmentation.
    pub reference_image: Option<PathBuf>,
    /// Cutout directory as written by `annotate`.
    pub cutouts: Option<PathBuf>,
    /// Defaults to `<cutouts>/manifest.csv`.
    pub cutout_manifest: Option<PathBuf>,
    pub negatives: Option<PathBuf>,
    /// Mosaic tile images; defaults to the negatives directory.
    pub tiles: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub rules: AnnotRules,
    /// Per-channel difference above which a pixel counts as foreground in
    /// controlled segmentation.
    pub segment_threshold: u8,
    /// Split tag given to annotated images.
    pub split: Split,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            rules: AnnotRules::default(),
            segment_threshold: 30,
            split: Split::TrainB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub composer: ComposerConfig,
    #[serde(default)]
    pub counts: SynthCounts,
    #[serde(default)]
    pub augment: AugConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Directory relative paths are resolved against; not part of the hash.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            paths: Paths::default(),
            annotate: AnnotateConfig::default(),
            composer: ComposerConfig::default(),
            counts: SynthCounts::default(),
            augment: AugConfig::default(),
            eval: EvalConfig::default(),
            base_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::parse(origin, &e))?;
        Ok(cfg)
    }

    /// Reads and validates; relative paths are later resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text, path)?;
        cfg.base_dir = Some(path.parent().unwrap_or(Path::new(".")).to_path_buf());
        cfg.validate()?;
        Ok(cfg)
    }

    /// `p` resolved against the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// A configured path, resolved.
    pub fn path(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_deref().map(|p| self.resolve(p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.annotate.rules.validate()?;
        self.composer.validate()?;
        self.augment.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// The config as written, minus the output location, serialized with
    /// fixed field order. Paths stay unresolved, so the same config file
    /// hashes the same wherever it lives, and where results are written does
    /// not change what they are.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.paths.output = None;
        let mut s = serde_json::to_string_pretty(&c).expect("config serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
