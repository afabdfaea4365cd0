//! TOML experiment configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The parsed config is echoed into every run manifest, minus the
//! output directory, so manifests do not depend on where a run was written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Coverage, Dataset, SynthSpec, SynthView};
use crate::error::{Result, VeriflowError};
use crate::neurofusion::Hyper;
use crate::pipeline::ViewSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// When non-empty, evaluation repeats once per seed and adds a median row.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub hyper: HyperOverrides,
    #[serde(default)]
    pub ablation: AblationMode,
    #[serde(default)]
    pub tune: TuneConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub claims: Option<PathBuf>,
    /// View manifest files.
    #[serde(default)]
    pub views: Vec<PathBuf>,
    /// Lexicon TSV for `featurize-text`; the bundled stub when absent.
    pub lexicon: Option<PathBuf>,
    /// Missing view rows are errors when true, warnings otherwise.
    #[serde(default = "yes")]
    pub strict: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            claims: None,
            views: Vec::new(),
            lexicon: None,
            strict: true,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// One logistic regression per input view.
    Lr,
    #[default]
    FusionNet,
    ConcatLr,
    ProbAvg,
    Stacked,
}

impl Family {
    pub fn is_linear(self) -> bool {
        self != Family::FusionNet
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub family: Family,
    /// View names, `tfidf` for in-fold n-grams. Empty means every loaded view.
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Fixed L2 for linear models. When absent, L2 is tuned by
    /// leave-one-debate-out CV over `l2_grid`.
    pub l2: Option<f64>,
    pub l2_grid: Option<Vec<f64>>,
    /// L2 candidates for the stacking meta classifier.
    pub meta_grid: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub class_weighted: bool,
    #[serde(default = "yes")]
    pub standardize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: Family::default(),
            inputs: Vec::new(),
            l2: None,
            l2_grid: None,
            meta_grid: None,
            class_weighted: true,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub per_view_hidden: Option<usize>,
    pub fusion_hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub dropout_retention: Option<f64>,
    pub batch_size: Option<usize>,
}

impl HyperOverrides {
    pub fn apply(&self, seed: u64) -> Result<Hyper> {
        let d = Hyper::default();
        let hyper = Hyper {
            per_view_hidden: self.per_view_hidden.unwrap_or(d.per_view_hidden),
            fusion_hidden: self.fusion_hidden.unwrap_or(d.fusion_hidden),
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            momentum: self.momentum.unwrap_or(d.momentum),
            dropout_retention: self.dropout_retention.unwrap_or(d.dropout_retention),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed,
        };
        hyper.check()?;
        Ok(hyper)
    }
}

/// Sets one named hyperparameter from a grid value.
pub fn set_hyper(hyper: &mut Hyper, name: &str, value: f64) -> Result<()> {
    let count = |v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(VeriflowError::Config(format!("{name} must be a positive integer, got {v}")))
        }
    };
    match name {
        "per_view_hidden" => hyper.per_view_hidden = count(value)?,
        "fusion_hidden" => hyper.fusion_hidden = count(value)?,
        "epochs" => hyper.epochs = count(value)?,
        "batch_size" => hyper.batch_size = count(value)?,
        "learning_rate" => hyper.learning_rate = value,
        "momentum" => hyper.momentum = value,
        "dropout_retention" => hyper.dropout_retention = value,
        other => return Err(VeriflowError::Config(format!("unknown network hyperparameter {other:?}"))),
    }
    hyper.check()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    None,
    SingleView,
    LeaveOneViewOut,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Hyperparameter name to candidate values, for `cv-tune`.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
}

/// A fixed comparison row; absent measures print as `-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub name: String,
    pub mae: f64,
    pub mmae: Option<f64>,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub mar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Metrics CSV files from earlier runs.
    #[serde(default)]
    pub tables: Vec<PathBuf>,
    #[serde(default)]
    pub references: Vec<Reference>,
    /// Add random and n-gram baseline rows computed from the dataset.
    #[serde(default)]
    pub baselines: bool,
    #[serde(default = "default_trials")]
    pub random_trials: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            tables: Vec::new(),
            references: Vec::new(),
            baselines: false,
            random_trials: default_trials(),
        }
    }
}

fn default_trials() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthViewConfig {
    pub name: String,
    pub dim: usize,
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_synth_claims")]
    pub n_claims: usize,
    #[serde(default = "default_synth_debates")]
    pub n_debates: usize,
    #[serde(default = "default_synth_views")]
    pub views: Vec<SynthViewConfig>,
    #[serde(default = "default_text_signal")]
    pub text_signal: f64,
    #[serde(default = "default_speakers")]
    pub n_speakers: usize,
    /// Also run the end-to-end synthetic check after writing the data.
    #[serde(default)]
    pub e2e: bool,
}

fn default_synth_claims() -> usize {
    300
}

fn default_synth_debates() -> usize {
    5
}

fn default_synth_views() -> Vec<SynthViewConfig> {
    (0..3)
        .map(|i| SynthViewConfig {
            name: format!("view{i}"),
            dim: 4,
            signal: 1.0,
        })
        .collect()
}

fn default_text_signal() -> f64 {
    0.5
}

fn default_speakers() -> usize {
    4
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_claims: default_synth_claims(),
            n_debates: default_synth_debates(),
            views: default_synth_views(),
            text_signal: default_text_signal(),
            n_speakers: default_speakers(),
            e2e: false,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        let views = self
            .views
            .iter()
            .map(|v| SynthView::new(v.name.clone(), v.dim, v.signal))
            .collect();
        let mut spec = SynthSpec::new(self.n_claims, self.n_debates, views, seed).with_text_signal(self.text_signal);
        spec.n_speakers = self.n_speakers;
        spec
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| VeriflowError::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| VeriflowError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        ExperimentConfig::parse(&text, &base)
    }

    fn check(&self) -> Result<()> {
        let finite = |name: &str, values: &[f64]| {
            if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                Err(VeriflowError::Config(format!("{name} needs finite non-negative values")))
            } else {
                Ok(())
            }
        };
        if let Some(l2) = self.model.l2 {
            finite("model.l2", &[l2])?;
        }
        if let Some(grid) = &self.model.l2_grid {
            finite("model.l2_grid", grid)?;
        }
        if let Some(grid) = &self.model.meta_grid {
            finite("model.meta_grid", grid)?;
        }
        for (name, values) in &self.tune.grid {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(VeriflowError::Config(format!("tune.grid.{name} needs finite values")));
            }
        }
        self.hyper.apply(self.seed).map_err(|e| VeriflowError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn claims_path(&self) -> Result<PathBuf> {
        self.data
            .claims
            .as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| VeriflowError::Config("data.claims is required".into()))
    }

    pub fn view_paths(&self) -> Vec<PathBuf> {
        self.data.views.iter().map(|p| self.resolve(p)).collect()
    }

    pub fn coverage(&self) -> Coverage {
        if self.data.strict {
            Coverage::Strict
        } else {
            Coverage::Lenient
        }
    }

    /// Seeds an evaluation runs over.
    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Input views in declaration order, checked against the dataset.
    pub fn inputs(&self, dataset: &Dataset) -> Result<Vec<ViewSource>> {
        let names: Vec<String> = if self.model.inputs.is_empty() {
            dataset.views().iter().map(|v| v.name.clone()).collect()
        } else {
            self.model.inputs.clone()
        };
        if names.is_empty() {
            return Err(VeriflowError::Config("no input views configured or loaded".into()));
        }
        names
            .iter()
            .map(|name| {
                let source = ViewSource::parse(name);
                if let ViewSource::Dense(view) = &source {
                    dataset
                        .view(view)
                        .map_err(|_| VeriflowError::Config(format!("input view {view:?} is not loaded")))?;
                }
                Ok(source)
            })
            .collect()
    }

    /// Every file the config reads, for manifest hashing.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut files = Vec::new();
        if let Some(claims) = &self.data.claims {
            files.push(claims.clone());
        }
        for view in &self.data.views {
            files.push(view.clone());
        }
        if let Some(lexicon) = &self.data.lexicon {
            files.push(lexicon.clone());
        }
        files.extend(self.report.tables.iter().cloned());
        files
    }
}
