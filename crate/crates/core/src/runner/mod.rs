//! Experiment orchestration behind the `veriflow` command line.
//!
//! Every subcommand writes into one output directory and finishes with a
//! `manifest.json` holding the echoed config, the seed and SHA-256 hashes
//! of all inputs and outputs. Nothing time- or host-dependent is written,
//! so rerunning a config with the same seed reproduces every file byte for
//! byte.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    load_claims, load_dataset_with, load_view, validate, write_claims, write_view, Dataset, FeatureView,
    FoldSpec, Label, Split,
};
use crate::error::{Result, VeriflowError};
use crate::evalkit::{csv_field, evaluate, MetricsBundle, MetricsTable};
use crate::fusion::{audit_no_leakage, MetaOptions};
use crate::linmodel::{OptConfig, L2_GRID};
use crate::models::{Learner, LogregLearner, NetLearner, Predictor, ProbAvgLearner, StackLearner};
use crate::pipeline::ViewSource;
use crate::textfeat::{liwc_speaker_feature_view, tfidf_feature_view, fit_tfidf, Lexicon, SpeakerEncoder};
use crate::tuningcv::{grid_search, GridSpec};
use crate::{argmax_label, Probs};

pub use config::{
    set_hyper, AblationMode, DataConfig, ExperimentConfig, Family, HyperOverrides, ModelConfig, Reference,
    ReportConfig, SynthConfig, SynthViewConfig, TuneConfig,
};
pub use report::{report_compare, ComparisonRow, ComparisonTable, RowSource};

/// Name of the view written by `featurize-text` for TF-IDF n-grams fitted on
/// the train split. Distinct from `tfidf`, which refits inside every fold.
pub const TFIDF_VIEW: &str = "tfidf_ngrams";
pub const LIWC_VIEW: &str = "liwc_speaker";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    FeaturizeText,
    Train,
    Evaluate,
    CvTune,
    Ablate,
    Ensemble,
    Synth,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::FeaturizeText => "featurize-text",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::CvTune => "cv-tune",
            Command::Ablate => "ablate",
            Command::Ensemble => "ensemble",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// A failed run, classified by the stage that failed.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(VeriflowError),
    #[error("{0}")]
    Data(VeriflowError),
    #[error("{0}")]
    Training(VeriflowError),
}

impl RunError {
    /// 1 usage, 2 data validation, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Data(_) => 2,
            RunError::Training(_) => 3,
        }
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    /// Files written, relative to `dir`, manifest last.
    pub files: Vec<String>,
    pub message: String,
}

pub fn execute(command: Command, config: &ExperimentConfig, out_dir: &Path) -> RunResult<RunSummary> {
    let mut out = Outputs::create(out_dir)?;
    let message = match command {
        Command::Validate => cmd_validate(config, &mut out),
        Command::FeaturizeText => cmd_featurize(config, &mut out),
        Command::Train => cmd_train(config, &mut out),
        Command::Evaluate => cmd_evaluate(config, &mut out, Plan::Configured),
        Command::CvTune => cmd_cv_tune(config, &mut out),
        Command::Ablate => cmd_ablate(config, &mut out),
        Command::Ensemble => cmd_evaluate(config, &mut out, Plan::Ensemble),
        Command::Synth => cmd_synth(config, &mut out),
        Command::Report => cmd_report(config, &mut out),
    };
    // Partial outputs (a failed validation report, say) still get a manifest.
    let summary = out.finish(command, config)?;
    message.map(|message| RunSummary { message, ..summary })
}

/// Trains on the train split, scores the test split and writes the report.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> RunResult<RunSummary> {
    execute(Command::Evaluate, config, out_dir)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> RunResult<Outputs> {
        fs::create_dir_all(dir).map_err(|e| RunError::Usage(VeriflowError::io(dir, e)))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, contents: &str) -> RunResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Usage(VeriflowError::io(&path, e)))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn view(&mut self, stem: &str, view: &FeatureView) -> RunResult<()> {
        let manifest = format!("{stem}.json");
        write_view(view, &self.dir.join(&manifest)).map_err(RunError::Usage)?;
        self.files.push(manifest);
        self.files.push(format!("{stem}.csv"));
        Ok(())
    }

    fn finish(mut self, command: Command, config: &ExperimentConfig) -> RunResult<RunSummary> {
        let mut inputs = Vec::new();
        for rel in config.input_files() {
            let path = config.resolve(&rel);
            inputs.push(json!({"path": rel, "sha256": sha256_file(&path)?}));
            if let Some(rows) = view_rows_file(&path) {
                inputs.push(json!({"path": rel.with_file_name(&rows), "sha256": sha256_file(&path.with_file_name(&rows))?}));
            }
        }
        let mut outputs = Vec::new();
        for name in &self.files {
            outputs.push(json!({"file": name, "sha256": sha256_file(&self.dir.join(name))?}));
        }
        let manifest = json!({
            "tool": "veriflow",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "seed": config.seed,
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| RunError::Usage(VeriflowError::parse("manifest", e)))?;
        self.text("manifest.json", &format!("{text}\n"))?;
        Ok(RunSummary {
            dir: self.dir,
            files: self.files,
            message: String::new(),
        })
    }
}

fn sha256_file(path: &Path) -> RunResult<String> {
    let bytes = fs::read(path).map_err(|e| RunError::Usage(VeriflowError::io(path, e)))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The data CSV named by a view manifest, if `path` is one.
fn view_rows_file(path: &Path) -> Option<String> {
    if path.extension()? != "json" {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    value.get("rows")?.as_str().map(str::to_string)
}

fn load(config: &ExperimentConfig) -> RunResult<Dataset> {
    let claims = config.claims_path().map_err(RunError::Usage)?;
    load_dataset_with(&claims, &config.view_paths(), config.coverage()).map_err(RunError::Data)
}

fn split_ids(dataset: &Dataset, split: Split) -> RunResult<Vec<String>> {
    let ids = dataset.split_ids(split);
    if ids.is_empty() {
        let name = if split == Split::Train { "train split" } else { "test split" };
        return Err(RunError::Data(VeriflowError::Empty(name.into())));
    }
    Ok(ids)
}

fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn cmd_validate(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let claims_path = config.claims_path().map_err(RunError::Usage)?;
    let claims = load_claims(&claims_path).map_err(RunError::Data)?;
    let views = config
        .view_paths()
        .iter()
        .map(|p| load_view(p))
        .collect::<Result<Vec<_>>>()
        .map_err(RunError::Data)?;
    let dataset = Dataset::new(claims, views);
    let report = validate(&dataset, config.coverage());
    let mut text = format!(
        "claims: {}\nviews: {}\nspeakers: {}\nerrors: {}\nwarnings: {}\n",
        dataset.claims().len(),
        dataset.views().len(),
        dataset.roster().len(),
        report.error_count(),
        report.warning_count()
    );
    text.push_str(&report.to_text());
    out.text("validation.txt", &text)?;
    match report.error_count() {
        0 => Ok(format!(
            "dataset valid: {} claims, {} views, {} warnings",
            dataset.claims().len(),
            dataset.views().len(),
            report.warning_count()
        )),
        n => Err(RunError::Data(VeriflowError::Validation(n))),
    }
}

fn cmd_featurize(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let dataset = load(config)?;
    let lexicon = match &config.data.lexicon {
        Some(path) => Lexicon::load(&config.resolve(path)).map_err(RunError::Data)?,
        None => Lexicon::stub(),
    };
    let encoder = SpeakerEncoder::new(dataset.roster());
    let liwc = liwc_speaker_feature_view(LIWC_VIEW, &lexicon, &encoder, dataset.claims());
    out.view(LIWC_VIEW, &liwc)?;

    let train_ids = split_ids(&dataset, Split::Train)?;
    let model = fit_tfidf(&dataset.texts(&train_ids).map_err(RunError::Data)?).map_err(RunError::Data)?;
    let tfidf = tfidf_feature_view(TFIDF_VIEW, &model, dataset.claims());
    out.view(TFIDF_VIEW, &tfidf)?;
    let mut vocab = String::from("index\tngram\tidf\n");
    let mut by_index: Vec<(&usize, &String)> = model.vocabulary.iter().map(|(g, i)| (i, g)).collect();
    by_index.sort();
    for (i, gram) in by_index {
        let _ = writeln!(vocab, "{i}\t{gram}\t{}", model.idf[*i]);
    }
    out.text("tfidf_vocabulary.tsv", &vocab)?;
    Ok(format!(
        "wrote {LIWC_VIEW} (dim {}) and {TFIDF_VIEW} (dim {}) for {} claims",
        liwc.dim,
        tfidf.dim,
        dataset.claims().len()
    ))
}

/// Which rows an evaluation produces.
#[derive(Debug, Clone, PartialEq)]
enum Plan {
    /// The configured family, with the configured ablation for networks.
    Configured,
    /// Per-view LR, concatenation, probability averaging and stacking.
    Ensemble,
    /// Networks with these `(row name, view mask)` pairs.
    Nets(Vec<(String, Vec<bool>)>),
}

/// One prediction row plus the files describing its models.
struct RowOutput {
    name: String,
    probs: Vec<Probs>,
    artifacts: Vec<(String, String)>,
}

fn lr_learner(config: &ExperimentConfig, sources: Vec<ViewSource>, l2: f64, seed: u64) -> LogregLearner {
    LogregLearner {
        inputs: sources,
        l2,
        class_weighted: config.model.class_weighted,
        standardize: config.model.standardize,
        opt: OptConfig::default(),
        seed,
    }
}

fn debate_folds(dataset: &Dataset, ids: &[String]) -> Result<FoldSpec> {
    let items = ids
        .iter()
        .map(|id| dataset.claim_ref(id).map(|c| (id.clone(), c.debate_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    FoldSpec::leave_one_group_out(&items)
}

/// The configured L2, or the pooled-MAR winner of leave-one-debate-out CV
/// over the training claims with its leaderboard.
fn choose_l2(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    train_ids: &[String],
    seed: u64,
) -> Result<(f64, Option<String>)> {
    if let Some(l2) = config.model.l2 {
        return Ok((l2, None));
    }
    let grid = GridSpec::l2(config.model.l2_grid.as_deref().unwrap_or(&L2_GRID));
    let folds = debate_folds(dataset, train_ids)?;
    let result = grid_search(
        &grid,
        |c| {
            let l2 = c.get("l2").expect("l2 grid");
            Ok(Box::new(lr_learner(config, sources.to_vec(), l2, seed)) as Box<dyn Learner>)
        },
        dataset,
        &folds,
    )?;
    let l2 = result.best_candidate().get("l2").expect("l2 grid");
    Ok((l2, Some(result.to_csv())))
}

fn fit_lr_row(
    config: &ExperimentConfig,
    dataset: &Dataset,
    name: &str,
    sources: Vec<ViewSource>,
    train_ids: &[String],
    eval_ids: &[String],
    seed: u64,
) -> Result<RowOutput> {
    let (l2, board) = choose_l2(config, dataset, &sources, train_ids, seed)?;
    let fitted = lr_learner(config, sources, l2, seed).fit_logreg(dataset, train_ids)?;
    let mut artifacts = vec![(format!("model_{}.txt", slug(name)), fitted.model.to_text())];
    if let Some(board) = board {
        artifacts.push((format!("l2_{}.csv", slug(name)), board));
    }
    Ok(RowOutput {
        name: name.to_string(),
        probs: fitted.predict(dataset, eval_ids)?,
        artifacts,
    })
}

/// `(base name, selected L2)` per linear base.
type L2Choices = Vec<(String, String)>;

/// Per-view LR bases with their selected L2 values.
fn linear_bases(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    train_ids: &[String],
    seed: u64,
) -> Result<(Vec<Box<dyn Learner>>, L2Choices)> {
    let chosen = sources
        .par_iter()
        .map(|s| choose_l2(config, dataset, std::slice::from_ref(s), train_ids, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut bases: Vec<Box<dyn Learner>> = Vec::new();
    let mut artifacts = Vec::new();
    for (source, (l2, board)) in sources.iter().zip(chosen) {
        bases.push(Box::new(lr_learner(config, vec![source.clone()], l2, seed)));
        if let Some(board) = board {
            artifacts.push((format!("l2_base_{}.csv", slug(source.name())), board));
        }
    }
    Ok((bases, artifacts))
}

fn fit_prob_avg_row(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    train_ids: &[String],
    eval_ids: &[String],
    seed: u64,
) -> Result<RowOutput> {
    let (bases, artifacts) = linear_bases(config, dataset, sources, train_ids, seed)?;
    let probs = ProbAvgLearner { bases }.fit_predict(dataset, train_ids, eval_ids)?;
    Ok(RowOutput {
        name: "Prob. avg".into(),
        probs,
        artifacts,
    })
}

fn fit_stacked_row(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    train_ids: &[String],
    eval_ids: &[String],
    seed: u64,
) -> Result<RowOutput> {
    let (bases, mut artifacts) = linear_bases(config, dataset, sources, train_ids, seed)?;
    let learner = StackLearner {
        bases,
        meta_grid: config.model.meta_grid.clone().unwrap_or_else(|| L2_GRID.to_vec()),
        meta: MetaOptions {
            class_weighted: config.model.class_weighted,
            opt: OptConfig::default(),
            seed,
        },
    };
    let model = learner.fit_stack(dataset, train_ids)?;
    let checked = audit_no_leakage(&model, dataset)?;
    let mut board = String::from("l2,mae,mmae,acc,f1,mar\n");
    for (l2, m) in &model.meta_leaderboard {
        let _ = writeln!(board, "{l2},{},{},{},{},{}", m.mae, m.mmae, m.accuracy, m.macro_f1, m.mar);
    }
    artifacts.push(("stack_meta.txt".into(), model.meta.to_text()));
    artifacts.push(("stack_meta_l2.csv".into(), board));
    artifacts.push(("stack_oof.csv".into(), model.oof_csv()));
    artifacts.push((
        "stack_audit.txt".into(),
        format!("checked {checked} out-of-fold records over {} folds: no leakage\n", model.folds.len()),
    ));
    Ok(RowOutput {
        name: "Ensemble".into(),
        probs: model.predict(dataset, eval_ids)?,
        artifacts,
    })
}

fn fit_net_rows(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    masks: &[(String, Vec<bool>)],
    train_ids: &[String],
    eval_ids: &[String],
    seed: u64,
) -> Result<Vec<RowOutput>> {
    let hyper = config.hyper.apply(seed)?;
    masks
        .par_iter()
        .map(|(name, mask)| {
            let mut learner = NetLearner::new(sources.to_vec(), hyper).with_mask(mask.clone());
            learner.standardize = config.model.standardize;
            let (fitted, history) = learner
                .fit_net(dataset, train_ids, Some(eval_ids))
                .map_err(|e| e.in_context(name))?;
            Ok(RowOutput {
                name: name.clone(),
                probs: fitted.predict(dataset, eval_ids)?,
                artifacts: vec![
                    (format!("net_{}.txt", slug(name)), fitted.net.to_text()),
                    (format!("history_{}.csv", slug(name)), history.to_csv()),
                ],
            })
        })
        .collect()
}

fn ablation_masks(sources: &[ViewSource], mode: AblationMode) -> Vec<(String, Vec<bool>)> {
    let n = sources.len();
    match mode {
        AblationMode::None => vec![("NN all".into(), vec![true; n])],
        AblationMode::SingleView => sources
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("NN only {s}"), (0..n).map(|j| j == i).collect()))
            .collect(),
        AblationMode::LeaveOneViewOut => sources
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("NN all - {s}"), (0..n).map(|j| j != i).collect()))
            .collect(),
    }
}

fn fit_rows(
    config: &ExperimentConfig,
    dataset: &Dataset,
    sources: &[ViewSource],
    plan: &Plan,
    train_ids: &[String],
    eval_ids: &[String],
    seed: u64,
) -> Result<Vec<RowOutput>> {
    let per_view = || {
        sources
            .par_iter()
            .map(|s| fit_lr_row(config, dataset, &format!("LR {s}"), vec![s.clone()], train_ids, eval_ids, seed))
            .collect::<Result<Vec<_>>>()
    };
    let concat = || fit_lr_row(config, dataset, "LR concat", sources.to_vec(), train_ids, eval_ids, seed);
    match plan {
        Plan::Nets(masks) => fit_net_rows(config, dataset, sources, masks, train_ids, eval_ids, seed),
        Plan::Ensemble => {
            let mut rows = per_view()?;
            rows.push(concat()?);
            rows.push(fit_prob_avg_row(config, dataset, sources, train_ids, eval_ids, seed)?);
            rows.push(fit_stacked_row(config, dataset, sources, train_ids, eval_ids, seed)?);
            Ok(rows)
        }
        Plan::Configured => match config.model.family {
            Family::Lr => per_view(),
            Family::ConcatLr => Ok(vec![concat()?]),
            Family::ProbAvg => Ok(vec![fit_prob_avg_row(config, dataset, sources, train_ids, eval_ids, seed)?]),
            Family::Stacked => Ok(vec![fit_stacked_row(config, dataset, sources, train_ids, eval_ids, seed)?]),
            Family::FusionNet => {
                let masks = ablation_masks(sources, config.ablation);
                fit_net_rows(config, dataset, sources, &masks, train_ids, eval_ids, seed)
            }
        },
    }
}

/// Scores prediction rows against the truth of `eval_ids`, over every
/// configured seed, adding a median row per configuration when several
/// seeds run. Returns the metrics table and writes all per-row files.
fn scored_rows(
    config: &ExperimentConfig,
    dataset: &Dataset,
    plan: &Plan,
    train_ids: &[String],
    eval_ids: &[String],
    out: &mut Outputs,
) -> RunResult<MetricsTable> {
    let sources = config.inputs(dataset).map_err(RunError::Usage)?;
    let truth = dataset.labels(eval_ids).map_err(RunError::Data)?;
    let seeds = config.run_seeds();
    let multi = seeds.len() > 1;
    let mut table = MetricsTable::default();
    let mut per_config: BTreeMap<String, Vec<MetricsBundle>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut confusions = String::from("config,true,pred_false,pred_half,pred_true\n");
    let mut predictions = String::from("config,claim_id,prob_false,prob_half,prob_true,predicted\n");

    for &seed in &seeds {
        let rows = fit_rows(config, dataset, &sources, plan, train_ids, eval_ids, seed).map_err(RunError::Training)?;
        for row in rows {
            let predicted: Vec<Label> = row.probs.iter().map(argmax_label).collect();
            let (bundle, cm) = evaluate(&truth, &predicted).map_err(RunError::Training)?;
            let name = if multi {
                format!("{} seed={seed}", row.name)
            } else {
                row.name.clone()
            };
            let prefix = if multi { format!("seed{seed}_") } else { String::new() };
            for (file, contents) in &row.artifacts {
                out.text(&format!("{prefix}{file}"), contents)?;
            }
            for (label, counts) in Label::ALL.iter().zip(cm.0) {
                let _ = writeln!(
                    confusions,
                    "{},{label},{},{},{}",
                    csv_field(&name),
                    counts[0],
                    counts[1],
                    counts[2]
                );
            }
            for ((id, p), l) in eval_ids.iter().zip(&row.probs).zip(&predicted) {
                let _ = writeln!(predictions, "{},{},{},{},{},{l}", csv_field(&name), csv_field(id), p[0], p[1], p[2]);
            }
            if !per_config.contains_key(&row.name) {
                order.push(row.name.clone());
            }
            per_config.entry(row.name).or_default().push(bundle);
            table.push(name, bundle);
        }
    }
    if multi {
        for name in &order {
            table.push(format!("{name} median"), MetricsBundle::median(&per_config[name]));
        }
    }
    out.text("confusion.csv", &confusions)?;
    out.text("predictions.csv", &predictions)?;
    out.text("metrics.csv", &table.to_csv())?;
    out.text("metrics.txt", &table.to_text())?;
    Ok(table)
}

fn cmd_evaluate(config: &ExperimentConfig, out: &mut Outputs, plan: Plan) -> RunResult<String> {
    let dataset = load(config)?;
    let train_ids = split_ids(&dataset, Split::Train)?;
    let test_ids = split_ids(&dataset, Split::Test)?;
    let table = scored_rows(config, &dataset, &plan, &train_ids, &test_ids, out)?;
    Ok(table.to_text())
}

/// Fits on the train split and reports training-set metrics alongside the models.
fn cmd_train(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let dataset = load(config)?;
    let train_ids = split_ids(&dataset, Split::Train)?;
    let table = scored_rows(config, &dataset, &Plan::Configured, &train_ids, &train_ids, out)?;
    Ok(table.to_text())
}

fn cmd_ablate(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    if config.model.family != Family::FusionNet {
        return Err(RunError::Usage(VeriflowError::Config(
            "ablate needs model.family = \"fusion_net\"".into(),
        )));
    }
    let dataset = load(config)?;
    let sources = config.inputs(&dataset).map_err(RunError::Usage)?;
    let masks = match config.ablation {
        AblationMode::None => [AblationMode::None, AblationMode::SingleView, AblationMode::LeaveOneViewOut]
            .into_iter()
            .flat_map(|m| ablation_masks(&sources, m))
            .collect(),
        mode => ablation_masks(&sources, mode),
    };
    let train_ids = split_ids(&dataset, Split::Train)?;
    let test_ids = split_ids(&dataset, Split::Test)?;
    let table = scored_rows(config, &dataset, &Plan::Nets(masks), &train_ids, &test_ids, out)?;
    Ok(table.to_text())
}

fn cmd_cv_tune(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let dataset = load(config)?;
    let sources = config.inputs(&dataset).map_err(RunError::Usage)?;
    let family = config.model.family;
    let grid = if !config.tune.grid.is_empty() {
        GridSpec {
            params: config.tune.grid.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    } else if family.is_linear() {
        GridSpec::l2(config.model.l2_grid.as_deref().unwrap_or(&L2_GRID))
    } else {
        return Err(RunError::Usage(VeriflowError::Config(
            "cv-tune for fusion_net needs a [tune.grid] table".into(),
        )));
    };
    for (name, _) in &grid.params {
        if family.is_linear() && name != "l2" {
            return Err(RunError::Usage(VeriflowError::Config(format!(
                "linear families only tune l2, not {name:?}"
            ))));
        }
    }
    let hyper = config.hyper.apply(config.seed).map_err(RunError::Usage)?;
    // Reject bad hyperparameter names before any training.
    for candidate in grid.candidates().map_err(RunError::Usage)? {
        if !family.is_linear() {
            let mut h = hyper;
            for (name, value) in &candidate.values {
                set_hyper(&mut h, name, *value).map_err(RunError::Usage)?;
            }
        }
    }
    let folds = crate::corpus::loo_debate_folds(&dataset).map_err(RunError::Data)?;
    let seed = config.seed;

    // Per-view LR tunes each view on its own.
    let groups: Vec<(String, Vec<ViewSource>)> = match family {
        Family::Lr => sources.iter().map(|s| (slug(s.name()), vec![s.clone()])).collect(),
        _ => vec![(String::new(), sources.clone())],
    };
    let mut lines = Vec::new();
    for (tag, group) in groups {
        let build = |c: &crate::tuningcv::Candidate| -> Result<Box<dyn Learner>> {
            let l2 = c.get("l2").or(config.model.l2).unwrap_or(1.0);
            let learner: Box<dyn Learner> = match family {
                Family::Lr | Family::ConcatLr => Box::new(lr_learner(config, group.clone(), l2, seed)),
                Family::ProbAvg => Box::new(ProbAvgLearner {
                    bases: group
                        .iter()
                        .map(|s| Box::new(lr_learner(config, vec![s.clone()], l2, seed)) as Box<dyn Learner>)
                        .collect(),
                }),
                Family::Stacked => Box::new(StackLearner {
                    bases: group
                        .iter()
                        .map(|s| Box::new(lr_learner(config, vec![s.clone()], l2, seed)) as Box<dyn Learner>)
                        .collect(),
                    meta_grid: config.model.meta_grid.clone().unwrap_or_else(|| L2_GRID.to_vec()),
                    meta: MetaOptions {
                        class_weighted: config.model.class_weighted,
                        opt: OptConfig::default(),
                        seed,
                    },
                }),
                Family::FusionNet => {
                    let mut h = hyper;
                    for (name, value) in &c.values {
                        set_hyper(&mut h, name, *value)?;
                    }
                    let mut learner = NetLearner::new(group.clone(), h);
                    learner.standardize = config.model.standardize;
                    Box::new(learner)
                }
            };
            Ok(learner)
        };
        let result = grid_search(&grid, build, &dataset, &folds).map_err(RunError::Training)?;
        let suffix = if tag.is_empty() { String::new() } else { format!("_{tag}") };
        out.text(&format!("leaderboard{suffix}.csv"), &result.to_csv())?;
        let mut per_fold = String::from("candidate,debate,mae,mmae,acc,f1,mar\n");
        for row in &result.leaderboard {
            for (debate, m) in &row.report.per_fold {
                let _ = writeln!(
                    per_fold,
                    "{},{},{},{},{},{},{}",
                    csv_field(&row.candidate.label()),
                    csv_field(debate),
                    m.mae,
                    m.mmae,
                    m.accuracy,
                    m.macro_f1,
                    m.mar
                );
            }
        }
        out.text(&format!("per_fold{suffix}.csv"), &per_fold)?;
        let best = &result.leaderboard[result.best];
        lines.push(format!(
            "{}selected {} (pooled MAR {:.2})",
            if tag.is_empty() { String::new() } else { format!("{tag}: ") },
            best.candidate.label(),
            best.report.pooled.mar
        ));
    }
    Ok(lines.join("\n"))
}

fn cmd_synth(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let (dataset, _) = config.synth.spec(config.seed).generate().map_err(RunError::Usage)?;
    let claims_path = out.dir.join("claims.jsonl");
    write_claims(&claims_path, dataset.claims()).map_err(RunError::Usage)?;
    out.files.push("claims.jsonl".into());
    let mut experiment = format!("seed = {}\n\n[data]\nclaims = \"claims.jsonl\"\nviews = [", config.seed);
    for (i, view) in dataset.views().iter().enumerate() {
        let stem = slug(&view.name);
        out.view(&stem, view)?;
        let _ = write!(experiment, "{}\"{stem}.json\"", if i == 0 { "" } else { ", " });
    }
    experiment.push_str("]\n");
    out.text("experiment.toml", &experiment)?;
    let mut message = format!(
        "wrote {} claims over {} debates with {} views",
        dataset.claims().len(),
        config.synth.n_debates,
        dataset.views().len()
    );
    if config.synth.e2e {
        let report = synth_e2e(config.seed).map_err(RunError::Training)?;
        out.text("e2e_metrics.csv", &report.table.to_csv())?;
        out.text("e2e_metrics.txt", &report.summary())?;
        if !report.passed() {
            return Err(RunError::Training(VeriflowError::Training {
                context: "synthetic end-to-end check".into(),
                message: report.summary(),
            }));
        }
        message.push('\n');
        message.push_str(&report.summary());
    }
    Ok(message)
}

fn cmd_report(config: &ExperimentConfig, out: &mut Outputs) -> RunResult<String> {
    let mut table = MetricsTable::default();
    for rel in &config.report.tables {
        let path = config.resolve(rel);
        let text = fs::read_to_string(&path).map_err(|e| RunError::Usage(VeriflowError::io(&path, e)))?;
        table
            .rows
            .extend(MetricsTable::from_csv(&text).map_err(RunError::Data)?.rows);
    }
    if config.report.baselines {
        table.rows.extend(baseline_rows(config)?.rows);
    }
    if table.rows.is_empty() && config.report.references.is_empty() {
        return Err(RunError::Usage(VeriflowError::Config(
            "report needs report.tables, report.baselines or report.references".into(),
        )));
    }
    let comparison = report_compare(&table, &config.report.references);
    out.text("comparison.csv", &comparison.to_csv())?;
    out.text("comparison.txt", &comparison.to_text())?;
    Ok(comparison.to_text())
}

/// Random (uniform and train-stratified) and n-gram baselines on the test split.
fn baseline_rows(config: &ExperimentConfig) -> RunResult<MetricsTable> {
    use crate::evalkit::{ngram_baseline, random_baseline, RandomMode};
    let dataset = load(config)?;
    let test_ids = split_ids(&dataset, Split::Test)?;
    let truth = dataset.labels(&test_ids).map_err(RunError::Data)?;
    let counts = dataset.class_counts(Split::Train);
    let trials = config.report.random_trials;
    let mut table = MetricsTable::default();
    for (name, mode) in [
        ("Baseline random (uniform)", RandomMode::Uniform),
        ("Baseline random (train prior)", RandomMode::TrainStratified),
    ] {
        let m = random_baseline(counts, &truth, mode, config.seed, trials).map_err(RunError::Training)?;
        table.push(name, m);
    }
    let (m, _) = ngram_baseline(&dataset, config.seed).map_err(RunError::Training)?;
    table.push("Baseline n-gram", m);
    Ok(table)
}

/// Outcome of the synthetic end-to-end check.
#[derive(Debug, Clone, PartialEq)]
pub struct E2eReport {
    pub table: MetricsTable,
    /// Test accuracy (percent) of the network over all views.
    pub fused_accuracy: f64,
    pub best_single_view: String,
    /// Best test accuracy among networks that see one view.
    pub best_single_accuracy: f64,
}

impl E2eReport {
    /// Required lead of the fused network over the best single view, in points.
    pub const MARGIN: f64 = 10.0;

    pub fn margin(&self) -> f64 {
        self.fused_accuracy - self.best_single_accuracy
    }

    pub fn passed(&self) -> bool {
        self.margin() >= Self::MARGIN
    }

    pub fn summary(&self) -> String {
        format!(
            "{}\nfused accuracy {:.2}, best single view {} {:.2}, margin {:.2} (need >= {:.0}): {}\n",
            self.table.to_text(),
            self.fused_accuracy,
            self.best_single_view,
            self.best_single_accuracy,
            self.margin(),
            Self::MARGIN,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

/// Generator used by [`synth_e2e`]: five conditionally independent views,
/// each weakly informative on its own.
pub fn e2e_spec(seed: u64) -> crate::corpus::SynthSpec {
    let views = (0..5)
        .map(|i| crate::corpus::SynthView::new(format!("view{i}"), 6, 0.8))
        .collect();
    crate::corpus::SynthSpec::new(600, 5, views, seed)
}

/// Generates the synthetic multi-view set and runs per-view LR, the network
/// on all views and on each single view, concatenation, probability
/// averaging and stacking.
pub fn synth_e2e(seed: u64) -> Result<E2eReport> {
    let (dataset, _) = e2e_spec(seed).generate()?;
    let config = ExperimentConfig {
        seed,
        model: ModelConfig {
            l2: Some(1.0),
            ..ModelConfig::default()
        },
        ..ExperimentConfig::parse("", Path::new("."))?
    };
    let sources: Vec<ViewSource> = dataset.views().iter().map(|v| ViewSource::Dense(v.name.clone())).collect();
    let train_ids = dataset.split_ids(Split::Train);
    let test_ids = dataset.split_ids(Split::Test);
    let truth = dataset.labels(&test_ids)?;

    let mut masks = ablation_masks(&sources, AblationMode::None);
    masks.extend(ablation_masks(&sources, AblationMode::SingleView));
    let mut rows = fit_rows(&config, &dataset, &sources, &Plan::Nets(masks), &train_ids, &test_ids, seed)?;
    rows.extend(fit_rows(&config, &dataset, &sources, &Plan::Ensemble, &train_ids, &test_ids, seed)?);

    let mut table = MetricsTable::default();
    let mut fused_accuracy = 0.0;
    let mut best_single = (String::new(), f64::NEG_INFINITY);
    for row in &rows {
        let predicted: Vec<Label> = row.probs.iter().map(argmax_label).collect();
        let (m, _) = evaluate(&truth, &predicted)?;
        if row.name == "NN all" {
            fused_accuracy = m.accuracy;
        } else if row.name.starts_with("NN only") && m.accuracy > best_single.1 {
            best_single = (row.name.clone(), m.accuracy);
        }
        table.push(row.name.clone(), m);
    }
    Ok(E2eReport {
        table,
        fused_accuracy,
        best_single_view: best_single.0,
        best_single_accuracy: best_single.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("NN all - view0"), "nn_all_view0");
        assert_eq!(slug("LR tfidf"), "lr_tfidf");
        assert_eq!(slug("Prob. avg"), "prob_avg");
    }

    #[test]
    fn ablation_masks_cover_each_view() {
        let s = vec![ViewSource::Dense("a".into()), ViewSource::Tfidf, ViewSource::Dense("c".into())];
        let single = ablation_masks(&s, AblationMode::SingleView);
        assert_eq!(single.len(), 3);
        assert_eq!(single[1], ("NN only tfidf".to_string(), vec![false, true, false]));
        let loo = ablation_masks(&s, AblationMode::LeaveOneViewOut);
        assert_eq!(loo[2], ("NN all - c".to_string(), vec![true, true, false]));
        assert_eq!(ablation_masks(&s, AblationMode::None)[0].1, vec![true; 3]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Usage(VeriflowError::Config("x".into())).exit_code(), 1);
        assert_eq!(RunError::Data(VeriflowError::Validation(1)).exit_code(), 2);
        assert_eq!(RunError::Training(VeriflowError::Empty("x".into())).exit_code(), 3);
    }
}
