use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::config::TrainConfig;
use super::metrics::{Confusion, FoldReport};
use super::train::{split_validation, train, EpochRecord, TrainOutcome};
use crate::data::{content_hash, expand_training, loso_folds, segment_dataset, Dataset, Fold, Normalizer, Segment};
use crate::error::{Error, Result};
use crate::model::{build_model, Model, Variant};
use crate::rng::{derive_seed, hash_str, tag};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Which subjects each stage of a fold actually read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    pub validation_subjects: Vec<String>,
    pub normalizer_subjects: Vec<String>,
    pub augmentation_subjects: Vec<String>,
    pub test_segment_subjects: Vec<String>,
    /// Every test segment is an unaugmented original.
    pub test_all_original: bool,
}

impl FoldAudit {
    pub fn disjoint(&self) -> bool {
        !self.train_subjects.contains(&self.test_subject)
    }

    fn within_training(&self, subjects: &[String]) -> bool {
        subjects.iter().all(|s| self.train_subjects.contains(s) && *s != self.test_subject)
    }

    pub fn normalizer_clean(&self) -> bool {
        self.within_training(&self.normalizer_subjects)
    }

    pub fn augmentation_clean(&self) -> bool {
        self.within_training(&self.augmentation_subjects)
    }

    pub fn validation_clean(&self) -> bool {
        self.within_training(&self.validation_subjects)
    }

    pub fn test_clean(&self) -> bool {
        self.test_all_original && self.test_segment_subjects.iter().all(|s| *s == self.test_subject)
    }

    pub fn passed(&self) -> bool {
        self.disjoint() && self.normalizer_clean() && self.augmentation_clean() && self.validation_clean() && self.test_clean()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub report: FoldReport,
    pub audit: FoldAudit,
    pub original_train_segments: usize,
    pub train_segments: usize,
    pub validation_segments: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub variant: Variant,
    pub param_count: usize,
    pub folds: Vec<FoldResult>,
    /// Mean over folds of per-fold values.
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
    /// Metrics of the summed confusion matrix.
    pub pooled_confusion: Confusion,
    pub pooled_accuracy: f64,
    pub pooled_macro_f1: f64,
    pub config: ExperimentConfig,
    pub reproducibility: Reproducibility,
}

impl ExperimentReport {
    pub fn fold_f1s(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.report.macro_f1).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ExperimentReport = serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// The trained model of a fold with what is needed to reuse it on the test subject.
#[derive(Clone, Debug)]
pub struct FoldArtifacts {
    pub test_subject: String,
    pub model: Model,
    pub normalizer: Normalizer,
    /// Normalized original segments of the test subject.
    pub test_segments: Vec<Segment>,
}

#[derive(Clone, Debug)]
pub struct LosoRun {
    pub report: ExperimentReport,
    pub folds: Vec<FoldArtifacts>,
}

fn subjects_of<'a>(segs: impl IntoIterator<Item = &'a Segment>) -> Vec<String> {
    segs.into_iter().map(|s| s.subject_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

struct Prepared {
    normalizer: Normalizer,
    original_train: usize,
    train: Vec<Segment>,
    val: Vec<Segment>,
}

/// Validation split, normalizer fit and augmentation, all from `pool` alone.
fn prepare(pool: Vec<Segment>, cfg: &ExperimentConfig, key: u64) -> Result<Prepared> {
    let seed = cfg.train.seed;
    let (mut fit, mut val) = split_validation(pool, cfg.train.val_fraction, derive_seed(seed, &[tag::SPLIT, key]));
    let normalizer = Normalizer::fit(&fit)?;
    for s in fit.iter_mut().chain(val.iter_mut()) {
        normalizer.apply_in_place(s)?;
    }
    let train = expand_training(&fit, &cfg.augment, derive_seed(seed, &[tag::AUGMENT, key]))?;
    Ok(Prepared { normalizer, original_train: fit.len(), train, val })
}

fn fit_model(prep: &Prepared, cfg: &ExperimentConfig, key: u64) -> Result<TrainOutcome> {
    let seed = cfg.train.seed;
    let model = build_model(&cfg.model_spec(), derive_seed(seed, &[tag::INIT, key]))?;
    let train_cfg = TrainConfig { seed: derive_seed(seed, &[tag::FOLD, key]), ..cfg.train.clone() };
    train(model, &prep.train, &prep.val, &train_cfg)
}

/// Trains on every subject not in `exclude`. Returns the outcome and the
/// normalizer fitted on the training portion.
pub fn train_on_subjects(dataset: &Dataset, cfg: &ExperimentConfig, exclude: &[String]) -> Result<(TrainOutcome, Normalizer)> {
    cfg.validate()?;
    let pool: Vec<Segment> = segment_dataset(dataset, &cfg.segment)?
        .into_iter()
        .filter(|s| !exclude.contains(&s.subject_id))
        .collect();
    if pool.is_empty() {
        return Err(Error::usage("no training segments left after excluding test subjects"));
    }
    let key = hash_str(&exclude.join(","));
    let prep = prepare(pool, cfg, key)?;
    Ok((fit_model(&prep, cfg, key)?, prep.normalizer))
}

fn run_fold(all: &[Segment], fold: &Fold, cfg: &ExperimentConfig) -> Result<(FoldResult, FoldArtifacts)> {
    let key = hash_str(&fold.test_subject);
    let train_set: BTreeSet<&str> = fold.train_subjects.iter().map(String::as_str).collect();
    let pool: Vec<Segment> = all.iter().filter(|s| train_set.contains(s.subject_id.as_str())).cloned().collect();
    let mut test: Vec<Segment> = all.iter().filter(|s| s.subject_id == fold.test_subject).cloned().collect();
    if test.is_empty() {
        return Err(Error::usage(format!("subject {} has no segments", fold.test_subject)));
    }
    let prep = prepare(pool, cfg, key)?;
    for s in &mut test {
        prep.normalizer.apply_in_place(s)?;
    }
    let audit = FoldAudit {
        test_subject: fold.test_subject.clone(),
        train_subjects: fold.train_subjects.clone(),
        validation_subjects: subjects_of(&prep.val),
        normalizer_subjects: prep.normalizer.fitted_subjects.iter().cloned().collect(),
        augmentation_subjects: subjects_of(prep.train.iter().filter(|s| !s.provenance.is_original())),
        test_segment_subjects: subjects_of(&test),
        test_all_original: test.iter().all(|s| s.provenance.is_original()),
    };
    let outcome = fit_model(&prep, cfg, key)?;

    let report = super::evaluate(&outcome.model, &test, &fold.test_subject)?;
    let result = FoldResult {
        report,
        audit,
        original_train_segments: prep.original_train,
        train_segments: prep.train.len(),
        validation_segments: prep.val.len(),
        best_epoch: outcome.best_epoch,
        history: outcome.history,
    };
    let artifacts = FoldArtifacts {
        test_subject: fold.test_subject.clone(),
        model: outcome.model,
        normalizer: prep.normalizer,
        test_segments: test,
    };
    Ok((result, artifacts))
}

/// Leave-one-subject-out evaluation. For every fold: split validation from
/// the training subjects, fit the normalizer on the rest, augment, train, and
/// score the held-out subject's original segments. Folds run in parallel and
/// each draws from seeds derived from its test subject, so the report does
/// not depend on the thread count.
pub fn run_loso(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<LosoRun> {
    cfg.validate()?;
    let subjects: Vec<String> = dataset.subjects().into_iter().map(|(s, _)| s).collect();
    let folds = loso_folds(&subjects)?;
    let segments = segment_dataset(dataset, &cfg.segment)?;
    let outcomes: Vec<(FoldResult, FoldArtifacts)> =
        folds.par_iter().map(|f| run_fold(&segments, f, cfg)).collect::<Result<_>>()?;

    let mut pooled = Confusion::default();
    for (r, _) in &outcomes {
        pooled.add(&r.report.confusion);
    }
    let n = outcomes.len() as f64;
    let mean_accuracy = outcomes.iter().map(|(r, _)| r.report.accuracy).sum::<f64>() / n;
    let mean_macro_f1 = outcomes.iter().map(|(r, _)| r.report.macro_f1).sum::<f64>() / n;
    let param_count = outcomes[0].1.model.param_count();
    let (folds, artifacts): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: cfg.train.variant,
        param_count,
        folds,
        mean_accuracy,
        mean_macro_f1,
        pooled_accuracy: pooled.accuracy(),
        pooled_macro_f1: pooled.macro_f1(),
        pooled_confusion: pooled,
        config: cfg.clone(),
        reproducibility: Reproducibility {
            seed: cfg.train.seed,
            config_hash: cfg.hash(),
            dataset_hash: content_hash(dataset)?,
        },
    };
    Ok(LosoRun { report, folds: artifacts })
}
