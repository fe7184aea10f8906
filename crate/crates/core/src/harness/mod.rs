//! Training loop, evaluation, LOSO driver, statistics and attention export.

mod attention;
mod config;
mod loso;
mod metrics;
mod stats;
mod train;

pub use attention::{
    attention_records, export_attention, localization, write_export, AttentionExport, AttentionRow, GroupSummary, Localization, Quartiles,
};
pub use config::{ExperimentConfig, ModelOverrides, TrainConfig};
pub use loso::{run_loso, train_on_subjects, ExperimentReport, FoldArtifacts, FoldAudit, FoldResult, LosoRun, Reproducibility, REPORT_SCHEMA_VERSION};
pub use metrics::{ClassMetrics, Confusion, FoldReport};
pub use stats::{bonferroni, paired_ttest, TTest};
pub use train::{predict_segments, score, split_validation, train, EpochRecord, TrainOutcome};

use crate::data::Segment;
use crate::error::Result;
use crate::model::Model;

/// Confusion-based report of `model` on `test`.
pub fn evaluate(model: &Model, test: &[Segment], test_subject: &str) -> Result<FoldReport> {
    let preds = predict_segments(model, test)?;
    let conf = Confusion::from_pairs(preds.iter().zip(test).map(|(p, s)| (s.label.class(), p.class())));
    FoldReport::from_confusion(test_subject, conf)
}

/// Central-difference check of every parameter on one random labelled input,
/// in inference mode and with frozen dropout masks. Returns the worse report.
pub fn check_gradients(spec: &crate::model::ModelSpec, seed: u64, tol: f64) -> Result<crate::nn::gradcheck::GradCheckReport> {
    use crate::model::{build_model, ForwardMode};
    use rand::Rng as _;
    let model = build_model(spec, seed)?;
    let mut rng = crate::rng::stream(seed, &[crate::rng::tag::INIT, u64::MAX]);
    let x: Vec<f64> = (0..model.input_len()).map(|_| rng.random_range(-1.5..1.5)).collect();
    let batch = [(x.as_slice(), (seed % 2) as usize)];
    let mut worst: Option<crate::nn::gradcheck::GradCheckReport> = None;
    for mode in [ForwardMode::Infer, ForwardMode::Train { seed }] {
        let r = model.grad_check(&batch, mode, 1e-5, tol)?;
        if worst.as_ref().is_none_or(|w| r.max_rel_error > w.max_rel_error) {
            worst = Some(r);
        }
    }
    Ok(worst.expect("two modes checked"))
}
