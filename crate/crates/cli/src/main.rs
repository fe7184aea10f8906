use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use banet::data::{content_hash, load_dataset, segment_dataset, write_dataset, SegmentConfig};
use banet::harness::{
    attention_records, bonferroni, check_gradients, evaluate, localization, paired_ttest, run_loso, train_on_subjects,
    write_export, EpochRecord, ExperimentConfig, ExperimentReport, FoldReport, Localization, Reproducibility,
};
use banet::model::io::{load_model, save_model};
use banet::model::{build_model, ModelSpec, Variant};
use banet::synth::{generate, write_ground_truth, read_ground_truth, SynthConfig};
use banet::util::{configure_threads, sha256_hex, write_atomic};
use banet::{Dataset, Model, Normalizer, Segment};

const THREADS_ENV: &str = "BANET_THREADS";

#[derive(Parser)]
#[command(name = "banet", version, about = "Train and evaluate body-attention movement classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth sidecar.
    Synth {
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-subject-out evaluation.
    Loso {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        /// TOML experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report file.
        #[arg(long)]
        out: PathBuf,
        /// Write each fold's model as `<subject>.model` here.
        #[arg(long)]
        save_models: Option<PathBuf>,
    },
    /// Train one model on all subjects except the held-out ones.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Subjects to leave out of training; repeatable.
        #[arg(long = "hold-out")]
        hold_out: Vec<String>,
        /// Model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict to these subjects; repeatable.
        #[arg(long)]
        subject: Vec<String>,
        /// Segmentation settings are read from this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the trainable parameter count.
    Paramcount {
        /// All variants when omitted.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = Scale::Small)]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Export per-segment attention of a saved model.
    Attention {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subject: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired t-test of per-fold macro-F1 between two reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Bonferroni factor.
        #[arg(long, default_value_t = 1)]
        comparisons: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// T = 12, K = 4.
    Small,
    /// The variant's full size.
    Full,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn experiment_config(path: Option<&Path>, variant: Option<Variant>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_toml(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = variant {
        cfg.train.variant = v;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(data: &Path) -> Result<Dataset> {
    load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))
}

/// Normalized original segments of `subjects` (all when empty).
fn eval_segments(dataset: &Dataset, seg: &SegmentConfig, normalizer: &Normalizer, subjects: &[String]) -> Result<Vec<Segment>> {
    let known: BTreeSet<String> = dataset.subjects().into_iter().map(|(s, _)| s).collect();
    for s in subjects {
        if !known.contains(s) {
            bail!("subject {s} is not in the dataset");
        }
    }
    let mut segs: Vec<Segment> = segment_dataset(dataset, seg)?
        .into_iter()
        .filter(|s| subjects.is_empty() || subjects.contains(&s.subject_id))
        .collect();
    for s in &mut segs {
        normalizer.apply_in_place(s)?;
    }
    if segs.is_empty() {
        bail!("no segments to score");
    }
    Ok(segs)
}

fn saved_model(path: &Path) -> Result<(Model, Normalizer)> {
    let (model, norm) = load_model(path).with_context(|| format!("reading model {}", path.display()))?;
    let norm = norm.with_context(|| format!("{} carries no normalizer", path.display()))?;
    Ok((model, norm))
}

fn segment_config(path: Option<&Path>, model: &Model) -> Result<SegmentConfig> {
    let seg = match path {
        Some(p) => ExperimentConfig::from_toml(&read_text(p)?)?.segment,
        None => SegmentConfig::default(),
    };
    if seg.window != model.spec().window {
        bail!("segment window {} does not match the model's {}", seg.window, model.spec().window);
    }
    Ok(seg)
}

fn model_reproducibility(model: &Model, dataset: &Dataset) -> Result<Reproducibility> {
    Ok(Reproducibility {
        seed: model.seed(),
        config_hash: sha256_hex(serde_json::to_string(model.spec())?.as_bytes()),
        dataset_hash: content_hash(dataset)?,
    })
}

#[derive(Serialize)]
struct SynthSummary {
    out: PathBuf,
    subjects: usize,
    instances: usize,
    reproducibility: Reproducibility,
}

#[derive(Serialize)]
struct TrainSummary {
    model: PathBuf,
    variant: Variant,
    param_count: usize,
    held_out: Vec<String>,
    epochs_run: usize,
    best_epoch: usize,
    stopped_early: bool,
    final_train_loss: f64,
    history: Vec<EpochRecord>,
    reproducibility: Reproducibility,
}

#[derive(Serialize)]
struct EvaluateOutput {
    variant: Variant,
    report: FoldReport,
    reproducibility: Reproducibility,
}

#[derive(Serialize)]
struct AttentionSummary {
    out: PathBuf,
    records: usize,
    /// Present when the dataset carries a ground-truth sidecar.
    localization: Option<Localization>,
}

#[derive(Serialize)]
struct Comparison {
    variant_a: Variant,
    variant_b: Variant,
    folds: usize,
    mean_macro_f1_a: f64,
    mean_macro_f1_b: f64,
    t: f64,
    df: f64,
    p: f64,
    p_bonferroni: f64,
    degenerate: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let mut cfg = match &config {
                Some(p) => toml::from_str::<SynthConfig>(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let (dataset, truth) = generate(&cfg)?;
            write_dataset(&out, &dataset)?;
            write_ground_truth(&out, &truth)?;
            print_json(&SynthSummary {
                out,
                subjects: dataset.subjects().len(),
                instances: dataset.instances.len(),
                reproducibility: Reproducibility {
                    seed: cfg.seed,
                    config_hash: sha256_hex(serde_json::to_string(&cfg)?.as_bytes()),
                    dataset_hash: content_hash(&dataset)?,
                },
            })
        }
        Command::Loso { data, variant, config, seed, out, save_models } => {
            let cfg = experiment_config(config.as_deref(), variant, seed)?;
            let dataset = load(&data)?;
            let run = run_loso(&dataset, &cfg)?;
            write_atomic(&out, run.report.to_json().as_bytes())?;
            if let Some(dir) = save_models {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for f in &run.folds {
                    save_model(&dir.join(format!("{}.model", f.test_subject)), &f.model, Some(&f.normalizer))?;
                }
            }
            let r = &run.report;
            println!(
                "{} folds={} mean_accuracy={:.4} mean_macro_f1={:.4} pooled_macro_f1={:.4}",
                r.variant,
                r.folds.len(),
                r.mean_accuracy,
                r.mean_macro_f1,
                r.pooled_macro_f1
            );
            Ok(())
        }
        Command::Train { data, variant, config, seed, hold_out, out } => {
            let cfg = experiment_config(config.as_deref(), variant, seed)?;
            let dataset = load(&data)?;
            let (outcome, normalizer) = train_on_subjects(&dataset, &cfg, &hold_out)?;
            save_model(&out, &outcome.model, Some(&normalizer))?;
            print_json(&TrainSummary {
                model: out,
                variant: cfg.train.variant,
                param_count: outcome.model.param_count(),
                held_out: hold_out,
                epochs_run: outcome.history.len(),
                best_epoch: outcome.best_epoch,
                stopped_early: outcome.stopped_early,
                final_train_loss: outcome.history.last().map_or(f64::NAN, |e| e.train_loss),
                history: outcome.history.clone(),
                reproducibility: Reproducibility {
                    seed: cfg.train.seed,
                    config_hash: cfg.hash(),
                    dataset_hash: content_hash(&dataset)?,
                },
            })
        }
        Command::Evaluate { model, data, subject, config, out } => {
            let (model, norm) = saved_model(&model)?;
            let dataset = load(&data)?;
            let segs = eval_segments(&dataset, &segment_config(config.as_deref(), &model)?, &norm, &subject)?;
            let label = if subject.is_empty() { "all".to_string() } else { subject.join(",") };
            let output = EvaluateOutput {
                variant: model.variant(),
                report: evaluate(&model, &segs, &label)?,
                reproducibility: model_reproducibility(&model, &dataset)?,
            };
            match out {
                Some(p) => write_json(&p, &output),
                None => print_json(&output),
            }
        }
        Command::Paramcount { variant } => {
            match variant {
                Some(v) => println!("{}", build_model(&ModelSpec::new(v), 0)?.param_count()),
                None => {
                    for v in Variant::ALL {
                        println!("{:<18}{}", v.name(), build_model(&ModelSpec::new(v), 0)?.param_count());
                    }
                }
            }
            Ok(())
        }
        Command::Gradcheck { variant, scale, seed, tol } => {
            let spec = match scale {
                Scale::Small => ModelSpec::reduced(variant),
                Scale::Full => ModelSpec::new(variant),
            };
            let r = check_gradients(&spec, seed, tol)?;
            println!("{variant} params={} max rel err {:.3e} (tol {tol:.0e})", r.checked, r.max_rel_error);
            if !r.passed {
                bail!(
                    "gradient check failed at parameter {}: analytic {:.6e}, numeric {:.6e}",
                    r.worst_index,
                    r.analytic,
                    r.numeric
                );
            }
            Ok(())
        }
        Command::Attention { model, data, subject, config, out } => {
            let (model, norm) = saved_model(&model)?;
            let dataset = load(&data)?;
            let segs = eval_segments(&dataset, &segment_config(config.as_deref(), &model)?, &norm, &subject)?;
            let mut export = attention_records(&model, &segs)?;
            export.reproducibility = Some(model_reproducibility(&model, &dataset)?);
            write_export(&export, &out)?;
            let localization = match read_ground_truth(&data) {
                Ok(truth) => {
                    let planted: BTreeMap<String, BTreeSet<usize>> = truth
                        .into_iter()
                        .map(|g| (g.subject_id, g.planted_parts.into_iter().collect()))
                        .collect();
                    localization(&export.records, &planted)
                }
                Err(_) => None,
            };
            print_json(&AttentionSummary { out, records: export.records.len(), localization })
        }
        Command::Compare { a, b, comparisons, out } => {
            let ra = ExperimentReport::from_json(&read_text(&a)?).with_context(|| format!("in {}", a.display()))?;
            let rb = ExperimentReport::from_json(&read_text(&b)?).with_context(|| format!("in {}", b.display()))?;
            let subjects = |r: &ExperimentReport| r.folds.iter().map(|f| f.report.test_subject.clone()).collect::<Vec<_>>();
            if subjects(&ra) != subjects(&rb) {
                bail!("reports do not share the same folds");
            }
            let t = paired_ttest(&ra.fold_f1s(), &rb.fold_f1s())?;
            let cmp = Comparison {
                variant_a: ra.variant,
                variant_b: rb.variant,
                folds: ra.folds.len(),
                mean_macro_f1_a: ra.mean_macro_f1,
                mean_macro_f1_b: rb.mean_macro_f1,
                t: t.t,
                df: t.df,
                p: t.p,
                p_bonferroni: bonferroni(t.p, comparisons),
                degenerate: t.degenerate,
            };
            match out {
                Some(p) => write_json(&p, &cmp),
                None => print_json(&cmp),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => configure_threads(n),
            _ => {
                eprintln!("error: {THREADS_ENV}={v} is not a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
