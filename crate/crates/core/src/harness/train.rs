use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::Confusion;
use crate::data::Segment;
use crate::error::{Error, Result};
use crate::model::{ForwardMode, Model, Prediction};
use crate::nn::AdamState;
use crate::rng::{derive_seed, hash_str, stream, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss during the epoch, dropout active.
    pub train_loss: f64,
    pub train_f1: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Carries the parameters of the best epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn as_batch<'a>(segs: &[&'a Segment]) -> Vec<(&'a [f64], usize)> {
    segs.iter().map(|s| (s.matrix.as_slice(), s.label.class())).collect()
}

pub fn predict_segments(model: &Model, segments: &[Segment]) -> Result<Vec<Prediction>> {
    segments.par_iter().map(|s| model.predict(s.matrix.as_slice())).collect()
}

/// Mean loss and macro-F1 in inference mode.
pub fn score(model: &Model, segments: &[Segment]) -> Result<(f64, f64)> {
    let preds = predict_segments(model, segments)?;
    let loss = preds
        .iter()
        .zip(segments)
        .map(|(p, s)| -p.probs[s.label.class()].max(1e-300).ln())
        .sum::<f64>()
        / segments.len() as f64;
    let conf = Confusion::from_pairs(preds.iter().zip(segments).map(|(p, s)| (s.label.class(), p.class())));
    Ok((loss, conf.macro_f1()))
}

/// Holds out `fraction` of every subject's segments, chosen at random per subject.
pub fn split_validation(segments: Vec<Segment>, fraction: f64, seed: u64) -> (Vec<Segment>, Vec<Segment>) {
    let mut by_subject: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for s in segments {
        by_subject.entry(s.subject_id.clone()).or_default().push(s);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (subject, mut segs) in by_subject {
        let n_val = (fraction * segs.len() as f64).round() as usize;
        let mut idx: Vec<usize> = (0..segs.len()).collect();
        idx.shuffle(&mut stream(seed, &[tag::SPLIT, hash_str(&subject)]));
        let mut is_val = vec![false; segs.len()];
        for &i in &idx[..n_val] {
            is_val[i] = true;
        }
        for (s, v) in segs.drain(..).zip(is_val) {
            if v {
                val.push(s);
            } else {
                train.push(s);
            }
        }
    }
    (train, val)
}

/// Mini-batch Adam with per-epoch shuffling and early stopping on validation
/// loss (training loss when `val` is empty). Returns the best epoch's parameters.
pub fn train(mut model: Model, train: &[Segment], val: &[Segment], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::usage("cannot train on an empty training set"));
    }
    let batch = cfg.batch();
    let mut adam = AdamState::new(model.param_count(), cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().values().to_vec());
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut conf = Confusion::default();
        for (bi, chunk) in order.chunks(batch).enumerate() {
            let segs: Vec<&Segment> = chunk.iter().map(|&i| &train[i]).collect();
            let mode = ForwardMode::Train { seed: derive_seed(cfg.seed, &[tag::DROPOUT, epoch as u64, bi as u64]) };
            let g = model.compute_gradients(&as_batch(&segs), mode)?;
            loss_sum += g.loss * segs.len() as f64;
            for (p, s) in g.probs.iter().zip(&segs) {
                let pred = usize::from(p[1] > p[0]);
                conf.counts[s.label.class()][pred] += 1;
            }
            adam.step(model.params_mut().values_mut(), &g.grads)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val_loss, val_f1) = if val.is_empty() {
            (None, None)
        } else {
            let (l, f) = score(&model, val)?;
            (Some(l), Some(f))
        };
        history.push(EpochRecord { epoch, train_loss, train_f1: conf.macro_f1(), val_loss, val_f1 });
        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best.0 {
            best = (monitored, epoch, model.params().values().to_vec());
        } else if epoch - best.1 >= cfg.patience {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    let (_, best_epoch, params) = best;
    model.set_params(params)?;
    Ok(TrainOutcome { model, history, best_epoch, stopped_early })
}
