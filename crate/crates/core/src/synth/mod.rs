//! Seeded generator of synthetic movement datasets with known protective
//! intervals, planted body parts and simulated raters.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::io::write_dataset;
use crate::data::{angular_energy, ActivitySpan, ActivityType, Cohort, Dataset, MovementInstance, PARTS, RATERS};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{stream, tag, Rng};
use crate::util::write_atomic;

pub const GROUND_TRUTH: &str = "ground_truth.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub n_healthy: usize,
    pub trials_per_subject: usize,
    pub sample_rate: f64,
    /// Activity length range in seconds.
    pub activity_secs: [f64; 2],
    /// Rest between activities, in seconds.
    pub gap_secs: [f64; 2],
    /// Planted parts per patient, inclusive range.
    pub planted_parts: [usize; 2],
    /// 1-based parts planted in every patient.
    pub planted_core: Vec<usize>,
    /// 1-based parts the remaining planted parts are drawn from.
    pub planted_pool: Vec<usize>,
    /// Share of each patient activity covered by its protective interval.
    pub protective_fraction: f64,
    pub signature: Signature,
    pub angle_noise: f64,
    pub rater_flip_p: f64,
    pub rater_jitter: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Signature {
    /// Multiplier on the baseline oscillation inside a protective interval.
    pub attenuation: f64,
    pub tremor_hz: f64,
    pub tremor_amplitude: f64,
    /// Length of the frozen hesitation inside each interval, in seconds.
    pub pause_secs: f64,
}

impl Default for Signature {
    fn default() -> Self {
        Signature { attenuation: 0.3, tremor_hz: 6.0, tremor_amplitude: 0.06, pause_secs: 0.5 }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 6,
            n_healthy: 6,
            trials_per_subject: 1,
            sample_rate: 60.0,
            activity_secs: [10.0, 30.0],
            gap_secs: [1.0, 3.0],
            planted_parts: [2, 4],
            // Lower trunk, then upper trunk, hips and trunk-thigh angles of the default joint table.
            planted_core: vec![3],
            planted_pool: vec![2, 8, 9, 12, 13],
            protective_fraction: 0.35,
            signature: Signature::default(),
            angle_noise: 0.003,
            rater_flip_p: 0.05,
            rater_jitter: 30,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::usage(m));
        if self.n_patients + self.n_healthy == 0 || self.trials_per_subject == 0 {
            return bad("at least one subject and one trial are required".into());
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return bad(format!("sample_rate {} must be positive", self.sample_rate));
        }
        for (name, [lo, hi]) in [("activity_secs", self.activity_secs), ("gap_secs", self.gap_secs)] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} [{lo}, {hi}] is not a valid range"));
            }
        }
        if self.activity_secs[0] * self.sample_rate < 1.0 {
            return bad("activities must last at least one sample".into());
        }
        let [pl, ph] = self.planted_parts;
        let mut all: Vec<usize> = self.planted_core.iter().chain(&self.planted_pool).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != self.planted_core.len() + self.planted_pool.len() || all.iter().any(|&p| p == 0 || p > PARTS) {
            return bad(format!("planted_core and planted_pool must list distinct parts in 1..={PARTS}"));
        }
        let core = self.planted_core.len();
        if pl == 0 || pl > ph || pl < core || ph > all.len() {
            return bad(format!(
                "planted_parts [{pl}, {ph}] must satisfy 1 ≤ lo ≤ hi, {core} core parts ≤ lo and hi ≤ {}",
                all.len()
            ));
        }
        if !(self.protective_fraction > 0.0 && self.protective_fraction < 1.0) {
            return bad(format!("protective_fraction {} must lie in (0, 1)", self.protective_fraction));
        }
        if !(0.0..=0.2).contains(&self.rater_flip_p) {
            return bad(format!("rater_flip_p {} must lie in [0, 0.2]", self.rater_flip_p));
        }
        let s = &self.signature;
        if !(s.attenuation >= 0.0 && s.tremor_hz >= 0.0 && s.tremor_amplitude >= 0.0 && s.pause_secs >= 0.0) {
            return bad("signature parameters must be non-negative".into());
        }
        if !(self.angle_noise >= 0.0) {
            return bad("angle_noise must be non-negative".into());
        }
        Ok(())
    }

    /// Subject profiles in generation order: patients `P01..`, then healthy `H01..`.
    pub fn profiles(&self) -> Vec<SubjectProfile> {
        let mut out = Vec::new();
        for i in 0..self.n_patients {
            let mut rng = stream(self.seed, &[tag::SYNTH, 0, i as u64]);
            let n = rng.random_range(self.planted_parts[0]..=self.planted_parts[1]);
            let mut extra: Vec<usize> = self.planted_pool.iter().map(|p| p - 1).collect();
            extra.shuffle(&mut rng);
            extra.truncate(n - self.planted_core.len());
            let mut parts: Vec<usize> = self.planted_core.iter().map(|p| p - 1).chain(extra).collect();
            parts.sort_unstable();
            out.push(SubjectProfile {
                subject_id: format!("P{:02}", i + 1),
                cohort: Cohort::Patient,
                planted_parts: parts,
                forced_intervals: None,
            });
        }
        for i in 0..self.n_healthy {
            out.push(SubjectProfile {
                subject_id: format!("H{:02}", i + 1),
                cohort: Cohort::Healthy,
                planted_parts: Vec::new(),
                forced_intervals: None,
            });
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub cohort: Cohort,
    /// 0-based part indices carrying the signature. Empty for healthy subjects.
    pub planted_parts: Vec<usize>,
    /// Replaces the random interval placement with these `[start, end)` ranges.
    pub forced_intervals: Option<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub instance_id: String,
    pub subject_id: String,
    pub cohort: Cohort,
    pub mask: Vec<u8>,
    /// 0-based; written 1-based in the sidecar file.
    pub planted_parts: Vec<usize>,
}

impl GroundTruth {
    pub fn runs(&self) -> Vec<[usize; 2]> {
        mask_runs(&self.mask)
    }
}

pub fn mask_runs(mask: &[u8]) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < mask.len() {
        if mask[t] != 0 {
            let s = t;
            while t < mask.len() && mask[t] != 0 {
                t += 1;
            }
            out.push([s, t]);
        } else {
            t += 1;
        }
    }
    out
}

fn uniform_samples(rng: &mut Rng, [lo, hi]: [f64; 2], fs: f64) -> usize {
    let secs = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    (secs * fs).round() as usize
}

struct Oscillator {
    freq: f64,
    amp: f64,
    phase: f64,
}

/// One synthetic trial for `profile`.
pub fn generate_instance(
    cfg: &SynthConfig,
    profile: &SubjectProfile,
    trial: &str,
    rng: &mut Rng,
) -> Result<(MovementInstance, GroundTruth)> {
    cfg.validate()?;
    if profile.cohort == Cohort::Patient && profile.planted_parts.is_empty() {
        return Err(Error::usage(format!("patient {} has no planted parts", profile.subject_id)));
    }
    if profile.cohort == Cohort::Healthy && !profile.planted_parts.is_empty() {
        return Err(Error::usage(format!("healthy subject {} has planted parts", profile.subject_id)));
    }
    if let Some(p) = profile.planted_parts.iter().find(|&&p| p >= PARTS) {
        return Err(Error::usage(format!("planted part {p} out of range")));
    }
    let fs_hz = cfg.sample_rate;

    // Timeline: gap, activity, gap, activity, ..., gap.
    let mut order = ActivityType::ALL.to_vec();
    order.shuffle(rng);
    let mut activities = Vec::new();
    let mut t = uniform_samples(rng, cfg.gap_secs, fs_hz);
    for kind in order {
        let len = uniform_samples(rng, cfg.activity_secs, fs_hz).max(1);
        activities.push(ActivitySpan { kind, start: t, end: t + len });
        t += len + uniform_samples(rng, cfg.gap_secs, fs_hz);
    }
    let t_raw = t;

    let mut intervals: Vec<(usize, usize)> = match (&profile.forced_intervals, profile.cohort) {
        (_, Cohort::Healthy) => Vec::new(),
        (Some(f), _) => f.iter().map(|&(s, e)| (s.min(t_raw), e.min(t_raw))).filter(|(s, e)| s < e).collect(),
        (None, _) => activities
            .iter()
            .filter_map(|a| {
                let len = ((a.len() as f64) * cfg.protective_fraction).round() as usize;
                (len > 0).then(|| {
                    let s = a.start + rng.random_range(0..=a.len() - len);
                    (s, s + len)
                })
            })
            .collect(),
    };
    intervals.sort_unstable();
    let mut mask = vec![0u8; t_raw];
    for &(s, e) in &intervals {
        mask[s..e].fill(1);
    }

    let noise = Normal::new(0.0, cfg.angle_noise).map_err(|e| Error::usage(e.to_string()))?;
    let sig = &cfg.signature;
    let pause_len = (sig.pause_secs * fs_hz).round() as usize;
    // A joint's resting angle is shared by everyone; subjects deviate a little from it.
    let part_means: Vec<f64> = (0..PARTS)
        .map(|p| stream(cfg.seed, &[tag::SYNTH, 2, p as u64]).random_range(1.05..2.05))
        .collect();
    let mut frames = Matrix::zeros(t_raw, 2 * PARTS);
    for part in 0..PARTS {
        // Means and amplitudes keep the clean signal inside (0, π), so the clamp never clips.
        let mean = part_means[part] + rng.random_range(-0.15..0.15);
        let n_osc = rng.random_range(2..=3);
        let osc: Vec<Oscillator> = (0..n_osc)
            .map(|_| Oscillator {
                freq: rng.random_range(0.1..0.5),
                amp: rng.random_range(0.05..0.25),
                phase: rng.random_range(0.0..TAU),
            })
            .collect();
        let tremor_phase = rng.random_range(0.0..TAU);
        let planted = profile.planted_parts.contains(&part);
        // Each interval gets its own pause offset, drawn even when unused to keep streams aligned.
        let pauses: Vec<usize> = intervals
            .iter()
            .map(|&(s, e)| s + rng.random_range(0..=(e - s).saturating_sub(pause_len)))
            .collect();
        let clean = |t: usize, inside: bool| {
            let secs = t as f64 / fs_hz;
            let base: f64 = osc.iter().map(|o| o.amp * (TAU * o.freq * secs + o.phase).sin()).sum();
            if inside {
                mean + sig.attenuation * base + sig.tremor_amplitude * (TAU * sig.tremor_hz * secs + tremor_phase).sin()
            } else {
                mean + base
            }
        };
        let mut theta = Vec::with_capacity(t_raw);
        let mut iv = 0;
        for t in 0..t_raw {
            while iv < intervals.len() && intervals[iv].1 <= t {
                iv += 1;
            }
            let inside = planted && iv < intervals.len() && intervals[iv].0 <= t;
            let value = if inside {
                let p = pauses[iv];
                if pause_len > 0 && t >= p && t < p + pause_len {
                    clean(p, true)
                } else {
                    clean(t, true)
                }
            } else {
                clean(t, false)
            };
            theta.push((value + noise.sample(rng)).clamp(0.0, PI));
        }
        for (t, e) in angular_energy(&theta, fs_hz).into_iter().enumerate() {
            frames.set(t, part, theta[t]);
            frames.set(t, PARTS + part, e);
        }
    }

    let raters = simulate_raters(&mask, profile.cohort, rng, cfg.rater_flip_p, cfg.rater_jitter)?;
    let id = format!("{}_{trial}", profile.subject_id);
    let inst = MovementInstance {
        id: id.clone(),
        subject_id: profile.subject_id.clone(),
        cohort: profile.cohort,
        trial: trial.to_string(),
        sample_rate: fs_hz,
        frames,
        raters,
        activities,
    };
    let gt = GroundTruth {
        instance_id: id,
        subject_id: profile.subject_id.clone(),
        cohort: profile.cohort,
        mask,
        planted_parts: profile.planted_parts.clone(),
    };
    Ok((inst, gt))
}

/// Four noisy copies of `mask`: each boundary moves by up to ±`jitter`
/// samples per rater, then each sample flips with probability `flip_p`.
/// Healthy participants are never rated protective.
pub fn simulate_raters(
    mask: &[u8],
    cohort: Cohort,
    rng: &mut Rng,
    flip_p: f64,
    jitter: usize,
) -> Result<Vec<[u8; RATERS]>> {
    if !(0.0..=0.2).contains(&flip_p) {
        return Err(Error::usage(format!("flip probability {flip_p} must lie in [0, 0.2]")));
    }
    let n = mask.len();
    let mut out = vec![[0u8; RATERS]; n];
    let runs = mask_runs(mask);
    for r in 0..RATERS {
        let mut col = vec![0u8; n];
        for &[s, e] in &runs {
            let j = jitter as i64;
            let (ds, de) = if jitter > 0 { (rng.random_range(-j..=j), rng.random_range(-j..=j)) } else { (0, 0) };
            let s2 = (s as i64 + ds).clamp(0, n as i64) as usize;
            let e2 = (e as i64 + de).clamp(0, n as i64) as usize;
            if s2 < e2 {
                col[s2..e2].fill(1);
            }
        }
        if flip_p > 0.0 {
            for v in col.iter_mut() {
                if rng.random::<f64>() < flip_p {
                    *v ^= 1;
                }
            }
        }
        if cohort == Cohort::Patient {
            for (row, v) in out.iter_mut().zip(col) {
                row[r] = v;
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SidecarEntry {
    subject: String,
    cohort: Cohort,
    length: usize,
    /// 1-based part numbers.
    planted_parts: Vec<usize>,
    /// `[start, end)` runs of the protective mask.
    mask_runs: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    instances: BTreeMap<String, SidecarEntry>,
}

/// Every instance and its ground truth, without touching the filesystem.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, Vec<GroundTruth>)> {
    cfg.validate()?;
    let mut instances = Vec::new();
    let mut truth = Vec::new();
    for (si, profile) in cfg.profiles().iter().enumerate() {
        for trial in 0..cfg.trials_per_subject {
            let mut rng = stream(cfg.seed, &[tag::SYNTH, 1, si as u64, trial as u64]);
            let (inst, gt) = generate_instance(cfg, profile, &format!("T{}", trial + 1), &mut rng)?;
            instances.push(inst);
            truth.push(gt);
        }
    }
    Ok((Dataset { sample_rate: cfg.sample_rate, instances }, truth))
}

/// Writes the dataset directory plus the ground-truth sidecar.
pub fn generate_dataset(cfg: &SynthConfig, out: &Path) -> Result<(Dataset, Vec<GroundTruth>)> {
    let (dataset, truth) = generate(cfg)?;
    write_dataset(out, &dataset)?;
    write_ground_truth(out, &truth)?;
    Ok((dataset, truth))
}

pub fn write_ground_truth(dir: &Path, truth: &[GroundTruth]) -> Result<()> {
    let sidecar = Sidecar {
        schema_version: 1,
        instances: truth
            .iter()
            .map(|g| {
                (
                    g.instance_id.clone(),
                    SidecarEntry {
                        subject: g.subject_id.clone(),
                        cohort: g.cohort,
                        length: g.mask.len(),
                        planted_parts: g.planted_parts.iter().map(|p| p + 1).collect(),
                        mask_runs: g.runs(),
                    },
                )
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(&dir.join(GROUND_TRUTH), text.as_bytes())
}

pub fn read_ground_truth(dir: &Path) -> Result<Vec<GroundTruth>> {
    let path = dir.join(GROUND_TRUTH);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::load(&path, None, e.to_string()))?;
    sidecar
        .instances
        .into_iter()
        .map(|(id, e)| {
            let mut mask = vec![0u8; e.length];
            for [s, t] in e.mask_runs {
                if s > t || t > e.length {
                    return Err(Error::load(&path, None, format!("{id}: run [{s}, {t}) out of bounds")));
                }
                mask[s..t].fill(1);
            }
            if e.planted_parts.iter().any(|&p| p == 0 || p > PARTS) {
                return Err(Error::load(&path, None, format!("{id}: planted part out of range")));
            }
            Ok(GroundTruth {
                instance_id: id,
                subject_id: e.subject,
                cohort: e.cohort,
                mask,
                planted_parts: e.planted_parts.into_iter().map(|p| p - 1).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_segment;

    #[test]
    fn default_profiles() {
        let cfg = SynthConfig::default();
        let p = cfg.profiles();
        assert_eq!(p.len(), 12);
        assert_eq!(p[0].subject_id, "P01");
        assert_eq!(p[11].subject_id, "H06");
        for q in &p[..6] {
            assert!((2..=4).contains(&q.planted_parts.len()));
        }
        assert!(p[6..].iter().all(|q| q.planted_parts.is_empty()));
    }

    #[test]
    fn noiseless_raters_reproduce_the_mask() {
        let mut mask = vec![0u8; 500];
        mask[100..260].fill(1);
        mask[400..420].fill(1);
        let mut rng = stream(1, &[]);
        let r = simulate_raters(&mask, Cohort::Patient, &mut rng, 0.0, 0).unwrap();
        for (m, row) in mask.iter().zip(&r) {
            assert_eq!(row, &[*m; 4]);
            let vote = label_segment(std::slice::from_ref(row), 1);
            assert_eq!(vote.class() as u8, *m);
        }
        let h = simulate_raters(&mask, Cohort::Healthy, &mut rng, 0.2, 30).unwrap();
        assert!(h.iter().all(|row| row == &[0; 4]));
        assert!(simulate_raters(&mask, Cohort::Patient, &mut rng, 0.3, 0).is_err());
    }

    #[test]
    fn rle_round_trip() {
        let mask = [0, 1, 1, 0, 0, 1, 0, 1, 1, 1];
        assert_eq!(mask_runs(&mask), vec![[1, 3], [5, 6], [7, 10]]);
        assert!(mask_runs(&[0, 0]).is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut c = SynthConfig { protective_fraction: 1.0, ..SynthConfig::default() };
        assert!(c.validate().is_err());
        c.protective_fraction = 0.3;
        c.planted_parts = [0, 2];
        assert!(c.validate().is_err());
        c.planted_parts = [2, 14];
        assert!(c.validate().is_err());
        assert!(SynthConfig::default().validate().is_ok());
    }
}
