//! Dataset directory: `manifest.toml` plus one CSV per instance.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::angular_energy;
use super::instance::{ActivitySpan, ActivityType, Cohort, Dataset, MovementInstance, PARTS, RATERS};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::util::write_atomic;

pub const MANIFEST: &str = "manifest.toml";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub sample_rate: f64,
    pub subjects: Vec<SubjectEntry>,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    pub cohort: Cohort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub id: String,
    pub subject: String,
    pub trial: String,
    pub file: String,
}

pub fn csv_header(parts: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=parts).map(|i| format!("angle_{i:02}")));
    h.extend((1..=parts).map(|i| format!("energy_{i:02}")));
    h.extend((1..=RATERS).map(|i| format!("rater_{i}")));
    h.push("activity".into());
    h
}

fn manifest_path(root: &Path) -> PathBuf {
    root.join(MANIFEST)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = manifest_path(root);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::load(&path, None, e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::load(
            &path,
            None,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    if !(manifest.sample_rate > 0.0 && manifest.sample_rate.is_finite()) {
        return Err(Error::load(&path, None, "sample_rate must be positive"));
    }
    Ok(manifest)
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let mpath = manifest_path(root);
    let mut instances = Vec::with_capacity(manifest.instances.len());
    for entry in &manifest.instances {
        let cohort = manifest
            .subjects
            .iter()
            .find(|s| s.id == entry.subject)
            .map(|s| s.cohort)
            .ok_or_else(|| Error::load(&mpath, None, format!("instance {} names unknown subject {}", entry.id, entry.subject)))?;
        if instances.iter().any(|i: &MovementInstance| i.id == entry.id) {
            return Err(Error::load(&mpath, None, format!("duplicate instance id {}", entry.id)));
        }
        instances.push(read_instance(&root.join(&entry.file), entry, cohort, manifest.sample_rate)?);
    }
    Ok(Dataset { sample_rate: manifest.sample_rate, instances })
}

fn read_instance(path: &Path, entry: &InstanceEntry, cohort: Cohort, fs_hz: f64) -> Result<MovementInstance> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::load(path, Some(0), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header(PARTS) {
        return Err(Error::load(path, Some(0), "unexpected header row"));
    }
    let c = PARTS;
    let mut data = Vec::new();
    let mut energy_present = Vec::new();
    let mut raters = Vec::new();
    let mut labels: Vec<Option<ActivityType>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Error rows are 1-based file lines; the header is line 1.
        let row = i + 2;
        let rec = rec.map_err(|e| Error::load(path, Some(row), e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::load(path, Some(row), format!("{} fields, expected {}", rec.len(), header.len())));
        }
        let t: usize = rec[0].parse().map_err(|_| Error::load(path, Some(row), format!("bad sample index `{}`", &rec[0])))?;
        if t != i {
            return Err(Error::load(path, Some(row), format!("sample index {t}, expected {i}")));
        }
        let num = |s: &str, col: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::load(path, Some(row), format!("`{s}` in {col} is not a number")))
        };
        let mut frame = vec![0.0; 2 * c];
        let mut present = 0;
        for k in 0..c {
            frame[k] = num(&rec[1 + k], &header[1 + k])?;
            let e = &rec[1 + c + k];
            if !e.is_empty() {
                frame[c + k] = num(e, &header[1 + c + k])?;
                present |= 1u32 << k;
            }
        }
        energy_present.push(present);
        data.extend_from_slice(&frame);
        let mut flags = [0u8; RATERS];
        for (r, f) in flags.iter_mut().enumerate() {
            *f = match &rec[1 + 2 * c + r] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::load(path, Some(row), format!("rater flag `{other}` is not 0 or 1"))),
            };
        }
        raters.push(flags);
        let act = &rec[1 + 2 * c + RATERS];
        labels.push(if act.is_empty() {
            None
        } else {
            Some(act.parse().map_err(|e: Error| Error::load(path, Some(row), e.to_string()))?)
        });
    }
    let t_raw = raters.len();
    let mut frames = Matrix::from_vec(t_raw, 2 * c, data)?;
    for k in 0..c {
        let present = energy_present.iter().filter(|&&m| m & (1 << k) != 0).count();
        if present == 0 && t_raw > 0 {
            let theta: Vec<f64> = (0..t_raw).map(|t| frames.get(t, k)).collect();
            for (t, e) in angular_energy(&theta, fs_hz).into_iter().enumerate() {
                frames.set(t, c + k, e);
            }
        } else if present != t_raw {
            let row = energy_present.iter().position(|&m| m & (1 << k) == 0).unwrap_or(0) + 2;
            return Err(Error::load(path, Some(row), format!("energy_{:02} is only partly present", k + 1)));
        }
    }
    let inst = MovementInstance {
        id: entry.id.clone(),
        subject_id: entry.subject.clone(),
        cohort,
        trial: entry.trial.clone(),
        sample_rate: fs_hz,
        frames,
        raters,
        activities: activity_runs(&labels),
    };
    inst.validate().map_err(|(row, msg)| Error::load(path, row.map(|r| r + 2), msg))?;
    Ok(inst)
}

/// Maximal runs of a constant non-empty activity column.
fn activity_runs(labels: &[Option<ActivityType>]) -> Vec<ActivitySpan> {
    let mut out: Vec<ActivitySpan> = Vec::new();
    for (t, l) in labels.iter().enumerate() {
        if let Some(kind) = *l {
            match out.last_mut() {
                Some(s) if s.kind == kind && s.end == t => s.end = t + 1,
                _ => out.push(ActivitySpan { kind, start: t, end: t + 1 }),
            }
        }
    }
    out
}

pub fn instance_csv(inst: &MovementInstance) -> Result<String> {
    let c = inst.parts();
    if c != PARTS {
        return Err(Error::usage(format!("instance {} has {c} parts, the file format has {PARTS}", inst.id)));
    }
    let mut spans = inst.activities.clone();
    spans.sort_by_key(|s| s.start);
    for w in spans.windows(2) {
        if w[1].start < w[0].end || (w[1].start == w[0].end && w[1].kind == w[0].kind) {
            return Err(Error::usage(format!("instance {}: activities must be disjoint and not abut with the same type", inst.id)));
        }
    }
    let mut out = csv_header(c).join(",");
    out.push('\n');
    let mut span = spans.iter().peekable();
    for t in 0..inst.len() {
        while span.peek().is_some_and(|s| s.end <= t) {
            span.next();
        }
        write!(out, "{t}").unwrap();
        for v in inst.frames.row(t) {
            write!(out, ",{v}").unwrap();
        }
        for f in inst.raters[t] {
            write!(out, ",{f}").unwrap();
        }
        match span.peek() {
            Some(s) if s.start <= t => write!(out, ",{}", s.kind).unwrap(),
            _ => out.push(','),
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `dataset` under `root`. Instance files are named `<id>.csv`.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<Manifest> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut subjects: Vec<SubjectEntry> = dataset
        .subjects()
        .into_iter()
        .map(|(id, cohort)| SubjectEntry { id, cohort })
        .collect();
    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    let mut instances = Vec::new();
    for inst in &dataset.instances {
        let file = format!("{}.csv", inst.id);
        write_atomic(&root.join(&file), instance_csv(inst)?.as_bytes())?;
        instances.push(InstanceEntry {
            id: inst.id.clone(),
            subject: inst.subject_id.clone(),
            trial: inst.trial.clone(),
            file,
        });
    }
    let manifest = Manifest { schema_version: SCHEMA_VERSION, sample_rate: dataset.sample_rate, subjects, instances };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&manifest_path(root), text.as_bytes())?;
    Ok(manifest)
}

/// SHA-256 over the canonical encoding of every instance: identity, cohort and file body.
/// Equal for a dataset in memory and the same dataset written and reloaded.
pub fn content_hash(dataset: &Dataset) -> Result<String> {
    let mut h = Sha256::new();
    h.update(dataset.sample_rate.to_le_bytes());
    for inst in &dataset.instances {
        let cohort = match inst.cohort {
            Cohort::Patient => "patient",
            Cohort::Healthy => "healthy",
        };
        for field in [inst.id.as_str(), inst.subject_id.as_str(), inst.trial.as_str(), cohort] {
            h.update(field.as_bytes());
            h.update([0u8]);
        }
        h.update(instance_csv(inst)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// [`content_hash`] of the dataset stored under `root`.
pub fn dataset_hash(root: &Path) -> Result<String> {
    content_hash(&load_dataset(root)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let len = 50;
        let mut frames = Matrix::zeros(len, 26);
        for t in 0..len {
            for k in 0..13 {
                frames.set(t, k, 0.3 + 0.1 * k as f64 + (t as f64 * 0.37).sin() * 0.05);
            }
        }
        for k in 0..13 {
            let theta: Vec<f64> = (0..len).map(|t| frames.get(t, k)).collect();
            for (t, e) in angular_energy(&theta, 60.0).into_iter().enumerate() {
                frames.set(t, 13 + k, e);
            }
        }
        let mut raters = vec![[0u8; 4]; len];
        raters[12] = [1, 0, 1, 1];
        let patient = MovementInstance {
            id: "P01_T1".into(),
            subject_id: "P01".into(),
            cohort: Cohort::Patient,
            trial: "T1".into(),
            sample_rate: 60.0,
            frames: frames.clone(),
            raters,
            activities: vec![
                ActivitySpan { kind: ActivityType::Bend, start: 2, end: 20 },
                ActivitySpan { kind: ActivityType::OneLegStand, start: 20, end: 31 },
                ActivitySpan { kind: ActivityType::Bend, start: 40, end: 50 },
            ],
        };
        let healthy = MovementInstance {
            id: "H01_T1".into(),
            subject_id: "H01".into(),
            cohort: Cohort::Healthy,
            raters: vec![[0; 4]; len],
            activities: vec![ActivitySpan { kind: ActivityType::SitToStand, start: 0, end: 50 }],
            ..patient.clone()
        };
        Dataset { sample_rate: 60.0, instances: vec![patient, healthy] }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        write_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        let h1 = dataset_hash(dir.path()).unwrap();
        assert_eq!(content_hash(&ds).unwrap(), h1);
        let mut other = ds.clone();
        other.instances[0].frames.set(3, 3, 0.5);
        assert_ne!(content_hash(&other).unwrap(), h1);
    }

    #[test]
    fn absent_energies_are_computed() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        write_dataset(dir.path(), &ds).unwrap();
        let p = dir.path().join("P01_T1.csv");
        let text = fs::read_to_string(&p).unwrap();
        let stripped: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let mut f: Vec<&str> = l.split(',').collect();
                if i > 0 {
                    for v in &mut f[14..27] {
                        *v = "";
                    }
                }
                f.join(",") + "\n"
            })
            .collect();
        fs::write(&p, stripped).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.instances[0].frames, ds.instances[0].frames);
    }

    fn corrupt(edit: impl Fn(&mut Vec<Vec<String>>)) -> Error {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &sample()).unwrap();
        let p = dir.path().join("P01_T1.csv");
        let mut rows: Vec<Vec<String>> = fs::read_to_string(&p)
            .unwrap()
            .lines()
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        edit(&mut rows);
        let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
        fs::write(&p, text).unwrap();
        load_dataset(dir.path()).unwrap_err()
    }

    #[test]
    fn validation_names_file_and_row() {
        let err = corrupt(|rows| rows[6][3] = "3.5".into());
        match err {
            Error::Load { file, row, .. } => {
                assert!(file.ends_with("P01_T1.csv"));
                assert_eq!(row, Some(7));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(corrupt(|rows| rows[3][1] = "NaN".into()), Error::Load { row: Some(4), .. }));
        assert!(matches!(corrupt(|rows| rows[3][28] = "2".into()), Error::Load { row: Some(4), .. }));
        assert!(matches!(corrupt(|rows| rows[4][16] = String::new()), Error::Load { .. }));
        assert!(matches!(corrupt(|rows| rows[2][0] = "7".into()), Error::Load { row: Some(3), .. }));
    }

    #[test]
    fn healthy_ratings_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = sample();
        ds.instances[1].raters[3] = [1, 1, 0, 0];
        write_dataset(dir.path(), &ds).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load { .. })));
    }

    #[test]
    fn missing_file_and_bad_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &sample()).unwrap();
        fs::remove_file(dir.path().join("H01_T1.csv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
        let m = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&m).unwrap();
        fs::write(&m, format!("bogus = 1\n{text}")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load { .. })));
    }
}
