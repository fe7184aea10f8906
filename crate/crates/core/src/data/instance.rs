use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const PARTS: usize = 13;
pub const RATERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Patient,
    Healthy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityType {
    SitToStand,
    StandToSit,
    Bend,
    ReachForward,
    OneLegStand,
}

impl ActivityType {
    pub const ALL: [ActivityType; 5] = [
        ActivityType::SitToStand,
        ActivityType::StandToSit,
        ActivityType::Bend,
        ActivityType::ReachForward,
        ActivityType::OneLegStand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivityType::SitToStand => "sit-to-stand",
            ActivityType::StandToSit => "stand-to-sit",
            ActivityType::Bend => "bend",
            ActivityType::ReachForward => "reach-forward",
            ActivityType::OneLegStand => "one-leg-stand",
        }
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivityType::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown activity type `{s}`")))
    }
}

/// Half-open sample range `[start, end)` of one activity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySpan {
    pub kind: ActivityType,
    pub start: usize,
    pub end: usize,
}

impl ActivitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One subject trial.
#[derive(Clone, Debug, PartialEq)]
pub struct MovementInstance {
    pub id: String,
    pub subject_id: String,
    pub cohort: Cohort,
    pub trial: String,
    pub sample_rate: f64,
    /// `T_raw x 2C`: the `C` joint angles (radians) followed by the `C` energies ((rad/s)²).
    pub frames: Matrix,
    /// Per-sample protective flags of each rater.
    pub raters: Vec<[u8; RATERS]>,
    pub activities: Vec<ActivitySpan>,
}

impl MovementInstance {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn parts(&self) -> usize {
        self.frames.cols() / 2
    }

    pub fn angle(&self, t: usize, part: usize) -> f64 {
        self.frames.get(t, part)
    }

    pub fn energy(&self, t: usize, part: usize) -> f64 {
        self.frames.get(t, self.parts() + part)
    }

    /// Checks every instance invariant. Errors carry the offending row (0-based sample).
    pub fn validate(&self) -> std::result::Result<(), (Option<usize>, String)> {
        let t_raw = self.len();
        if self.frames.cols() % 2 != 0 || self.frames.cols() == 0 {
            return Err((None, format!("frames need 2·C columns, got {}", self.frames.cols())));
        }
        if self.raters.len() != t_raw {
            return Err((None, format!("{} rater rows for {t_raw} samples", self.raters.len())));
        }
        let c = self.parts();
        for t in 0..t_raw {
            let row = self.frames.row(t);
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err((Some(t), format!("non-finite value {v}")));
            }
            if let Some((i, v)) = row[..c].iter().enumerate().find(|(_, &v)| !(0.0..=std::f64::consts::PI).contains(&v)) {
                return Err((Some(t), format!("angle {} = {v} outside [0, π]", i + 1)));
            }
            if let Some((i, v)) = row[c..].iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err((Some(t), format!("energy {} = {v} is negative", i + 1)));
            }
            if let Some(f) = self.raters[t].iter().find(|&&f| f > 1) {
                return Err((Some(t), format!("rater flag {f} is not binary")));
            }
            if self.cohort == Cohort::Healthy && self.raters[t].iter().any(|&f| f != 0) {
                return Err((Some(t), "healthy participant has protective ratings".into()));
            }
        }
        let mut spans = self.activities.clone();
        spans.sort_by_key(|s| s.start);
        for s in &spans {
            if s.is_empty() || s.end > t_raw {
                return Err((Some(s.start), format!("activity {} [{}, {}) out of bounds", s.kind, s.start, s.end)));
            }
        }
        for w in spans.windows(2) {
            if w[1].start < w[0].end {
                return Err((Some(w[1].start), "overlapping activities".into()));
            }
        }
        Ok(())
    }
}

/// A loaded collection of instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sample_rate: f64,
    pub instances: Vec<MovementInstance>,
}

impl Dataset {
    /// Subject ids with their cohort, sorted by id.
    pub fn subjects(&self) -> Vec<(String, Cohort)> {
        let map: BTreeMap<_, _> = self
            .instances
            .iter()
            .map(|i| (i.subject_id.clone(), i.cohort))
            .collect();
        map.into_iter().collect()
    }

    pub fn cohort_of(&self, subject: &str) -> Option<Cohort> {
        self.instances.iter().find(|i| i.subject_id == subject).map(|i| i.cohort)
    }
}
