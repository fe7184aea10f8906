//! Raw-marker feature extraction: joint angles and their energies.

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Angle at `b` between limb vectors `a − b` and `c − b`, in `[0, π]`.
pub fn joint_angle(a: Point, b: Point, c: Point) -> Result<f64> {
    let u = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let v = [c[0] - b[0], c[1] - b[1], c[2] - b[2]];
    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("zero-length limb vector".into()));
    }
    let cos = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / (nu * nv);
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Squared angular velocity by backward difference; the first sample is 0.
pub fn angular_energy(theta: &[f64], sample_rate: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta.len());
    if theta.is_empty() {
        return out;
    }
    out.push(0.0);
    for w in theta.windows(2) {
        let v = (w[1] - w[0]) * sample_rate;
        out.push(v * v);
    }
    out
}

/// A joint angle defined by three marker indices; the angle sits at `middle`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointTriple {
    pub name: &'static str,
    pub outer_a: usize,
    pub middle: usize,
    pub outer_c: usize,
}

/// Marker names referenced by [`DEFAULT_JOINT_TABLE`].
pub const DEFAULT_MARKERS: [&str; 18] = [
    "head", "neck", "upper_spine", "mid_spine", "pelvis", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle", "sternum",
];

/// Illustrative assignment of the 13 body-part angles to marker triples.
/// Replace it when ingesting a capture system with a known skeleton.
pub const DEFAULT_JOINT_TABLE: [JointTriple; 13] = [
    JointTriple { name: "neck", outer_a: 0, middle: 1, outer_c: 2 },
    JointTriple { name: "upper_trunk", outer_a: 1, middle: 2, outer_c: 3 },
    JointTriple { name: "lower_trunk", outer_a: 2, middle: 3, outer_c: 4 },
    JointTriple { name: "l_shoulder", outer_a: 17, middle: 5, outer_c: 6 },
    JointTriple { name: "r_shoulder", outer_a: 17, middle: 8, outer_c: 9 },
    JointTriple { name: "l_elbow", outer_a: 5, middle: 6, outer_c: 7 },
    JointTriple { name: "r_elbow", outer_a: 8, middle: 9, outer_c: 10 },
    JointTriple { name: "l_hip", outer_a: 3, middle: 11, outer_c: 12 },
    JointTriple { name: "r_hip", outer_a: 3, middle: 14, outer_c: 15 },
    JointTriple { name: "l_knee", outer_a: 11, middle: 12, outer_c: 13 },
    JointTriple { name: "r_knee", outer_a: 14, middle: 15, outer_c: 16 },
    JointTriple { name: "l_trunk_thigh", outer_a: 2, middle: 4, outer_c: 12 },
    JointTriple { name: "r_trunk_thigh", outer_a: 2, middle: 4, outer_c: 15 },
];

/// Joint angles of one frame of marker positions.
pub fn frame_angles(markers: &[Point], table: &[JointTriple]) -> Result<Vec<f64>> {
    table
        .iter()
        .map(|j| {
            let get = |i: usize| {
                markers
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::usage(format!("joint {} references missing marker {i}", j.name)))
            };
            joint_angle(get(j.outer_a)?, get(j.middle)?, get(j.outer_c)?)
                .map_err(|e| Error::Degenerate(format!("joint {}: {e}", j.name)))
        })
        .collect()
}
