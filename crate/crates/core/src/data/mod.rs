//! Instances, features, segmentation, normalization, augmentation and folds.

mod augment;
mod features;
mod folds;
mod instance;
pub mod io;
mod normalize;
mod segment;

pub use augment::{augment, expand_training, AugmentConfig, AugmentKind};
pub use features::{angular_energy, frame_angles, joint_angle, JointTriple, Point, DEFAULT_JOINT_TABLE, DEFAULT_MARKERS};
pub use folds::{loso_folds, Fold};
pub use instance::{ActivitySpan, ActivityType, Cohort, Dataset, MovementInstance, PARTS, RATERS};
pub use io::{content_hash, dataset_hash, load_dataset, write_dataset};
pub use normalize::{Normalizer, STD_FLOOR};
pub use segment::{label_segment, segment_instance, Label, Provenance, Segment, SegmentConfig};

/// Segments of every instance, in dataset order.
pub fn segment_dataset(dataset: &Dataset, cfg: &SegmentConfig) -> crate::error::Result<Vec<Segment>> {
    let mut out = Vec::new();
    for inst in &dataset.instances {
        out.extend(segment_instance(inst, cfg)?);
    }
    Ok(out)
}
