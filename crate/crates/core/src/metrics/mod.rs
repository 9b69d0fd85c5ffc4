//! Classification and detection metrics.

mod classification;
mod detection;

pub use classification::{auc, balanced_accuracy, best_bacc_threshold, spec_at_sens, EvalReport};
pub use detection::{
    iou, map_at_iou, read_boxes_csv, write_boxes_csv, BBox, DetectionReport, ScoredBox, SizeBucket, SizeBuckets,
    MAP_IOU_THRESHOLD,
};
