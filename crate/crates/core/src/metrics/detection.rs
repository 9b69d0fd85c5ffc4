use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tilegeom::TileRect;

pub const MAP_IOU_THRESHOLD: f64 = 0.25;

/// Axis-aligned box in pixel coordinates, `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::invalid(format!("degenerate box ({x0}, {y0}, {x1}, {y1})")));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl From<TileRect> for BBox {
    fn from(r: TileRect) -> Self {
        BBox {
            x0: r.x0 as f64,
            y0: r.y0 as f64,
            x1: r.x1 as f64,
            y1: r.y1 as f64,
        }
    }
}

/// A predicted box with its confidence, as stored in box CSV files
/// (`view_id,x0,y0,x1,y1,score`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub view_id: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub score: f64,
}

impl ScoredBox {
    pub fn bbox(&self) -> BBox {
        BBox {
            x0: self.x0,
            y0: self.y0,
            x1: self.x1,
            y1: self.y1,
        }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

/// Area thresholds separating small/medium/large ground-truth boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeBuckets {
    pub small_below: f64,
    pub medium_below: f64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        SizeBuckets {
            small_below: 32.0 * 32.0,
            medium_below: 96.0 * 96.0,
        }
    }
}

impl SizeBuckets {
    pub fn bucket(&self, area: f64) -> SizeBucket {
        if area < self.small_below {
            SizeBucket::Small
        } else if area < self.medium_below {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

/// AP over all ground truth and per size bucket; `None` where the bucket has
/// no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub map: Option<f64>,
    pub map_s: Option<f64>,
    pub map_m: Option<f64>,
    pub map_l: Option<f64>,
}

fn pred_order(a: &ScoredBox, b: &ScoredBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.view_id.cmp(&b.view_id))
        .then_with(|| a.x0.total_cmp(&b.x0))
        .then_with(|| a.y0.total_cmp(&b.y0))
        .then_with(|| a.x1.total_cmp(&b.x1))
        .then_with(|| a.y1.total_cmp(&b.y1))
}

/// Area under the precision/recall curve with the monotone precision
/// envelope (all-point interpolation). `hits[k]` is true for a true positive.
fn average_precision(hits: &[bool], n_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..hits.len() {
        if recall[k] > prev_recall {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }
    ap
}

/// Mean average precision for single-class detection at `iou_thresh`.
///
/// Predictions are visited by descending score; each is matched to the
/// unmatched ground-truth box of the same view with the highest IoU (ties to
/// the lower index) if that IoU reaches the threshold. For a size bucket only
/// the bucket's ground truth counts; predictions matched to ground truth
/// outside the bucket are dropped, unmatched ones remain false positives.
pub fn map_at_iou(
    preds: &[ScoredBox],
    gts: &BTreeMap<String, Vec<BBox>>,
    iou_thresh: f64,
    buckets: SizeBuckets,
) -> DetectionReport {
    let mut order: Vec<&ScoredBox> = preds.iter().collect();
    order.sort_by(|a, b| pred_order(a, b));

    let mut taken: BTreeMap<&str, Vec<bool>> = gts.iter().map(|(v, b)| (v.as_str(), vec![false; b.len()])).collect();
    let mut matches: Vec<Option<SizeBucket>> = Vec::with_capacity(order.len());
    for p in &order {
        let mut best: Option<(usize, f64)> = None;
        if let (Some(boxes), Some(used)) = (gts.get(&p.view_id), taken.get_mut(p.view_id.as_str())) {
            for (i, g) in boxes.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let o = iou(&p.bbox(), g);
                if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((i, o));
                }
            }
            if let Some((i, _)) = best {
                used[i] = true;
            }
        }
        matches.push(best.map(|(i, _)| buckets.bucket(gts[&p.view_id][i].area())));
    }

    let ap_for = |filter: Option<SizeBucket>| -> Option<f64> {
        let n_gt = gts
            .values()
            .flatten()
            .filter(|g| filter.is_none_or(|b| buckets.bucket(g.area()) == b))
            .count();
        if n_gt == 0 {
            return None;
        }
        let hits: Vec<bool> = matches
            .iter()
            .filter_map(|m| match (m, filter) {
                (None, _) => Some(false),
                (Some(_), None) => Some(true),
                (Some(b), Some(f)) if *b == f => Some(true),
                (Some(_), Some(_)) => None,
            })
            .collect();
        Some(average_precision(&hits, n_gt))
    };

    DetectionReport {
        map: ap_for(None),
        map_s: ap_for(Some(SizeBucket::Small)),
        map_m: ap_for(Some(SizeBucket::Medium)),
        map_l: ap_for(Some(SizeBucket::Large)),
    }
}

pub fn write_boxes_csv(path: &Path, boxes: &[ScoredBox]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for b in boxes {
        w.serialize(b)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_boxes_csv(path: &Path) -> Result<Vec<ScoredBox>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::invalid(format!("{}: {e}", path.display()))))
        .collect()
}
