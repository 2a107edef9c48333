//! Evaluation measures: prediction error, velocity error, overlap, and the
//! per-sequence summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::matcher::{mask_iou, BinaryMask, RotatedBox};
use crate::pipeline::{TrackRecord, TrackStatus};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityErrors {
    /// `‖pred − gt‖`, pixels per frame.
    pub euclidean: f64,
    pub cosine: f64,
    /// `|‖pred‖ − ‖gt‖|`, pixels per frame.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub frames: usize,
    /// Frames that contribute to the error and accuracy means.
    pub tracked_frames: usize,
    pub mean_position_error: Option<f64>,
    pub mean_velocity_error: Option<VelocityErrors>,
    /// Mean overlap of the reported box with ground truth on tracked frames.
    pub accuracy: f64,
    pub failure_count: usize,
}

pub fn position_error(pred: Point2, gt: Point2) -> f64 {
    pred.distance(gt)
}

pub fn velocity_errors(pred: Point2, gt: Point2) -> VelocityErrors {
    let (np, ng) = (pred.norm(), gt.norm());
    let cosine = if np < 1e-12 || ng < 1e-12 {
        0.0
    } else {
        (pred.dot(gt) / (np * ng)).clamp(-1.0, 1.0)
    };
    VelocityErrors {
        euclidean: pred.distance(gt),
        cosine,
        magnitude: (np - ng).abs(),
    }
}

/// Rasterized IoU of two boxes.
pub fn overlap(a: &RotatedBox, gt: &RotatedBox) -> f64 {
    mask_iou(&a.rasterize(), &gt.rasterize())
}

/// Rasterized IoU of a frame-space mask with a box.
pub fn overlap_mask(mask: &BinaryMask, gt: &RotatedBox) -> f64 {
    mask_iou(mask, &gt.rasterize())
}

/// Ground-truth velocity at frame `t`: the displacement of the box center
/// from frame `t − 1`.
pub fn gt_velocity(gt: &[RotatedBox], t: usize) -> Point2 {
    if t == 0 {
        return Point2::ZERO;
    }
    gt[t].center() - gt[t - 1].center()
}

pub fn summarize(record: &TrackRecord, gt: &[RotatedBox]) -> Result<SummaryReport> {
    summarize_after(record, gt, 0)
}

/// Like [`summarize`], but prediction errors ignore frames before `burn_in`.
pub fn summarize_after(record: &TrackRecord, gt: &[RotatedBox], burn_in: usize) -> Result<SummaryReport> {
    if record.outputs.len() != gt.len() {
        return Err(Error::LengthMismatch(format!(
            "{} outputs, {} ground-truth boxes",
            record.outputs.len(),
            gt.len()
        )));
    }
    let mut tracked = 0usize;
    let mut overlap_sum = 0.0;
    let mut n_pred = 0usize;
    let mut pos_sum = 0.0;
    let mut vel_sum = VelocityErrors::default();
    for (t, out) in record.outputs.iter().enumerate() {
        if out.status != TrackStatus::Tracked {
            continue;
        }
        tracked += 1;
        overlap_sum += overlap(&out.bbox, &gt[t]);
        if t == 0 || t < burn_in {
            continue;
        }
        n_pred += 1;
        pos_sum += position_error(out.predicted_center, gt[t].center());
        let v = velocity_errors(out.predicted_velocity, gt_velocity(gt, t));
        vel_sum.euclidean += v.euclidean;
        vel_sum.cosine += v.cosine;
        vel_sum.magnitude += v.magnitude;
    }
    let n = n_pred as f64;
    Ok(SummaryReport {
        frames: gt.len(),
        tracked_frames: tracked,
        mean_position_error: (n_pred > 0).then(|| pos_sum / n),
        mean_velocity_error: (n_pred > 0).then(|| VelocityErrors {
            euclidean: vel_sum.euclidean / n,
            cosine: vel_sum.cosine / n,
            magnitude: vel_sum.magnitude / n,
        }),
        accuracy: if tracked > 0 { overlap_sum / tracked as f64 } else { 0.0 },
        failure_count: record.failure_count,
    })
}
