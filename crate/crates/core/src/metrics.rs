//! Evaluation metrics over masks and class labelings: IoU, Dice,
//! containment, confusion counts, MeanIoU, and channel variance.
//!
//! Convention: IoU and Dice of two empty masks are 1.0. Two empty sets agree
//! perfectly, and per-class MeanIoU must not penalize classes absent from
//! both prediction and truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{intersect_count, union_count, BinaryMask};

/// Per-pixel confusion counts of a candidate mask against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Per-class IoU plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassIou>,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub id: u32,
    pub iou: f64,
}

/// Per-pixel class labeling, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "label count {} does not match {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(LabelImage {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Binary mask of one class against the rest.
    pub fn class_mask(&self, class_id: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == class_id).collect();
        BinaryMask::from_bits(self.width, self.height, bits).unwrap()
    }

    fn same_size(&self, other: &LabelImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// |A∩B| / |A∪B|; 1.0 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = intersect_count(a, b)?;
    let union = union_count(a, b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = intersect_count(a, b)?;
    let denom = a.count() + b.count();
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / denom as f64)
}

/// Fraction of B lying inside A: C = TP/(TP+FP) = |A∩B| / |B|.
/// Errors if B is empty.
pub fn containment(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = intersect_count(a, b)?;
    let b_count = b.count();
    if b_count == 0 {
        return Err(Error::invalid("containment of an empty mask is undefined"));
    }
    Ok(inter as f64 / b_count as f64)
}

/// Confusion counts of candidate `b` against reference `a`.
pub fn confusion(a: &BinaryMask, b: &BinaryMask) -> Result<ConfusionCounts> {
    let tp = intersect_count(a, b)?;
    let fp = b.count() - tp;
    let fn_ = a.count() - tp;
    let total = (a.width() as u64) * (a.height() as u64);
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: total - tp - fp - fn_,
    })
}

/// Per-class binary IoU (class vs rest) averaged over the listed classes.
/// Classes absent from both labelings score 1.0.
pub fn mean_iou(
    predictions: &LabelImage,
    ground_truth: &LabelImage,
    classes: &[u32],
) -> Result<EvalReport> {
    predictions.same_size(ground_truth)?;
    if classes.is_empty() {
        return Err(Error::invalid("mean_iou requires a nonempty class list"));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for &id in classes {
        let p = predictions.class_mask(id);
        let t = ground_truth.class_mask(id);
        per_class.push(ClassIou {
            id,
            iou: iou(&t, &p)?,
        });
    }
    let mean = per_class.iter().map(|c| c.iou).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport {
        classes: per_class,
        mean_iou: mean,
    })
}

/// Population variance of 8-bit samples: (1/N) Σ (x_i - mean)².
pub fn channel_variance(samples: &[u8]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("variance of an empty image is undefined"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var)
}
