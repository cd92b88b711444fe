//! Saliency and instance-mask evaluation: F-measure, maximum F-measure over
//! a threshold sweep, mean absolute error, mask IoU and region average
//! precision (AP^r).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::spectral::InstanceSegmentation;
use crate::tensor::Tensor;

pub const DEFAULT_BETA2: f64 = 0.3;
/// Number of thresholds `0, 1/255, ..., 1` swept by [`max_f_measure`].
pub const THRESHOLD_LEVELS: usize = 256;
pub const DEFAULT_IOU_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Strictly binary `h x w` mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != height * width {
            return arg_err(format!("{} pixels for a {height}x{width} mask", pixels.len()));
        }
        Ok(Self { height, width, pixels })
    }

    /// Accepts a `[h,w]` tensor holding only 0 and 1.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[h, w] = t.shape() else {
            return arg_err(format!("mask must be [h,w], got {:?}", t.shape()));
        };
        if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return arg_err("mask values must be exactly 0 or 1");
        }
        Self::new(h, w, t.data().iter().map(|&v| v == 1.0).collect())
    }

    /// Pixels of `t` (`[h,w]`) at or above `threshold`.
    pub fn threshold(t: &Tensor, threshold: f64) -> Result<Self> {
        let (h, w, c) = t.hwc()?;
        if c != 1 {
            return arg_err("thresholding needs a single-channel map");
        }
        Self::new(h, w, t.data().iter().map(|&v| v >= threshold).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask size matches")
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return arg_err(format!(
                "mask shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            ));
        }
        Ok(())
    }

    fn intersection(&self, other: &Self) -> usize {
        self.pixels.iter().zip(&other.pixels).filter(|(a, b)| **a && **b).count()
    }
}

/// One mask per instance label `1..=max` of a label map.
pub fn instance_masks(seg: &InstanceSegmentation) -> Vec<BinaryMask> {
    let max = seg.labels().iter().copied().max().unwrap_or(0);
    (1..=max)
        .map(|l| {
            BinaryMask::new(
                seg.height(),
                seg.width(),
                seg.labels().iter().map(|&v| v == l).collect(),
            )
            .expect("label map size matches")
        })
        .filter(|m| m.count() > 0)
        .collect()
}

/// Union of all instances of a label map.
pub fn foreground_mask(seg: &InstanceSegmentation) -> BinaryMask {
    BinaryMask::new(
        seg.height(),
        seg.width(),
        seg.labels().iter().map(|&v| v > 0).collect(),
    )
    .expect("label map size matches")
}

fn precision_recall(pred: &BinaryMask, gt: &BinaryMask) -> (f64, f64) {
    let tp = pred.intersection(gt) as f64;
    let predicted = pred.count() as f64;
    let actual = gt.count() as f64;
    let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let r = if actual > 0.0 { tp / actual } else { 0.0 };
    (p, r)
}

/// `(1+β²)PR / (β²P + R)`, or 0 when the denominator vanishes.
pub fn f_from_pr(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom > 0.0 {
        (1.0 + beta2) * precision * recall / denom
    } else {
        0.0
    }
}

pub fn f_measure(pred: &BinaryMask, gt: &BinaryMask, beta2: f64) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let (p, r) = precision_recall(pred, gt);
    Ok(f_from_pr(p, r, beta2))
}

/// Precision and recall of `saliency ≥ t` for each of the 256 thresholds
/// `t = i / 255`.
pub fn pr_curve(saliency: &Tensor, gt: &BinaryMask) -> Result<Vec<(f64, f64)>> {
    let (h, w, c) = saliency.hwc()?;
    if (h, w, c) != (gt.height, gt.width, 1) {
        return arg_err(format!(
            "saliency {:?} does not match the {}x{} mask",
            saliency.shape(),
            gt.height,
            gt.width
        ));
    }
    // histogram of the quantized threshold index each pixel first fails
    let mut tp_at = vec![0usize; THRESHOLD_LEVELS + 1];
    let mut all_at = vec![0usize; THRESHOLD_LEVELS + 1];
    for (&s, &g) in saliency.data().iter().zip(&gt.pixels) {
        // number of thresholds i/255 with i/255 <= s
        let passes = (0..THRESHOLD_LEVELS)
            .rev()
            .find(|&i| s >= i as f64 / 255.0)
            .map_or(0, |i| i + 1);
        all_at[passes] += 1;
        if g {
            tp_at[passes] += 1;
        }
    }
    let actual = gt.count() as f64;
    let mut curve = vec![(0.0, 0.0); THRESHOLD_LEVELS];
    let (mut tp, mut predicted) = (0usize, 0usize);
    for i in (0..THRESHOLD_LEVELS).rev() {
        tp += tp_at[i + 1];
        predicted += all_at[i + 1];
        let p = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let r = if actual > 0.0 { tp as f64 / actual } else { 0.0 };
        curve[i] = (p, r);
    }
    Ok(curve)
}

/// Best F-measure over the 256-level threshold sweep.
pub fn max_f_measure(saliency: &Tensor, gt: &BinaryMask, beta2: f64) -> Result<f64> {
    Ok(pr_curve(saliency, gt)?
        .into_iter()
        .map(|(p, r)| f_from_pr(p, r, beta2))
        .fold(0.0, f64::max))
}

/// Mean absolute difference of two `[h,w]` maps.
pub fn mae(s: &Tensor, g: &Tensor) -> Result<f64> {
    if s.shape() != g.shape() || s.ndim() != 2 {
        return arg_err(format!("maps must share a [h,w] shape: {:?} vs {:?}", s.shape(), g.shape()));
    }
    if s.is_empty() {
        return arg_err("maps are empty");
    }
    let total = compensated_sum(s.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()));
    Ok(total / s.len() as f64)
}

/// Neumaier summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `|a ∩ b| / |a ∪ b|`, or 1 when both masks are empty.
pub fn instance_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_shape(b)?;
    let inter = a.intersection(b);
    let union = a.count() + b.count() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// One matched prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
    /// `|pred ∩ gt| / |pred|`.
    pub precision: f64,
}

/// Greedy one-to-one matching by descending IoU, then descending pixel
/// precision, then mask content. Pairs with zero overlap are never matched.
pub fn match_instances(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<Vec<Match>> {
    let mut pairs = Vec::new();
    for (pi, p) in preds.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            p.check_same_shape(g)?;
            let inter = p.intersection(g);
            if inter == 0 {
                continue;
            }
            let union = p.count() + g.count() - inter;
            pairs.push(Match {
                pred: pi,
                gt: gi,
                iou: inter as f64 / union as f64,
                precision: inter as f64 / p.count() as f64,
            });
        }
    }
    // ties fall back to mask content so instance numbering cannot matter
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(b.precision.total_cmp(&a.precision))
            .then_with(|| preds[a.pred].pixels.cmp(&preds[b.pred].pixels))
            .then_with(|| gts[a.gt].pixels.cmp(&gts[b.gt].pixels))
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut matches = Vec::new();
    for m in pairs {
        if !pred_used[m.pred] && !gt_used[m.gt] {
            pred_used[m.pred] = true;
            gt_used[m.gt] = true;
            matches.push(m);
        }
    }
    Ok(matches)
}

/// Region AP at IoU threshold `tau`: the sum, over matched pairs with
/// IoU ≥ `tau`, of the matched prediction's pixel precision, divided by
/// the total number of ground-truth instances in the dataset.
pub fn ap_r(preds: &[Vec<BinaryMask>], gts: &[Vec<BinaryMask>], tau: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return arg_err(format!("{} prediction sets for {} images", preds.len(), gts.len()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return arg_err(format!("IoU threshold {tau} must lie in (0,1)"));
    }
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return arg_err("ground truth contains no instances");
    }
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        sum += match_instances(p, g)?
            .iter()
            .filter(|m| m.iou >= tau)
            .map(|m| m.precision)
            .sum::<f64>();
    }
    Ok(sum / total_gt as f64)
}

/// Prediction mask with a confidence score, for [`ap_r_ranked`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub mask: BinaryMask,
    pub score: f64,
}

/// Score-ranked region AP: predictions from all images are sorted by
/// descending score (ties by image, then index) and each claims the unmatched
/// ground truth of its image with the highest IoU ≥ `tau`. Returns the area
/// under the interpolated precision/recall curve.
pub fn ap_r_ranked(preds: &[Vec<ScoredMask>], gts: &[Vec<BinaryMask>], tau: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return arg_err(format!("{} prediction sets for {} images", preds.len(), gts.len()));
    }
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return arg_err("ground truth contains no instances");
    }
    let mut order: Vec<(usize, usize)> = preds
        .iter()
        .enumerate()
        .flat_map(|(img, ps)| (0..ps.len()).map(move |i| (img, i)))
        .collect();
    order.sort_by(|a, b| {
        preds[b.0][b.1]
            .score
            .total_cmp(&preds[a.0][a.1].score)
            .then(a.cmp(b))
    });

    let mut claimed: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut hits = Vec::with_capacity(order.len());
    for (img, i) in order {
        let pred = &preds[img][i].mask;
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gts[img].iter().enumerate() {
            if claimed[img][gi] {
                continue;
            }
            let iou = instance_iou(pred, g)?;
            if iou >= tau && best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, gi));
            }
        }
        if let Some((_, gi)) = best {
            claimed[img][gi] = true;
        }
        hits.push(best.is_some());
    }

    let mut points = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (rank, hit) in hits.iter().enumerate() {
        tp += usize::from(*hit);
        points.push((tp as f64 / total_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    // all-point interpolation: precision envelope integrated over recall
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (recall, _) = points[i];
        if recall > prev_recall {
            let envelope = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    Ok(ap)
}

/// Scores for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub name: String,
    pub max_f: f64,
    pub mae: f64,
    pub predicted_instances: usize,
    pub ground_truth_instances: usize,
    /// Mean IoU of the greedy matches (0 when nothing matched).
    pub mean_matched_iou: f64,
}

/// Dataset-level scores. `max_f` is taken over the precision/recall curve
/// averaged across images; `mae` is the mean per-image MAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub max_f: f64,
    pub mae: f64,
    /// AP^r keyed by the IoU threshold formatted with two decimals.
    pub ap_r: BTreeMap<String, f64>,
    /// Score-ranked AP^r, present when every prediction carried confidences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_r_ranked: Option<BTreeMap<String, f64>>,
    pub per_image: Vec<ImageRecord>,
}

/// Inputs for one image of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub name: String,
    /// `[h,w]` saliency in `[0,1]`.
    pub saliency: Tensor,
    pub prediction: InstanceSegmentation,
    pub ground_truth: InstanceSegmentation,
}

pub fn evaluate(samples: &[EvalSample], iou_thresholds: &[f64], beta2: f64) -> Result<EvalReport> {
    if samples.is_empty() {
        return arg_err("nothing to evaluate");
    }
    let mut curve_sum = vec![(0.0, 0.0); THRESHOLD_LEVELS];
    let mut per_image = Vec::with_capacity(samples.len());
    let mut pred_sets = Vec::with_capacity(samples.len());
    let mut scored_sets = Vec::with_capacity(samples.len());
    let mut gt_sets = Vec::with_capacity(samples.len());
    for s in samples {
        let gt_fg = foreground_mask(&s.ground_truth);
        let curve = pr_curve(&s.saliency, &gt_fg)?;
        for (acc, (p, r)) in curve_sum.iter_mut().zip(&curve) {
            acc.0 += p;
            acc.1 += r;
        }
        let image_max_f = curve.iter().map(|&(p, r)| f_from_pr(p, r, beta2)).fold(0.0, f64::max);
        let image_mae = mae(
            &s.saliency.clone().reshape(vec![gt_fg.height, gt_fg.width])?,
            &gt_fg.to_tensor(),
        )?;

        let preds = instance_masks(&s.prediction);
        let gts = instance_masks(&s.ground_truth);
        let matches = match_instances(&preds, &gts)?;
        let mean_iou = if matches.is_empty() {
            0.0
        } else {
            matches.iter().map(|m| m.iou).sum::<f64>() / matches.len() as f64
        };
        per_image.push(ImageRecord {
            name: s.name.clone(),
            max_f: image_max_f,
            mae: image_mae,
            predicted_instances: preds.len(),
            ground_truth_instances: gts.len(),
            mean_matched_iou: mean_iou,
        });
        let max_label = s.prediction.labels().iter().copied().max().unwrap_or(0);
        scored_sets.push(
            (1..=max_label)
                .filter_map(|l| {
                    let mask = BinaryMask::new(
                        s.prediction.height(),
                        s.prediction.width(),
                        s.prediction.labels().iter().map(|&v| v == l).collect(),
                    )
                    .ok()?;
                    (mask.count() > 0).then(|| ScoredMask {
                        mask,
                        score: s.prediction.confidences()[l as usize - 1],
                    })
                })
                .collect::<Vec<_>>(),
        );
        pred_sets.push(preds);
        gt_sets.push(gts);
    }
    let n = samples.len() as f64;
    let max_f = curve_sum
        .iter()
        .map(|&(p, r)| f_from_pr(p / n, r / n, beta2))
        .fold(0.0, f64::max);
    let mae_mean = per_image.iter().map(|r| r.mae).sum::<f64>() / n;

    let mut ap = BTreeMap::new();
    let mut ranked = BTreeMap::new();
    for &tau in iou_thresholds {
        ap.insert(format!("{tau:.2}"), ap_r(&pred_sets, &gt_sets, tau)?);
        ranked.insert(format!("{tau:.2}"), ap_r_ranked(&scored_sets, &gt_sets, tau)?);
    }
    Ok(EvalReport {
        max_f,
        mae: mae_mean,
        ap_r: ap,
        ap_r_ranked: Some(ranked),
        per_image,
    })
}
