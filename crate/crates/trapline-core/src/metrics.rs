//! Detection and classification evaluation: IoU, greedy matching, PR/AP,
//! per-class table metrics, confusion matrices with an explicit "Don't Know"
//! bucket, and confidence sweeps.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, Detection};

/// Tag recorded in every evaluation report so downstream consumers know how
/// the area under the PR curve was computed.
pub const AP_INTERPOLATION: &str = "all-point";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MetricsError {
    NoGroundTruth,
    InvalidGrid,
    EmptyInput,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::NoGroundTruth => write!(f, "class has no ground-truth instances"),
            MetricsError::InvalidGrid => write!(f, "threshold grid must be non-empty and ascending"),
            MetricsError::EmptyInput => write!(f, "input is empty"),
        }
    }
}

impl core::error::Error for MetricsError {}

/// A ground-truth object: class name plus box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub class: String,
    pub bbox: BoundingBox,
}

/// One image's predictions and ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub predictions: Vec<Detection>,
    pub ground_truth: Vec<LabeledBox>,
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Disposition of a single prediction after matching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disposition {
    /// Index into the original prediction slice.
    pub pred_index: usize,
    pub confidence: f64,
    pub true_positive: bool,
    /// Matched ground-truth index for true positives.
    pub matched_gt: Option<usize>,
}

/// Outcome of greedy prediction/ground-truth matching for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Dispositions ordered by descending confidence (ties keep input order).
    pub dispositions: Vec<Disposition>,
    /// Ground-truth indices that no prediction matched (false negatives).
    pub unmatched_gt: Vec<usize>,
    pub iou_threshold: f64,
    pub gt_count: usize,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.dispositions.iter().filter(|d| d.true_positive).count()
    }

    pub fn fp_count(&self) -> usize {
        self.dispositions.len() - self.tp_count()
    }

    pub fn fn_count(&self) -> usize {
        self.unmatched_gt.len()
    }
}

/// Greedy matching: walk predictions by descending confidence; a prediction
/// is a true positive iff an unmatched same-class ground truth overlaps it
/// with IoU at or above the threshold, taking the ground truth of maximal
/// IoU (ties broken by ground-truth input order). Each ground truth matches
/// at most once.
pub fn match_detections(
    preds: &[Detection],
    gts: &[LabeledBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .total_cmp(&preds[a].confidence)
            .then(a.cmp(&b))
    });

    let mut taken = alloc::vec![false; gts.len()];
    let mut dispositions = Vec::with_capacity(preds.len());
    for &pi in &order {
        let pred = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] || gt.class != pred.class.scientific_name {
                continue;
            }
            let overlap = iou(&pred.bbox, &gt.bbox);
            if overlap < iou_threshold {
                continue;
            }
            // Strict > keeps the earliest ground truth on equal IoU.
            if best.map_or(true, |(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                taken[gi] = true;
                dispositions.push(Disposition {
                    pred_index: pi,
                    confidence: pred.confidence,
                    true_positive: true,
                    matched_gt: Some(gi),
                });
            }
            None => dispositions.push(Disposition {
                pred_index: pi,
                confidence: pred.confidence,
                true_positive: false,
                matched_gt: None,
            }),
        }
    }

    let unmatched_gt = (0..gts.len()).filter(|&gi| !taken[gi]).collect();
    MatchResult {
        dispositions,
        unmatched_gt,
        iou_threshold,
        gt_count: gts.len(),
    }
}

/// One step of a precision-recall curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve over a pooled, confidence-ranked disposition list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub gt_count: usize,
}

/// Build a PR curve by pooling dispositions (possibly from many scenes),
/// re-ranking by descending confidence, and accumulating TP/FP counts.
pub fn pr_curve(dispositions: &[Disposition], gt_count: usize) -> PrCurve {
    let mut ranked: Vec<&Disposition> = dispositions.iter().collect();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut points = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for d in ranked {
        if d.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let recall = if gt_count == 0 {
            0.0
        } else {
            tp as f64 / gt_count as f64
        };
        points.push(PrPoint {
            confidence: d.confidence,
            recall,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    PrCurve { points, gt_count }
}

/// Area under the interpolated PR curve, where interpolated precision at
/// recall `r` is the maximum precision at any recall `>= r` (continuous
/// all-point interpolation).
pub fn average_precision(curve: &PrCurve) -> Result<f64, MetricsError> {
    if curve.gt_count == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    if curve.points.is_empty() {
        return Ok(0.0);
    }
    let n = curve.points.len();
    let mut envelope = alloc::vec![0.0f64; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = crate::math::max(running, curve.points[i].precision);
        envelope[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, p) in curve.points.iter().enumerate() {
        if p.recall > prev_recall {
            ap += (p.recall - prev_recall) * envelope[i];
            prev_recall = p.recall;
        }
    }
    Ok(ap)
}

/// Unweighted mean of per-class average precisions. `None` when the map is
/// empty.
pub fn mean_ap(per_class: &BTreeMap<String, f64>) -> Option<f64> {
    if per_class.is_empty() {
        return None;
    }
    Some(per_class.values().sum::<f64>() / per_class.len() as f64)
}

/// Raw one-vs-rest counts for a class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

/// Accuracy, precision, recall and F1 for one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Derive per-class metrics from raw counts. Precision and recall are zero
/// when their denominators are zero; accuracy is one-vs-rest.
pub fn class_metrics_from_counts(counts: &ClassCounts) -> ClassMetrics {
    let tp = counts.true_positives as f64;
    let fp = counts.false_positives as f64;
    let fneg = counts.false_negatives as f64;
    let tn = counts.true_negatives as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let total = tp + fp + fneg + tn;
    let accuracy = if total > 0.0 { (tp + tn) / total } else { 0.0 };
    ClassMetrics {
        accuracy,
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
    }
}

/// A classification prediction: a concrete class or an explicit abstention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedClass {
    Known(String),
    DontKnow,
}

/// Square confusion matrix over the observed classes plus one extra
/// "Don't Know" column. Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub rows: Vec<Vec<u64>>,
    pub dont_know: Vec<u64>,
}

impl ConfusionMatrix {
    fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn get(&self, true_class: &str, predicted: &str) -> u64 {
        match (self.class_index(true_class), self.class_index(predicted)) {
            (Some(t), Some(p)) => self.rows[t][p],
            _ => 0,
        }
    }

    pub fn dont_know_count(&self, true_class: &str) -> u64 {
        self.class_index(true_class)
            .map_or(0, |t| self.dont_know[t])
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum::<u64>() + self.dont_know.iter().sum::<u64>()
    }

    pub fn row_total(&self, true_class: &str) -> u64 {
        self.class_index(true_class).map_or(0, |t| {
            self.rows[t].iter().sum::<u64>() + self.dont_know[t]
        })
    }

    /// One-vs-rest counts for a class. "Don't Know" predictions count
    /// against recall (false negatives) but never against any class's
    /// precision.
    pub fn counts(&self, class: &str) -> ClassCounts {
        let Some(idx) = self.class_index(class) else {
            return ClassCounts::default();
        };
        let tp = self.rows[idx][idx];
        let fneg: u64 = self.rows[idx]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != idx)
            .map(|(_, &v)| v)
            .sum::<u64>()
            + self.dont_know[idx];
        let fp: u64 = self
            .rows
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != idx)
            .map(|(_, row)| row[idx])
            .sum();
        let tn = self.total() - tp - fp - fneg;
        ClassCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fneg,
            true_negatives: tn,
        }
    }

    pub fn per_class_metrics(&self) -> BTreeMap<String, ClassMetrics> {
        self.classes
            .iter()
            .map(|c| (c.clone(), class_metrics_from_counts(&self.counts(c))))
            .collect()
    }
}

/// Accumulate a confusion matrix from `(true class, prediction)` records.
/// The class axis is the sorted union of true classes and known predictions.
pub fn confusion_matrix(records: &[(String, PredictedClass)]) -> ConfusionMatrix {
    let mut classes: Vec<String> = Vec::new();
    for (true_class, predicted) in records {
        classes.push(true_class.clone());
        if let PredictedClass::Known(p) = predicted {
            classes.push(p.clone());
        }
    }
    classes.sort_unstable();
    classes.dedup();

    let n = classes.len();
    let mut rows = alloc::vec![alloc::vec![0u64; n]; n];
    let mut dont_know = alloc::vec![0u64; n];
    for (true_class, predicted) in records {
        let t = classes
            .iter()
            .position(|c| c == true_class)
            .expect("true class present");
        match predicted {
            PredictedClass::Known(p) => {
                let pi = classes.iter().position(|c| c == p).expect("pred present");
                rows[t][pi] += 1;
            }
            PredictedClass::DontKnow => dont_know[t] += 1,
        }
    }
    ConfusionMatrix {
        classes,
        rows,
        dont_know,
    }
}

/// One point of an F1-versus-confidence sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Sweep {
    pub points: Vec<SweepPoint>,
    /// Lowest grid threshold attaining the maximum F1.
    pub best_threshold: f64,
    pub best_f1: f64,
}

/// Re-filter predictions at each grid threshold (keeping `confidence >=
/// threshold`), re-match, and compute the micro-averaged F1 over pooled
/// TP/FP/FN counts.
pub fn f1_confidence_sweep(
    scenes: &[Scene],
    iou_threshold: f64,
    grid: &[f64],
) -> Result<F1Sweep, MetricsError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::InvalidGrid);
    }

    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &threshold in grid {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fneg = 0usize;
        for scene in scenes {
            let kept: Vec<Detection> = scene
                .predictions
                .iter()
                .filter(|d| d.confidence >= threshold)
                .cloned()
                .collect();
            let result = match_detections(&kept, &scene.ground_truth, iou_threshold);
            tp += result.tp_count();
            fp += result.fp_count();
            fneg += result.fn_count();
        }
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fneg > 0 {
            tp as f64 / (tp + fneg) as f64
        } else {
            0.0
        };
        let f1 = harmonic_mean(precision, recall);
        points.push(SweepPoint { threshold, f1 });
        if best.map_or(true, |(_, bf)| f1 > bf) {
            best = Some((threshold, f1));
        }
    }
    let (best_threshold, best_f1) = best.expect("grid is non-empty");
    Ok(F1Sweep {
        points,
        best_threshold,
        best_f1,
    })
}

/// Corpus-level detection evaluation: per-class PR curves and APs at one IoU
/// threshold, plus the confidence sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub iou_threshold: f64,
    pub mean_ap: Option<f64>,
    pub per_class_ap: BTreeMap<String, f64>,
    /// Classes that appeared only in predictions (no ground truth); they are
    /// excluded from the mean and reported here.
    pub excluded_classes: Vec<String>,
    pub pr_curves: BTreeMap<String, PrCurve>,
    pub f1_sweep: F1Sweep,
}

pub fn evaluate_detection(
    scenes: &[Scene],
    iou_threshold: f64,
    grid: &[f64],
) -> Result<DetectionEval, MetricsError> {
    let mut gt_classes: Vec<String> = scenes
        .iter()
        .flat_map(|s| s.ground_truth.iter().map(|g| g.class.clone()))
        .collect();
    gt_classes.sort_unstable();
    gt_classes.dedup();

    let mut pred_only: Vec<String> = scenes
        .iter()
        .flat_map(|s| s.predictions.iter().map(|p| p.class.scientific_name.clone()))
        .filter(|c| !gt_classes.contains(c))
        .collect();
    pred_only.sort_unstable();
    pred_only.dedup();

    let mut per_class_ap = BTreeMap::new();
    let mut pr_curves = BTreeMap::new();
    for class in &gt_classes {
        let mut pooled = Vec::new();
        let mut gt_count = 0usize;
        for scene in scenes {
            let preds: Vec<Detection> = scene
                .predictions
                .iter()
                .filter(|p| &p.class.scientific_name == class)
                .cloned()
                .collect();
            let gts: Vec<LabeledBox> = scene
                .ground_truth
                .iter()
                .filter(|g| &g.class == class)
                .cloned()
                .collect();
            gt_count += gts.len();
            pooled.extend(match_detections(&preds, &gts, iou_threshold).dispositions);
        }
        let curve = pr_curve(&pooled, gt_count);
        let ap = average_precision(&curve)?;
        per_class_ap.insert(class.clone(), ap);
        pr_curves.insert(class.clone(), curve);
    }

    let f1_sweep = f1_confidence_sweep(scenes, iou_threshold, grid)?;
    Ok(DetectionEval {
        iou_threshold,
        mean_ap: mean_ap(&per_class_ap),
        per_class_ap,
        excluded_classes: pred_only,
        pr_curves,
        f1_sweep,
    })
}

/// Classification evaluation bundle built from a confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEval {
    pub confusion: ConfusionMatrix,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

pub fn evaluate_classification(records: &[(String, PredictedClass)]) -> ClassificationEval {
    let confusion = confusion_matrix(records);
    let per_class = confusion.per_class_metrics();
    ClassificationEval {
        confusion,
        per_class,
    }
}

/// Full evaluation report as persisted to `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub interpolation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_stats: Option<crate::detect::DetectionStats>,
}

impl EvalReport {
    pub fn new(
        detection: Option<DetectionEval>,
        classification: Option<ClassificationEval>,
        detection_stats: Option<crate::detect::DetectionStats>,
    ) -> Self {
        Self {
            interpolation: AP_INTERPOLATION.to_string(),
            detection,
            classification,
            detection_stats,
        }
    }
}
