//! Detector-output post-processing: confidence thresholding, opt-in NMS for
//! non-conformant backends, blank flagging, and corpus-level statistics.
//!
//! A conformant endpoint needs no suppression; its detections are accepted
//! as-is once thresholded. `nms` exists for backends that still emit
//! overlapping duplicates.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::Detection;
use crate::metrics::iou;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DetectError {
    EmptyInput,
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectError::EmptyInput => write!(f, "no detection results to aggregate"),
        }
    }
}

impl core::error::Error for DetectError {}

/// Per-asset detector outcome after thresholding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub asset_id: String,
    pub detections: Vec<Detection>,
    pub latency_ms: u64,
    pub blank: bool,
}

impl DetectionResult {
    /// The blank flag is derived, never stored independently, so it cannot
    /// drift from the detection list.
    pub fn new(asset_id: String, detections: Vec<Detection>, latency_ms: u64) -> Self {
        let blank = detections.is_empty();
        Self {
            asset_id,
            detections,
            latency_ms,
            blank,
        }
    }
}

/// Keep detections with `confidence >= threshold`, preserving order.
pub fn apply_confidence_threshold(detections: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| d.confidence >= threshold)
        .collect()
}

/// Greedy per-class non-maximum suppression.
///
/// Detections are ranked by descending confidence (ties keep input order);
/// one is kept iff its IoU with every kept same-class detection is strictly
/// below the threshold. At threshold 1.0 only exact duplicates are removed.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
            .then(a.cmp(&b))
    });

    let mut kept: Vec<Detection> = Vec::new();
    for &i in &order {
        let candidate = &detections[i];
        let suppressed = kept.iter().any(|k| {
            k.class.scientific_name == candidate.class.scientific_name
                && iou(&k.bbox, &candidate.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(candidate.clone());
        }
    }
    kept
}

/// Corpus-level detection statistics.
///
/// The blank ratio and the observations-per-image ratio are reported
/// separately: mixing image counts with object counts conflates two
/// different rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub images: u64,
    pub observations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_images: Option<u64>,
    pub observations_per_image: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_fraction: Option<f64>,
}

impl DetectionStats {
    /// Build from bare corpus counters when per-image results are not
    /// available (for instance published corpus totals).
    pub fn from_counts(images: u64, observations: u64) -> Result<Self, DetectError> {
        if images == 0 {
            return Err(DetectError::EmptyInput);
        }
        Ok(Self {
            images,
            observations,
            blank_images: None,
            observations_per_image: observations as f64 / images as f64,
            blank_fraction: None,
        })
    }

    pub fn from_counts_with_blanks(
        images: u64,
        observations: u64,
        blank_images: u64,
    ) -> Result<Self, DetectError> {
        let mut stats = Self::from_counts(images, observations)?;
        stats.blank_images = Some(blank_images);
        stats.blank_fraction = Some(blank_images as f64 / images as f64);
        Ok(stats)
    }
}

/// Aggregate per-asset results into corpus statistics.
pub fn detection_rate(results: &[DetectionResult]) -> Result<DetectionStats, DetectError> {
    if results.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    let images = results.len() as u64;
    let observations = results.iter().map(|r| r.detections.len() as u64).sum();
    let blanks = results.iter().filter(|r| r.blank).count() as u64;
    DetectionStats::from_counts_with_blanks(images, observations, blanks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundingBox, ClassKind, TaxonomyClass};
    use alloc::string::ToString;
    use alloc::vec;

    fn det(name: &str, conf: f64, bbox: [f64; 4]) -> Detection {
        Detection::new(
            TaxonomyClass {
                scientific_name: name.into(),
                common_name: name.into(),
                kind: ClassKind::Animal,
            },
            conf,
            BoundingBox::from(bbox),
        )
    }

    #[test]
    fn threshold_keeps_only_confident_detections() {
        let dets = vec![
            det("a", 0.91, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.30, [0.0, 0.0, 10.0, 10.0]),
        ];
        let kept = apply_confidence_threshold(dets, 0.422);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.91);
    }

    #[test]
    fn thresholding_is_monotone() {
        let dets: Vec<Detection> = (0..20)
            .map(|i| det("a", i as f64 / 20.0, [0.0, 0.0, 10.0, 10.0]))
            .collect();
        let mut previous = usize::MAX;
        for step in 0..=10 {
            let threshold = step as f64 / 10.0;
            let kept = apply_confidence_threshold(dets.clone(), threshold).len();
            assert!(kept <= previous);
            previous = kept;
        }
    }

    #[test]
    fn blank_flag_tracks_detection_list() {
        let blank = DetectionResult::new("x".to_string(), vec![], 3);
        assert!(blank.blank);
        let full = DetectionResult::new(
            "y".to_string(),
            vec![det("a", 0.9, [0.0, 0.0, 10.0, 10.0])],
            3,
        );
        assert!(!full.blank);
    }

    #[test]
    fn nms_removes_exact_duplicate_keeping_the_confident_one() {
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.8, [0.0, 0.0, 10.0, 10.0]),
        ];
        let kept = nms(&dets, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.8, [50.0, 50.0, 60.0, 60.0]),
        ];
        assert_eq!(nms(&dets, 0.5).len(), 2);
    }

    #[test]
    fn nms_keeps_boxes_below_threshold() {
        // IoU of these two is 1/3 < 0.5.
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.8, [5.0, 0.0, 15.0, 10.0]),
        ];
        assert_eq!(nms(&dets, 0.5).len(), 2);
    }

    #[test]
    fn nms_at_one_removes_only_exact_duplicates() {
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.8, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.7, [0.0, 0.0, 10.0, 9.999]),
        ];
        let kept = nms(&dets, 1.0);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn nms_ignores_other_classes() {
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("b", 0.8, [0.0, 0.0, 10.0, 10.0]),
        ];
        assert_eq!(nms(&dets, 0.5).len(), 2);
    }

    #[test]
    fn nms_is_idempotent_and_a_subset() {
        let dets = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.85, [1.0, 0.0, 11.0, 10.0]),
            det("a", 0.8, [30.0, 30.0, 40.0, 40.0]),
            det("b", 0.7, [0.0, 0.0, 10.0, 10.0]),
        ];
        let once = nms(&dets, 0.5);
        let twice = nms(&once, 0.5);
        assert_eq!(once, twice);
        for d in &once {
            assert!(dets.contains(d));
        }
    }

    #[test]
    fn detection_rate_reports_both_ratios() {
        let results = vec![
            DetectionResult::new("a".to_string(), vec![det("a", 0.9, [0.0, 0.0, 1.0, 1.0])], 0),
            DetectionResult::new("b".to_string(), vec![], 0),
            DetectionResult::new("c".to_string(), vec![], 0),
            DetectionResult::new(
                "d".to_string(),
                vec![
                    det("a", 0.9, [0.0, 0.0, 1.0, 1.0]),
                    det("a", 0.8, [2.0, 2.0, 3.0, 3.0]),
                ],
                0,
            ),
        ];
        let stats = detection_rate(&results).unwrap();
        assert_eq!(stats.images, 4);
        assert_eq!(stats.observations, 3);
        assert_eq!(stats.blank_images, Some(2));
        assert_eq!(stats.blank_fraction, Some(0.5));
        assert_eq!(stats.observations_per_image, 0.75);
    }

    #[test]
    fn detection_rate_on_blank_corpus() {
        let results = vec![
            DetectionResult::new("a".to_string(), vec![], 0),
            DetectionResult::new("b".to_string(), vec![], 0),
        ];
        let stats = detection_rate(&results).unwrap();
        assert_eq!(stats.observations_per_image, 0.0);
        assert_eq!(stats.blank_fraction, Some(1.0));
    }

    #[test]
    fn detection_rate_rejects_empty_input() {
        assert_eq!(detection_rate(&[]), Err(DetectError::EmptyInput));
    }

    #[test]
    fn blank_fraction_matches_published_style_counts() {
        let results: Vec<DetectionResult> = (0..100)
            .map(|i| {
                let dets = if i < 32 {
                    vec![det("a", 0.9, [0.0, 0.0, 1.0, 1.0])]
                } else {
                    vec![]
                };
                DetectionResult::new(alloc::format!("asset-{i}"), dets, 0)
            })
            .collect();
        let stats = detection_rate(&results).unwrap();
        assert_eq!(stats.blank_fraction, Some(0.68));
    }
}
