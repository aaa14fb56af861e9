//! Deterministic in-process endpoint mocks, driven by fixture sidecars.
//!
//! The mock detector replays each asset's ground-truth sidecar (optionally
//! perturbed by a seeded noise model). The mock vision-language endpoint
//! emits templated prose from a per-asset scene script; its seeded
//! "OCR error" mode stops reading the drawn labels and garbles species
//! identities instead, which reenacts running the language model without
//! detector support.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trapline_core::annotate::AnnotatedImage;
use trapline_core::domain::{ClassKind, Taxonomy};
use trapline_core::qa::count_word;
use trapline_core::rng::{fnv1a64, SplitMix64};

use crate::config::{DetectorNoise, OcrErrorConfig};
use crate::endpoints::{DetectorBackend, EndpointError, VlmBackend, WireDetection};
use crate::ingest::{load_ground_truth, DatasetManifest, IngestError, SCENE_SCRIPT_SUFFIX};

/// Per-asset scene script:
/// `{"species": [{"name", "count"}], "time_of_day": "day"|"night",
///   "habitat": [tags], "stamp": text?}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    #[serde(default)]
    pub species: Vec<ScriptSpecies>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_of_day: Option<String>,
    #[serde(default)]
    pub habitat: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptSpecies {
    pub name: String,
    pub count: u32,
}

fn sub_seed(seed: u64, asset_id: &str, index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(asset_id.len() + 16);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(asset_id.as_bytes());
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    fnv1a64(&bytes)
}

/// Fixture-driven detector: returns each asset's sidecar ground truth.
pub struct MockDetector {
    by_asset: BTreeMap<String, Vec<WireDetection>>,
    noise: Option<DetectorNoise>,
}

impl MockDetector {
    pub fn from_manifest(
        manifest: &DatasetManifest,
        root: &Path,
        taxonomy: &Taxonomy,
        noise: Option<DetectorNoise>,
    ) -> Result<Self, IngestError> {
        let mut by_asset = BTreeMap::new();
        for asset in &manifest.assets {
            let detections = match asset.sidecar_path(root) {
                Some(path) => load_ground_truth(&path, taxonomy)?
                    .into_iter()
                    .map(|a| WireDetection {
                        class: a.class.scientific_name,
                        confidence: 0.9,
                        bbox: a.bbox.into(),
                    })
                    .collect(),
                None => Vec::new(),
            };
            by_asset.insert(asset.asset_id.clone(), detections);
        }
        Ok(Self { by_asset, noise })
    }

    fn perturb(&self, asset_id: &str, index: usize, wire: &WireDetection) -> WireDetection {
        let Some(noise) = &self.noise else {
            return wire.clone();
        };
        let mut rng = SplitMix64::new(sub_seed(noise.seed, asset_id, index));
        let confidence =
            noise.confidence_floor + (0.99 - noise.confidence_floor) * rng.next_f64();
        let [x0, y0, x1, y1] = wire.bbox;
        let w = x1 - x0;
        let h = y1 - y0;
        let jitter = |rng: &mut SplitMix64, extent: f64| (rng.next_f64() - 0.5) * noise.box_jitter * extent;
        let bbox = [
            x0 + jitter(&mut rng, w),
            y0 + jitter(&mut rng, h),
            x1 + jitter(&mut rng, w),
            y1 + jitter(&mut rng, h),
        ];
        WireDetection {
            class: wire.class.clone(),
            confidence,
            bbox,
        }
    }
}

impl DetectorBackend for MockDetector {
    fn raw_detect(&self, asset_id: &str, _image_png: &[u8]) -> Result<Vec<WireDetection>, EndpointError> {
        let base = self.by_asset.get(asset_id).cloned().unwrap_or_default();
        Ok(base
            .iter()
            .enumerate()
            .map(|(i, wire)| self.perturb(asset_id, i, wire))
            .collect())
    }
}

#[derive(Clone, Debug)]
pub enum VlmMode {
    /// Species identities come from the labels drawn on the image.
    ReadLabels,
    /// Labels are treated as unreadable; species come from the scene script,
    /// garbled at the seeded rate.
    OcrError(OcrErrorConfig),
}

/// Fixture-driven vision-language endpoint emitting templated prose.
pub struct MockVlm {
    scripts: BTreeMap<String, SceneScript>,
    mode: VlmMode,
    animal_classes: Vec<String>,
}

impl MockVlm {
    pub fn from_manifest(
        manifest: &DatasetManifest,
        root: &Path,
        taxonomy: &Taxonomy,
        mode: VlmMode,
    ) -> Result<Self, IngestError> {
        let mut scripts = BTreeMap::new();
        for asset in &manifest.assets {
            let image_path = asset.absolute_path(root);
            let script_path = image_path.with_file_name(format!(
                "{}{}",
                image_path.file_stem().and_then(|s| s.to_str()).unwrap_or(""),
                SCENE_SCRIPT_SUFFIX
            ));
            if script_path.exists() {
                let text =
                    std::fs::read_to_string(&script_path).map_err(|source| IngestError::Io {
                        path: script_path.clone(),
                        source,
                    })?;
                let script: SceneScript =
                    serde_json::from_str(&text).map_err(|e| IngestError::SchemaViolation {
                        path: script_path.clone(),
                        reason: e.to_string(),
                    })?;
                scripts.insert(asset.asset_id.clone(), script);
            }
        }
        let animal_classes = taxonomy
            .classes()
            .iter()
            .filter(|c| c.kind == ClassKind::Animal)
            .map(|c| c.scientific_name.clone())
            .collect();
        Ok(Self {
            scripts,
            mode,
            animal_classes,
        })
    }

    /// Species list for the prose: `(name or None for unreadable, count)`.
    fn species_reads(&self, image: &AnnotatedImage) -> Vec<(Option<String>, u32)> {
        match &self.mode {
            VlmMode::ReadLabels => {
                // A label reads "Scientific name 0.91"; strip the confidence.
                let mut counts: BTreeMap<String, u32> = BTreeMap::new();
                for label in &image.rendered_labels {
                    let name = label
                        .text
                        .rsplit_once(' ')
                        .map(|(head, _)| head.to_string())
                        .unwrap_or_else(|| label.text.clone());
                    *counts.entry(name).or_insert(0) += 1;
                }
                counts.into_iter().map(|(n, c)| (Some(n), c)).collect()
            }
            VlmMode::OcrError(cfg) => {
                let script = self.scripts.get(&image.asset_id);
                let species = script.map(|s| s.species.as_slice()).unwrap_or(&[]);
                species
                    .iter()
                    .enumerate()
                    .map(|(i, entry)| {
                        let h = sub_seed(cfg.seed, &image.asset_id, i);
                        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                        if u < cfg.rate {
                            self.garble(&entry.name, h, entry.count)
                        } else {
                            (Some(entry.name.clone()), entry.count)
                        }
                    })
                    .collect()
            }
        }
    }

    fn garble(&self, true_name: &str, h: u64, count: u32) -> (Option<String>, u32) {
        // A third of garbles are illegible, the rest read as a wrong species.
        if (h >> 32) % 3 == 0 {
            return (None, count);
        }
        let n = self.animal_classes.len();
        let mut pick = ((h >> 16) % n as u64) as usize;
        if self.animal_classes[pick].eq_ignore_ascii_case(true_name) {
            pick = (pick + 1) % n;
        }
        (Some(self.animal_classes[pick].clone()), count)
    }

    fn prose(&self, image: &AnnotatedImage) -> String {
        let script = self.scripts.get(&image.asset_id);
        let mut sentences: Vec<String> = Vec::new();

        let reads = self.species_reads(image);
        if reads.is_empty() {
            sentences.push("No animals are visible in the image.".to_string());
        } else {
            let phrases: Vec<String> = reads
                .iter()
                .map(|(name, count)| match name {
                    Some(n) => format!("{} {}", count_word(*count), n),
                    None => "an animal whose label is unreadable".to_string(),
                })
                .collect();
            sentences.push(format!("The image shows {}.", join_list(&phrases)));
        }

        if let Some(script) = script {
            match script.time_of_day.as_deref() {
                Some("night") => {
                    sentences.push("It appears to have been taken in the dark.".to_string())
                }
                Some("day") => {
                    sentences.push("It appears to have been taken during the day.".to_string())
                }
                _ => {}
            }
            if !script.habitat.is_empty() {
                sentences.push(format!(
                    "The surroundings include {}.",
                    join_list(&script.habitat)
                ));
            }
            if let Some(stamp) = &script.stamp {
                sentences.push(format!("The camera stamp reads {stamp}."));
            }
        }
        sentences.join(" ")
    }
}

fn join_list<S: AsRef<str>>(items: &[S]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].as_ref().to_string(),
        2 => format!("{} and {}", items[0].as_ref(), items[1].as_ref()),
        _ => {
            let head: Vec<&str> = items[..items.len() - 1].iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), items[items.len() - 1].as_ref())
        }
    }
}

impl VlmBackend for MockVlm {
    fn raw_describe(&self, image: &AnnotatedImage, _prompt: &str) -> Result<String, EndpointError> {
        Ok(self.prose(image))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trapline_core::annotate::{PlateRect, RenderedLabel};
    use trapline_core::context::parse_scene;

    fn annotated(asset_id: &str, labels: &[&str]) -> AnnotatedImage {
        AnnotatedImage {
            asset_id: asset_id.to_string(),
            width: 64,
            height: 48,
            png: Vec::new(),
            rendered_labels: labels
                .iter()
                .enumerate()
                .map(|(i, text)| RenderedLabel {
                    detection_index: i,
                    text: text.to_string(),
                    plate: PlateRect {
                        x: 0,
                        y: 0,
                        width: 1,
                        height: 1,
                    },
                })
                .collect(),
        }
    }

    fn vlm_with_script(mode: VlmMode, asset_id: &str, script: SceneScript) -> MockVlm {
        let taxonomy = Taxonomy::builtin();
        let mut scripts = BTreeMap::new();
        scripts.insert(asset_id.to_string(), script);
        MockVlm {
            scripts,
            mode,
            animal_classes: taxonomy
                .classes()
                .iter()
                .filter(|c| c.kind == ClassKind::Animal)
                .map(|c| c.scientific_name.clone())
                .collect(),
        }
    }

    #[test]
    fn read_labels_mode_reports_label_species() {
        let vlm = vlm_with_script(
            VlmMode::ReadLabels,
            "a1",
            SceneScript {
                species: vec![],
                time_of_day: Some("night".into()),
                habitat: vec!["trees".into(), "grass".into()],
                stamp: Some("SA08 25/05/2022 05:29:28 WED".into()),
            },
        );
        let image = annotated(
            "a1",
            &["Connochaetes taurinus 0.90", "Connochaetes taurinus 0.90", "Equus quagga 0.90"],
        );
        let text = vlm.raw_describe(&image, "prompt").unwrap();
        assert!(text.contains("two Connochaetes taurinus"), "{text}");
        assert!(text.contains("one Equus quagga"), "{text}");
        assert!(text.contains("in the dark"), "{text}");
        assert!(text.contains("SA08 25/05/2022 05:29:28 WED"), "{text}");

        // The prose parses back into the same structure.
        let taxonomy = Taxonomy::builtin();
        let scene = parse_scene(&text, &taxonomy);
        assert_eq!(scene.species_read.len(), 2);
        assert_eq!(
            scene.metadata_text.as_deref(),
            Some("SA08 25/05/2022 05:29:28 WED")
        );
    }

    #[test]
    fn ocr_error_mode_is_deterministic() {
        let script = SceneScript {
            species: vec![ScriptSpecies {
                name: "Equus quagga".into(),
                count: 1,
            }],
            ..SceneScript::default()
        };
        let make = || {
            vlm_with_script(
                VlmMode::OcrError(OcrErrorConfig { seed: 9, rate: 1.0 }),
                "a2",
                script.clone(),
            )
        };
        let image = annotated("a2", &["Equus quagga 0.90"]);
        let a = make().raw_describe(&image, "p").unwrap();
        let b = make().raw_describe(&image, "p").unwrap();
        assert_eq!(a, b);
        // At rate 1.0 the read is always garbled away from the true species.
        assert!(!a.contains("Equus quagga"), "{a}");
    }

    #[test]
    fn ocr_error_rate_zero_reads_script_faithfully() {
        let script = SceneScript {
            species: vec![ScriptSpecies {
                name: "Equus quagga".into(),
                count: 2,
            }],
            ..SceneScript::default()
        };
        let vlm = vlm_with_script(
            VlmMode::OcrError(OcrErrorConfig { seed: 9, rate: 0.0 }),
            "a3",
            script,
        );
        let image = annotated("a3", &[]);
        let text = vlm.raw_describe(&image, "p").unwrap();
        assert!(text.contains("two Equus quagga"), "{text}");
    }
}
