//! End-to-end orchestration: ingest, detect, annotate, describe, fuse,
//! persist, answer, report, evaluate.
//!
//! Assets flow through a bounded-parallel map; one failed asset never aborts
//! the run. All store writes happen on the orchestrating thread in manifest
//! order, so runs with mocks and a fixed seed are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trapline_core::annotate::{default_style, AnnotatedImage};
use trapline_core::context::{fuse, parse_scene, ObservationRecord};
use trapline_core::detect::{detection_rate, DetectionResult};
use trapline_core::domain::{CalendarDate, Taxonomy};
use trapline_core::metrics::{
    evaluate_classification, evaluate_detection, EvalReport, PredictedClass, Scene,
};
use trapline_core::qa::{ask, question_bank, AnswerRecord, Answerer, TemplateComposer};
use trapline_core::rag::{Corpus, Retriever};
use trapline_core::report::{render_report, to_alpaca};

use crate::config::{EndpointMode, PipelineConfig};
use crate::endpoints::{
    build_detector, build_generator, build_vlm, describe, detect_asset, with_retries,
    DetectorBackend, RemoteAnswerer, VlmBackend,
};
use crate::imaging;
use crate::ingest::{clamp_annotations, load_ground_truth, scan_directory, Annotation, ImageAsset};
use crate::mocks::{MockDetector, MockVlm, VlmMode};
use crate::store::{Store, ANNOTATED_DIR, MANIFEST_FILE, REPORT_FILE};

pub const REPORT_TITLE: &str = "Wildlife Species Report";
const ENDPOINT_ATTEMPTS: usize = 3;
const RETRY_BASE_DELAY: Duration = Duration::from_millis(50);
/// Confidence grid for the F1 sweep: 0.00, 0.02, ..., 1.00.
pub fn sweep_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 50.0).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("fatal config: {0}")]
    FatalConfig(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssetStatus {
    Ok,
    BlankFiltered,
    Failed { reason: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub ingested: usize,
    pub ok: usize,
    pub blank_filtered: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub run_date: String,
    pub created_at: String,
    pub statuses: BTreeMap<String, AssetStatus>,
    pub counts: RunCounts,
    pub timings_ms: BTreeMap<String, u64>,
    pub scan_warnings: Vec<crate::ingest::ScanWarning>,
}

impl RunManifest {
    pub fn accounting_holds(&self) -> bool {
        self.counts.ok + self.counts.blank_filtered + self.counts.failed == self.counts.ingested
    }
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub store: Store,
}

/// Deterministic run id from seed, run date, and asset identities; output
/// paths deliberately do not participate.
fn run_id(seed: u64, run_date: &CalendarDate, asset_ids: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(run_date.format_iso().as_bytes());
    for id in asset_ids {
        hasher.update(id.as_bytes());
        hasher.update(b",");
    }
    format!("run-{}", &hex::encode(hasher.finalize())[..12])
}

/// Bounded-parallel map preserving input order.
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = f(i, &items[i]);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
        .collect()
}

struct AssetOutcome {
    status: AssetStatus,
    detection: Option<DetectionResult>,
    observation: Option<ObservationRecord>,
    annotated: Option<AnnotatedImage>,
}

fn process_asset(
    asset: &ImageAsset,
    root: &Path,
    taxonomy: &Taxonomy,
    detector: &dyn DetectorBackend,
    vlm: &dyn VlmBackend,
    config: &PipelineConfig,
) -> AssetOutcome {
    let fail = |reason: String| AssetOutcome {
        status: AssetStatus::Failed { reason },
        detection: None,
        observation: None,
        annotated: None,
    };

    let image_bytes = match imaging::read_image_bytes(&asset.absolute_path(root)) {
        Ok(bytes) => bytes,
        Err(e) => return fail(e.to_string()),
    };

    let detection = match with_retries(ENDPOINT_ATTEMPTS, RETRY_BASE_DELAY, || {
        detect_asset(
            detector,
            asset,
            &image_bytes,
            taxonomy,
            &config.detector,
            config.nms_iou_threshold,
        )
    }) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };

    if detection.blank {
        return AssetOutcome {
            status: AssetStatus::BlankFiltered,
            detection: Some(detection),
            observation: None,
            annotated: None,
        };
    }

    let style = default_style(asset.width, asset.height);
    let annotated = match imaging::annotate_image(
        &asset.asset_id,
        &image_bytes,
        &detection.detections,
        &style,
    ) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };

    let raw_text = match with_retries(ENDPOINT_ATTEMPTS, RETRY_BASE_DELAY, || {
        describe(vlm, &annotated, config.vlm_prompt())
    }) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };

    let scene = parse_scene(&raw_text, taxonomy);
    let observation = fuse(&asset.asset_id, &detection.detections, scene);

    AssetOutcome {
        status: AssetStatus::Ok,
        detection: Some(detection),
        observation: Some(observation),
        annotated: Some(annotated),
    }
}

pub fn load_taxonomy(config: &PipelineConfig) -> Result<Taxonomy, PipelineError> {
    match &config.taxonomy_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::FatalConfig(format!("taxonomy: {e}")))?;
            Taxonomy::from_json(&text)
                .map_err(|e| PipelineError::FatalConfig(format!("taxonomy: {e}")))
        }
        None => Ok(Taxonomy::builtin()),
    }
}

pub fn load_run_corpus(config: &PipelineConfig) -> Result<Corpus, PipelineError> {
    match &config.corpus_dir {
        Some(dir) => crate::knowledge::load_corpus(dir)
            .map_err(|e| PipelineError::FatalConfig(format!("corpus: {e}"))),
        None => Ok(Corpus::empty()),
    }
}

/// Majority key of a count map; ties resolve to the lexicographically
/// smallest key.
fn majority(counts: &BTreeMap<String, u32>) -> Option<String> {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k.clone())
}

/// Per-image classification records: the majority ground-truth class versus
/// the majority species read from the scene (or an abstention).
fn classification_records(
    assets: &[(String, Vec<Annotation>)],
    observations: &BTreeMap<String, &ObservationRecord>,
) -> Vec<(String, PredictedClass)> {
    let mut records = Vec::new();
    for (asset_id, annotations) in assets {
        if annotations.is_empty() {
            continue;
        }
        let mut gt_counts: BTreeMap<String, u32> = BTreeMap::new();
        for a in annotations {
            *gt_counts.entry(a.class.scientific_name.clone()).or_insert(0) += 1;
        }
        let Some(true_class) = majority(&gt_counts) else {
            continue;
        };

        let predicted = match observations.get(asset_id) {
            Some(obs) => {
                let mut read_counts: BTreeMap<String, u32> = BTreeMap::new();
                for read in &obs.scene.species_read {
                    if let Some(name) = &read.scientific_name {
                        *read_counts.entry(name.clone()).or_insert(0) += read.count.max(1);
                    }
                }
                match majority(&read_counts) {
                    Some(name) => PredictedClass::Known(name),
                    None => PredictedClass::DontKnow,
                }
            }
            None => PredictedClass::DontKnow,
        };
        records.push((true_class, predicted));
    }
    records
}

/// Execute the full pipeline under `config`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    config
        .validate()
        .map_err(|e| PipelineError::FatalConfig(e.to_string()))?;
    let total_timer = Instant::now();

    let taxonomy = load_taxonomy(config)?;
    let corpus = load_run_corpus(config)?;
    let run_date = config
        .resolved_run_date()
        .map_err(|e| PipelineError::FatalConfig(e.to_string()))?;

    // Step 1: ingest.
    let scan_timer = Instant::now();
    let scan = scan_directory(&config.input_root)
        .map_err(|e| PipelineError::FatalConfig(e.to_string()))?;
    let manifest = scan.manifest;
    let scan_ms = scan_timer.elapsed().as_millis() as u64;

    // Endpoint backends; mocks are fixture-driven.
    let detector: Box<dyn DetectorBackend> = match build_detector(&config.detector) {
        Some(backend) => backend,
        None => Box::new(
            MockDetector::from_manifest(
                &manifest,
                &config.input_root,
                &taxonomy,
                config.detector.noise.clone(),
            )
            .map_err(|e| PipelineError::FatalConfig(e.to_string()))?,
        ),
    };
    let vlm: Box<dyn VlmBackend> = match build_vlm(&config.vlm) {
        Some(backend) => backend,
        None => {
            let mode = match (&config.vlm.mode, &config.vlm.ocr_error) {
                (EndpointMode::Mock, Some(ocr)) => VlmMode::OcrError(ocr.clone()),
                _ => VlmMode::ReadLabels,
            };
            Box::new(
                MockVlm::from_manifest(&manifest, &config.input_root, &taxonomy, mode)
                    .map_err(|e| PipelineError::FatalConfig(e.to_string()))?,
            )
        }
    };

    // Steps 2-4: detect, annotate, describe, fuse. Bounded-parallel.
    let stage_timer = Instant::now();
    let outcomes = parallel_map(&manifest.assets, config.workers, |_, asset| {
        process_asset(
            asset,
            &config.input_root,
            &taxonomy,
            detector.as_ref(),
            vlm.as_ref(),
            config,
        )
    });
    let detect_ms = stage_timer.elapsed().as_millis() as u64;

    // Persist observations and annotated images in manifest order.
    let store = Store::create(&config.output_root)?;
    std::fs::create_dir_all(store.path(ANNOTATED_DIR)).map_err(|e| {
        PipelineError::Store(crate::store::StoreError::Io {
            path: store.path(ANNOTATED_DIR),
            source: e,
        })
    })?;
    let mut statuses: BTreeMap<String, AssetStatus> = BTreeMap::new();
    let mut observations: Vec<&ObservationRecord> = Vec::new();
    for (asset, outcome) in manifest.assets.iter().zip(&outcomes) {
        statuses.insert(asset.asset_id.clone(), outcome.status.clone());
        if let Some(observation) = &outcome.observation {
            store.append_observation(observation)?;
            observations.push(observation);
        }
        if let Some(annotated) = &outcome.annotated {
            let stem = Path::new(&asset.path)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or(&asset.asset_id)
                .to_string();
            store.write_bytes_in(ANNOTATED_DIR, &format!("{stem}.png"), &annotated.png)?;
        }
    }

    // Steps 5-8: question answering over the persisted observations.
    let qa_timer = Instant::now();
    let embedder = crate::endpoints::build_embedder(&config.embedder);
    let retriever = Retriever::new(&corpus, embedder.as_ref(), config.retrieval_params())
        .map_err(|e| PipelineError::FatalConfig(format!("retriever: {e}")))?;
    let generator = build_generator(&config.generator);
    let remote_answerer = generator.as_deref().map(RemoteAnswerer::new);
    let answerer: &dyn Answerer = match &remote_answerer {
        Some(remote) => remote,
        None => &TemplateComposer,
    };

    let answered_at = format!("{}T00:00:00Z", run_date.format_iso());
    let bank = question_bank();
    let mut answers: Vec<AnswerRecord> = Vec::new();
    for observation in &observations {
        for question in &bank {
            match ask(observation, question, &retriever, answerer) {
                Ok(tuple) => {
                    let record = AnswerRecord {
                        asset_id: observation.asset_id.clone(),
                        question_id: question.question_id.clone(),
                        question_text: question.template.clone(),
                        tuple,
                        answered_at: answered_at.clone(),
                    };
                    store.append_answer(&record)?;
                    answers.push(record);
                }
                Err(e) => {
                    statuses.insert(
                        observation.asset_id.clone(),
                        AssetStatus::Failed {
                            reason: format!("qa {}: {e}", question.question_id),
                        },
                    );
                }
            }
        }
    }
    let qa_ms = qa_timer.elapsed().as_millis() as u64;

    // Reporting.
    let alpaca = to_alpaca(&answers, &taxonomy, &run_date);
    store.write_alpaca(&alpaca.entries)?;
    if !alpaca.entries.is_empty() {
        let (_, markdown) = render_report(&alpaca.entries, REPORT_TITLE)
            .expect("entries are non-empty, rendering cannot fail");
        store.write_text(REPORT_FILE, &markdown)?;
    }

    // Evaluation against sidecar ground truth, when present.
    let eval_timer = Instant::now();
    let mut gt_by_asset: Vec<(String, Vec<Annotation>)> = Vec::new();
    let mut scenes: Vec<Scene> = Vec::new();
    for (asset, outcome) in manifest.assets.iter().zip(&outcomes) {
        let Some(sidecar) = asset.sidecar_path(&config.input_root) else {
            continue;
        };
        let Ok(annotations) = load_ground_truth(&sidecar, &taxonomy) else {
            continue;
        };
        let annotations = clamp_annotations(annotations, asset.width, asset.height);
        if let Some(detection) = &outcome.detection {
            scenes.push(Scene {
                predictions: detection.detections.clone(),
                ground_truth: annotations.iter().map(Annotation::as_labeled_box).collect(),
            });
        }
        gt_by_asset.push((asset.asset_id.clone(), annotations));
    }
    let observation_map: BTreeMap<String, &ObservationRecord> = observations
        .iter()
        .map(|o| (o.asset_id.clone(), *o))
        .collect();
    let detection_eval = if scenes.is_empty() {
        None
    } else {
        evaluate_detection(&scenes, config.eval_iou_threshold, &sweep_grid()).ok()
    };
    let cls_records = classification_records(&gt_by_asset, &observation_map);
    let classification = if cls_records.is_empty() {
        None
    } else {
        Some(evaluate_classification(&cls_records))
    };
    let results: Vec<DetectionResult> = outcomes
        .iter()
        .filter_map(|o| o.detection.clone())
        .collect();
    let stats = detection_rate(&results).ok();
    store.write_eval(&EvalReport::new(detection_eval, classification, stats))?;
    let eval_ms = eval_timer.elapsed().as_millis() as u64;

    // Counts derive from the final statuses so late failures stay consistent.
    let mut counts = RunCounts {
        ingested: manifest.assets.len(),
        ..RunCounts::default()
    };
    for status in statuses.values() {
        match status {
            AssetStatus::Ok => counts.ok += 1,
            AssetStatus::BlankFiltered => counts.blank_filtered += 1,
            AssetStatus::Failed { .. } => counts.failed += 1,
        }
    }

    let mut timings_ms = BTreeMap::new();
    timings_ms.insert("scan".to_string(), scan_ms);
    timings_ms.insert("detect_describe".to_string(), detect_ms);
    timings_ms.insert("qa".to_string(), qa_ms);
    timings_ms.insert("eval".to_string(), eval_ms);
    timings_ms.insert("total".to_string(), total_timer.elapsed().as_millis() as u64);

    let run_manifest = RunManifest {
        run_id: run_id(config.seed, &run_date, &manifest.asset_ids()),
        seed: config.seed,
        run_date: run_date.format_iso(),
        created_at: crate::ingest::now_iso(),
        statuses,
        counts,
        timings_ms,
        scan_warnings: scan.warnings,
    };
    debug_assert!(run_manifest.accounting_holds());
    let manifest_json =
        serde_json::to_string_pretty(&run_manifest).expect("run manifest serializes");
    store.write_text(MANIFEST_FILE, &(manifest_json + "\n"))?;

    Ok(RunOutcome {
        manifest: run_manifest,
        store,
    })
}
