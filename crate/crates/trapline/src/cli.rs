//! Command-line interface.
//!
//! Exit codes: 0 success, 1 when individual items failed but the run
//! completed, 2 on fatal configuration or input errors.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use trapline_core::domain::Taxonomy;
use trapline_core::metrics::{
    evaluate_classification, evaluate_detection, EvalReport, LabeledBox, PredictedClass, Scene,
};
use trapline_core::qa::{ask, question_bank, FactKind, Question, TemplateComposer};
use trapline_core::rag::{build_index, chunk, Retriever};
use trapline_core::split::{split_ids, split_ids_stratified};

use crate::config::{resolve_config, PipelineConfig};
use crate::endpoints::{build_detector, build_vlm, describe, detect_asset, with_retries, WireDetection};
use crate::imaging;
use crate::ingest::{load_ground_truth, load_manifest, save_manifest, scan_directory, DatasetManifest};
use crate::mocks::{MockDetector, MockVlm, VlmMode};
use crate::pipeline::{run_pipeline, sweep_grid};
use crate::serve::Service;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ITEM_FAILURES: u8 = 1;
pub const EXIT_FATAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "trapline",
    version,
    about = "Camera-trap analysis pipeline: detection, context, retrieval-backed Q&A, reports"
)]
pub struct Cli {
    /// Config file (JSON); falls back to the TRAPLINE_CONFIG env var.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a directory into a dataset manifest.
    Ingest {
        /// Directory to scan; defaults to the config input_root.
        #[arg(long)]
        root: Option<PathBuf>,
        /// Manifest output path; defaults to <output_root>/ingest-manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a manifest into train/validation/test sets.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply the split independently inside each ground-truth class.
        #[arg(long)]
        stratified: bool,
    },
    /// Run the detector over every manifest asset.
    Detect {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Detections output (JSONL); defaults to <output_root>/detections.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw labelled boxes onto images.
    Annotate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Detections produced by `detect`.
        #[arg(long)]
        detections: PathBuf,
        /// Output directory; defaults to <output_root>/annotated.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Describe annotated images and fuse scene context into observations.
    Contextualize {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        detections: PathBuf,
        /// Observations output (JSONL); defaults to <output_root>/observations.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chunk and embed the corpus into a vector index file.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Index output; defaults to <output_root>/index.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer a question about a persisted observation.
    Ask {
        /// observations.jsonl produced by `contextualize` or `run`.
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        asset_id: String,
        /// Built-in question id (Q1..Q10).
        #[arg(long)]
        question_id: Option<String>,
        /// Custom question text.
        #[arg(long)]
        question: Option<String>,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        /// Predictions: [{"image", "detections": [{"class","confidence","bbox"}]}]
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: [{"image", "objects": [{"class","bbox"}]}]
        #[arg(long)]
        gt: PathBuf,
        /// Classification records: [{"image","true_class","predicted"}]
        #[arg(long)]
        cls: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export pr_curves.csv and f1_sweep.csv into this directory.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Convert answers into Alpaca entries and render the markdown report.
    Report {
        /// answers.jsonl produced by `run`.
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        title: Option<String>,
        /// Output directory; defaults to the answers file's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the full pipeline.
    Run,
    /// Serve query endpoints over a completed run's store.
    Serve {
        /// Store root; defaults to the config output_root.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8732")]
        addr: String,
    },
}

pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path too.
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_FATAL
        }
    }
}

fn load_cli_config(cli_config: Option<&Path>, seed: Option<u64>, workers: Option<usize>) -> Result<PipelineConfig, String> {
    let mut config = resolve_config(cli_config).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<u8, String> {
    let config_flag = cli.config.as_deref();
    let need_config = || load_cli_config(config_flag, cli.seed, cli.workers);

    match cli.command {
        Command::Ingest { root, out } => {
            // Allow config-free ingestion when an explicit root is given.
            let (root, out_path) = match (&root, need_config()) {
                (Some(r), Err(_)) => (r.clone(), out.clone().unwrap_or_else(|| r.join("ingest-manifest.json"))),
                (_, Ok(config)) => {
                    let r = root.unwrap_or_else(|| config.input_root.clone());
                    let o = out.unwrap_or_else(|| config.output_root.join("ingest-manifest.json"));
                    std::fs::create_dir_all(&config.output_root).map_err(|e| e.to_string())?;
                    (r, o)
                }
                (None, Err(e)) => return Err(e),
            };
            let outcome = scan_directory(&root).map_err(|e| e.to_string())?;
            for warning in &outcome.warnings {
                eprintln!("warning: {}: {}", warning.path, warning.reason);
            }
            save_manifest(&outcome.manifest, &out_path).map_err(|e| e.to_string())?;
            println!(
                "{} assets -> {} ({} warnings)",
                outcome.manifest.assets.len(),
                out_path.display(),
                outcome.warnings.len()
            );
            Ok(EXIT_OK)
        }

        Command::Split {
            manifest,
            out,
            stratified,
        } => {
            let config = need_config()?;
            let manifest: DatasetManifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            let ratios = (config.split.train, config.split.validation, config.split.test);
            let assignment = if stratified || config.split.stratified {
                let taxonomy = crate::pipeline::load_taxonomy(&config).map_err(|e| e.to_string())?;
                let pairs: Vec<(String, String)> = manifest
                    .assets
                    .iter()
                    .map(|asset| {
                        let stratum = asset
                            .sidecar_path(Path::new(&manifest.root))
                            .and_then(|p| load_ground_truth(&p, &taxonomy).ok())
                            .and_then(|objects| {
                                objects.first().map(|a| a.class.scientific_name.clone())
                            })
                            .unwrap_or_else(|| "__none__".to_string());
                        (asset.asset_id.clone(), stratum)
                    })
                    .collect();
                split_ids_stratified(&pairs, ratios, config.seed)
            } else {
                split_ids(&manifest.asset_ids(), ratios, config.seed)
            }
            .map_err(|e| e.to_string())?;

            let out_path = out.unwrap_or_else(|| config.output_root.join("split.json"));
            std::fs::create_dir_all(out_path.parent().unwrap_or(Path::new(".")))
                .map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&assignment).expect("split serializes");
            std::fs::write(&out_path, json + "\n").map_err(|e| e.to_string())?;
            println!(
                "train {} / validation {} / test {} -> {}",
                assignment.train.len(),
                assignment.validation.len(),
                assignment.test.len(),
                out_path.display()
            );
            Ok(EXIT_OK)
        }

        Command::Detect { manifest, out } => {
            let config = need_config()?;
            let taxonomy = crate::pipeline::load_taxonomy(&config).map_err(|e| e.to_string())?;
            let manifest = resolve_manifest(manifest.as_deref(), &config)?;
            let root = PathBuf::from(&manifest.root);
            let detector = match build_detector(&config.detector) {
                Some(backend) => backend,
                None => Box::new(
                    MockDetector::from_manifest(&manifest, &root, &taxonomy, config.detector.noise.clone())
                        .map_err(|e| e.to_string())?,
                ),
            };

            std::fs::create_dir_all(&config.output_root).map_err(|e| e.to_string())?;
            let out_path = out.unwrap_or_else(|| config.output_root.join("detections.jsonl"));
            let mut lines = Vec::new();
            let mut failures = 0usize;
            for asset in &manifest.assets {
                let bytes = match imaging::read_image_bytes(&asset.absolute_path(&root)) {
                    Ok(b) => b,
                    Err(e) => {
                        eprintln!("failed {}: {e}", asset.path);
                        failures += 1;
                        continue;
                    }
                };
                match with_retries(3, std::time::Duration::from_millis(50), || {
                    detect_asset(
                        detector.as_ref(),
                        asset,
                        &bytes,
                        &taxonomy,
                        &config.detector,
                        config.nms_iou_threshold,
                    )
                }) {
                    Ok(result) => {
                        lines.push(serde_json::to_string(&result).expect("result serializes"))
                    }
                    Err(e) => {
                        eprintln!("failed {}: {e}", asset.path);
                        failures += 1;
                    }
                }
            }
            std::fs::write(&out_path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
            println!(
                "{} results -> {} ({failures} failures)",
                lines.len(),
                out_path.display()
            );
            Ok(if failures > 0 { EXIT_ITEM_FAILURES } else { EXIT_OK })
        }

        Command::Annotate {
            manifest,
            detections,
            out_dir,
        } => {
            let config = need_config()?;
            let manifest = resolve_manifest(manifest.as_deref(), &config)?;
            let root = PathBuf::from(&manifest.root);
            let results = read_detections(&detections)?;
            let out_dir = out_dir.unwrap_or_else(|| config.output_root.join("annotated"));
            std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;

            let mut failures = 0usize;
            let mut written = 0usize;
            for result in &results {
                let Some(asset) = manifest.get(&result.asset_id) else {
                    eprintln!("failed {}: not in manifest", result.asset_id);
                    failures += 1;
                    continue;
                };
                let bytes = match imaging::read_image_bytes(&asset.absolute_path(&root)) {
                    Ok(b) => b,
                    Err(e) => {
                        eprintln!("failed {}: {e}", asset.path);
                        failures += 1;
                        continue;
                    }
                };
                let style = trapline_core::annotate::default_style(asset.width, asset.height);
                match imaging::annotate_image(&asset.asset_id, &bytes, &result.detections, &style) {
                    Ok(annotated) => {
                        let stem = Path::new(&asset.path)
                            .file_stem()
                            .and_then(|s| s.to_str())
                            .unwrap_or(&asset.asset_id);
                        let path = out_dir.join(format!("{stem}.png"));
                        std::fs::write(&path, &annotated.png).map_err(|e| e.to_string())?;
                        written += 1;
                    }
                    Err(e) => {
                        eprintln!("failed {}: {e}", asset.path);
                        failures += 1;
                    }
                }
            }
            println!("{written} annotated images -> {} ({failures} failures)", out_dir.display());
            Ok(if failures > 0 { EXIT_ITEM_FAILURES } else { EXIT_OK })
        }

        Command::Contextualize {
            manifest,
            detections,
            out,
        } => {
            let config = need_config()?;
            let taxonomy = crate::pipeline::load_taxonomy(&config).map_err(|e| e.to_string())?;
            let manifest = resolve_manifest(manifest.as_deref(), &config)?;
            let root = PathBuf::from(&manifest.root);
            let results = read_detections(&detections)?;
            let vlm = match build_vlm(&config.vlm) {
                Some(backend) => backend,
                None => {
                    let mode = match &config.vlm.ocr_error {
                        Some(ocr) => VlmMode::OcrError(ocr.clone()),
                        None => VlmMode::ReadLabels,
                    };
                    Box::new(
                        MockVlm::from_manifest(&manifest, &root, &taxonomy, mode)
                            .map_err(|e| e.to_string())?,
                    )
                }
            };

            std::fs::create_dir_all(&config.output_root).map_err(|e| e.to_string())?;
            let out_path = out.unwrap_or_else(|| config.output_root.join("observations.jsonl"));
            let mut lines = Vec::new();
            let mut failures = 0usize;
            for result in &results {
                if result.blank {
                    continue;
                }
                let outcome = (|| -> Result<String, String> {
                    let asset = manifest
                        .get(&result.asset_id)
                        .ok_or_else(|| "not in manifest".to_string())?;
                    let bytes = imaging::read_image_bytes(&asset.absolute_path(&root))
                        .map_err(|e| e.to_string())?;
                    let style = trapline_core::annotate::default_style(asset.width, asset.height);
                    let annotated = imaging::annotate_image(
                        &asset.asset_id,
                        &bytes,
                        &result.detections,
                        &style,
                    )
                    .map_err(|e| e.to_string())?;
                    let raw = with_retries(3, std::time::Duration::from_millis(50), || {
                        describe(vlm.as_ref(), &annotated, config.vlm_prompt())
                    })
                    .map_err(|e| e.to_string())?;
                    let scene = trapline_core::context::parse_scene(&raw, &taxonomy);
                    let observation =
                        trapline_core::context::fuse(&asset.asset_id, &result.detections, scene);
                    Ok(serde_json::to_string(&observation).expect("observation serializes"))
                })();
                match outcome {
                    Ok(line) => lines.push(line),
                    Err(e) => {
                        eprintln!("failed {}: {e}", result.asset_id);
                        failures += 1;
                    }
                }
            }
            std::fs::write(&out_path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
            println!(
                "{} observations -> {} ({failures} failures)",
                lines.len(),
                out_path.display()
            );
            Ok(if failures > 0 { EXIT_ITEM_FAILURES } else { EXIT_OK })
        }

        Command::Index { corpus, out } => {
            let config = need_config()?;
            let corpus_dir = corpus
                .or_else(|| config.corpus_dir.clone())
                .ok_or("no corpus directory: pass --corpus or set corpus_dir")?;
            let corpus = crate::knowledge::load_corpus(&corpus_dir).map_err(|e| e.to_string())?;
            let embedder = crate::endpoints::build_embedder(&config.embedder);
            let params = config.retrieval_params();
            let mut passages = Vec::new();
            for doc in corpus.docs() {
                passages.extend(chunk(doc, &params.chunk).map_err(|e| e.to_string())?);
            }
            let index = build_index(&passages, embedder.as_ref()).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&config.output_root).map_err(|e| e.to_string())?;
            let out_path = out.unwrap_or_else(|| config.output_root.join("index.json"));
            crate::knowledge::save_index(&index, &out_path).map_err(|e| e.to_string())?;
            println!(
                "{} passages ({} docs) -> {}",
                index.entries.len(),
                corpus.len(),
                out_path.display()
            );
            Ok(EXIT_OK)
        }

        Command::Ask {
            observations,
            asset_id,
            question_id,
            question,
        } => {
            let config = need_config()?;
            let corpus = crate::pipeline::load_run_corpus(&config).map_err(|e| e.to_string())?;
            let embedder = crate::endpoints::build_embedder(&config.embedder);
            let retriever = Retriever::new(&corpus, embedder.as_ref(), config.retrieval_params())
                .map_err(|e| e.to_string())?;

            let all = read_observations_file(&observations)?;
            let observation = all
                .iter()
                .find(|o| o.asset_id == asset_id)
                .ok_or_else(|| format!("asset {asset_id} not found in {}", observations.display()))?;

            let bank = question_bank();
            let q = match (question_id, question) {
                (Some(id), _) => bank
                    .into_iter()
                    .find(|q| q.question_id == id)
                    .ok_or_else(|| format!("unknown question id {id}"))?,
                (None, Some(text)) => Question::new(
                    "custom",
                    &text,
                    &[FactKind::Species, FactKind::ExternalKnowledge],
                ),
                (None, None) => return Err("provide --question-id or --question".into()),
            };
            let tuple = ask(observation, &q, &retriever, &TemplateComposer).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&tuple).expect("tuple serializes"));
            Ok(EXIT_OK)
        }

        Command::Eval {
            pred,
            gt,
            cls,
            out,
            csv_dir,
        } => {
            let taxonomy = match need_config() {
                Ok(config) => crate::pipeline::load_taxonomy(&config).map_err(|e| e.to_string())?,
                Err(_) => Taxonomy::builtin(),
            };
            let report = eval_files(&pred, &gt, cls.as_deref(), &taxonomy)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(path) => {
                    std::fs::write(&path, json + "\n").map_err(|e| e.to_string())?;
                    println!("eval report -> {}", path.display());
                }
                None => println!("{json}"),
            }
            if let Some(dir) = csv_dir {
                std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                crate::evalio::export_pr_csv(&report, &dir.join("pr_curves.csv"))
                    .map_err(|e| e.to_string())?;
                crate::evalio::export_sweep_csv(&report, &dir.join("f1_sweep.csv"))
                    .map_err(|e| e.to_string())?;
            }
            Ok(EXIT_OK)
        }

        Command::Report {
            answers,
            title,
            out_dir,
        } => {
            let config = need_config();
            let taxonomy = match &config {
                Ok(c) => crate::pipeline::load_taxonomy(c).map_err(|e| e.to_string())?,
                Err(_) => Taxonomy::builtin(),
            };
            let run_date = match &config {
                Ok(c) => c.resolved_run_date().map_err(|e| e.to_string())?,
                Err(_) => crate::config::today(),
            };
            let records = read_answers_file(&answers)?;
            if records.is_empty() {
                return Err("no answer records to report".into());
            }
            let outcome = trapline_core::report::to_alpaca(&records, &taxonomy, &run_date);
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            let title = title.unwrap_or_else(|| crate::pipeline::REPORT_TITLE.to_string());
            let (_, markdown) = trapline_core::report::render_report(&outcome.entries, &title)
                .map_err(|e| e.to_string())?;

            let dir = out_dir.unwrap_or_else(|| {
                answers.parent().unwrap_or(Path::new(".")).to_path_buf()
            });
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let alpaca_path = dir.join(crate::store::ALPACA_FILE);
            std::fs::write(
                &alpaca_path,
                trapline_core::report::to_canonical_json(&outcome.entries) + "\n",
            )
            .map_err(|e| e.to_string())?;
            let report_path = dir.join(crate::store::REPORT_FILE);
            std::fs::write(&report_path, &markdown).map_err(|e| e.to_string())?;
            println!(
                "{} entries -> {} and {}",
                outcome.entries.len(),
                alpaca_path.display(),
                report_path.display()
            );
            Ok(if outcome.warnings.is_empty() {
                EXIT_OK
            } else {
                EXIT_ITEM_FAILURES
            })
        }

        Command::Run => {
            let config = need_config()?;
            let outcome = run_pipeline(&config).map_err(|e| e.to_string())?;
            let manifest = &outcome.manifest;
            println!(
                "run {}: {} ingested, {} ok, {} blank_filtered, {} failed",
                manifest.run_id,
                manifest.counts.ingested,
                manifest.counts.ok,
                manifest.counts.blank_filtered,
                manifest.counts.failed
            );
            println!("store: {}", outcome.store.root().display());
            Ok(if manifest.counts.failed > 0 {
                EXIT_ITEM_FAILURES
            } else {
                EXIT_OK
            })
        }

        Command::Serve { store, addr } => {
            let config = need_config()?;
            let store_root = store.unwrap_or_else(|| config.output_root.clone());
            let workers = config.workers;
            let service = Service::bind(config, &store_root, &addr).map_err(|e| e.to_string())?;
            println!("serving {} on {}", store_root.display(), service.local_addr());
            service.run(workers);
            Ok(EXIT_OK)
        }
    }
}

fn resolve_manifest(
    path: Option<&Path>,
    config: &PipelineConfig,
) -> Result<DatasetManifest, String> {
    match path {
        Some(p) => load_manifest(p).map_err(|e| e.to_string()),
        None => Ok(scan_directory(&config.input_root)
            .map_err(|e| e.to_string())?
            .manifest),
    }
}

fn read_detections(path: &Path) -> Result<Vec<trapline_core::detect::DetectionResult>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn read_observations_file(
    path: &Path,
) -> Result<Vec<trapline_core::context::ObservationRecord>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn read_answers_file(path: &Path) -> Result<Vec<trapline_core::qa::AnswerRecord>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

#[derive(serde::Deserialize)]
struct PredFileEntry {
    image: String,
    detections: Vec<WireDetection>,
}

#[derive(serde::Deserialize)]
struct GtFileEntry {
    image: String,
    objects: Vec<crate::ingest::GroundTruthObject>,
}

#[derive(serde::Deserialize)]
struct ClsFileEntry {
    #[allow(dead_code)]
    image: String,
    true_class: String,
    predicted: Option<String>,
}

/// Build scenes from prediction and ground-truth files joined on `image`.
fn eval_files(
    pred_path: &Path,
    gt_path: &Path,
    cls_path: Option<&Path>,
    taxonomy: &Taxonomy,
) -> Result<EvalReport, String> {
    let pred_text = std::fs::read_to_string(pred_path).map_err(|e| e.to_string())?;
    let preds: Vec<PredFileEntry> = serde_json::from_str(&pred_text).map_err(|e| e.to_string())?;
    let gt_text = std::fs::read_to_string(gt_path).map_err(|e| e.to_string())?;
    let gts: Vec<GtFileEntry> = serde_json::from_str(&gt_text).map_err(|e| e.to_string())?;

    let mut images: Vec<String> = preds
        .iter()
        .map(|p| p.image.clone())
        .chain(gts.iter().map(|g| g.image.clone()))
        .collect();
    images.sort_unstable();
    images.dedup();

    let mut scenes = Vec::with_capacity(images.len());
    for image in &images {
        let predictions = preds
            .iter()
            .find(|p| &p.image == image)
            .map(|p| {
                p.detections
                    .iter()
                    .map(|w| {
                        let class = taxonomy
                            .lookup(&w.class)
                            .map_err(|e| format!("{image}: {e}"))?
                            .clone();
                        Ok(trapline_core::domain::Detection::new(
                            class,
                            w.confidence,
                            w.bbox.into(),
                        ))
                    })
                    .collect::<Result<Vec<_>, String>>()
            })
            .transpose()?
            .unwrap_or_default();
        let ground_truth = gts
            .iter()
            .find(|g| &g.image == image)
            .map(|g| {
                g.objects
                    .iter()
                    .map(|o| {
                        let class = taxonomy
                            .lookup(&o.class)
                            .map_err(|e| format!("{image}: {e}"))?
                            .clone();
                        Ok(LabeledBox {
                            class: class.scientific_name,
                            bbox: o.bbox.into(),
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()
            })
            .transpose()?
            .unwrap_or_default();
        scenes.push(Scene {
            predictions,
            ground_truth,
        });
    }

    let detection = evaluate_detection(&scenes, 0.5, &sweep_grid()).map_err(|e| e.to_string())?;
    let classification = match cls_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            let entries: Vec<ClsFileEntry> =
                serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let records: Vec<(String, PredictedClass)> = entries
                .into_iter()
                .map(|e| {
                    let predicted = match e.predicted {
                        Some(p) => PredictedClass::Known(p),
                        None => PredictedClass::DontKnow,
                    };
                    (e.true_class, predicted)
                })
                .collect();
            Some(evaluate_classification(&records))
        }
        None => None,
    };
    Ok(EvalReport::new(Some(detection), classification, None))
}
