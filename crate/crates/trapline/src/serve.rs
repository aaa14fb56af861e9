//! HTTP query service over a completed run's store.
//!
//! Endpoints:
//! - `GET /v1/runs` -> run manifests
//! - `GET /v1/report/{run_id}` -> markdown report
//! - `POST /v1/ask` `{"asset_id", "question_id"?, "question"?}` -> answer tuple
//! - `POST /v1/analyze` `{"image_b64"}` -> one image through the pipeline
//!
//! Responses are deterministic given the store. Reads run concurrently;
//! `/v1/analyze` writes are serialized through the store lock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Response, Server};
use trapline_core::annotate::default_style;
use trapline_core::context::{fuse, parse_scene, ObservationRecord};
use trapline_core::domain::Taxonomy;
use trapline_core::qa::{ask, question_bank, FactKind, Question, TemplateComposer};
use trapline_core::rag::{Corpus, Embedder, Retriever};

use crate::config::PipelineConfig;
use crate::endpoints::{decode_b64, describe, detect_asset, DetectorBackend, EndpointError, VlmBackend};
use crate::imaging;
use crate::ingest::{scan_directory, ImageAsset};
use crate::mocks::{MockDetector, MockVlm, VlmMode};
use crate::pipeline::RunManifest;
use crate::store::{Store, MANIFEST_FILE, REPORT_FILE};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("store at {0} has no readable manifest")]
    NoStore(PathBuf),
    #[error("fatal config: {0}")]
    FatalConfig(String),
}

struct ServiceState {
    taxonomy: Taxonomy,
    corpus: Corpus,
    embedder: Box<dyn Embedder + Send + Sync>,
    config: PipelineConfig,
    bank: Vec<Question>,
    observations: Mutex<BTreeMap<String, ObservationRecord>>,
    manifest: Option<RunManifest>,
    report_markdown: Option<String>,
    detector: Box<dyn DetectorBackend>,
    vlm: Box<dyn VlmBackend>,
    store: Mutex<Store>,
}

pub struct Service {
    server: Arc<Server>,
    state: Arc<ServiceState>,
}

#[derive(Deserialize)]
struct AskRequest {
    asset_id: String,
    #[serde(default)]
    question_id: Option<String>,
    #[serde(default)]
    question: Option<String>,
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    image_b64: String,
}

#[derive(Serialize)]
struct AnalyzeResponse {
    blank: bool,
    observation: Option<ObservationRecord>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

enum Reply {
    Json(u16, String),
    Markdown(String),
}

fn json_reply(status: u16, value: &impl Serialize) -> Reply {
    Reply::Json(
        status,
        serde_json::to_string_pretty(value).expect("responses serialize"),
    )
}

fn error_reply(status: u16, message: impl Into<String>) -> Reply {
    json_reply(
        status,
        &ErrorBody {
            error: message.into(),
        },
    )
}

impl Service {
    /// Load a completed store and bind the service socket.
    pub fn bind(config: PipelineConfig, store_root: &Path, addr: &str) -> Result<Self, ServeError> {
        let taxonomy = crate::pipeline::load_taxonomy(&config)
            .map_err(|e| ServeError::FatalConfig(e.to_string()))?;
        let corpus = crate::pipeline::load_run_corpus(&config)
            .map_err(|e| ServeError::FatalConfig(e.to_string()))?;
        let embedder = crate::endpoints::build_embedder(&config.embedder);

        let store = Store::open(store_root);
        let manifest: Option<RunManifest> = store
            .read_text(MANIFEST_FILE)
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok());
        if manifest.is_none() {
            return Err(ServeError::NoStore(store_root.to_path_buf()));
        }
        let report_markdown = store.read_text(REPORT_FILE).ok();
        let observations: BTreeMap<String, ObservationRecord> = store
            .read_observations()
            .unwrap_or_default()
            .into_iter()
            .map(|o| (o.asset_id.clone(), o))
            .collect();

        // Backends for /v1/analyze; the mock pair replays the input fixtures.
        let scan = scan_directory(&config.input_root)
            .map_err(|e| ServeError::FatalConfig(e.to_string()))?;
        let detector: Box<dyn DetectorBackend> = match crate::endpoints::build_detector(&config.detector) {
            Some(backend) => backend,
            None => Box::new(
                MockDetector::from_manifest(
                    &scan.manifest,
                    &config.input_root,
                    &taxonomy,
                    config.detector.noise.clone(),
                )
                .map_err(|e| ServeError::FatalConfig(e.to_string()))?,
            ),
        };
        let vlm: Box<dyn VlmBackend> = match crate::endpoints::build_vlm(&config.vlm) {
            Some(backend) => backend,
            None => {
                let mode = match &config.vlm.ocr_error {
                    Some(ocr) => VlmMode::OcrError(ocr.clone()),
                    None => VlmMode::ReadLabels,
                };
                Box::new(
                    MockVlm::from_manifest(&scan.manifest, &config.input_root, &taxonomy, mode)
                        .map_err(|e| ServeError::FatalConfig(e.to_string()))?,
                )
            }
        };

        let server = Server::http(addr).map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self {
            server: Arc::new(server),
            state: Arc::new(ServiceState {
                taxonomy,
                corpus,
                embedder,
                config,
                bank: question_bank(),
                observations: Mutex::new(observations),
                manifest,
                report_markdown,
                detector,
                vlm,
                store: Mutex::new(store),
            }),
        })
    }

    pub fn local_addr(&self) -> String {
        self.server.server_addr().to_string()
    }

    /// Serve forever on the calling thread plus `workers - 1` helpers.
    pub fn run(self, workers: usize) {
        let helpers = self.spawn(workers.saturating_sub(1));
        serve_loop(&self.server, &self.state);
        for handle in helpers {
            let _ = handle.join();
        }
    }

    /// Spawn detached worker threads; used by tests and by `run`.
    pub fn spawn(&self, workers: usize) -> Vec<std::thread::JoinHandle<()>> {
        (0..workers)
            .map(|_| {
                let server = Arc::clone(&self.server);
                let state = Arc::clone(&self.state);
                std::thread::spawn(move || serve_loop(&server, &state))
            })
            .collect()
    }
}

fn serve_loop(server: &Server, state: &ServiceState) {
    while let Ok(mut request) = server.recv() {
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let reply = route(state, request.method(), request.url(), &body);
        let response = match reply {
            Reply::Json(status, json) => Response::from_string(json)
                .with_status_code(status)
                .with_header(
                    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .expect("static header"),
                ),
            Reply::Markdown(text) => Response::from_string(text).with_header(
                Header::from_bytes(&b"Content-Type"[..], &b"text/markdown; charset=utf-8"[..])
                    .expect("static header"),
            ),
        };
        let _ = request.respond(response);
    }
}

fn route(state: &ServiceState, method: &Method, url: &str, body: &str) -> Reply {
    let path = url.split('?').next().unwrap_or(url);
    match (method, path) {
        (Method::Get, "/v1/runs") => {
            let runs: Vec<&RunManifest> = state.manifest.iter().collect();
            json_reply(200, &runs)
        }
        (Method::Get, _) if path.starts_with("/v1/report/") => {
            let run_id = &path["/v1/report/".len()..];
            match (&state.manifest, &state.report_markdown) {
                (Some(manifest), Some(markdown)) if manifest.run_id == run_id => {
                    Reply::Markdown(markdown.clone())
                }
                _ => error_reply(404, format!("unknown run: {run_id}")),
            }
        }
        (Method::Post, "/v1/ask") => handle_ask(state, body),
        (Method::Post, "/v1/analyze") => handle_analyze(state, body),
        _ => error_reply(404, format!("no such resource: {path}")),
    }
}

fn handle_ask(state: &ServiceState, body: &str) -> Reply {
    let request: AskRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return error_reply(422, format!("malformed request: {e}")),
    };
    let observations = state.observations.lock().expect("observations lock");
    let Some(observation) = observations.get(&request.asset_id) else {
        return error_reply(404, format!("unknown asset: {}", request.asset_id));
    };

    let question = match (&request.question_id, &request.question) {
        (Some(id), _) => match state.bank.iter().find(|q| &q.question_id == id) {
            Some(q) => q.clone(),
            None => return error_reply(422, format!("unknown question_id: {id}")),
        },
        (None, Some(text)) if !text.trim().is_empty() => Question::new(
            "custom",
            text,
            &[FactKind::Species, FactKind::ExternalKnowledge],
        ),
        _ => return error_reply(422, "provide question_id or question"),
    };

    let retriever = match Retriever::new(
        &state.corpus,
        state.embedder.as_ref(),
        state.config.retrieval_params(),
    ) {
        Ok(r) => r,
        Err(e) => return error_reply(503, format!("retriever unavailable: {e}")),
    };
    match ask(observation, &question, &retriever, &TemplateComposer) {
        Ok(tuple) => json_reply(200, &tuple),
        Err(e) => error_reply(503, format!("answering failed: {e}")),
    }
}

fn handle_analyze(state: &ServiceState, body: &str) -> Reply {
    let request: AnalyzeRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return error_reply(422, format!("malformed request: {e}")),
    };
    let bytes = match decode_b64(&request.image_b64) {
        Ok(b) => b,
        Err(e) => return error_reply(422, e.to_string()),
    };
    let canvas = match imaging::decode_canvas(&bytes) {
        Ok(c) => c,
        Err(e) => return error_reply(422, format!("undecodable image: {e}")),
    };
    let asset = ImageAsset {
        asset_id: crate::ingest::sha256_hex(&bytes),
        path: String::new(),
        width: canvas.width,
        height: canvas.height,
        sidecar: None,
    };

    let detection = match detect_asset(
        state.detector.as_ref(),
        &asset,
        &bytes,
        &state.taxonomy,
        &state.config.detector,
        state.config.nms_iou_threshold,
    ) {
        Ok(d) => d,
        Err(e) => return endpoint_error_reply(e),
    };
    if detection.blank {
        return json_reply(
            200,
            &AnalyzeResponse {
                blank: true,
                observation: None,
            },
        );
    }

    let style = default_style(asset.width, asset.height);
    let annotated = match imaging::annotate_image(&asset.asset_id, &bytes, &detection.detections, &style) {
        Ok(a) => a,
        Err(e) => return error_reply(422, format!("annotation failed: {e}")),
    };
    let raw_text = match describe(state.vlm.as_ref(), &annotated, state.config.vlm_prompt()) {
        Ok(t) => t,
        Err(e) => return endpoint_error_reply(e),
    };
    let scene = parse_scene(&raw_text, &state.taxonomy);
    let observation = fuse(&asset.asset_id, &detection.detections, scene);

    {
        let store = state.store.lock().expect("store lock");
        if let Err(e) = store.append_observation(&observation) {
            return error_reply(503, format!("store write failed: {e}"));
        }
    }
    state
        .observations
        .lock()
        .expect("observations lock")
        .insert(observation.asset_id.clone(), observation.clone());

    json_reply(
        200,
        &AnalyzeResponse {
            blank: false,
            observation: Some(observation),
        },
    )
}

fn endpoint_error_reply(e: EndpointError) -> Reply {
    match e {
        EndpointError::Unreachable(_) | EndpointError::Timeout(_) => {
            error_reply(503, e.to_string())
        }
        other => error_reply(502, other.to_string()),
    }
}
