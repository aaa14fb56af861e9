//! Endpoint contracts and HTTP clients for the detector, the
//! vision-language model, the optional generator, and the optional remote
//! embedder.
//!
//! Wire protocols (all JSON over HTTP):
//! - detector: `POST {base}/v1/detect` `{"model", "image_b64"}` ->
//!   `{"detections": [{"class", "confidence", "bbox"}]}`
//! - VLM: `POST {base}/v1/describe` `{"image_b64", "prompt"}` -> `{"text"}`
//! - generator: `POST {base}/v1/generate` `{"prompt"}` -> `{"text"}`
//! - embedder: `POST {base}/v1/embed` `{"text"}` -> `{"vector"}`
//!
//! Any non-200 status or schema mismatch is a malformed-response error;
//! transport failures split into unreachable (retriable) and timeout
//! (retriable).

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trapline_core::annotate::AnnotatedImage;
use trapline_core::detect::{apply_confidence_threshold, nms, DetectionResult};
use trapline_core::domain::{validate_bbox, Detection, Taxonomy};
use trapline_core::rag::{EmbedError, Embedder, EmbeddingVector};

use crate::config::{DetectorConfig, EmbedderConfig, GeneratorConfig, VlmConfig};
use crate::ingest::ImageAsset;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum EndpointError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint timed out: {0}")]
    Timeout(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("endpoint returned empty text")]
    EmptyResponse,
}

impl EndpointError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EndpointError::Unreachable(_) | EndpointError::Timeout(_))
    }
}

/// Retry retriable endpoint errors with exponential backoff.
pub fn with_retries<T>(
    attempts: usize,
    base_delay: Duration,
    mut call: impl FnMut() -> Result<T, EndpointError>,
) -> Result<T, EndpointError> {
    let mut delay = base_delay;
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        match call() {
            Ok(value) => return Ok(value),
            Err(e) if e.is_retriable() && attempt + 1 < attempts => {
                std::thread::sleep(delay);
                delay *= 2;
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| EndpointError::Unreachable("no attempts made".into())))
}

/// Detection as carried on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub class: String,
    pub confidence: f64,
    pub bbox: [f64; 4],
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    model: &'a str,
    image_b64: String,
}

#[derive(Deserialize)]
struct DetectResponse {
    detections: Vec<WireDetection>,
}

#[derive(Serialize)]
struct DescribeRequest<'a> {
    image_b64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Produces raw wire detections for an asset.
pub trait DetectorBackend: Send + Sync {
    fn raw_detect(&self, asset_id: &str, image_png: &[u8]) -> Result<Vec<WireDetection>, EndpointError>;
}

/// Produces free text describing an annotated image.
pub trait VlmBackend: Send + Sync {
    fn raw_describe(&self, image: &AnnotatedImage, prompt: &str) -> Result<String, EndpointError>;
}

/// Produces free text from a prompt.
pub trait GeneratorBackend: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, EndpointError>;
}

fn encode_b64(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_b64(text: &str) -> Result<Vec<u8>, EndpointError> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| EndpointError::MalformedResponse(format!("invalid base64: {e}")))
}

fn classify_transport(err: ureq::Error) -> EndpointError {
    match err {
        ureq::Error::Status(code, _) => {
            EndpointError::MalformedResponse(format!("unexpected status {code}"))
        }
        ureq::Error::Transport(t) => {
            let text = t.to_string();
            if text.contains("timed out") || text.contains("timeout") {
                EndpointError::Timeout(text)
            } else {
                EndpointError::Unreachable(text)
            }
        }
    }
}

fn post_json<T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &impl Serialize,
) -> Result<T, EndpointError> {
    let response = agent
        .post(url)
        .send_json(serde_json::to_value(body).expect("request bodies serialize"))
        .map_err(classify_transport)?;
    response
        .into_json::<T>()
        .map_err(|e| EndpointError::MalformedResponse(e.to_string()))
}

fn agent_with_timeout(timeout_secs: u64) -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(timeout_secs.max(1)))
        .build()
}

pub struct HttpDetector {
    agent: ureq::Agent,
    base_url: String,
    model_name: String,
}

impl HttpDetector {
    pub fn new(base_url: &str, model_name: &str, timeout_secs: u64) -> Self {
        Self {
            agent: agent_with_timeout(timeout_secs),
            base_url: base_url.trim_end_matches('/').to_string(),
            model_name: model_name.to_string(),
        }
    }
}

impl DetectorBackend for HttpDetector {
    fn raw_detect(&self, _asset_id: &str, image_png: &[u8]) -> Result<Vec<WireDetection>, EndpointError> {
        let request = DetectRequest {
            model: &self.model_name,
            image_b64: encode_b64(image_png),
        };
        let response: DetectResponse =
            post_json(&self.agent, &format!("{}/v1/detect", self.base_url), &request)?;
        Ok(response.detections)
    }
}

pub struct HttpVlm {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpVlm {
    pub fn new(base_url: &str, timeout_secs: u64) -> Self {
        Self {
            agent: agent_with_timeout(timeout_secs),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

impl VlmBackend for HttpVlm {
    fn raw_describe(&self, image: &AnnotatedImage, prompt: &str) -> Result<String, EndpointError> {
        let request = DescribeRequest {
            image_b64: encode_b64(&image.png),
            prompt,
        };
        let response: TextResponse =
            post_json(&self.agent, &format!("{}/v1/describe", self.base_url), &request)?;
        Ok(response.text)
    }
}

pub struct HttpGenerator {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpGenerator {
    pub fn new(base_url: &str, timeout_secs: u64) -> Self {
        Self {
            agent: agent_with_timeout(timeout_secs),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

impl GeneratorBackend for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String, EndpointError> {
        let request = GenerateRequest { prompt };
        let response: TextResponse =
            post_json(&self.agent, &format!("{}/v1/generate", self.base_url), &request)?;
        if response.text.trim().is_empty() {
            return Err(EndpointError::EmptyResponse);
        }
        Ok(response.text)
    }
}

/// Remote embedding endpoint behind the core [`Embedder`] contract.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    base_url: String,
    dimension: usize,
    id: String,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, dimension: usize, timeout_secs: u64) -> Self {
        Self {
            agent: agent_with_timeout(timeout_secs),
            base_url: base_url.trim_end_matches('/').to_string(),
            dimension,
            id: format!("remote-{dimension}@{base_url}"),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let request = EmbedRequest { text };
        let response: EmbedResponse = post_json(
            &self.agent,
            &format!("{}/v1/embed", self.base_url),
            &request,
        )
        .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        if response.vector.len() != self.dimension {
            return Err(EmbedError::Unavailable(format!(
                "endpoint returned dimension {}, expected {}",
                response.vector.len(),
                self.dimension
            )));
        }
        EmbeddingVector::from_raw(response.vector)
    }
}

/// Validate and post-process raw wire detections: resolve labels against the
/// taxonomy, clamp boxes to the image, apply the confidence threshold, and
/// optionally suppress duplicates.
///
/// Detections from a conformant endpoint are accepted as-is after
/// thresholding; suppression only runs when `nms_iou` is set.
pub fn finalize_detections(
    raw: Vec<WireDetection>,
    asset: &ImageAsset,
    taxonomy: &Taxonomy,
    confidence_threshold: f64,
    nms_iou: Option<f64>,
) -> Result<Vec<Detection>, EndpointError> {
    let mut detections = Vec::with_capacity(raw.len());
    for wire in raw {
        if !(0.0..=1.0).contains(&wire.confidence) {
            return Err(EndpointError::MalformedResponse(format!(
                "confidence {} outside [0, 1]",
                wire.confidence
            )));
        }
        let class = taxonomy.lookup(&wire.class).map_err(|e| {
            EndpointError::MalformedResponse(format!("unknown detection class: {e}"))
        })?;
        let bbox = validate_bbox(
            wire.bbox.into(),
            asset.width as f64,
            asset.height as f64,
        )
        .map_err(|e| EndpointError::MalformedResponse(format!("invalid bbox: {e}")))?;
        detections.push(Detection::new(class.clone(), wire.confidence, bbox));
    }
    let mut detections = apply_confidence_threshold(detections, confidence_threshold);
    if let Some(threshold) = nms_iou {
        detections = nms(&detections, threshold);
    }
    Ok(detections)
}

/// Run one asset through a detector backend, with timing and the blank flag.
pub fn detect_asset(
    backend: &dyn DetectorBackend,
    asset: &ImageAsset,
    image_png: &[u8],
    taxonomy: &Taxonomy,
    detector: &DetectorConfig,
    nms_iou: Option<f64>,
) -> Result<DetectionResult, EndpointError> {
    let start = std::time::Instant::now();
    let raw = backend.raw_detect(&asset.asset_id, image_png)?;
    let latency_ms = start.elapsed().as_millis() as u64;
    let detections = finalize_detections(
        raw,
        asset,
        taxonomy,
        detector.confidence_threshold,
        nms_iou,
    )?;
    Ok(DetectionResult::new(
        asset.asset_id.clone(),
        detections,
        latency_ms,
    ))
}

/// Call the VLM and return its text verbatim, trailing whitespace trimmed.
pub fn describe(
    backend: &dyn VlmBackend,
    image: &AnnotatedImage,
    prompt: &str,
) -> Result<String, EndpointError> {
    let text = backend.raw_describe(image, prompt)?;
    let trimmed = text.trim_end().to_string();
    if trimmed.is_empty() {
        return Err(EndpointError::EmptyResponse);
    }
    Ok(trimmed)
}

pub fn build_detector(config: &DetectorConfig) -> Option<Box<dyn DetectorBackend>> {
    match config.mode {
        crate::config::EndpointMode::Http => config
            .base_url
            .as_deref()
            .map(|url| Box::new(HttpDetector::new(url, &config.model_name, config.timeout_secs)) as _),
        crate::config::EndpointMode::Mock => None,
    }
}

pub fn build_vlm(config: &VlmConfig) -> Option<Box<dyn VlmBackend>> {
    match config.mode {
        crate::config::EndpointMode::Http => config
            .base_url
            .as_deref()
            .map(|url| Box::new(HttpVlm::new(url, config.timeout_secs)) as _),
        crate::config::EndpointMode::Mock => None,
    }
}

pub fn build_generator(config: &GeneratorConfig) -> Option<Box<dyn GeneratorBackend>> {
    match config.mode {
        crate::config::GeneratorMode::Http => config
            .base_url
            .as_deref()
            .map(|url| Box::new(HttpGenerator::new(url, config.timeout_secs)) as _),
        crate::config::GeneratorMode::Template => None,
    }
}

pub fn build_embedder(config: &EmbedderConfig) -> Box<dyn Embedder + Send + Sync> {
    match config.mode {
        crate::config::EmbedderMode::Http => match config.base_url.as_deref() {
            Some(url) => Box::new(HttpEmbedder::new(url, config.dimension, config.timeout_secs)),
            None => Box::new(trapline_core::rag::TrigramEmbedder::new(config.dimension)),
        },
        crate::config::EmbedderMode::Trigram => {
            Box::new(trapline_core::rag::TrigramEmbedder::new(config.dimension))
        }
    }
}

/// Remote generation endpoint wrapped as an answer composer; the tuple
/// shape around it is unchanged.
pub struct RemoteAnswerer<'a> {
    backend: &'a dyn GeneratorBackend,
}

impl<'a> RemoteAnswerer<'a> {
    pub fn new(backend: &'a dyn GeneratorBackend) -> Self {
        Self { backend }
    }
}

impl trapline_core::qa::Answerer for RemoteAnswerer<'_> {
    fn compose(
        &self,
        question: &trapline_core::qa::Question,
        facts: &trapline_core::qa::FactSheet,
        evidence: &trapline_core::rag::Retrieval,
    ) -> Result<String, trapline_core::qa::QaError> {
        let mut prompt = String::new();
        prompt.push_str("Answer the question using only the facts and passages below.\n");
        prompt.push_str(&format!("Question: {}\n", question.template));
        for (class, count) in &facts.species {
            prompt.push_str(&format!(
                "Fact: {} {} ({}) detected\n",
                count,
                class.common_name.to_lowercase(),
                class.scientific_name
            ));
        }
        for passage in &evidence.passages {
            prompt.push_str(&format!("Passage: {}\n", passage.passage.text));
        }
        self.backend
            .generate(&prompt)
            .map_err(|e| trapline_core::qa::QaError::AnswererUnavailable(e.to_string()))
    }
}
