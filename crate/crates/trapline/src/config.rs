//! Run configuration: endpoint wiring, thresholds, retrieval parameters,
//! and path layout. Loaded from a JSON file named on the command line or in
//! the `TRAPLINE_CONFIG` environment variable.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use trapline_core::domain::CalendarDate;
use trapline_core::rag::{ChunkParams, RetrievalParams};

pub const CONFIG_ENV_VAR: &str = "TRAPLINE_CONFIG";

/// Confidence threshold at the detector's F1-optimal operating point.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.422;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("no config file: pass --config or set {CONFIG_ENV_VAR}")]
    Missing,
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path} is not valid JSON: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointMode {
    Mock,
    Http,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorNoise {
    pub seed: u64,
    /// Box corners are jittered by up to this fraction of the box size.
    pub box_jitter: f64,
    /// Confidences are drawn uniformly from `[floor, 0.99]`.
    pub confidence_floor: f64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            seed: 0,
            box_jitter: 0.0,
            confidence_floor: 0.75,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: EndpointMode,
    pub base_url: Option<String>,
    pub model_name: String,
    pub timeout_secs: u64,
    pub confidence_threshold: f64,
    pub noise: Option<DetectorNoise>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: EndpointMode::Mock,
            base_url: None,
            model_name: "detector".to_string(),
            timeout_secs: 30,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            noise: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrErrorConfig {
    pub seed: u64,
    /// Per-subject probability that the species read is garbled.
    pub rate: f64,
}

impl Default for OcrErrorConfig {
    fn default() -> Self {
        Self { seed: 0, rate: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub mode: EndpointMode,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
    pub prompt: Option<String>,
    /// When set, the mock endpoint stops reading labels and garbles species
    /// identities at the configured seeded rate.
    pub ocr_error: Option<OcrErrorConfig>,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            mode: EndpointMode::Mock,
            base_url: None,
            timeout_secs: 30,
            prompt: None,
            ocr_error: None,
        }
    }
}

pub const DEFAULT_VLM_PROMPT: &str = "Read the labels on the bounding boxes and describe the \
species, how many of each are present, the time of day, habitat features, and any embedded \
metadata text.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    Template,
    Http,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            mode: GeneratorMode::Template,
            base_url: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderMode {
    Trigram,
    Http,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub mode: EmbedderMode,
    pub dimension: usize,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            mode: EmbedderMode::Trigram,
            dimension: trapline_core::rag::DEFAULT_EMBEDDING_DIMENSION,
            base_url: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        let p = ChunkParams::default();
        Self {
            chunk_size: p.chunk_size,
            overlap: p.overlap,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_docs: usize,
    pub k_passages: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let p = RetrievalParams::default();
        Self {
            max_docs: p.max_docs,
            k_passages: p.k_passages,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            stratified: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy_path: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// ISO date stamped into answers, Alpaca entries, and the report.
    /// Defaults to today; pin it for reproducible runs.
    #[serde(default)]
    pub run_date: Option<String>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub vlm: VlmConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub chunk: ChunkConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    /// Opt-in greedy suppression for backends that emit duplicates.
    #[serde(default)]
    pub nms_iou_threshold: Option<f64>,
    #[serde(default = "default_eval_iou")]
    pub eval_iou_threshold: f64,
    #[serde(default)]
    pub split: SplitConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_workers() -> usize {
    4
}

fn default_eval_iou() -> f64 {
    0.5
}

impl PipelineConfig {
    /// Minimal config over an input directory, mocks everywhere.
    pub fn mock_defaults(input_root: PathBuf, output_root: PathBuf) -> Self {
        Self {
            input_root,
            output_root,
            corpus_dir: None,
            taxonomy_path: None,
            seed: default_seed(),
            workers: default_workers(),
            run_date: None,
            detector: DetectorConfig::default(),
            vlm: VlmConfig::default(),
            generator: GeneratorConfig::default(),
            embedder: EmbedderConfig::default(),
            chunk: ChunkConfig::default(),
            retrieval: RetrievalConfig::default(),
            nms_iou_threshold: None,
            eval_iou_threshold: default_eval_iou(),
            split: SplitConfig::default(),
        }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams {
            max_docs: self.retrieval.max_docs,
            k_passages: self.retrieval.k_passages,
            chunk: ChunkParams {
                chunk_size: self.chunk.chunk_size,
                overlap: self.chunk.overlap,
            },
        }
    }

    pub fn vlm_prompt(&self) -> &str {
        self.vlm.prompt.as_deref().unwrap_or(DEFAULT_VLM_PROMPT)
    }

    /// The pinned run date, or today when unset.
    pub fn resolved_run_date(&self) -> Result<CalendarDate, ConfigError> {
        match &self.run_date {
            Some(text) => CalendarDate::parse_iso(text)
                .ok_or_else(|| ConfigError::Invalid(format!("run_date {text:?} is not ISO"))),
            None => Ok(today()),
        }
    }

    /// Every referenced path must exist before a run starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.input_root.exists() {
            return Err(ConfigError::Invalid(format!(
                "input_root {} does not exist",
                self.input_root.display()
            )));
        }
        if let Some(dir) = &self.corpus_dir {
            if !dir.exists() {
                return Err(ConfigError::Invalid(format!(
                    "corpus_dir {} does not exist",
                    dir.display()
                )));
            }
        }
        if let Some(path) = &self.taxonomy_path {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "taxonomy_path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.detector.mode == EndpointMode::Http && self.detector.base_url.is_none() {
            return Err(ConfigError::Invalid(
                "detector.mode is http but detector.base_url is unset".into(),
            ));
        }
        if self.vlm.mode == EndpointMode::Http && self.vlm.base_url.is_none() {
            return Err(ConfigError::Invalid(
                "vlm.mode is http but vlm.base_url is unset".into(),
            ));
        }
        if self.generator.mode == GeneratorMode::Http && self.generator.base_url.is_none() {
            return Err(ConfigError::Invalid(
                "generator.mode is http but generator.base_url is unset".into(),
            ));
        }
        if self.embedder.mode == EmbedderMode::Http && self.embedder.base_url.is_none() {
            return Err(ConfigError::Invalid(
                "embedder.mode is http but embedder.base_url is unset".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.detector.confidence_threshold) {
            return Err(ConfigError::Invalid(
                "detector.confidence_threshold must lie in [0, 1]".into(),
            ));
        }
        if self.chunk.overlap >= self.chunk.chunk_size {
            return Err(ConfigError::Invalid(
                "chunk.overlap must be smaller than chunk.chunk_size".into(),
            ));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.resolved_run_date()?;
        let ratios_sum = self.split.train + self.split.validation + self.split.test;
        if (ratios_sum - 1.0).abs() > trapline_core::split::RATIO_SUM_TOLERANCE {
            return Err(ConfigError::Invalid("split ratios must sum to 1".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: PipelineConfig =
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(config)
}

/// `--config` flag, falling back to `TRAPLINE_CONFIG`.
pub fn resolve_config(flag: Option<&Path>) -> Result<PipelineConfig, ConfigError> {
    let path = match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(CONFIG_ENV_VAR)
            .map(PathBuf::from)
            .ok_or(ConfigError::Missing)?,
    };
    load_config(&path)
}

/// Current UTC date from the system clock (proleptic Gregorian).
pub fn today() -> CalendarDate {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    civil_from_days((secs / 86_400) as i64)
}

// Days-since-epoch to calendar date, Gregorian.
fn civil_from_days(z: i64) -> CalendarDate {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if m <= 2 { y + 1 } else { y };
    CalendarDate::new(year as i32, m as u8, d as u8).expect("civil conversion is valid")
}
