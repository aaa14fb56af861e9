//! Asset discovery, ground-truth sidecars, and dataset manifests.
//!
//! Asset identity is the SHA-256 of the file bytes, so relocated files keep
//! their id. Manifests list assets in lexicographic relative-path order,
//! which makes scans reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trapline_core::domain::{validate_bbox, BoundingBox, Taxonomy, TaxonomyClass};
use trapline_core::metrics::LabeledBox;

use crate::imaging;

pub const GROUND_TRUTH_SUFFIX: &str = ".gt.json";
pub const SCENE_SCRIPT_SUFFIX: &str = ".scene.json";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("root {0} not found or not a directory")]
    RootNotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sidecar {path} violates the schema: {reason}")]
    SchemaViolation { path: PathBuf, reason: String },
    #[error("sidecar {path} names an unknown class {label:?}")]
    UnknownClass { path: PathBuf, label: String },
}

/// One discoverable image with optional ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageAsset {
    /// SHA-256 of the file bytes, hex.
    pub asset_id: String,
    /// Path relative to the manifest root.
    pub path: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
}

impl ImageAsset {
    pub fn absolute_path(&self, root: &Path) -> PathBuf {
        root.join(&self.path)
    }

    pub fn sidecar_path(&self, root: &Path) -> Option<PathBuf> {
        self.sidecar.as_ref().map(|s| root.join(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: String,
    pub created_at: String,
    pub assets: Vec<ImageAsset>,
}

impl DatasetManifest {
    pub fn asset_ids(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.asset_id.clone()).collect()
    }

    pub fn get(&self, asset_id: &str) -> Option<&ImageAsset> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    pub warnings: Vec<ScanWarning>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// Sidecars, scene scripts, and other JSON artifacts are expected non-image
// companions, not candidates for ingestion.
fn is_auxiliary_json(name: &str) -> bool {
    name.ends_with(".json")
}

/// Recursively discover every decodable image under `root`.
///
/// Unreadable or undecodable files become warnings, never errors. Sidecar
/// and other JSON files are skipped silently. The manifest is ordered by
/// relative path, so re-scanning an unchanged tree reproduces it.
pub fn scan_directory(root: &Path) -> Result<ScanOutcome, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::RootNotFound(root.to_path_buf()));
    }

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(false) {
        match entry {
            Ok(e) if e.file_type().is_file() => files.push(e.into_path()),
            Ok(_) => {}
            Err(err) => {
                return Err(IngestError::Io {
                    path: root.to_path_buf(),
                    source: err.into(),
                })
            }
        }
    }
    files.sort_by_key(|p| relative_string(p, root));

    let mut assets: Vec<ImageAsset> = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    let mut warnings = Vec::new();
    for path in files {
        let rel = relative_string(&path, root);
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if is_auxiliary_json(&name) {
            continue;
        }
        let extension = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_lowercase())
            .unwrap_or_default();
        if !IMAGE_EXTENSIONS.contains(&extension.as_str()) {
            warnings.push(ScanWarning {
                path: rel,
                reason: "not a supported image type".into(),
            });
            continue;
        }
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                warnings.push(ScanWarning {
                    path: rel,
                    reason: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        let (width, height) = match imaging::probe_dimensions(&path) {
            Ok(dims) => dims,
            Err(e) => {
                warnings.push(ScanWarning {
                    path: rel,
                    reason: format!("undecodable: {e}"),
                });
                continue;
            }
        };
        if width == 0 || height == 0 {
            warnings.push(ScanWarning {
                path: rel,
                reason: "zero-sized image".into(),
            });
            continue;
        }

        let asset_id = sha256_hex(&bytes);
        if !seen_ids.insert(asset_id.clone()) {
            // Manifests key assets by content hash, so byte-identical files
            // cannot both be listed.
            warnings.push(ScanWarning {
                path: rel,
                reason: "duplicate content of an earlier asset".into(),
            });
            continue;
        }

        let sidecar_path = path.with_file_name(format!(
            "{}{}",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or(""),
            GROUND_TRUTH_SUFFIX
        ));
        let sidecar = sidecar_path
            .exists()
            .then(|| relative_string(&sidecar_path, root));

        assets.push(ImageAsset {
            asset_id,
            path: rel,
            width,
            height,
            sidecar,
        });
    }

    Ok(ScanOutcome {
        manifest: DatasetManifest {
            root: root.display().to_string(),
            created_at: now_iso(),
            assets,
        },
        warnings,
    })
}

fn relative_string(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

pub(crate) fn now_iso() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let date = crate::config::today();
    let tod = secs % 86_400;
    format!(
        "{}T{:02}:{:02}:{:02}Z",
        date.format_iso(),
        tod / 3600,
        (tod % 3600) / 60,
        tod % 60
    )
}

/// Ground-truth sidecar schema:
/// `{"image": <relative path>, "objects": [{"class": <name>, "bbox": [x0,y0,x1,y1]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub image: String,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class: String,
    pub bbox: [f64; 4],
}

/// One resolved, validated annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: TaxonomyClass,
    pub bbox: BoundingBox,
}

impl Annotation {
    pub fn as_labeled_box(&self) -> LabeledBox {
        LabeledBox {
            class: self.class.scientific_name.clone(),
            bbox: self.bbox,
        }
    }
}

/// Load and validate a sidecar: every class must resolve through the
/// taxonomy and every box must be well-ordered with positive area.
pub fn load_ground_truth(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Annotation>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: GroundTruthFile =
        serde_json::from_str(&text).map_err(|e| IngestError::SchemaViolation {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;

    let mut annotations = Vec::with_capacity(file.objects.len());
    for (i, object) in file.objects.iter().enumerate() {
        let class = taxonomy
            .lookup(&object.class)
            .map_err(|_| IngestError::UnknownClass {
                path: path.to_path_buf(),
                label: object.class.clone(),
            })?
            .clone();
        let [x_min, y_min, x_max, y_max] = object.bbox;
        if !(x_min < x_max && y_min < y_max) || x_min < 0.0 || y_min < 0.0 {
            return Err(IngestError::SchemaViolation {
                path: path.to_path_buf(),
                reason: format!("object {i} has a degenerate or negative bbox"),
            });
        }
        annotations.push(Annotation {
            class,
            bbox: BoundingBox::new(x_min, y_min, x_max, y_max),
        });
    }
    Ok(annotations)
}

/// Clamp annotations into image bounds (after the schema check they can
/// still overhang the frame).
pub fn clamp_annotations(
    annotations: Vec<Annotation>,
    width: u32,
    height: u32,
) -> Vec<Annotation> {
    annotations
        .into_iter()
        .filter_map(|a| {
            validate_bbox(a.bbox, width as f64, height as f64)
                .ok()
                .map(|bbox| Annotation { bbox, ..a })
        })
        .collect()
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), IngestError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n").map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IngestError::SchemaViolation {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
