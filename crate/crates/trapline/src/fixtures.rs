//! Deterministic synthetic fixtures: images, ground-truth sidecars, and
//! scene scripts. Everything derives from a seed, so fixture trees are
//! byte-identical across runs and platforms.

use std::path::{Path, PathBuf};

use trapline_core::annotate::{Rgb, RgbCanvas};
use trapline_core::domain::BoundingBox;
use trapline_core::rng::{fnv1a64, SplitMix64};

use crate::imaging::encode_png;
use crate::ingest::{GroundTruthFile, GroundTruthObject};
use crate::mocks::{SceneScript, ScriptSpecies};

pub const IMAGE_WIDTH: u32 = 160;
pub const IMAGE_HEIGHT: u32 = 90;

/// Classes used by the hybrid-contrast fixture.
pub const CONTRAST_CLASSES: [&str; 6] = [
    "Equus quagga",
    "Connochaetes taurinus",
    "Rhinocerotidae",
    "Panthera leo",
    "Loxodonta africana",
    "Crocuta crocuta",
];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("fixture imaging error: {0}")]
    Imaging(#[from] crate::imaging::ImagingError),
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FixtureError> {
    std::fs::write(path, bytes).map_err(|source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Evenly spaced object boxes along the frame.
pub fn object_boxes(count: usize) -> Vec<BoundingBox> {
    (0..count)
        .map(|i| {
            let x = 6.0 + i as f64 * 25.0;
            BoundingBox::new(x, 30.0, x + 20.0, 62.0)
        })
        .collect()
}

/// Seeded gradient background with filled rectangles where objects sit.
pub fn synth_image(seed: u64, boxes: &[BoundingBox]) -> RgbCanvas {
    let mut rng = SplitMix64::new(seed);
    let base = Rgb(
        (40 + rng.next_below(60)) as u8,
        (60 + rng.next_below(80)) as u8,
        (30 + rng.next_below(50)) as u8,
    );
    let mut canvas = RgbCanvas::new(IMAGE_WIDTH, IMAGE_HEIGHT, base);
    for y in 0..IMAGE_HEIGHT as i64 {
        let shade = (y * 40 / IMAGE_HEIGHT as i64) as u8;
        canvas.fill_rect(
            0,
            y,
            IMAGE_WIDTH as i64,
            1,
            Rgb(
                base.0.saturating_add(shade),
                base.1.saturating_add(shade / 2),
                base.2,
            ),
        );
    }
    for bbox in boxes {
        let body = Rgb(
            (90 + rng.next_below(120)) as u8,
            (70 + rng.next_below(100)) as u8,
            (50 + rng.next_below(90)) as u8,
        );
        canvas.fill_rect(
            bbox.x_min as i64,
            bbox.y_min as i64,
            bbox.width() as i64,
            bbox.height() as i64,
            body,
        );
    }
    canvas
}

/// Specification of one fixture asset.
#[derive(Clone, Debug)]
pub struct FixtureAsset {
    pub name: String,
    /// `(scientific name, count)` per species present.
    pub species: Vec<(String, u32)>,
    pub habitat: Vec<String>,
    pub time_of_day: Option<String>,
    pub stamp: Option<String>,
}

impl FixtureAsset {
    pub fn new(name: &str, species: &[(&str, u32)]) -> Self {
        Self {
            name: name.to_string(),
            species: species
                .iter()
                .map(|(s, c)| (s.to_string(), *c))
                .collect(),
            habitat: Vec::new(),
            time_of_day: Some("day".to_string()),
            stamp: None,
        }
    }

    pub fn with_habitat(mut self, habitat: &[&str]) -> Self {
        self.habitat = habitat.iter().map(|h| h.to_string()).collect();
        self
    }

    pub fn at_night(mut self) -> Self {
        self.time_of_day = Some("night".to_string());
        self
    }

    pub fn with_stamp(mut self, stamp: &str) -> Self {
        self.stamp = Some(stamp.to_string());
        self
    }
}

/// Write one asset: PNG image, ground-truth sidecar, and scene script.
pub fn write_asset(root: &Path, asset: &FixtureAsset, seed: u64) -> Result<(), FixtureError> {
    let total: u32 = asset.species.iter().map(|(_, c)| c).sum();
    let boxes = object_boxes(total as usize);
    let image_seed = seed ^ fnv1a64(asset.name.as_bytes());
    let canvas = synth_image(image_seed, &boxes);
    let png = encode_png(&canvas)?;
    write_file(&root.join(format!("{}.png", asset.name)), &png)?;

    let mut objects = Vec::new();
    let mut cursor = 0usize;
    for (species, count) in &asset.species {
        for _ in 0..*count {
            objects.push(GroundTruthObject {
                class: species.clone(),
                bbox: boxes[cursor].into(),
            });
            cursor += 1;
        }
    }
    let gt = GroundTruthFile {
        image: format!("{}.png", asset.name),
        objects,
    };
    write_file(
        &root.join(format!("{}.gt.json", asset.name)),
        serde_json::to_string_pretty(&gt).expect("gt serializes").as_bytes(),
    )?;

    let script = SceneScript {
        species: asset
            .species
            .iter()
            .map(|(name, count)| ScriptSpecies {
                name: name.clone(),
                count: *count,
            })
            .collect(),
        time_of_day: asset.time_of_day.clone(),
        habitat: asset.habitat.clone(),
        stamp: asset.stamp.clone(),
    };
    write_file(
        &root.join(format!("{}.scene.json", asset.name)),
        serde_json::to_string_pretty(&script)
            .expect("script serializes")
            .as_bytes(),
    )?;
    Ok(())
}

/// Ten-image demo set: nine species plus one multi-species herd frame; the
/// zebra frame carries an embedded camera stamp.
pub fn demo_assets() -> Vec<FixtureAsset> {
    vec![
        FixtureAsset::new("img00-rhino", &[("Rhinocerotidae", 1)])
            .with_habitat(&["grass", "bush"]),
        FixtureAsset::new("img01-zebra", &[("Equus quagga", 1)])
            .with_habitat(&["trees", "grass"])
            .at_night()
            .with_stamp("SA08 25/05/2022 05:29:28 WED"),
        FixtureAsset::new(
            "img02-herd",
            &[("Connochaetes taurinus", 4), ("Equus quagga", 2)],
        )
        .with_habitat(&["grass"]),
        FixtureAsset::new("img03-lion", &[("Panthera leo", 1)]).with_habitat(&["grass", "rock"]),
        FixtureAsset::new("img04-elephant", &[("Loxodonta africana", 2)])
            .with_habitat(&["trees", "water"]),
        FixtureAsset::new("img05-pangolin", &[("Smutsia gigantea", 1)])
            .with_habitat(&["bush"])
            .at_night(),
        FixtureAsset::new("img06-hyena", &[("Crocuta crocuta", 1)])
            .with_habitat(&["grass"])
            .at_night(),
        FixtureAsset::new("img07-giraffe", &[("Giraffa camelopardalis", 1)])
            .with_habitat(&["trees"]),
        FixtureAsset::new("img08-buffalo", &[("Syncerus caffer", 3)])
            .with_habitat(&["water", "grass"]),
        FixtureAsset::new("img09-cheetah", &[("Acinonyx jubatus", 1)])
            .with_habitat(&["grass", "bush"]),
    ]
}

pub fn write_demo_fixture(root: &Path, seed: u64) -> Result<(), FixtureError> {
    std::fs::create_dir_all(root).map_err(|source| FixtureError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    for asset in demo_assets() {
        write_asset(root, &asset, seed)?;
    }
    Ok(())
}

/// A corpus where `blanks` of `total` frames contain nothing.
pub fn write_blank_mix_fixture(root: &Path, total: usize, blanks: usize, seed: u64) -> Result<(), FixtureError> {
    std::fs::create_dir_all(root).map_err(|source| FixtureError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let demo = demo_assets();
    for i in 0..total {
        let asset = if i < blanks {
            FixtureAsset::new(&format!("blank{i:02}"), &[]).with_habitat(&["grass"])
        } else {
            let mut template = demo[i % demo.len()].clone();
            template.name = format!("full{i:02}");
            template
        };
        write_asset(root, &asset, seed)?;
    }
    Ok(())
}

/// Per-class fixture for the with/without-label-reading contrast: every
/// image holds a single animal of one class.
pub fn write_contrast_fixture(root: &Path, per_class: usize, seed: u64) -> Result<(), FixtureError> {
    std::fs::create_dir_all(root).map_err(|source| FixtureError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    for (c, class) in CONTRAST_CLASSES.iter().enumerate() {
        for i in 0..per_class {
            let asset = FixtureAsset::new(&format!("cls{c}-img{i:02}"), &[(class, 1)])
                .with_habitat(&["grass"]);
            write_asset(root, &asset, seed)?;
        }
    }
    Ok(())
}

/// The knowledge corpus shipped with the crate.
pub fn fixture_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}
