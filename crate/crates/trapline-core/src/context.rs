//! Parse vision-language free text into structured scene context and fuse it
//! with detections into the per-image observation record.
//!
//! Species identity is detector-authoritative: scene reads never alter the
//! species counts, they only surface as discrepancies when they disagree.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{find_stamp, parse_capture_metadata, CaptureMetadata, Detection, Taxonomy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOfDay {
    Day,
    Night,
    Unknown,
}

/// Closed habitat vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HabitatTag {
    Trees,
    Grass,
    Bush,
    Water,
    Road,
    Rock,
    Structure,
}

impl HabitatTag {
    pub const ALL: [HabitatTag; 7] = [
        HabitatTag::Trees,
        HabitatTag::Grass,
        HabitatTag::Bush,
        HabitatTag::Water,
        HabitatTag::Road,
        HabitatTag::Rock,
        HabitatTag::Structure,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HabitatTag::Trees => "trees",
            HabitatTag::Grass => "grass",
            HabitatTag::Bush => "bush",
            HabitatTag::Water => "water",
            HabitatTag::Road => "road",
            HabitatTag::Rock => "rock",
            HabitatTag::Structure => "structure",
        }
    }

    pub fn parse(tag: &str) -> Option<HabitatTag> {
        Self::ALL.iter().copied().find(|t| t.name() == tag.trim().to_lowercase())
    }

    fn from_keyword(word: &str) -> Option<HabitatTag> {
        Some(match word {
            "tree" | "trees" | "wooded" | "woodland" | "woods" | "forest" | "forested" => {
                HabitatTag::Trees
            }
            "grass" | "grassy" | "grassland" | "grasslands" | "savanna" | "savannah"
            | "meadow" => HabitatTag::Grass,
            "bush" | "bushes" | "shrub" | "shrubs" | "scrub" | "thicket" => HabitatTag::Bush,
            "water" | "river" | "lake" | "pond" | "waterhole" | "stream" | "wetland" => {
                HabitatTag::Water
            }
            "road" | "roads" | "track" | "tracks" | "path" | "trail" => HabitatTag::Road,
            "rock" | "rocks" | "rocky" | "boulder" | "boulders" | "stone" | "stones" => {
                HabitatTag::Rock
            }
            "structure" | "structures" | "building" | "buildings" | "fence" | "fences"
            | "pole" | "poles" | "hut" => HabitatTag::Structure,
            _ => return None,
        })
    }
}

const NIGHT_WORDS: &[&str] = &["night", "dark", "darkness", "nighttime", "nocturnal"];
const DAY_WORDS: &[&str] = &["day", "daytime", "daylight", "morning", "afternoon", "noon", "sunny"];

/// One species mention recovered from free text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesRead {
    /// The mention as it appeared (lowercased).
    pub text: String,
    /// Taxonomy resolution, when the mention matched a class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scientific_name: Option<String>,
    pub count: u32,
}

/// Structured scene context recovered from a vision-language response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneContext {
    pub species_read: Vec<SpeciesRead>,
    pub time_of_day: TimeOfDay,
    pub habitat_features: Vec<HabitatTag>,
    /// Habitat descriptions outside the closed vocabulary (populated when a
    /// scene arrives as structured data rather than prose).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata_text: Option<String>,
    /// The full response, preserved byte-exactly.
    pub raw_text: String,
}

impl SceneContext {
    pub fn empty(raw_text: &str) -> Self {
        Self {
            species_read: Vec::new(),
            time_of_day: TimeOfDay::Unknown,
            habitat_features: Vec::new(),
            extra_tags: Vec::new(),
            metadata_text: None,
            raw_text: raw_text.to_string(),
        }
    }
}

fn number_word(token: &str) -> Option<u32> {
    Some(match token {
        "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "thirteen" => 13,
        "fourteen" => 14,
        "fifteen" => 15,
        "sixteen" => 16,
        "seventeen" => 17,
        "eighteen" => 18,
        "nineteen" => 19,
        "twenty" => 20,
        _ => return None,
    })
}

/// Cardinal words up to twenty, or any digit run.
fn parse_count(token: &str) -> Option<u32> {
    if token.chars().all(|c| c.is_ascii_digit()) && !token.is_empty() {
        return token.parse().ok();
    }
    number_word(token)
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn singular_forms(phrase: &str) -> Vec<String> {
    let mut forms = Vec::new();
    forms.push(phrase.to_string());
    if let Some(stripped) = phrase.strip_suffix("es") {
        forms.push(stripped.to_string());
    }
    if let Some(stripped) = phrase.strip_suffix('s') {
        forms.push(stripped.to_string());
    }
    forms
}

/// Rule-based scene parser: total, deterministic, never fails.
///
/// Species mentions are matched against the taxonomy (scientific names,
/// common names, and unambiguous trailing words), with counts taken from an
/// immediately preceding cardinal word or digit token (default 1; repeated
/// mentions keep the maximum). Day/night and habitat tags come from keyword
/// rules, and an embedded capture stamp is extracted when present.
pub fn parse_scene(raw: &str, taxonomy: &Taxonomy) -> SceneContext {
    let tokens = tokenize(raw);

    // Species mentions, longest window first so multi-word names win.
    let mut reads: Vec<SpeciesRead> = Vec::new();
    let mut i = 0usize;
    while i < tokens.len() {
        let mut matched = false;
        for window in (1..=3usize).rev() {
            if i + window > tokens.len() {
                continue;
            }
            let phrase = tokens[i..i + window].join(" ");
            let hit = singular_forms(&phrase)
                .into_iter()
                .find_map(|form| taxonomy.resolve_mention(&form).cloned());
            if let Some(class) = hit {
                let count = i
                    .checked_sub(1)
                    .and_then(|p| parse_count(&tokens[p]))
                    .unwrap_or(1);
                if let Some(existing) = reads
                    .iter_mut()
                    .find(|r| r.scientific_name.as_deref() == Some(&class.scientific_name))
                {
                    existing.count = existing.count.max(count);
                } else {
                    reads.push(SpeciesRead {
                        text: phrase,
                        scientific_name: Some(class.scientific_name.clone()),
                        count,
                    });
                }
                i += window;
                matched = true;
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }

    // Day/night by keyword; conflicting evidence stays unknown.
    let night = tokens.iter().any(|t| NIGHT_WORDS.contains(&t.as_str()));
    let day = tokens.iter().any(|t| DAY_WORDS.contains(&t.as_str()));
    let time_of_day = match (day, night) {
        (true, false) => TimeOfDay::Day,
        (false, true) => TimeOfDay::Night,
        _ => TimeOfDay::Unknown,
    };

    // Habitat tags in canonical vocabulary order.
    let mut habitat_features = Vec::new();
    for tag in HabitatTag::ALL {
        if tokens
            .iter()
            .any(|t| HabitatTag::from_keyword(t) == Some(tag))
        {
            habitat_features.push(tag);
        }
    }

    let metadata_text = find_stamp(raw).map(|(_, range)| raw[range].to_string());

    SceneContext {
        species_read: reads,
        time_of_day,
        habitat_features,
        extra_tags: Vec::new(),
        metadata_text,
        raw_text: raw.to_string(),
    }
}

/// Fused per-image record: detections plus parsed scene context plus capture
/// metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub asset_id: String,
    pub detections: Vec<Detection>,
    pub scene: SceneContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<CaptureMetadata>,
    /// Multiset of detection labels, keyed by scientific name. The detector
    /// is authoritative; scene reads never contribute here.
    pub species_counts: BTreeMap<String, u32>,
    /// Scene-read species absent from the detections, by scientific name.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discrepancies: Vec<String>,
}

impl ObservationRecord {
    /// Distinct detected classes in species-count (scientific name) order.
    pub fn detected_classes(&self) -> Vec<&crate::domain::TaxonomyClass> {
        let mut seen: Vec<&crate::domain::TaxonomyClass> = Vec::new();
        for name in self.species_counts.keys() {
            if let Some(det) = self
                .detections
                .iter()
                .find(|d| &d.class.scientific_name == name)
            {
                if !seen.iter().any(|c| c.scientific_name == *name) {
                    seen.push(&det.class);
                }
            }
        }
        seen
    }

    pub fn has_facts(&self) -> bool {
        !self.species_counts.is_empty()
            || self.scene.time_of_day != TimeOfDay::Unknown
            || !self.scene.habitat_features.is_empty()
            || self.capture.is_some()
    }
}

/// Integrate detections and scene context into an observation record.
///
/// Species counts come from detections only. Capture metadata is parsed from
/// the scene's extracted stamp when parseable. Scene species that the
/// detector did not report are recorded as discrepancies, never merged.
pub fn fuse(asset_id: &str, detections: &[Detection], scene: SceneContext) -> ObservationRecord {
    let mut species_counts: BTreeMap<String, u32> = BTreeMap::new();
    for det in detections {
        *species_counts
            .entry(det.class.scientific_name.clone())
            .or_insert(0) += 1;
    }

    let capture = scene
        .metadata_text
        .as_deref()
        .and_then(|text| parse_capture_metadata(text).ok());

    let mut discrepancies: Vec<String> = scene
        .species_read
        .iter()
        .filter_map(|r| r.scientific_name.clone())
        .filter(|name| !species_counts.contains_key(name))
        .collect();
    discrepancies.sort_unstable();
    discrepancies.dedup();

    ObservationRecord {
        asset_id: asset_id.to_string(),
        detections: detections.to_vec(),
        scene,
        capture,
        species_counts,
        discrepancies,
    }
}
