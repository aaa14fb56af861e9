//! Reporting: answer records become Alpaca-format entries with a canonical
//! JSON serialization, and entries render into a markdown stakeholder report.
//!
//! The canonical serialization is pinned so byte-level golden tests are
//! meaningful: key order `instruction, input, output, metadata{heading,
//! date}`, two-space indentation, UTF-8.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::context::ObservationRecord;
use crate::domain::{CalendarDate, Taxonomy};
use crate::qa::{AnswerRecord, FactKind, Question};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReportError {
    NoFacts,
    NoEntries,
    InvalidEntry(String),
    Parse(String),
}

impl fmt::Display for ReportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportError::NoFacts => write!(f, "observation has no populated facts"),
            ReportError::NoEntries => write!(f, "no entries to render"),
            ReportError::InvalidEntry(msg) => write!(f, "invalid entry: {msg}"),
            ReportError::Parse(msg) => write!(f, "entry list is not valid JSON: {msg}"),
        }
    }
}

impl core::error::Error for ReportError {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlpacaMetadata {
    pub heading: String,
    pub date: String,
}

/// Instruction/input/output record, the reporting atom.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlpacaEntry {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub metadata: AlpacaMetadata,
}

impl AlpacaEntry {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.instruction.is_empty() {
            return Err(ReportError::InvalidEntry("empty instruction".into()));
        }
        if self.output.is_empty() {
            return Err(ReportError::InvalidEntry("empty output".into()));
        }
        if CalendarDate::parse_iso(&self.metadata.date).is_none() {
            return Err(ReportError::InvalidEntry(format!(
                "metadata.date {:?} is not an ISO calendar date",
                self.metadata.date
            )));
        }
        Ok(())
    }
}

/// Canonical serialization of a single entry.
pub fn entry_to_canonical_json(entry: &AlpacaEntry) -> String {
    serde_json::to_string_pretty(entry).expect("alpaca entries always serialize")
}

/// Canonical serialization of an entry list (the `alpaca.json` format).
pub fn to_canonical_json(entries: &[AlpacaEntry]) -> String {
    serde_json::to_string_pretty(entries).expect("alpaca entries always serialize")
}

pub fn parse_entry(text: &str) -> Result<AlpacaEntry, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))
}

pub fn parse_entries(text: &str) -> Result<Vec<AlpacaEntry>, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))
}

/// Question kinds synthesized from an observation's populated facts.
const SYNTH_STATUS: &str = "status";
const SYNTH_WEIGHT: &str = "weight";
const SYNTH_ENVIRONMENT: &str = "environment";
const SYNTH_COUNT: &str = "count";

fn slug(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect()
}

/// Formulate report questions from the facts an observation actually has:
/// per-species status/weight questions, an environment question when scene
/// context exists, and a count question when anything was detected.
pub fn synthesize_questions(obs: &ObservationRecord) -> Result<Vec<Question>, ReportError> {
    if !obs.has_facts() {
        return Err(ReportError::NoFacts);
    }
    use FactKind::*;

    let mut questions = Vec::new();
    let has_scene = obs.scene.time_of_day != crate::context::TimeOfDay::Unknown
        || !obs.scene.habitat_features.is_empty();

    for class in obs.detected_classes() {
        let common = class.common_name.to_lowercase();
        let id_slug = slug(&class.scientific_name);
        questions.push(Question::new(
            &format!("{SYNTH_STATUS}:{id_slug}"),
            &format!("What is the IUCN conservation status of the {common}?"),
            &[Species, ExternalKnowledge],
        ));
        questions.push(Question::new(
            &format!("{SYNTH_WEIGHT}:{id_slug}"),
            &format!("What is the average weight of the {common}?"),
            &[Species, ExternalKnowledge],
        ));
        if has_scene {
            questions.push(Question::new(
                &format!("{SYNTH_ENVIRONMENT}:{id_slug}"),
                &format!(
                    "What are the environmental factors observed in the image with the {common}?"
                ),
                &[TimeOfDay, Habitat],
            ));
        }
    }
    if obs.species_counts.is_empty() && has_scene {
        questions.push(Question::new(
            SYNTH_ENVIRONMENT,
            "What are the environmental factors observed in the image?",
            &[TimeOfDay, Habitat],
        ));
    }
    if !obs.species_counts.is_empty() {
        questions.push(Question::new(
            SYNTH_COUNT,
            "What animals are in the image and how many are there of each animal species identified?",
            &[Species, Count],
        ));
    }
    Ok(questions)
}

/// Report topic for a question id.
fn topic_for(question_id: &str) -> &'static str {
    let base = question_id.split(':').next().unwrap_or(question_id);
    match base {
        "Q1" | SYNTH_STATUS => "Species Identification and Conservation Status",
        "Q2" | SYNTH_WEIGHT => "Species Information",
        "Q3" | SYNTH_ENVIRONMENT => "Environmental Factors",
        "Q4" => "Habitat Comparison",
        "Q5" => "Scene Composition",
        "Q6" | SYNTH_COUNT => "Species Count",
        "Q7" => "Behaviour Prediction",
        "Q8" => "Threat Assessment",
        "Q9" => "Ecosystem Role",
        "Q10" => "Predators and Threats",
        _ => "Observation Query",
    }
}

fn title_case(text: &str) -> String {
    text.split_whitespace()
        .map(|word| {
            let mut chars = word.chars();
            match chars.next() {
                Some(first) => {
                    let mut out: String = first.to_uppercase().collect();
                    out.extend(chars);
                    out
                }
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn heading_for(record: &AnswerRecord, taxonomy: &Taxonomy) -> String {
    let topic = topic_for(&record.question_id);
    let species = record
        .tuple
        .keywords
        .iter()
        .find_map(|kw| taxonomy.lookup(kw).ok())
        .map(|class| title_case(&class.common_name));
    match species {
        Some(name) => format!("{topic}: {name} Image"),
        None => format!("{topic}: Camera Trap Image"),
    }
}

/// Outcome of entry conversion; invalid records are skipped with a warning,
/// never silently dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToAlpacaOutcome {
    pub entries: Vec<AlpacaEntry>,
    pub warnings: Vec<String>,
}

/// Convert answer records into Alpaca entries dated to the run date.
pub fn to_alpaca(
    records: &[AnswerRecord],
    taxonomy: &Taxonomy,
    run_date: &CalendarDate,
) -> ToAlpacaOutcome {
    let mut entries = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    for record in records {
        if record.tuple.answer.is_empty() {
            warnings.push(format!(
                "skipping {}/{}: empty answer",
                record.asset_id, record.question_id
            ));
            continue;
        }
        let entry = AlpacaEntry {
            instruction: record.question_text.clone(),
            input: String::new(),
            output: record.tuple.answer.clone(),
            metadata: AlpacaMetadata {
                heading: heading_for(record, taxonomy),
                date: run_date.format_iso(),
            },
        };
        match entry.validate() {
            Ok(()) => entries.push(entry),
            Err(e) => warnings.push(format!(
                "skipping {}/{}: {e}",
                record.asset_id, record.question_id
            )),
        }
    }
    ToAlpacaOutcome { entries, warnings }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub heading: String,
    pub body: String,
    pub date: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub title: String,
    pub generated_on: String,
    pub sections: Vec<ReportSection>,
}

const REPORT_INTRODUCTION: &str = "This report summarises wildlife observations derived from \
camera trap images. Each section presents an automatically formulated question about an \
observation together with the system's answer.";

/// Render entries into a markdown report: title, generated-on line,
/// introduction, then one heading/body/date block per entry in input order.
pub fn render_report(
    entries: &[AlpacaEntry],
    title: &str,
) -> Result<(ReportDocument, String), ReportError> {
    if entries.is_empty() {
        return Err(ReportError::NoEntries);
    }
    let generated_on = entries[0].metadata.date.clone();

    let sections: Vec<ReportSection> = entries
        .iter()
        .map(|e| ReportSection {
            heading: e.metadata.heading.clone(),
            body: e.output.clone(),
            date: e.metadata.date.clone(),
        })
        .collect();

    let mut markdown = String::new();
    markdown.push_str(&format!("# {title}\n\n"));
    markdown.push_str(&format!("Generated on: {generated_on}\n\n"));
    markdown.push_str("## Introduction\n\n");
    markdown.push_str(REPORT_INTRODUCTION);
    markdown.push_str("\n\n");
    for section in &sections {
        markdown.push_str(&format!("## {}\n\n", section.heading));
        markdown.push_str(&section.body);
        markdown.push_str("\n\n");
        markdown.push_str(&format!("Date: {}\n\n", section.date));
    }

    Ok((
        ReportDocument {
            title: title.to_string(),
            generated_on,
            sections,
        },
        markdown,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{fuse, parse_scene, SceneContext};
    use crate::domain::{BoundingBox, Detection};
    use crate::qa::AnswerTuple;
    use alloc::vec;

    fn sample_entry() -> AlpacaEntry {
        AlpacaEntry {
            instruction: "What are the environmental factors observed in the image with the blue wildebeest?".into(),
            input: String::new(),
            output: "The environmental factors observed in the image include a grassy hill with some bushes and trees scattered around. There are no visible water sources in the image.".into(),
            metadata: AlpacaMetadata {
                heading: "Environmental Factors: Blue Wildebeest Image".into(),
                date: "2024-10-23".into(),
            },
        }
    }

    fn wildebeest_obs() -> ObservationRecord {
        let taxonomy = Taxonomy::builtin();
        let det = Detection::new(
            taxonomy.lookup("Blue wildebeest").unwrap().clone(),
            0.88,
            BoundingBox::new(0.0, 0.0, 20.0, 20.0),
        );
        let scene = parse_scene("a wildebeest on a grassy hill with bushes", &taxonomy);
        fuse("wb-asset", &[det], scene)
    }

    #[test]
    fn canonical_serialization_has_pinned_shape() {
        let json = entry_to_canonical_json(&sample_entry());
        let expected = "{\n  \"instruction\": \"What are the environmental factors observed in the image with the blue wildebeest?\",\n  \"input\": \"\",\n  \"output\": \"The environmental factors observed in the image include a grassy hill with some bushes and trees scattered around. There are no visible water sources in the image.\",\n  \"metadata\": {\n    \"heading\": \"Environmental Factors: Blue Wildebeest Image\",\n    \"date\": \"2024-10-23\"\n  }\n}";
        assert_eq!(json, expected);
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let entry = sample_entry();
        let json = entry_to_canonical_json(&entry);
        let parsed = parse_entry(&json).unwrap();
        assert_eq!(parsed, entry);
        assert_eq!(entry_to_canonical_json(&parsed), json);
    }

    #[test]
    fn synthesized_questions_cover_facts() {
        let obs = wildebeest_obs();
        let questions = synthesize_questions(&obs).unwrap();
        let texts: Vec<&str> = questions.iter().map(|q| q.template.as_str()).collect();
        assert!(texts.contains(
            &"What are the environmental factors observed in the image with the blue wildebeest?"
        ));
        assert!(texts
            .iter()
            .any(|t| t.contains("IUCN conservation status of the blue wildebeest")));
        assert!(texts.iter().any(|t| t.contains("average weight")));
        assert!(texts.iter().any(|t| t.contains("how many")));
    }

    #[test]
    fn synthesis_rejects_empty_observations() {
        let obs = fuse("empty", &[], SceneContext::empty("x"));
        assert_eq!(synthesize_questions(&obs), Err(ReportError::NoFacts));
    }

    #[test]
    fn synthesis_covers_every_species() {
        let taxonomy = Taxonomy::builtin();
        let dets = vec![
            Detection::new(
                taxonomy.lookup("Plains zebra").unwrap().clone(),
                0.9,
                BoundingBox::new(0.0, 0.0, 10.0, 10.0),
            ),
            Detection::new(
                taxonomy.lookup("African Lion").unwrap().clone(),
                0.8,
                BoundingBox::new(20.0, 0.0, 30.0, 10.0),
            ),
        ];
        let obs = fuse("two-species", &dets, SceneContext::empty(""));
        let questions = synthesize_questions(&obs).unwrap();
        for species in ["plains zebra", "african lion"] {
            assert!(
                questions.iter().any(|q| q.template.contains(species)),
                "no question mentions {species}"
            );
        }
    }

    fn record(question_id: &str, question_text: &str, answer: &str, keywords: &[&str]) -> AnswerRecord {
        AnswerRecord {
            asset_id: "asset-1".into(),
            question_id: question_id.into(),
            question_text: question_text.into(),
            tuple: AnswerTuple {
                answer: answer.into(),
                keywords: keywords.iter().map(|k| k.to_string()).collect(),
                passages: Vec::new(),
            },
            answered_at: "2024-10-23T00:00:00Z".into(),
        }
    }

    #[test]
    fn to_alpaca_builds_headed_entries() {
        let taxonomy = Taxonomy::builtin();
        let run_date = CalendarDate::new(2024, 10, 23).unwrap();
        let records = vec![record(
            "environment:connochaetes-taurinus",
            "What are the environmental factors observed in the image with the blue wildebeest?",
            "The environmental factors observed in the image include grass and trees.",
            &["blue wildebeest", "connochaetes taurinus"],
        )];
        let outcome = to_alpaca(&records, &taxonomy, &run_date);
        assert!(outcome.warnings.is_empty());
        assert_eq!(outcome.entries.len(), 1);
        let entry = &outcome.entries[0];
        assert_eq!(
            entry.metadata.heading,
            "Environmental Factors: Blue Wildebeest Image"
        );
        assert_eq!(entry.metadata.date, "2024-10-23");
        assert_eq!(entry.input, "");
    }

    #[test]
    fn to_alpaca_skips_empty_answers_with_warning() {
        let taxonomy = Taxonomy::builtin();
        let run_date = CalendarDate::new(2024, 10, 23).unwrap();
        let records = vec![
            record("Q1", "Question?", "", &[]),
            record("Q6", "Count?", "The image contains one plains zebra.", &["plains zebra"]),
        ];
        let outcome = to_alpaca(&records, &taxonomy, &run_date);
        assert_eq!(outcome.entries.len(), 1);
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("empty answer"));
    }

    #[test]
    fn to_alpaca_preserves_order() {
        let taxonomy = Taxonomy::builtin();
        let run_date = CalendarDate::new(2024, 10, 23).unwrap();
        let records = vec![
            record("Q1", "First?", "Answer one.", &[]),
            record("Q2", "Second?", "Answer two.", &[]),
            record("Q3", "Third?", "Answer three.", &[]),
        ];
        let outcome = to_alpaca(&records, &taxonomy, &run_date);
        assert_eq!(outcome.entries.len(), 3);
        assert_eq!(outcome.entries[0].instruction, "First?");
        assert_eq!(outcome.entries[2].instruction, "Third?");
    }

    #[test]
    fn report_rendering_is_structured_and_deterministic() {
        let entries = vec![
            AlpacaEntry {
                instruction: "Status?".into(),
                input: String::new(),
                output: "The rhinoceros is Near Threatened.".into(),
                metadata: AlpacaMetadata {
                    heading: "Species Identification and Conservation Status: Rhinoceros Image"
                        .into(),
                    date: "2024-10-23".into(),
                },
            },
            sample_entry(),
        ];
        let (doc, markdown) = render_report(&entries, "Wildlife Species Report").unwrap();
        assert_eq!(doc.sections.len(), 2);
        assert_eq!(doc.generated_on, "2024-10-23");
        assert!(markdown.starts_with("# Wildlife Species Report\n\nGenerated on: 2024-10-23\n"));
        assert!(markdown.contains("## Introduction"));
        assert!(markdown.contains(
            "## Species Identification and Conservation Status: Rhinoceros Image"
        ));
        assert!(markdown.contains("Date: 2024-10-23"));
        let second = render_report(&entries, "Wildlife Species Report").unwrap().1;
        assert_eq!(markdown, second);
        // Section order mirrors entry order.
        let first_idx = markdown.find("Rhinoceros Image").unwrap();
        let second_idx = markdown.find("Blue Wildebeest Image").unwrap();
        assert!(first_idx < second_idx);
    }

    #[test]
    fn render_report_rejects_empty_input() {
        assert_eq!(
            render_report(&[], "t"),
            Err(ReportError::NoEntries)
        );
    }

    #[test]
    fn entry_list_round_trips() {
        let entries = vec![sample_entry(), sample_entry()];
        let json = to_canonical_json(&entries);
        let parsed = parse_entries(&json).unwrap();
        assert_eq!(parsed, entries);
        assert_eq!(to_canonical_json(&parsed), json);
    }

    #[test]
    fn invalid_dates_fail_validation() {
        let mut entry = sample_entry();
        entry.metadata.date = "23/10/2024".into();
        assert!(entry.validate().is_err());
    }
}
