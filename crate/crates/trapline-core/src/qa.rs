//! Visual question answering: combine observation records with retrieved
//! passages into transparent answer tuples, and score free-text answers by
//! greedy token matching.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::context::{ObservationRecord, TimeOfDay};
use crate::domain::{CaptureMetadata, TaxonomyClass};
use crate::rag::{
    extract_keywords, Embedder, RagError, Retrieval, RetrievalOutcome, Retriever, ScoredPassage,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QaError {
    EmptyText,
    AnswererUnavailable(String),
    Rag(RagError),
}

impl fmt::Display for QaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QaError::EmptyText => write!(f, "text tokenizes to zero tokens"),
            QaError::AnswererUnavailable(msg) => write!(f, "answerer unavailable: {msg}"),
            QaError::Rag(e) => write!(f, "retrieval failed: {e}"),
        }
    }
}

impl core::error::Error for QaError {}

impl From<RagError> for QaError {
    fn from(e: RagError) -> Self {
        QaError::Rag(e)
    }
}

/// Kinds of facts a question draws on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactKind {
    Species,
    Count,
    TimeOfDay,
    Habitat,
    ExternalKnowledge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub template: String,
    pub required_facts: Vec<FactKind>,
}

impl Question {
    pub fn new(id: &str, template: &str, facts: &[FactKind]) -> Self {
        Self {
            question_id: id.to_string(),
            template: template.to_string(),
            required_facts: facts.to_vec(),
        }
    }

    pub fn needs(&self, kind: FactKind) -> bool {
        self.required_facts.contains(&kind)
    }
}

/// The ten built-in evaluation questions.
pub fn question_bank() -> Vec<Question> {
    use FactKind::*;
    alloc::vec![
        Question::new(
            "Q1",
            "Read the label on the binding box to identify the animal. What is the species identified in the image, and what is its IUCN conservation status?",
            &[Species, ExternalKnowledge],
        ),
        Question::new(
            "Q2",
            "Read the label on the binding box to identify the animal. What is the average weight of the species identified, and does this species have any notable characteristics or behaviours?",
            &[Species, ExternalKnowledge],
        ),
        Question::new(
            "Q3",
            "Was the image taken during the day or night, and what environmental factors can be observed (e.g., forest, bush, water sources)?",
            &[TimeOfDay, Habitat],
        ),
        Question::new(
            "Q4",
            "Read the label on the binding box to identify the animal. How does the species identified in the image compare to other species in the same habitat in terms of size, behaviour, and diet?",
            &[Species, ExternalKnowledge],
        ),
        Question::new(
            "Q5",
            "Read the label on the binding box to identify animals. Can you identify other animals or objects in the image, such as nearby trees, water bodies, or structures?",
            &[Species, Habitat],
        ),
        Question::new(
            "Q6",
            "Read the labels on the binding boxes to identify animals. What animals are in the image and how many are there of each animal species identified?",
            &[Species, Count],
        ),
        Question::new(
            "Q7",
            "Based on the species and its habits, what predictions can be made about its activity at the time the camera trap image was taken (e.g., hunting, foraging, resting)?",
            &[Species, TimeOfDay, ExternalKnowledge],
        ),
        Question::new(
            "Q8",
            "Read the label on the binding box around the animal to determine the species. What potential threats, either natural or human-induced, are most relevant to the species in the image, given its current IUCN status and environment?",
            &[Species, ExternalKnowledge],
        ),
        Question::new(
            "Q9",
            "Read the label on the binding box around the animal to determine the species. What is the species role in the ecosystem, and how does its presence affect other species or the environment in the area where the image was captured?",
            &[Species, ExternalKnowledge],
        ),
        Question::new(
            "Q10",
            "Read the label on the binding box around the animal to determine the species. What are the known predators or threats to the species in the image, and are there any visible indicators in the environment that suggest the presence of these threats?",
            &[Species, ExternalKnowledge],
        ),
    ]
}

/// The transparency unit: answer text plus exactly the keywords used for
/// retrieval and the passages retrieval returned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerTuple {
    pub answer: String,
    pub keywords: Vec<String>,
    pub passages: Vec<ScoredPassage>,
}

/// Persisted Q&A record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub asset_id: String,
    pub question_id: String,
    pub question_text: String,
    pub tuple: AnswerTuple,
    pub answered_at: String,
}

/// Facts distilled from an observation for answer composition.
#[derive(Clone, Debug, PartialEq)]
pub struct FactSheet {
    /// Distinct detected classes with their counts, in scientific-name order.
    pub species: Vec<(TaxonomyClass, u32)>,
    pub time_of_day: TimeOfDay,
    pub habitat: Vec<crate::context::HabitatTag>,
    pub capture: Option<CaptureMetadata>,
}

impl FactSheet {
    pub fn from_observation(obs: &ObservationRecord) -> Self {
        let species = obs
            .detected_classes()
            .into_iter()
            .map(|class| {
                let count = obs
                    .species_counts
                    .get(&class.scientific_name)
                    .copied()
                    .unwrap_or(0);
                (class.clone(), count)
            })
            .collect();
        Self {
            species,
            time_of_day: obs.scene.time_of_day,
            habitat: obs.scene.habitat_features.clone(),
            capture: obs.capture.clone(),
        }
    }
}

/// Turns a question, a fact sheet, and retrieved evidence into answer text.
/// The tuple shape around it never changes.
pub trait Answerer {
    fn compose(
        &self,
        question: &Question,
        facts: &FactSheet,
        evidence: &Retrieval,
    ) -> Result<String, QaError>;
}

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

pub fn count_word(n: u32) -> String {
    NUMBER_WORDS
        .get(n as usize)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

fn pluralize(word: &str) -> String {
    let lower = word.to_lowercase();
    if lower.ends_with('s')
        || lower.ends_with('x')
        || lower.ends_with("ch")
        || lower.ends_with("sh")
    {
        format!("{lower}es")
    } else {
        format!("{lower}s")
    }
}

fn join_phrases(phrases: &[String]) -> String {
    match phrases.len() {
        0 => String::new(),
        1 => phrases[0].clone(),
        2 => format!("{} and {}", phrases[0], phrases[1]),
        _ => format!(
            "{}, and {}",
            phrases[..phrases.len() - 1].join(", "),
            phrases[phrases.len() - 1]
        ),
    }
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            let trimmed = current.trim();
            if !trimmed.is_empty() {
                sentences.push(trimmed.to_string());
            }
            current.clear();
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(trimmed.to_string());
    }
    sentences
}

/// Deterministic template composer: states the facts the question asks for,
/// then cites sentences from the highest-ranked passage.
pub struct TemplateComposer;

impl TemplateComposer {
    fn species_sentence(facts: &FactSheet) -> String {
        if facts.species.is_empty() {
            return "No species could be identified in the image.".to_string();
        }
        let names: Vec<String> = facts
            .species
            .iter()
            .map(|(class, _)| {
                format!(
                    "{} ({})",
                    class.common_name.to_lowercase(),
                    class.scientific_name
                )
            })
            .collect();
        if names.len() == 1 {
            format!("The species identified in the image is the {}.", names[0])
        } else {
            format!(
                "The species identified in the image are the {}.",
                join_phrases(&names)
            )
        }
    }

    fn count_sentence(facts: &FactSheet) -> String {
        if facts.species.is_empty() {
            return "The image contains no detected animals.".to_string();
        }
        let parts: Vec<String> = facts
            .species
            .iter()
            .map(|(class, count)| {
                if *count == 1 {
                    format!("one {}", class.common_name.to_lowercase())
                } else {
                    format!("{} {}", count_word(*count), pluralize(&class.common_name))
                }
            })
            .collect();
        format!("The image contains {}.", join_phrases(&parts))
    }

    fn time_sentence(facts: &FactSheet) -> String {
        match facts.time_of_day {
            TimeOfDay::Day => "The image was taken during the day.".to_string(),
            TimeOfDay::Night => "The image was taken at night.".to_string(),
            TimeOfDay::Unknown => {
                "The time of day could not be determined from the image.".to_string()
            }
        }
    }

    fn habitat_sentence(facts: &FactSheet) -> String {
        if facts.habitat.is_empty() {
            "No distinctive environmental features were observed.".to_string()
        } else {
            let tags: Vec<String> = facts.habitat.iter().map(|t| t.name().to_string()).collect();
            format!(
                "Observed environmental features include {}.",
                join_phrases(&tags)
            )
        }
    }

    fn evidence_sentence(question: &Question, evidence: &Retrieval) -> String {
        if evidence.outcome == RetrievalOutcome::NoEvidence || evidence.passages.is_empty() {
            return "No external evidence was found in the knowledge corpus.".to_string();
        }
        let top = &evidence.passages[0];
        let content_words = crate::rag::question_content_words(&question.template);
        let sentences = split_sentences(&top.passage.text);
        let mut selected: Vec<String> = sentences
            .iter()
            .filter(|s| {
                let lower = s.to_lowercase();
                content_words.iter().any(|w| lower.contains(w.as_str()))
            })
            .take(2)
            .cloned()
            .collect();
        if selected.is_empty() {
            if let Some(first) = sentences.first() {
                selected.push(first.clone());
            }
        }
        format!(
            "According to the retrieved passages: {}",
            selected.join(" ")
        )
    }
}

impl Answerer for TemplateComposer {
    fn compose(
        &self,
        question: &Question,
        facts: &FactSheet,
        evidence: &Retrieval,
    ) -> Result<String, QaError> {
        let mut parts: Vec<String> = Vec::new();
        if question.needs(FactKind::Species) {
            parts.push(Self::species_sentence(facts));
        }
        if question.needs(FactKind::Count) {
            parts.push(Self::count_sentence(facts));
        }
        if question.needs(FactKind::TimeOfDay) {
            parts.push(Self::time_sentence(facts));
        }
        if question.needs(FactKind::Habitat) {
            parts.push(Self::habitat_sentence(facts));
        }
        if question.needs(FactKind::ExternalKnowledge) {
            parts.push(Self::evidence_sentence(question, evidence));
        }
        if parts.is_empty() {
            parts.push(Self::evidence_sentence(question, evidence));
        }
        Ok(parts.join(" "))
    }
}

/// Answer one question about one observation.
///
/// Keywords always come from `extract_keywords`; retrieval runs only for
/// questions that need external knowledge. An empty or unmatched corpus
/// yields a no-evidence answer rather than an error, so a run without a
/// knowledge base still completes.
pub fn ask(
    obs: &ObservationRecord,
    question: &Question,
    retriever: &Retriever<'_>,
    answerer: &dyn Answerer,
) -> Result<AnswerTuple, QaError> {
    let keywords = extract_keywords(obs, &question.template);
    let evidence = if question.needs(FactKind::ExternalKnowledge) {
        match retriever.retrieve(&keywords) {
            Ok(r) => r,
            Err(RagError::EmptyCorpus) => Retrieval::no_evidence(),
            Err(e) => return Err(e.into()),
        }
    } else {
        Retrieval::no_evidence()
    };

    let facts = FactSheet::from_observation(obs);
    let answer = answerer.compose(question, &facts, &evidence)?;
    Ok(AnswerTuple {
        answer,
        keywords,
        passages: evidence.passages,
    })
}

/// Lowercase alphanumeric tokens; the tokenization rule for scoring.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Token-level greedy-matching similarity between a candidate and a
/// reference answer.
///
/// Precision is the mean over candidate tokens of the maximum cosine to any
/// reference token; recall swaps the roles; F1 is their harmonic mean.
pub fn score_answer(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<ScoreBreakdown, QaError> {
    let cand_tokens = tokenize(candidate);
    let ref_tokens = tokenize(reference);
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        return Err(QaError::EmptyText);
    }

    let embed_all = |tokens: &[String]| -> Result<Vec<crate::rag::EmbeddingVector>, QaError> {
        tokens
            .iter()
            .map(|t| embedder.embed(t).map_err(|e| QaError::Rag(e.into())))
            .collect()
    };
    let cand_vecs = embed_all(&cand_tokens)?;
    let ref_vecs = embed_all(&ref_tokens)?;

    let greedy = |from: &[crate::rag::EmbeddingVector], to: &[crate::rag::EmbeddingVector]| {
        let mut total = 0.0;
        for v in from {
            let mut best = f64::NEG_INFINITY;
            for w in to {
                let sim = v.cosine(w);
                if sim > best {
                    best = sim;
                }
            }
            total += best;
        }
        total / from.len() as f64
    };

    let precision = greedy(&cand_vecs, &ref_vecs);
    let recall = greedy(&ref_vecs, &cand_vecs);
    Ok(ScoreBreakdown {
        precision,
        recall,
        f1: crate::metrics::harmonic_mean(precision, recall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{fuse, parse_scene, SceneContext};
    use crate::domain::{BoundingBox, Detection, Taxonomy};
    use crate::rag::{Corpus, Document, EmbedError, EmbeddingVector, RetrievalParams, TrigramEmbedder};
    use alloc::vec;

    fn corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document {
                doc_id: "rhino".into(),
                title: "Rhinoceros".into(),
                body: "The rhinoceros (family Rhinocerotidae) is a large herbivore. \
                       The IUCN lists a conservation status of Near Threatened for the white rhinoceros. \
                       Adults can weigh over two tonnes."
                    .into(),
                source_url: None,
            },
            Document {
                doc_id: "zebra".into(),
                title: "Plains zebra".into(),
                body: "The plains zebra (Equus quagga) grazes on short grasses. \
                       Its IUCN conservation status is Near Threatened. \
                       An adult weighs around 350 kg."
                    .into(),
                source_url: None,
            },
        ])
        .unwrap()
    }

    fn rhino_obs(count: usize) -> ObservationRecord {
        let taxonomy = Taxonomy::builtin();
        let dets: Vec<Detection> = (0..count)
            .map(|i| {
                Detection::new(
                    taxonomy.lookup("Rhinoceros").unwrap().clone(),
                    0.9,
                    BoundingBox::new(10.0 * i as f64, 0.0, 10.0 * i as f64 + 5.0, 5.0),
                )
            })
            .collect();
        let scene = parse_scene("rhinoceros on a grassy plain", &taxonomy);
        fuse("rhino-asset", &dets, scene)
    }

    #[test]
    fn bank_has_ten_unique_questions() {
        let bank = question_bank();
        assert_eq!(bank.len(), 10);
        let mut ids: Vec<&str> = bank.iter().map(|q| q.question_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
        assert!(bank.iter().all(|q| !q.template.is_empty()));
    }

    #[test]
    fn q1_mentions_iucn_status() {
        let bank = question_bank();
        let q1 = &bank[0];
        assert_eq!(q1.question_id, "Q1");
        assert!(q1.template.contains("IUCN conservation status"));
    }

    #[test]
    fn ask_q1_pulls_status_from_corpus() {
        let corpus = corpus();
        let embedder = TrigramEmbedder::default();
        let retriever = Retriever::new(&corpus, &embedder, RetrievalParams::default()).unwrap();
        let obs = rhino_obs(1);
        let q1 = question_bank().remove(0);
        let tuple = ask(&obs, &q1, &retriever, &TemplateComposer).unwrap();
        assert!(tuple.answer.contains("Near Threatened"), "{}", tuple.answer);
        assert!(tuple.passages.iter().any(|p| p.passage.doc_id == "rhino"));
        assert_eq!(tuple.keywords[0], "rhinoceros");
    }

    #[test]
    fn ask_count_question_skips_retrieval() {
        let corpus = corpus();
        let embedder = TrigramEmbedder::default();
        let retriever = Retriever::new(&corpus, &embedder, RetrievalParams::default()).unwrap();
        let obs = rhino_obs(3);
        let q6 = question_bank().into_iter().find(|q| q.question_id == "Q6").unwrap();
        let tuple = ask(&obs, &q6, &retriever, &TemplateComposer).unwrap();
        assert!(tuple.answer.contains("three rhinoceroses"), "{}", tuple.answer);
        assert!(tuple.passages.is_empty());
        assert!(!tuple.keywords.is_empty());
    }

    #[test]
    fn ask_with_empty_corpus_reports_no_evidence() {
        let corpus = Corpus::empty();
        let embedder = TrigramEmbedder::default();
        let retriever = Retriever::new(&corpus, &embedder, RetrievalParams::default()).unwrap();
        let obs = rhino_obs(1);
        let q1 = question_bank().remove(0);
        let tuple = ask(&obs, &q1, &retriever, &TemplateComposer).unwrap();
        assert!(tuple.answer.contains("No external evidence"), "{}", tuple.answer);
        assert!(tuple.passages.is_empty());
        assert!(!tuple.keywords.is_empty());
    }

    #[test]
    fn composer_is_deterministic() {
        let corpus = corpus();
        let embedder = TrigramEmbedder::default();
        let retriever = Retriever::new(&corpus, &embedder, RetrievalParams::default()).unwrap();
        let obs = rhino_obs(2);
        for q in question_bank() {
            let a = ask(&obs, &q, &retriever, &TemplateComposer).unwrap();
            let b = ask(&obs, &q, &retriever, &TemplateComposer).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tuple_keywords_match_extraction_rule() {
        let corpus = corpus();
        let embedder = TrigramEmbedder::default();
        let retriever = Retriever::new(&corpus, &embedder, RetrievalParams::default()).unwrap();
        let obs = rhino_obs(1);
        let q1 = question_bank().remove(0);
        let tuple = ask(&obs, &q1, &retriever, &TemplateComposer).unwrap();
        assert_eq!(tuple.keywords, extract_keywords(&obs, &q1.template));
    }

    #[test]
    fn identical_texts_score_one() {
        let embedder = TrigramEmbedder::default();
        let s = score_answer("a zebra in the grass", "a zebra in the grass", &embedder).unwrap();
        assert!((s.precision - 1.0).abs() < 1e-9);
        assert!((s.recall - 1.0).abs() < 1e-9);
        assert!((s.f1 - 1.0).abs() < 1e-9);
    }

    /// Embedder assigning fixed one-hot vectors per token, for hand-checked
    /// score values.
    struct OneHot;

    impl Embedder for OneHot {
        fn id(&self) -> &str {
            "one-hot-test"
        }

        fn dimension(&self) -> usize {
            4
        }

        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
            let axis = match text {
                "alpha" => 0,
                "beta" => 1,
                "gamma" => 2,
                _ => 3,
            };
            let mut v = alloc::vec![0.0; 4];
            v[axis] = 1.0;
            EmbeddingVector::from_raw(v)
        }
    }

    #[test]
    fn orthogonal_tokens_score_zero() {
        let s = score_answer("alpha", "beta", &OneHot).unwrap();
        assert_eq!(s.precision, 0.0);
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn greedy_matching_matches_hand_computation() {
        // Candidate: [alpha, beta]; reference: [alpha, gamma, gamma].
        // Precision: alpha->1, beta->0 => 0.5
        // Recall: alpha->1, gamma->0, gamma->0 => 1/3
        // F1 = 2*(0.5)*(1/3)/(5/6) = 0.4
        let s = score_answer("alpha beta", "alpha gamma gamma", &OneHot).unwrap();
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn score_symmetry_swaps_precision_and_recall() {
        let embedder = TrigramEmbedder::default();
        let a = "the rhino stands near water";
        let b = "a rhinoceros drinking";
        let ab = score_answer(a, b, &embedder).unwrap();
        let ba = score_answer(b, a, &embedder).unwrap();
        assert!((ab.precision - ba.recall).abs() < 1e-12);
        assert!((ab.recall - ba.precision).abs() < 1e-12);
        assert!((ab.f1 - ba.f1).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_rejected() {
        let embedder = TrigramEmbedder::default();
        assert_eq!(
            score_answer("", "reference", &embedder),
            Err(QaError::EmptyText)
        );
        assert_eq!(
            score_answer("candidate", "...", &embedder),
            Err(QaError::EmptyText)
        );
    }

    #[test]
    fn count_words_and_plurals() {
        assert_eq!(count_word(3), "three");
        assert_eq!(count_word(21), "21");
        assert_eq!(pluralize("Rhinoceros"), "rhinoceroses");
        assert_eq!(pluralize("Plains zebra"), "plains zebras");
    }

    #[test]
    fn fact_sheet_collects_scene_and_capture() {
        let taxonomy = Taxonomy::builtin();
        let scene = parse_scene(
            "a zebra at night among trees, stamp SA08 25/05/2022 05:29:28 WED",
            &taxonomy,
        );
        let det = Detection::new(
            taxonomy.lookup("Plains zebra").unwrap().clone(),
            0.9,
            BoundingBox::new(0.0, 0.0, 5.0, 5.0),
        );
        let obs = fuse("a", &[det], scene);
        let facts = FactSheet::from_observation(&obs);
        assert_eq!(facts.species.len(), 1);
        assert_eq!(facts.time_of_day, TimeOfDay::Night);
        assert!(facts.capture.is_some());
    }

    #[test]
    fn composer_states_missing_species_plainly() {
        let obs = fuse("a", &[], SceneContext::empty("nothing"));
        let facts = FactSheet::from_observation(&obs);
        let q6 = question_bank().into_iter().find(|q| q.question_id == "Q6").unwrap();
        let text = TemplateComposer
            .compose(&q6, &facts, &Retrieval::no_evidence())
            .unwrap();
        assert!(text.contains("no detected animals"));
    }
}
