//! Local retrieval substrate: corpus store, chunker, pluggable embedder,
//! exact (flat) vector index, and the two-stage retriever.
//!
//! The index is exact by contract: `search` must agree with an exhaustive
//! cosine scan, with ties broken by `(doc_id, passage_index)` ascending.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::context::ObservationRecord;
use crate::math;
use crate::rng::fnv1a64;

pub const DEFAULT_EMBEDDING_DIMENSION: usize = 256;
pub const DEFAULT_CHUNK_SIZE: usize = 800;
pub const DEFAULT_CHUNK_OVERLAP: usize = 80;
pub const DEFAULT_MAX_DOCS: usize = 20;
pub const DEFAULT_K_PASSAGES: usize = 4;
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RagError {
    EmptyCorpus,
    DuplicateDocId(String),
    EmptyBody(String),
    InvalidChunkParams,
    DimensionMismatch { index: usize, query: usize },
    Embed(EmbedError),
}

impl fmt::Display for RagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RagError::EmptyCorpus => write!(f, "corpus contains no documents"),
            RagError::DuplicateDocId(id) => write!(f, "duplicate doc_id in corpus: {id}"),
            RagError::EmptyBody(id) => write!(f, "document {id} has an empty body"),
            RagError::InvalidChunkParams => {
                write!(f, "chunk overlap must satisfy 0 <= overlap < chunk_size")
            }
            RagError::DimensionMismatch { index, query } => {
                write!(f, "query dimension {query} does not match index dimension {index}")
            }
            RagError::Embed(e) => write!(f, "embedding failed: {e}"),
        }
    }
}

impl core::error::Error for RagError {}

impl From<EmbedError> for RagError {
    fn from(e: EmbedError) -> Self {
        RagError::Embed(e)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmbedError {
    EmptyText,
    ZeroVector,
    Unavailable(String),
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::EmptyText => write!(f, "cannot embed empty text"),
            EmbedError::ZeroVector => write!(f, "embedding collapsed to the zero vector"),
            EmbedError::Unavailable(msg) => write!(f, "embedder unavailable: {msg}"),
        }
    }
}

impl core::error::Error for EmbedError {}

/// External-knowledge document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

/// Set of documents, unique by `doc_id`, kept in `doc_id` order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_documents(mut docs: Vec<Document>) -> Result<Self, RagError> {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        for pair in docs.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(RagError::DuplicateDocId(pair[0].doc_id.clone()));
            }
        }
        if let Some(doc) = docs.iter().find(|d| d.body.is_empty()) {
            return Err(RagError::EmptyBody(doc.doc_id.clone()));
        }
        Ok(Self { docs })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// A fixed-size chunk of a document body, the retrieval unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub passage_index: usize,
    /// Start position in the body, in characters.
    pub char_offset: usize,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_CHUNK_OVERLAP,
        }
    }
}

/// Split a document body into overlapping passages.
///
/// Passages start at character offsets `0, stride, 2*stride, ...` with
/// `stride = chunk_size - overlap`, continuing until the body is covered;
/// the last passage may be shorter.
pub fn chunk(doc: &Document, params: &ChunkParams) -> Result<Vec<Passage>, RagError> {
    if params.chunk_size == 0 || params.overlap >= params.chunk_size {
        return Err(RagError::InvalidChunkParams);
    }
    let chars: Vec<char> = doc.body.chars().collect();
    let stride = params.chunk_size - params.overlap;

    let mut passages = Vec::new();
    let mut offset = 0usize;
    loop {
        let end = core::cmp::min(offset + params.chunk_size, chars.len());
        passages.push(Passage {
            doc_id: doc.doc_id.clone(),
            passage_index: passages.len(),
            char_offset: offset,
            text: chars[offset..end].iter().collect(),
        });
        if end == chars.len() {
            break;
        }
        offset += stride;
        if offset >= chars.len() {
            break;
        }
    }
    Ok(passages)
}

/// L2-normalized embedding. Construction enforces the unit-norm invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn from_raw(mut values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = math::sqrt(values.iter().map(|v| v * v).sum());
        if norm <= 0.0 || !norm.is_finite() {
            return Err(EmbedError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// Cosine similarity; for unit vectors this is the dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Text-to-vector abstraction; the default is deterministic and local, a
/// remote endpoint can be plugged in without touching any contract.
pub trait Embedder {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Hashed character-trigram bag, L2-normalized.
///
/// Not semantically strong, but fully deterministic: the same text embeds to
/// the same vector on every platform, which is what the test suite and the
/// exactness contract need.
#[derive(Clone, Debug)]
pub struct TrigramEmbedder {
    dimension: usize,
    id: String,
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            id: alloc::format!("hashed-trigram-{dimension}"),
        }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIMENSION)
    }
}

impl Embedder for TrigramEmbedder {
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
        let chars: Vec<char> = text.chars().flat_map(|c| c.to_lowercase()).collect();
        let mut counts = alloc::vec![0.0f64; self.dimension];
        let mut bump = |gram: &[char]| {
            let mut bytes = Vec::with_capacity(gram.len() * 4);
            let mut buf = [0u8; 4];
            for &c in gram {
                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
            let bucket = (fnv1a64(&bytes) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        };
        if chars.len() < 3 {
            bump(&chars);
        } else {
            for window in chars.windows(3) {
                bump(window);
            }
        }
        EmbeddingVector::from_raw(counts)
    }
}

/// One indexed passage: its identity plus embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub passage_index: usize,
    pub char_offset: usize,
    pub vector: Vec<f64>,
}

/// Exact, flat vector index. Entry order is deterministic:
/// `(doc_id, passage_index)` ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub version: u32,
    pub embedder_id: String,
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

/// Embed every passage into a fresh index.
pub fn build_index(passages: &[Passage], embedder: &dyn Embedder) -> Result<VectorIndex, RagError> {
    if passages.is_empty() {
        return Err(RagError::EmptyCorpus);
    }
    let mut ordered: Vec<&Passage> = passages.iter().collect();
    ordered.sort_by(|a, b| {
        a.doc_id
            .cmp(&b.doc_id)
            .then(a.passage_index.cmp(&b.passage_index))
    });

    let mut entries = Vec::with_capacity(ordered.len());
    for passage in ordered {
        let vector = embedder.embed(&passage.text)?;
        entries.push(IndexEntry {
            doc_id: passage.doc_id.clone(),
            passage_index: passage.passage_index,
            char_offset: passage.char_offset,
            vector: vector.values().to_vec(),
        });
    }
    Ok(VectorIndex {
        version: INDEX_FORMAT_VERSION,
        embedder_id: embedder.id().to_string(),
        dimension: embedder.dimension(),
        entries,
    })
}

/// A ranked search result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub passage_index: usize,
    pub similarity: f64,
}

fn hit_before(a: &SearchHit, b: &SearchHit) -> bool {
    match a.similarity.total_cmp(&b.similarity) {
        core::cmp::Ordering::Greater => true,
        core::cmp::Ordering::Less => false,
        core::cmp::Ordering::Equal => (&a.doc_id, a.passage_index) < (&b.doc_id, b.passage_index),
    }
}

/// Exact top-k by cosine similarity over the whole index.
///
/// Returns `min(k, |index|)` hits in non-increasing similarity, ties broken
/// by `(doc_id, passage_index)` ascending; equivalent to an exhaustive scan.
pub fn search(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<SearchHit>, RagError> {
    if query.dimension() != index.dimension {
        return Err(RagError::DimensionMismatch {
            index: index.dimension,
            query: query.dimension(),
        });
    }
    let k = core::cmp::min(k, index.entries.len());
    if k == 0 {
        return Ok(Vec::new());
    }

    // Bounded insertion into a sorted top-k buffer: O(n log k) and a
    // different code path from the exhaustive-sort oracle used in tests.
    let mut top: Vec<SearchHit> = Vec::with_capacity(k + 1);
    for entry in &index.entries {
        let hit = SearchHit {
            doc_id: entry.doc_id.clone(),
            passage_index: entry.passage_index,
            similarity: dot(query.values(), &entry.vector),
        };
        if top.len() == k && !hit_before(&hit, top.last().expect("top is non-empty")) {
            continue;
        }
        let pos = top.partition_point(|existing| hit_before(existing, &hit));
        top.insert(pos, hit);
        top.truncate(k);
    }
    Ok(top)
}

/// Lowercased question words that survive stoplist removal, in order,
/// deduplicated.
pub fn question_content_words(question: &str) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for word in question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        let lower = word.to_lowercase();
        if !STOPLIST.contains(&lower.as_str()) && !words.contains(&lower) {
            words.push(lower);
        }
    }
    words
}

/// Order-stable, deduplicated keyword extraction.
///
/// Keywords start with each detected species' common and scientific names
/// (lowercased, in species-count order), followed by the question's content
/// words after stoplist removal.
pub fn extract_keywords(obs: &ObservationRecord, question: &str) -> Vec<String> {
    let mut keywords: Vec<String> = Vec::new();
    let push = |kw: String, out: &mut Vec<String>| {
        if !kw.is_empty() && !out.contains(&kw) {
            out.push(kw);
        }
    };

    for class in obs.detected_classes() {
        push(class.common_name.to_lowercase(), &mut keywords);
        push(class.scientific_name.to_lowercase(), &mut keywords);
    }
    for word in question_content_words(question) {
        push(word, &mut keywords);
    }
    keywords
}

/// English function words plus the question boilerplate shared by the
/// built-in templates; what survives is retrieval signal.
const STOPLIST: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did",
    "what", "which", "who", "whom", "whose", "how", "many", "much", "when", "where", "why", "can",
    "could", "will", "would", "should", "may", "might", "must", "it", "its", "they", "them",
    "their", "there", "here", "this", "that", "these", "those", "i", "you", "he", "she", "we",
    "us", "our", "your", "his", "her", "and", "or", "nor", "but", "if", "then", "than", "as",
    "of", "in", "on", "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "to", "from", "up", "down", "out", "off", "over",
    "under", "again", "also", "such", "no", "not", "only", "own", "same", "so", "too", "very",
    "any", "all", "each", "both", "some", "more", "most", "other", "others", "e", "g", "eg",
    "etc", "based", "given", "visible", "image", "images", "picture", "photo", "camera", "trap",
    "label", "labels", "read", "reads", "reading", "binding", "bounding", "box", "boxes",
    "around", "identify", "identified", "identifies", "animal", "animals", "species", "observed",
    "observe", "determine", "time", "taken", "made", "make", "relevant", "provide",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub max_docs: usize,
    pub k_passages: usize,
    pub chunk: ChunkParams,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            max_docs: DEFAULT_MAX_DOCS,
            k_passages: DEFAULT_K_PASSAGES,
            chunk: ChunkParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub similarity: f64,
}

/// Marker distinguishing "found nothing" from "found evidence".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalOutcome {
    Evidence,
    NoEvidence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub passages: Vec<ScoredPassage>,
    pub outcome: RetrievalOutcome,
}

impl Retrieval {
    pub fn no_evidence() -> Self {
        Self {
            passages: Vec::new(),
            outcome: RetrievalOutcome::NoEvidence,
        }
    }
}

/// Two-stage retriever with the corpus chunked and embedded once up front.
pub struct Retriever<'a> {
    corpus: &'a Corpus,
    embedder: &'a dyn Embedder,
    params: RetrievalParams,
    passages: Vec<Passage>,
    vectors: Vec<EmbeddingVector>,
    by_doc: BTreeMap<String, Vec<usize>>,
}

impl<'a> Retriever<'a> {
    pub fn new(
        corpus: &'a Corpus,
        embedder: &'a dyn Embedder,
        params: RetrievalParams,
    ) -> Result<Self, RagError> {
        if params.chunk.chunk_size == 0 || params.chunk.overlap >= params.chunk.chunk_size {
            return Err(RagError::InvalidChunkParams);
        }
        let mut passages = Vec::new();
        let mut vectors = Vec::new();
        let mut by_doc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for doc in corpus.docs() {
            for passage in chunk(doc, &params.chunk)? {
                let vector = embedder.embed(&passage.text)?;
                by_doc
                    .entry(doc.doc_id.clone())
                    .or_default()
                    .push(passages.len());
                passages.push(passage);
                vectors.push(vector);
            }
        }
        Ok(Self {
            corpus,
            embedder,
            params,
            passages,
            vectors,
            by_doc,
        })
    }

    pub fn params(&self) -> &RetrievalParams {
        &self.params
    }

    /// Stage 1: keyword-overlap scoring over title+body selects up to
    /// `max_docs` documents (ties by doc_id). Stage 2: cosine-rank those
    /// documents' passages against the embedded keyword string.
    pub fn retrieve(&self, keywords: &[String]) -> Result<Retrieval, RagError> {
        if self.corpus.is_empty() {
            return Err(RagError::EmptyCorpus);
        }
        if keywords.is_empty() {
            return Ok(Retrieval::no_evidence());
        }

        let mut scored_docs: Vec<(usize, &str)> = Vec::new();
        for doc in self.corpus.docs() {
            let haystack = alloc::format!("{} {}", doc.title, doc.body).to_lowercase();
            let overlap = keywords
                .iter()
                .filter(|kw| haystack.contains(kw.to_lowercase().as_str()))
                .count();
            if overlap > 0 {
                scored_docs.push((overlap, doc.doc_id.as_str()));
            }
        }
        if scored_docs.is_empty() {
            return Ok(Retrieval::no_evidence());
        }
        scored_docs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        scored_docs.truncate(self.params.max_docs);

        let query = self.embedder.embed(&keywords.join(" "))?;
        let mut hits: Vec<(f64, usize)> = Vec::new();
        for &(_, doc_id) in &scored_docs {
            for &pi in self.by_doc.get(doc_id).map(Vec::as_slice).unwrap_or(&[]) {
                hits.push((query.cosine(&self.vectors[pi]), pi));
            }
        }
        hits.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then_with(|| {
                let pa = &self.passages[a.1];
                let pb = &self.passages[b.1];
                (&pa.doc_id, pa.passage_index).cmp(&(&pb.doc_id, pb.passage_index))
            })
        });
        hits.truncate(self.params.k_passages);

        Ok(Retrieval {
            passages: hits
                .into_iter()
                .map(|(similarity, pi)| ScoredPassage {
                    passage: self.passages[pi].clone(),
                    similarity,
                })
                .collect(),
            outcome: RetrievalOutcome::Evidence,
        })
    }
}

/// One-shot convenience wrapper around [`Retriever`].
pub fn retrieve(
    corpus: &Corpus,
    keywords: &[String],
    params: RetrievalParams,
    embedder: &dyn Embedder,
) -> Result<Retrieval, RagError> {
    if corpus.is_empty() {
        return Err(RagError::EmptyCorpus);
    }
    Retriever::new(corpus, embedder, params)?.retrieve(keywords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{fuse, SceneContext};
    use crate::domain::{BoundingBox, Detection, Taxonomy};
    use alloc::vec;

    fn doc(id: &str, title: &str, body: &str) -> Document {
        Document {
            doc_id: id.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            source_url: None,
        }
    }

    fn small_corpus() -> Corpus {
        Corpus::from_documents(vec![
            doc(
                "lion",
                "African lion",
                "The lion is a large cat. Lions rest for much of the day. The lion is listed as Vulnerable.",
            ),
            doc(
                "rhino",
                "Rhinoceros",
                "The rhinoceros (family Rhinocerotidae) is a large herbivore. The IUCN lists a conservation status of Near Threatened for the white rhinoceros. Rhinoceroses are threatened by poaching.",
            ),
            doc(
                "zebra",
                "Plains zebra",
                "The plains zebra (Equus quagga) grazes on grasses. An adult plains zebra can weigh around 350 kg. Its IUCN conservation status is Near Threatened.",
            ),
        ])
        .unwrap()
    }

    fn obs_with(species: &[&str]) -> ObservationRecord {
        let taxonomy = Taxonomy::builtin();
        let dets: Vec<Detection> = species
            .iter()
            .map(|s| {
                Detection::new(
                    taxonomy.lookup(s).unwrap().clone(),
                    0.9,
                    BoundingBox::new(0.0, 0.0, 10.0, 10.0),
                )
            })
            .collect();
        fuse("asset", &dets, SceneContext::empty(""))
    }

    #[test]
    fn chunk_short_body_is_single_passage() {
        let d = doc("a", "t", &"x".repeat(100));
        let passages = chunk(&d, &ChunkParams::default()).unwrap();
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].char_offset, 0);
        assert_eq!(passages[0].text.len(), 100);
    }

    #[test]
    fn chunk_strides_match_hand_arithmetic() {
        let d = doc("a", "t", &"x".repeat(1600));
        let passages = chunk(&d, &ChunkParams::default()).unwrap();
        let offsets: Vec<usize> = passages.iter().map(|p| p.char_offset).collect();
        assert_eq!(offsets, vec![0, 720, 1440]);
        assert_eq!(passages[2].text.len(), 160);
    }

    #[test]
    fn chunk_rejects_full_overlap() {
        let d = doc("a", "t", "body");
        let params = ChunkParams {
            chunk_size: 800,
            overlap: 800,
        };
        assert_eq!(chunk(&d, &params), Err(RagError::InvalidChunkParams));
    }

    #[test]
    fn chunk_coverage_reconstructs_body() {
        let body: String = (0..3777u32)
            .map(|i| char::from_u32('a' as u32 + (i % 26)).unwrap())
            .collect();
        let d = doc("a", "t", &body);
        let params = ChunkParams {
            chunk_size: 500,
            overlap: 77,
        };
        let passages = chunk(&d, &params).unwrap();
        let mut rebuilt = String::new();
        for (i, p) in passages.iter().enumerate() {
            if i == 0 {
                rebuilt.push_str(&p.text);
            } else {
                rebuilt.extend(p.text.chars().skip(params.overlap));
            }
        }
        assert_eq!(rebuilt, body);
    }

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let embedder = TrigramEmbedder::default();
        let a = embedder.embed("plains zebra grazing at dawn").unwrap();
        let b = embedder.embed("plains zebra grazing at dawn").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embedding_rejects_empty_text() {
        let embedder = TrigramEmbedder::default();
        assert_eq!(embedder.embed(""), Err(EmbedError::EmptyText));
    }

    #[test]
    fn embedding_handles_short_text() {
        let embedder = TrigramEmbedder::default();
        let v = embedder.embed("ab").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn build_index_counts_and_dimension() {
        let embedder = TrigramEmbedder::default();
        let d = doc("a", "t", &"words and more words ".repeat(100));
        let passages = chunk(&d, &ChunkParams::default()).unwrap();
        let index = build_index(&passages, &embedder).unwrap();
        assert_eq!(index.entries.len(), passages.len());
        assert_eq!(index.dimension, 256);
        assert_eq!(index.version, INDEX_FORMAT_VERSION);
        assert_eq!(index.embedder_id, "hashed-trigram-256");
    }

    #[test]
    fn build_index_rejects_empty() {
        let embedder = TrigramEmbedder::default();
        assert_eq!(build_index(&[], &embedder), Err(RagError::EmptyCorpus));
    }

    #[test]
    fn index_serialization_round_trips_byte_identically() {
        let embedder = TrigramEmbedder::default();
        let passages = chunk(&small_corpus().docs()[0], &ChunkParams::default()).unwrap();
        let index = build_index(&passages, &embedder).unwrap();
        let json_a = serde_json::to_string(&index).unwrap();
        let rebuilt = build_index(&passages, &embedder).unwrap();
        let json_b = serde_json::to_string(&rebuilt).unwrap();
        assert_eq!(json_a, json_b);
        let parsed: VectorIndex = serde_json::from_str(&json_a).unwrap();
        assert_eq!(parsed, index);
    }

    #[test]
    fn self_retrieval_is_first_with_similarity_one() {
        let embedder = TrigramEmbedder::default();
        let corpus = small_corpus();
        let mut passages = Vec::new();
        for d in corpus.docs() {
            passages.extend(chunk(d, &ChunkParams::default()).unwrap());
        }
        let index = build_index(&passages, &embedder).unwrap();
        let query = embedder.embed(&passages[0].text).unwrap();
        let hits = search(&index, &query, 3).unwrap();
        assert_eq!(hits[0].doc_id, passages[0].doc_id);
        assert_eq!(hits[0].passage_index, passages[0].passage_index);
        assert!((hits[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn search_ties_break_by_doc_id() {
        let entry = |id: &str| IndexEntry {
            doc_id: id.to_string(),
            passage_index: 0,
            char_offset: 0,
            vector: vec![1.0, 0.0],
        };
        let index = VectorIndex {
            version: 1,
            embedder_id: "test".into(),
            dimension: 2,
            entries: vec![entry("b"), entry("a")],
        };
        let query = EmbeddingVector::from_raw(vec![1.0, 0.0]).unwrap();
        let hits = search(&index, &query, 2).unwrap();
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[1].doc_id, "b");
    }

    #[test]
    fn search_rejects_dimension_mismatch() {
        let index = VectorIndex {
            version: 1,
            embedder_id: "test".into(),
            dimension: 2,
            entries: vec![],
        };
        let query = EmbeddingVector::from_raw(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            search(&index, &query, 1),
            Err(RagError::DimensionMismatch { index: 2, query: 3 })
        ));
    }

    #[test]
    fn search_matches_exhaustive_scan_on_a_seeded_corpus() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(2024);
        let dim = 16;
        let entries: Vec<IndexEntry> = (0..200)
            .map(|i| {
                let raw: Vec<f64> = (0..dim).map(|_| rng.next_f64() - 0.5).collect();
                let v = EmbeddingVector::from_raw(raw).unwrap();
                IndexEntry {
                    doc_id: alloc::format!("doc-{:03}", i / 4),
                    passage_index: i % 4,
                    char_offset: 0,
                    vector: v.values().to_vec(),
                }
            })
            .collect();
        let index = VectorIndex {
            version: 1,
            embedder_id: "rand".into(),
            dimension: dim,
            entries,
        };
        for q in 0..10 {
            let raw: Vec<f64> = (0..dim).map(|_| rng.next_f64() - 0.5).collect();
            let query = EmbeddingVector::from_raw(raw).unwrap();
            let hits = search(&index, &query, 5).unwrap();

            // Oracle: full scored list, fully sorted.
            let mut all: Vec<SearchHit> = index
                .entries
                .iter()
                .map(|e| SearchHit {
                    doc_id: e.doc_id.clone(),
                    passage_index: e.passage_index,
                    similarity: dot(query.values(), &e.vector),
                })
                .collect();
            all.sort_by(|a, b| {
                b.similarity
                    .total_cmp(&a.similarity)
                    .then_with(|| (&a.doc_id, a.passage_index).cmp(&(&b.doc_id, b.passage_index)))
            });
            all.truncate(5);
            assert_eq!(hits, all, "query {q}");
        }
    }

    #[test]
    fn keywords_follow_species_then_question_rule() {
        let obs = obs_with(&["Rhinoceros"]);
        let keywords = extract_keywords(
            &obs,
            "Read the label on the binding box to identify the animal. What is the species identified in the image, and what is its IUCN conservation status?",
        );
        assert_eq!(
            &keywords[..5],
            &[
                "rhinoceros".to_string(),
                "rhinocerotidae".to_string(),
                "iucn".to_string(),
                "conservation".to_string(),
                "status".to_string(),
            ]
        );
    }

    #[test]
    fn keywords_empty_for_empty_inputs() {
        let obs = obs_with(&[]);
        assert!(extract_keywords(&obs, "").is_empty());
    }

    #[test]
    fn keywords_include_species_phrase_and_content_word() {
        let obs = obs_with(&["Plains zebra"]);
        let keywords = extract_keywords(&obs, "how much does it weigh");
        assert!(keywords.contains(&"equus quagga".to_string()));
        assert!(keywords.contains(&"plains zebra".to_string()));
        assert!(keywords.contains(&"weigh".to_string()));
    }

    #[test]
    fn retrieve_prefers_the_matching_document() {
        let corpus = small_corpus();
        let embedder = TrigramEmbedder::default();
        let keywords = vec!["rhinoceros".to_string(), "rhinocerotidae".to_string()];
        let result = retrieve(&corpus, &keywords, RetrievalParams::default(), &embedder).unwrap();
        assert_eq!(result.outcome, RetrievalOutcome::Evidence);
        assert!(!result.passages.is_empty());
        assert_eq!(result.passages[0].passage.doc_id, "rhino");
    }

    #[test]
    fn retrieve_reports_no_evidence_when_nothing_matches() {
        let corpus = small_corpus();
        let embedder = TrigramEmbedder::default();
        let keywords = vec!["spacecraft".to_string()];
        let result = retrieve(&corpus, &keywords, RetrievalParams::default(), &embedder).unwrap();
        assert_eq!(result.outcome, RetrievalOutcome::NoEvidence);
        assert!(result.passages.is_empty());
    }

    #[test]
    fn retrieve_honors_max_docs_cap() {
        let corpus = small_corpus();
        let embedder = TrigramEmbedder::default();
        let params = RetrievalParams {
            max_docs: 1,
            ..RetrievalParams::default()
        };
        // Every document mentions IUCN except the lion one; cap at one doc.
        let keywords = vec!["iucn".to_string(), "status".to_string()];
        let result = retrieve(&corpus, &keywords, params, &embedder).unwrap();
        assert!(!result.passages.is_empty());
        let first_doc = &result.passages[0].passage.doc_id;
        assert!(result
            .passages
            .iter()
            .all(|p| &p.passage.doc_id == first_doc));
    }

    #[test]
    fn retrieve_on_empty_corpus_errors() {
        let corpus = Corpus::empty();
        let embedder = TrigramEmbedder::default();
        assert_eq!(
            retrieve(
                &corpus,
                &["x".to_string()],
                RetrievalParams::default(),
                &embedder
            ),
            Err(RagError::EmptyCorpus)
        );
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let err = Corpus::from_documents(vec![doc("a", "t", "b"), doc("a", "t2", "b2")]);
        assert_eq!(err, Err(RagError::DuplicateDocId("a".to_string())));
    }

    #[test]
    fn similarities_stay_in_bounds() {
        let corpus = small_corpus();
        let embedder = TrigramEmbedder::default();
        let keywords = vec!["zebra".to_string(), "iucn".to_string()];
        let result = retrieve(&corpus, &keywords, RetrievalParams::default(), &embedder).unwrap();
        for p in &result.passages {
            assert!((-1.0..=1.0).contains(&p.similarity));
        }
    }
}
