//! Knowledge-corpus and vector-index file IO.
//!
//! A corpus is a directory of JSON documents
//! `{doc_id, title, body, source_url?}`; the index file is the JSON form of
//! [`VectorIndex`] (`{version, embedder_id, dimension, entries}`).

use std::path::Path;

use trapline_core::rag::{Corpus, Document, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not a valid document: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("corpus is invalid: {0}")]
    Corpus(#[from] trapline_core::rag::RagError),
}

/// Load every `*.json` document under `dir` (non-recursive) into a corpus.
pub fn load_corpus(dir: &Path) -> Result<Corpus, KnowledgeError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| KnowledgeError::Io {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();

    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|source| KnowledgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: Document = serde_json::from_str(&text).map_err(|source| KnowledgeError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        docs.push(doc);
    }
    Ok(Corpus::from_documents(docs)?)
}

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), KnowledgeError> {
    let json = serde_json::to_string(index).expect("index serializes");
    std::fs::write(path, json + "\n").map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_index(path: &Path) -> Result<VectorIndex, KnowledgeError> {
    let text = std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| KnowledgeError::Parse {
        path: path.display().to_string(),
        source,
    })
}
