//! Exact-term-overlap retrieval over a local snippet directory.

use std::collections::BTreeSet;
use std::num::NonZeroUsize;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub source_id: String,
    pub text: String,
    pub score: f64,
}

/// A set of documents to retrieve from. Every regular file in the
/// directory is one document; its file name is the source id.
#[derive(Debug, Clone, Default)]
pub struct SnippetCorpus {
    docs: Vec<(String, String)>,
}

impl SnippetCorpus {
    pub fn from_documents<I, S, T>(docs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        SnippetCorpus {
            docs: docs
                .into_iter()
                .map(|(id, text)| (id.into(), text.into()))
                .collect(),
        }
    }

    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut docs = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let Ok(text) = std::fs::read_to_string(entry.path()) else {
                continue;
            };
            docs.push((entry.file_name().to_string_lossy().into_owned(), text));
        }
        Ok(SnippetCorpus { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Retrieval {
    pub snippets: Vec<Snippet>,
    /// Set when no corpus was available.
    pub warning: Option<String>,
}

fn terms(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Returns at most `k` snippets ranked by the number of distinct query terms
/// they contain, ties broken by ascending source id. Snippets sharing no
/// term with the query are not returned.
pub fn retrieve_context(query: &str, corpus: Option<&SnippetCorpus>, k: NonZeroUsize) -> Retrieval {
    let Some(corpus) = corpus else {
        return Retrieval {
            snippets: Vec::new(),
            warning: Some("no snippet corpus configured; retrieval skipped".into()),
        };
    };
    let query_terms = terms(query);
    let mut scored: Vec<Snippet> = corpus
        .docs
        .iter()
        .filter_map(|(id, text)| {
            let doc_terms = terms(text);
            let score = query_terms
                .iter()
                .filter(|t| doc_terms.contains(*t))
                .count();
            (score > 0).then(|| Snippet {
                source_id: id.clone(),
                text: text.clone(),
                score: score as f64,
            })
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.source_id.cmp(&b.source_id))
    });
    scored.truncate(k.get());
    Retrieval {
        snippets: scored,
        warning: None,
    }
}

/// Opens `dir` as a corpus; a missing directory yields a warning, not an error.
pub fn retrieve_from_dir(query: &str, dir: &Path, k: NonZeroUsize) -> Retrieval {
    match SnippetCorpus::load_dir(dir) {
        Ok(corpus) => retrieve_context(query, Some(&corpus), k),
        Err(e) => Retrieval {
            snippets: Vec::new(),
            warning: Some(format!("snippet corpus {} unavailable: {e}", dir.display())),
        },
    }
}
