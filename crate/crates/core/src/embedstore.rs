//! Word vectors in the plain text format (`term v1 ... vd` per line) with
//! cosine similarity and filtered nearest-neighbour lookup.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::text::normalize_label;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file is empty")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate term `{term}`")]
    DuplicateTerm { line: usize, term: String },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

const NORM_EPS: f64 = 1e-12;

/// Dense term vectors, stored row-major in vocabulary order.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    terms: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    /// Builds a store from `(term, vector)` pairs. Terms are lowercased.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut store: Option<EmbeddingStore> = None;
        for (i, (term, v)) in pairs.into_iter().enumerate() {
            let s = store.get_or_insert_with(|| EmbeddingStore::empty(v.len()));
            s.push(term.as_ref(), v, i + 1)?;
        }
        store.ok_or(EmbedError::Empty)
    }

    fn empty(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    fn push(&mut self, term: &str, v: Vec<f64>, line: usize) -> Result<()> {
        if v.len() != self.dim {
            return Err(EmbedError::InconsistentDimension {
                line,
                expected: self.dim,
                found: v.len(),
            });
        }
        let term = term.to_lowercase();
        if self.index.contains_key(&term) {
            return Err(EmbedError::DuplicateTerm { line, term });
        }
        self.index.insert(term.clone(), self.terms.len());
        self.terms.push(term);
        self.data.extend(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(&term.to_lowercase())
    }

    /// Vector for a single term (case-insensitive).
    pub fn get(&self, term: &str) -> Option<&[f64]> {
        self.index.get(&term.to_lowercase()).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector for a possibly multi-word phrase: the term itself if present,
    /// else the mean of its in-vocabulary tokens.
    pub fn phrase_vector(&self, phrase: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.get(phrase) {
            return Some(v.to_vec());
        }
        let normalized = normalize_label(phrase);
        self.mean_of(normalized.split(' '))
    }

    /// Mean of the vectors of the tokens that are in the store.
    pub fn mean_of<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in tokens {
            if let Some(v) = self.get(tok) {
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Some(acc)
    }

    /// Most similar term to `anchor` among terms that are not the anchor,
    /// not in `exclude`, and satisfy `links`.
    pub fn nearest_linked_term<F>(
        &self,
        anchor: &str,
        exclude: &BTreeSet<String>,
        links: F,
    ) -> Result<Option<String>>
    where
        F: FnMut(&str) -> bool,
    {
        let anchor = anchor.to_lowercase();
        let v = self
            .get(&anchor)
            .ok_or_else(|| EmbedError::UnknownTerm(anchor.clone()))?
            .to_vec();
        let mut skip = exclude.clone();
        skip.insert(anchor);
        self.nearest_linked_to(&v, &skip, links)
    }

    /// Same as [`nearest_linked_term`](Self::nearest_linked_term) for an
    /// arbitrary query vector. Ties go to the lexicographically smaller term.
    pub fn nearest_linked_to<F>(
        &self,
        query: &[f64],
        exclude: &BTreeSet<String>,
        mut links: F,
    ) -> Result<Option<String>>
    where
        F: FnMut(&str) -> bool,
    {
        if query.len() != self.dim {
            return Err(EmbedError::LengthMismatch(query.len(), self.dim));
        }
        let mut best: Option<(f64, &str)> = None;
        for (i, term) in self.terms.iter().enumerate() {
            if exclude.contains(term) {
                continue;
            }
            let sim = cosine(query, self.row(i))?;
            let better = match best {
                None => true,
                Some((bs, bt)) => sim > bs || (sim == bs && term.as_str() < bt),
            };
            // the link predicate may be expensive; only consult it for
            // candidates that would win
            if better && links(term) {
                best = Some((sim, term));
            }
        }
        Ok(best.map(|(_, t)| t.to_string()))
    }
}

/// Cosine similarity; zero when either vector has (near-)zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbedError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < NORM_EPS || nb < NORM_EPS {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&text)
}

/// Parses the text vector format. Dimension comes from the first record;
/// an optional leading `count dim` header line is skipped.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingStore> {
    let mut store: Option<EmbeddingStore> = None;
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut fields = raw.split_whitespace();
        let Some(term) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if first {
            first = false;
            if rest.len() == 1 && term.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
        }
        let v = rest
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| EmbedError::Parse {
                    line,
                    message: format!("bad number `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if v.is_empty() {
            return Err(EmbedError::Parse {
                line,
                message: "term without vector".into(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Parse {
                line,
                message: "non-finite component".into(),
            });
        }
        store
            .get_or_insert_with(|| EmbeddingStore::empty(v.len()))
            .push(term, v, line)?;
    }
    store.ok_or(EmbedError::Empty)
}
