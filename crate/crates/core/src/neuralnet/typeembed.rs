//! Initial type embeddings built from the words in each type's name.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::answerprep::AnswerType;
use crate::embedstore::EmbeddingStore;

/// Bound of the uniform distribution for rows with no known word.
pub const RANDOM_INIT_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowProvenance {
    /// Exactly one name token found in the word vectors.
    GloveSingle,
    /// Mean of several name-token vectors.
    GloveMean,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeEmbeddingMatrix {
    pub matrix: Matrix,
    pub provenance: Vec<RowProvenance>,
}

/// Words of a type name: namespace prefix and digit runs removed, camel
/// case split, lowercased, with `wikicat` discarded.
///
/// `yago:WikicatAmericanPeople` gives `["american", "people"]` and
/// `yago:Person100007846` gives `["person"]`.
pub fn type_name_tokens(label: &str) -> Vec<String> {
    let local = label.split_once(':').map_or(label, |(_, rest)| rest);
    let mut tokens = Vec::new();
    for chunk in local.split(|c: char| !c.is_alphabetic()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            // fooBar | FOOBar
            if (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
            {
                tokens.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>());
        }
    }
    tokens
        .into_iter()
        .map(|t| t.to_lowercase())
        .filter(|t| !t.is_empty() && t != "wikicat")
        .collect()
}

/// One row per vocabulary type, in vocabulary order, each the mean of the
/// word vectors of its name tokens. Rows with no known token are drawn
/// from `rng`.
pub fn init_type_embedding<R: Rng>(
    store: &EmbeddingStore,
    types: &[AnswerType],
    rng: &mut R,
) -> TypeEmbeddingMatrix {
    let d = store.dim();
    let mut matrix = Matrix::zeros(types.len(), d);
    let mut provenance = Vec::with_capacity(types.len());
    for (r, t) in types.iter().enumerate() {
        let tokens = type_name_tokens(&t.to_string());
        let found = tokens.iter().filter(|tok| store.contains(tok)).count();
        let row = matrix.row_mut(r);
        match store.mean_of(tokens.iter().map(String::as_str)) {
            Some(v) => {
                row.copy_from_slice(&v);
                provenance.push(if found == 1 {
                    RowProvenance::GloveSingle
                } else {
                    RowProvenance::GloveMean
                });
            }
            None => {
                row.iter_mut()
                    .for_each(|x| *x = rng.gen_range(-RANDOM_INIT_BOUND..RANDOM_INIT_BOUND));
                provenance.push(RowProvenance::Random);
            }
        }
    }
    TypeEmbeddingMatrix { matrix, provenance }
}
