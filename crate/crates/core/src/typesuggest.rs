//! Unsupervised type suggestion for a set of seed terms: link each term to
//! an entity by label, expand the seed set through word-vector neighbours
//! until it holds `k` seeds, then rank the seeds' types with a tf-idf style
//! score `count(t) * (ln Z - ln entity_count(t))`, where `Z` is the number
//! of entities in the type system.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use serde::Serialize;

use crate::embedstore::EmbeddingStore;
use crate::typestore::{EntityId, TypeId, TypeSystemGraph};

pub use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedQuery {
    pub terms: Vec<String>,
    pub k: usize,
}

impl SeedQuery {
    pub fn new(terms: Vec<String>, k: usize) -> Option<Self> {
        (!terms.is_empty() && k >= 1).then_some(Self { terms, k })
    }

    /// Parses a comma-separated list, dropping blank items.
    pub fn parse(list: &str, k: usize) -> Option<Self> {
        let terms = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        Self::new(terms, k)
    }
}

/// Seed terms paired with the entities they link to, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkedSeeds {
    pairs: Vec<(String, EntityId)>,
}

impl LinkedSeeds {
    /// Adds a seed unless its entity is already present.
    pub fn push(&mut self, term: impl Into<String>, entity: EntityId) -> bool {
        if self.contains_entity(&entity) {
            return false;
        }
        self.pairs.push((term.into(), entity));
        true
    }

    pub fn contains_entity(&self, e: &EntityId) -> bool {
        self.pairs.iter().any(|(_, x)| x == e)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, EntityId)] {
        &self.pairs
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.pairs.iter().map(|(_, e)| e)
    }
}

/// Ranked `(label, score)` pairs, scores non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList<L> {
    entries: Vec<(L, f64)>,
}

pub type RankedTypeList = RankedList<TypeId>;

impl<L: Ord + Clone> RankedList<L> {
    /// Sorts by descending score, ties by ascending label. Duplicate labels
    /// and non-finite scores are rejected by panic; callers merge first.
    pub fn from_unsorted(mut entries: Vec<(L, f64)>) -> Self {
        assert!(
            entries.iter().all(|(_, s)| s.is_finite()),
            "non-finite score"
        );
        entries.sort_by(|(la, sa), (lb, sb)| sb.total_cmp(sa).then_with(|| la.cmp(lb)));
        assert_eq!(
            entries
                .iter()
                .map(|(l, _)| l)
                .collect::<BTreeSet<_>>()
                .len(),
            entries.len(),
            "duplicate label in ranked list"
        );
        Self { entries }
    }
}

impl<L> RankedList<L> {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(L, f64)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(L, f64)> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self) -> Option<&L> {
        self.entries.first().map(|(l, _)| l)
    }
}

/// Normalized label → candidate entities with the token count of the
/// matching label.
#[derive(Debug, Clone)]
pub struct LabelIndex {
    by_label: HashMap<String, Vec<(usize, EntityId)>>,
}

impl LabelIndex {
    pub fn build(g: &TypeSystemGraph) -> Self {
        let mut by_label: HashMap<String, Vec<(usize, EntityId)>> = HashMap::new();
        for (e, label) in g.all_labels() {
            let norm = normalize_label(label);
            if norm.is_empty() {
                continue;
            }
            let tokens = norm.split(' ').count();
            by_label.entry(norm).or_default().push((tokens, e.clone()));
        }
        for cands in by_label.values_mut() {
            cands.sort();
            cands.dedup_by(|a, b| a.1 == b.1);
        }
        Self { by_label }
    }

    /// Exact match after normalization; among several entities the one
    /// whose label has the fewest tokens wins, then the smaller id.
    pub fn link(&self, term: &str) -> Option<&EntityId> {
        self.by_label
            .get(&normalize_label(term))
            .and_then(|c| c.iter().min())
            .map(|(_, e)| e)
    }
}

/// Scores every direct type of the seed entities.
pub fn score_types(g: &TypeSystemGraph, seeds: &LinkedSeeds) -> RankedTypeList {
    let mut counts: BTreeMap<&TypeId, usize> = BTreeMap::new();
    for e in seeds.entities() {
        if let Ok(ts) = g.types_of(e) {
            for t in ts {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let ln_z = (g.total_entity_count() as f64).ln();
    let entries = counts
        .into_iter()
        .map(|(t, count)| {
            let ec = g.entity_count(t).expect("type of a graph entity") as f64;
            (t.clone(), count as f64 * (ln_z - ec.ln()))
        })
        .collect();
    RankedList::from_unsorted(entries)
}

/// The linking, expansion and scoring pipeline over one type system and
/// one embedding store.
pub struct TypeSuggester<'a> {
    graph: &'a TypeSystemGraph,
    store: &'a EmbeddingStore,
    labels: LabelIndex,
}

impl<'a> TypeSuggester<'a> {
    pub fn new(graph: &'a TypeSystemGraph, store: &'a EmbeddingStore) -> Self {
        Self {
            graph,
            store,
            labels: LabelIndex::build(graph),
        }
    }

    pub fn graph(&self) -> &TypeSystemGraph {
        self.graph
    }

    pub fn link_entity(&self, term: &str) -> Option<EntityId> {
        self.labels.link(term).cloned()
    }

    /// Links each term, collapsing terms that resolve to the same entity.
    /// Unlinkable terms are skipped.
    pub fn link_all(&self, terms: &[String]) -> LinkedSeeds {
        let mut seeds = LinkedSeeds::default();
        for term in terms {
            if let Some(e) = self.link_entity(term) {
                seeds.push(term.clone(), e);
            }
        }
        seeds
    }

    /// Grows `linked` to `k` seeds. Each pass visits the current seeds in
    /// order and adds the nearest vocabulary term that links to a new
    /// entity; a pass that adds nothing ends the expansion early.
    pub fn expand_seeds(&self, linked: &LinkedSeeds, k: usize) -> LinkedSeeds {
        let mut seeds = linked.clone();
        if seeds.len() >= k {
            return seeds;
        }
        let mut used_terms: BTreeSet<String> = seeds
            .pairs()
            .iter()
            .map(|(t, _)| t.to_lowercase())
            .collect();
        'outer: while seeds.len() < k {
            let mut added = false;
            let snapshot: Vec<String> = seeds.pairs().iter().map(|(t, _)| t.clone()).collect();
            for anchor in snapshot {
                let Some(query) = self.store.phrase_vector(&anchor) else {
                    continue;
                };
                let found = self
                    .store
                    .nearest_linked_to(&query, &used_terms, |y| {
                        self.labels
                            .link(y)
                            .is_some_and(|e| !seeds.contains_entity(e))
                    })
                    .expect("phrase vector has store dimension");
                if let Some(y) = found {
                    let e = self.labels.link(&y).expect("predicate checked").clone();
                    used_terms.insert(y.clone());
                    seeds.push(y, e);
                    added = true;
                    if seeds.len() == k {
                        break 'outer;
                    }
                }
            }
            if !added {
                warn!("seed expansion exhausted at {} of {} seeds", seeds.len(), k);
                break;
            }
        }
        seeds
    }

    pub fn suggest(&self, query: &SeedQuery) -> RankedTypeList {
        self.suggest_with_seeds(query).0
    }

    /// Runs the pipeline and also returns the seeds that were scored.
    pub fn suggest_with_seeds(&self, query: &SeedQuery) -> (RankedTypeList, LinkedSeeds) {
        let linked = self.link_all(&query.terms);
        if linked.is_empty() {
            warn!(
                "none of the {} seed terms could be linked",
                query.terms.len()
            );
            return (RankedList::empty(), linked);
        }
        let seeds = self.expand_seeds(&linked, query.k);
        (score_types(self.graph, &seeds), seeds)
    }
}
