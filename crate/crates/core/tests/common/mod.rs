//! Brute-force oracles and random fixtures shared by the integration tests
//! and the acceptance suite. Nothing here calls the library's own scoring,
//! distance or remapping code.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use kgtype::answerprep::{AnswerType, AugmentedExample, CoarseClass, TypeVocabulary};
use kgtype::neuralnet::model::TrainingSample;
use kgtype::neuralnet::AnswerTypeModel;
use kgtype::typestore::{TypeId, TypeSystemGraph};
use kgtype::typesuggest::RankedList;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(rel)
}

/// A type system as plain index lists.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub types: Vec<String>,
    /// Direct types of each entity, by index into `types`.
    pub entity_types: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn random(rng: &mut ChaCha8Rng, max_entities: usize, max_types: usize) -> Self {
        let nt = rng.gen_range(1..=max_types);
        // unpadded names so that lexicographic and index order disagree
        let types = (0..nt).map(|i| format!("t{i}")).collect();
        let ne = rng.gen_range(1..=max_entities);
        let entity_types = (0..ne)
            .map(|_| {
                let k = rng.gen_range(1..=nt.min(3));
                let mut ts = rand::seq::index::sample(rng, nt, k).into_vec();
                ts.sort_unstable();
                ts
            })
            .collect();
        let mut edges = Vec::new();
        if nt > 1 {
            let density = rng.gen_range(0.0..1.5);
            let n_edges = (density * nt as f64) as usize;
            for _ in 0..n_edges {
                let a = rng.gen_range(0..nt);
                let b = rng.gen_range(0..nt);
                if a != b && !edges.contains(&(a, b)) {
                    edges.push((a, b));
                }
            }
        }
        Self {
            types,
            entity_types,
            edges,
        }
    }

    pub fn entity(i: usize) -> String {
        format!("e{i}")
    }

    pub fn label(i: usize) -> String {
        format!("thing {i}")
    }

    pub fn build(&self) -> TypeSystemGraph {
        let mut b = TypeSystemGraph::builder();
        for t in &self.types {
            b.add_type(t.as_str());
        }
        for (i, ts) in self.entity_types.iter().enumerate() {
            b.add_label(Self::entity(i), Self::label(i));
            for &t in ts {
                b.add_instance_of(Self::entity(i), self.types[t].as_str());
            }
        }
        for &(a, c) in &self.edges {
            b.add_subclass_of(self.types[a].as_str(), self.types[c].as_str());
        }
        b.build().expect("random spec is a valid graph")
    }

    /// All-pairs undirected hop counts.
    pub fn floyd_warshall(&self) -> Vec<Vec<Option<usize>>> {
        let n = self.types.len();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in &self.edges {
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d.into_iter()
            .map(|row| row.into_iter().map(|x| (x < inf).then_some(x)).collect())
            .collect()
    }

    /// Count(t) × (ln Z − ln EntityCount(t)) for every type of the seeds,
    /// sorted by score descending, then name.
    pub fn brute_force_scores(&self, seeds: &[usize]) -> Vec<(String, f64)> {
        let z = self.entity_types.len() as f64;
        let mut out = Vec::new();
        for (t, name) in self.types.iter().enumerate() {
            let count = seeds
                .iter()
                .filter(|&&e| self.entity_types[e].contains(&t))
                .count();
            if count == 0 {
                continue;
            }
            let population = self
                .entity_types
                .iter()
                .filter(|ts| ts.contains(&t))
                .count();
            out.push((
                name.clone(),
                count as f64 * (z.ln() - (population as f64).ln()),
            ));
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn random_seeds(&self, rng: &mut ChaCha8Rng, max: usize) -> Vec<usize> {
        let n = self.entity_types.len();
        let k = rng.gen_range(1..=max.min(n));
        rand::seq::index::sample(rng, n, k).into_vec()
    }
}

/// A random remapping problem: a graph, a vocabulary over some of its
/// types, and one example carrying a weighted list of graph types.
pub struct RemapCase {
    pub spec: GraphSpec,
    pub graph: TypeSystemGraph,
    pub vocab: TypeVocabulary,
    pub vocab_idx: Vec<usize>,
    pub example: AugmentedExample,
}

impl RemapCase {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GraphSpec::random(&mut rng, 12, 12);
        let graph = spec.build();
        let nt = spec.types.len();
        let nv = rng.gen_range(1..=nt);
        let mut vocab_idx = rand::seq::index::sample(&mut rng, nt, nv).into_vec();
        vocab_idx.sort_unstable();
        let mut kg: Vec<TypeId> = vocab_idx
            .iter()
            .map(|&i| TypeId::new(&spec.types[i]))
            .collect();
        kg.shuffle(&mut rng);
        let vocab = TypeVocabulary::from_kg_types(kg, nv, usize::MAX);

        let n_ex = rng.gen_range(1..=nt.min(5));
        let mut entries: Vec<(AnswerType, f64)> = rand::seq::index::sample(&mut rng, nt, n_ex)
            .into_iter()
            .map(|i| {
                (
                    AnswerType::Kg(TypeId::new(&spec.types[i])),
                    rng.gen_range(0.01..5.0),
                )
            })
            .collect();
        if rng.gen_bool(0.3) {
            entries.push((
                AnswerType::Coarse(CoarseClass::Date),
                rng.gen_range(0.01..5.0),
            ));
        }
        let example = AugmentedExample {
            question: "q".into(),
            answer: "a".into(),
            types: RankedList::from_unsorted(entries),
        };
        Self {
            spec,
            graph,
            vocab,
            vocab_idx,
            example,
        }
    }

    /// Expected restricted weights: nearest vocabulary type by exhaustive
    /// search over all-pairs distances, ties by name; unreachable dropped.
    pub fn expected(&self) -> BTreeMap<AnswerType, f64> {
        let d = self.spec.floyd_warshall();
        let index: BTreeMap<&str, usize> = self
            .spec
            .types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut out: BTreeMap<AnswerType, f64> = BTreeMap::new();
        for (t, w) in self.example.types.entries() {
            let target = match t {
                AnswerType::Coarse(_) => Some(t.clone()),
                AnswerType::Kg(id) => {
                    let i = index[id.as_str()];
                    self.vocab_idx
                        .iter()
                        .filter_map(|&v| d[i][v].map(|dist| (dist, &self.spec.types[v])))
                        .min()
                        .map(|(_, name)| AnswerType::Kg(TypeId::new(name)))
                }
            };
            if let Some(x) = target {
                *out.entry(x).or_insert(0.0) += w;
            }
        }
        out
    }
}

/// A small random model and one sample in its vocabulary.
pub fn random_model(seed: u64) -> (AnswerTypeModel, TrainingSample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = rng.gen_range(1..=8);
    let vocab = rng.gen_range(1..=10);
    let din = rng.gen_range(1..=6);
    let hidden = rng.gen_range(1..=5);
    let bound = rng.gen_range(0.05..2.0);
    let model = AnswerTypeModel::random(types, vocab, din, hidden, bound, &mut rng);
    let len = rng.gen_range(1..=8);
    let tokens = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
    let target = rng.gen_range(0..types);
    (
        model,
        TrainingSample {
            tokens,
            targets: vec![(target, 1.0)],
        },
    )
}

/// A random end-to-end preparation: pairs whose answers are entity labels,
/// coarse-class strings or noise, prepared with random limits. `None` when
/// the limits leave nothing to prepare.
pub fn random_prepared(seed: u64) -> Option<(GraphSpec, kgtype::answerprep::PreparedDataset)> {
    use kgtype::answerprep::{prepare_dataset, PrepConfig, QAPair};
    use kgtype::embedstore::EmbeddingStore;
    use kgtype::typesuggest::TypeSuggester;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GraphSpec::random(&mut rng, 15, 10);
    let graph = spec.build();
    let store = EmbeddingStore::from_pairs([("thing", vec![1.0, 0.5])]).unwrap();
    let suggester = TypeSuggester::new(&graph, &store);
    let noise = ["1999", "42", "$5 million", "12%", "third", "3 km", "zzqx"];
    let n = rng.gen_range(1..=12);
    let pairs: Vec<QAPair> = (0..n)
        .map(|i| {
            let answer = if rng.gen_bool(0.75) {
                GraphSpec::label(rng.gen_range(0..spec.entity_types.len()))
            } else {
                noise.choose(&mut rng).unwrap().to_string()
            };
            QAPair {
                index: i + 1,
                question: format!("question {i}"),
                answer,
            }
        })
        .collect();
    let cfg = PrepConfig {
        restriction_k: rng.gen_range(1..=spec.types.len()),
        threshold_c: rng.gen_range(1..=spec.entity_types.len() + 2),
        ner_score: rng.gen_range(0.1..3.0),
    };
    prepare_dataset(&suggester, &pairs, &cfg)
        .ok()
        .map(|p| (spec, p))
}

pub mod invariants {
    use super::*;
    use kgtype::answerprep::{normalize_weights, restrict_types};
    use kgtype::neuralnet::model::{rank_desc, softmax};

    pub type Check = Result<(), String>;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn psi_unit_or_zero(seed: u64) -> Check {
        let (mut model, sample) = random_model(seed);
        if seed.is_multiple_of(5) {
            model.params.encoder.att.fill(0.0);
        }
        let enc = model
            .encode_question(&sample.tokens)
            .map_err(|e| e.to_string())?;
        let n = norm(&enc.psi);
        if enc.psi.iter().all(|&x| x == 0.0) || (n - 1.0).abs() < 1e-9 {
            Ok(())
        } else {
            Err(format!("seed {seed}: |psi| = {n}"))
        }
    }

    pub fn softmax_sums_to_one(seed: u64) -> Check {
        let (model, sample) = random_model(seed);
        let pred = model
            .predict_tokens(&sample.tokens)
            .map_err(|e| e.to_string())?;
        let s: f64 = pred.scores.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(format!("seed {seed}: model probabilities sum to {s}"));
        }
        // extreme logits must not overflow
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..rng.gen_range(1..20))
            .map(|_| rng.gen_range(-800.0..800.0))
            .collect();
        let p = softmax(&logits);
        let s: f64 = p.iter().sum();
        if p.iter().any(|x| !x.is_finite()) || (s - 1.0).abs() > 1e-6 {
            return Err(format!(
                "seed {seed}: softmax of extreme logits sums to {s}"
            ));
        }
        Ok(())
    }

    pub fn ranking_matches_probabilities(seed: u64) -> Check {
        let (model, sample) = random_model(seed);
        let pred = model
            .predict_tokens(&sample.tokens)
            .map_err(|e| e.to_string())?;
        let by_logit = rank_desc(&pred.logits);
        let by_prob = rank_desc(&pred.scores);
        if by_logit != pred.ranking || by_prob != pred.ranking {
            return Err(format!(
                "seed {seed}: ranking {:?}, by logit {by_logit:?}, by probability {by_prob:?}",
                pred.ranking
            ));
        }
        Ok(())
    }

    pub fn weights_sum_to_one(seed: u64) -> Check {
        if let Some((_, prepared)) = random_prepared(seed) {
            for ex in &prepared.examples {
                let s: f64 = ex.types.entries().iter().map(|(_, w)| w).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(format!("seed {seed}: `{}` weights sum to {s}", ex.answer));
                }
            }
        }
        let case = RemapCase::random(seed);
        let restricted = restrict_types(&case.graph, &case.example, &case.vocab);
        if let Some(list) = normalize_weights(&restricted.example.types) {
            let s: f64 = list.entries().iter().map(|(_, w)| w).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(format!("seed {seed}: normalized weights sum to {s}"));
            }
        }
        Ok(())
    }

    pub fn restricted_types_in_vocabulary(seed: u64) -> Check {
        if let Some((_, prepared)) = random_prepared(seed) {
            for ex in &prepared.examples {
                if let Some((t, _)) = ex
                    .types
                    .entries()
                    .iter()
                    .find(|(t, _)| !prepared.vocabulary.contains(t))
                {
                    return Err(format!("seed {seed}: `{t}` is outside the vocabulary"));
                }
            }
        }
        let case = RemapCase::random(seed);
        let restricted = restrict_types(&case.graph, &case.example, &case.vocab);
        match restricted
            .example
            .types
            .entries()
            .iter()
            .find(|(t, _)| !case.vocab.contains(t))
        {
            Some((t, _)) => Err(format!("seed {seed}: `{t}` survived restriction")),
            None => Ok(()),
        }
    }

    pub type Property = (&'static str, fn(u64) -> Check);

    pub const ALL: [Property; 5] = [
        ("psi is unit-norm or zero", psi_unit_or_zero),
        ("softmax sums to one", softmax_sums_to_one),
        (
            "logit ranking equals probability ranking",
            ranking_matches_probabilities,
        ),
        ("supervision weights sum to one", weights_sum_to_one),
        (
            "restricted types lie in the vocabulary",
            restricted_types_in_vocabulary,
        ),
    ];
}

pub mod oracles {
    use super::*;
    use kgtype::answerprep::{nearest_vocab_type, restrict_types};
    use kgtype::typestore::EntityId;
    use kgtype::typesuggest::{score_types, LinkedSeeds};

    pub type Check = Result<(), String>;

    /// `score_types` against the brute-force evaluator: same types, same
    /// order, scores within 1e-9.
    pub fn scores_match(seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GraphSpec::random(&mut rng, 30, 10);
        let g = spec.build();
        let seeds = spec.random_seeds(&mut rng, 5);
        let mut linked = LinkedSeeds::default();
        for &e in &seeds {
            linked.push(GraphSpec::label(e), EntityId::new(GraphSpec::entity(e)));
        }
        let got = score_types(&g, &linked);
        let want = spec.brute_force_scores(&seeds);
        let got_names: Vec<&str> = got.entries().iter().map(|(t, _)| t.as_str()).collect();
        let want_names: Vec<&str> = want.iter().map(|(t, _)| t.as_str()).collect();
        if got_names != want_names {
            return Err(format!(
                "seed {seed}: order {got_names:?}, expected {want_names:?}"
            ));
        }
        for ((t, a), (_, b)) in got.entries().iter().zip(&want) {
            if (a - b).abs() > 1e-9 {
                return Err(format!("seed {seed}: `{t}` scored {a}, expected {b}"));
            }
        }
        Ok(())
    }

    /// `type_distance` against Floyd–Warshall on every ordered pair.
    pub fn distances_match(seed: u64) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GraphSpec::random(&mut rng, 30, 50);
        let g = spec.build();
        let fw = spec.floyd_warshall();
        for (i, a) in spec.types.iter().enumerate() {
            for (j, b) in spec.types.iter().enumerate() {
                let got = g
                    .type_distance(&TypeId::new(a), &TypeId::new(b))
                    .map_err(|e| e.to_string())?;
                if got != fw[i][j] {
                    return Err(format!(
                        "seed {seed}: d({a}, {b}) = {got:?}, expected {:?}",
                        fw[i][j]
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every remapped type lands on a vocabulary type no farther than any
    /// other vocabulary type, and the restricted weights are what the
    /// exhaustive remapping predicts.
    pub fn remap_is_minimal(seed: u64) -> Check {
        let case = RemapCase::random(seed);
        let fw = case.spec.floyd_warshall();
        let idx = |t: &TypeId| {
            case.spec
                .types
                .iter()
                .position(|x| x == t.as_str())
                .unwrap()
        };
        for (t, _) in case.example.types.entries() {
            let AnswerType::Kg(id) = t else { continue };
            if case.vocab.contains(t) {
                continue;
            }
            let i = idx(id);
            match nearest_vocab_type(&case.graph, id, &case.vocab) {
                Some((v, d)) => {
                    let dv = fw[i][idx(&v)];
                    if dv != Some(d) {
                        return Err(format!(
                            "seed {seed}: {id} -> {v} reported {d}, actual {dv:?}"
                        ));
                    }
                    for &o in &case.vocab_idx {
                        if let Some(dother) = fw[i][o] {
                            if dother < d {
                                return Err(format!(
                                    "seed {seed}: {id} -> {v} at {d}, but {} is at {dother}",
                                    case.spec.types[o]
                                ));
                            }
                        }
                    }
                }
                None => {
                    if let Some(&o) = case.vocab_idx.iter().find(|&&o| fw[i][o].is_some()) {
                        return Err(format!(
                            "seed {seed}: {id} dropped but {} is reachable",
                            case.spec.types[o]
                        ));
                    }
                }
            }
        }
        let got: BTreeMap<AnswerType, f64> =
            restrict_types(&case.graph, &case.example, &case.vocab)
                .example
                .types
                .into_entries()
                .into_iter()
                .collect();
        let want = case.expected();
        if got.len() != want.len()
            || got
                .iter()
                .zip(&want)
                .any(|((a, x), (b, y))| a != b || (x - y).abs() > 1e-12)
        {
            return Err(format!(
                "seed {seed}: restricted {got:?}, expected {want:?}"
            ));
        }
        Ok(())
    }
}
