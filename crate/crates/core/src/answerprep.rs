//! Distant supervision for answer typing. Every question–answer pair gets a
//! ranked list of answer types, either a coarse class from rule-based
//! recognition or the type suggester's ranking for the answer string. The
//! types are then cut down to a frequency-pruned vocabulary and anything
//! outside it is remapped to the nearest vocabulary type in the graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use log::{debug, info};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::typestore::{TypeId, TypeSystemGraph};
use crate::typesuggest::{RankedList, SeedQuery, TypeSuggester};

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no examples survived type acquisition")]
    EmptyDataset,
    #[error("type restriction removed every knowledge-graph type")]
    EmptyVocabulary,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PrepError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAPair {
    pub index: usize,
    pub question: String,
    pub answer: String,
}

/// The six coarse answer classes handled by rule-based recognition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoarseClass {
    Date,
    Cardinal,
    Ordinal,
    Quantity,
    Money,
    Percent,
}

impl CoarseClass {
    pub const ALL: [CoarseClass; 6] = [
        CoarseClass::Date,
        CoarseClass::Cardinal,
        CoarseClass::Ordinal,
        CoarseClass::Quantity,
        CoarseClass::Money,
        CoarseClass::Percent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoarseClass::Date => "Date",
            CoarseClass::Cardinal => "Cardinal",
            CoarseClass::Ordinal => "Ordinal",
            CoarseClass::Quantity => "Quantity",
            CoarseClass::Money => "Money",
            CoarseClass::Percent => "Percent",
        }
    }
}

/// Namespace used when coarse classes are written next to graph types.
pub const COARSE_PREFIX: &str = "ner:";

/// An entry of the answer-type vocabulary: a coarse class or a graph type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnswerType {
    Coarse(CoarseClass),
    Kg(TypeId),
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerType::Coarse(c) => write!(f, "{COARSE_PREFIX}{}", c.name()),
            AnswerType::Kg(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for AnswerType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty type label".into());
        }
        if let Some(name) = s.strip_prefix(COARSE_PREFIX) {
            return CoarseClass::ALL
                .into_iter()
                .find(|c| c.name() == name)
                .map(AnswerType::Coarse)
                .ok_or_else(|| format!("unknown coarse class `{name}`"));
        }
        Ok(AnswerType::Kg(TypeId::new(s)))
    }
}

impl Serialize for AnswerType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnswerType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type AnswerTypeList = RankedList<AnswerType>;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedExample {
    pub question: String,
    pub answer: String,
    pub types: AnswerTypeList,
}

/// Hyper-parameters of dataset preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    /// How many of the most frequent graph types to keep.
    pub restriction_k: usize,
    /// Types whose document frequency reaches this count are dropped as
    /// too generic.
    pub threshold_c: usize,
    /// Weight given to a coarse-class label.
    pub ner_score: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            restriction_k: 50,
            threshold_c: 1000,
            ner_score: 1.0,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restriction_k == 0 {
            return Err(PrepError::Config("restriction_k must be at least 1".into()));
        }
        if self.threshold_c == 0 {
            return Err(PrepError::Config("threshold_c must be at least 1".into()));
        }
        if !(self.ner_score.is_finite() && self.ner_score > 0.0) {
            return Err(PrepError::Config("ner_score must be positive".into()));
        }
        Ok(())
    }
}

/// The answer-type vocabulary in row order: the six coarse classes first,
/// then the surviving graph types by descending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeVocabulary {
    types: Vec<AnswerType>,
    index: BTreeMap<AnswerType, usize>,
    pub restriction_k: usize,
    pub threshold_c: usize,
}

impl TypeVocabulary {
    pub fn from_kg_types(kg: Vec<TypeId>, restriction_k: usize, threshold_c: usize) -> Self {
        let types: Vec<AnswerType> = CoarseClass::ALL
            .into_iter()
            .map(AnswerType::Coarse)
            .chain(kg.into_iter().map(AnswerType::Kg))
            .collect();
        let index = types
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Self {
            types,
            index,
            restriction_k,
            threshold_c,
        }
    }

    pub fn types(&self) -> &[AnswerType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn contains(&self, t: &AnswerType) -> bool {
        self.index.contains_key(t)
    }

    pub fn index_of(&self, t: &AnswerType) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn kg_types(&self) -> impl Iterator<Item = &TypeId> {
        self.types.iter().filter_map(|t| match t {
            AnswerType::Kg(id) => Some(id),
            AnswerType::Coarse(_) => None,
        })
    }

    /// One label per line in row order.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.types {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }
}

static DATE_RE: LazyLock<Regex> = LazyLock::new(|| {
    let month = r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?";
    let weekday = r"(?:mon|tues|wednes|thurs|fri|satur|sun)day";
    let year = r"(?:1[0-9]{3}|20[0-9]{2})";
    let pattern = format!(
        r"^(?:{year}|{year}s|(?:the )?{year}s|{year}[-/][0-9]{{1,2}}[-/][0-9]{{1,2}}|[0-9]{{1,2}}[-/.][0-9]{{1,2}}[-/.][0-9]{{2,4}}|{month}(?: [0-9]{{1,2}}(?:st|nd|rd|th)?)?(?:,? {year})?|[0-9]{{1,2}}(?:st|nd|rd|th)? (?:of )?{month}(?:,? {year})?|{weekday}|(?:the )?[0-9]{{1,2}}(?:st|nd|rd|th) century|{year} (?:ad|bc|bce|ce)|[0-9]{{1,4}} (?:ad|bc|bce|ce))$"
    );
    Regex::new(&pattern).unwrap()
});

const NUMBER: &str = r"(?:[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.[0-9]+)?";
const SCALE: &str = r"(?: (?:thousand|million|billion|trillion|k|m|bn))?";

static MONEY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:(?:[$€£¥]|us\$|usd |eur |gbp ){NUMBER}{SCALE}|{NUMBER}{SCALE} ?(?:dollars?|euros?|pounds sterling|yen|usd|eur|gbp|cents?|rupees?|yuan|francs?)|{NUMBER}{SCALE} ?[$€£¥])$"
    ))
    .unwrap()
});

static PERCENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"^-?{NUMBER} ?(?:%|percent|per cent|pct)$")).unwrap());

static ORDINAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:(?:the )?[0-9]*(?:1st|2nd|3rd|[04-9]th|1[0-9]th)|(?:the )?(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|eleventh|twelfth|thirteenth|fourteenth|fifteenth|sixteenth|seventeenth|eighteenth|nineteenth|twentieth|thirtieth|fortieth|fiftieth|hundredth|thousandth|last))$",
    )
    .unwrap()
});

static QUANTITY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^-?{NUMBER}{SCALE} ?(?:mm|cm|m|km|kilomet(?:er|re)s?|met(?:er|re)s?|centimet(?:er|re)s?|millimet(?:er|re)s?|miles?|feet|foot|ft|inch(?:es)?|in|yards?|kg|kilograms?|g|grams?|mg|lbs?|pounds?|ounces?|oz|tons?|tonnes?|l|lit(?:er|re)s?|ml|gallons?|acres?|hectares?|sq km|square (?:kilomet(?:er|re)s|miles|met(?:er|re)s|feet)|km2|mph|km/h|knots?|degrees?(?: (?:celsius|fahrenheit))?|°c|°f|°|kelvin|calories?|kcal|watts?|kw|mw|volts?|bytes?|kb|mb|gb|tb)$"
    ))
    .unwrap()
});

static CARDINAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    let word = r"(?:zero|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety|hundred|thousand|million|billion|trillion|dozen|a|and)";
    Regex::new(&format!(
        r"^(?:-?{NUMBER}{SCALE}|(?:about |around |approximately |over |under )?{NUMBER}{SCALE}|{word}(?:[ -]{word})*)$"
    ))
    .unwrap()
});

/// Rule-based coarse recognizer. The whole answer must match one pattern;
/// precedence is Date, Money, Percent, Ordinal, Quantity, Cardinal.
pub fn coarse_ner(answer: &str) -> Option<CoarseClass> {
    let a = answer.trim().to_lowercase();
    let a = a.split_whitespace().collect::<Vec<_>>().join(" ");
    if a.is_empty() || a == "a" || a == "and" {
        return None;
    }
    let cascade: [(CoarseClass, &Regex); 6] = [
        (CoarseClass::Date, &DATE_RE),
        (CoarseClass::Money, &MONEY_RE),
        (CoarseClass::Percent, &PERCENT_RE),
        (CoarseClass::Ordinal, &ORDINAL_RE),
        (CoarseClass::Quantity, &QUANTITY_RE),
        (CoarseClass::Cardinal, &CARDINAL_RE),
    ];
    cascade
        .into_iter()
        .find(|(_, re)| re.is_match(&a))
        .map(|(c, _)| c)
}

/// Labels one pair, or `None` when neither recognizer nor suggester has
/// anything to say about the answer.
pub fn acquire_types(
    suggester: &TypeSuggester<'_>,
    pair: &QAPair,
    cfg: &PrepConfig,
) -> Option<AugmentedExample> {
    let types = if let Some(class) = coarse_ner(&pair.answer) {
        RankedList::from_unsorted(vec![(AnswerType::Coarse(class), cfg.ner_score)])
    } else {
        // a single answer is a single seed: no expansion
        let query = SeedQuery::new(vec![pair.answer.clone()], 1)?;
        let ranked = suggester.suggest(&query);
        if ranked.is_empty() {
            debug!("pair {}: answer `{}` has no type", pair.index, pair.answer);
            return None;
        }
        RankedList::from_unsorted(
            ranked
                .into_entries()
                .into_iter()
                .map(|(t, s)| (AnswerType::Kg(t), s))
                .collect(),
        )
    };
    Some(AugmentedExample {
        question: pair.question.clone(),
        answer: pair.answer.clone(),
        types,
    })
}

/// Document frequency of each graph type across the dataset.
pub fn type_frequencies(dataset: &[AugmentedExample]) -> BTreeMap<TypeId, usize> {
    let mut freq = BTreeMap::new();
    for ex in dataset {
        let seen: BTreeSet<&TypeId> = ex
            .types
            .entries()
            .iter()
            .filter_map(|(t, _)| match t {
                AnswerType::Kg(id) => Some(id),
                AnswerType::Coarse(_) => None,
            })
            .collect();
        for t in seen {
            *freq.entry(t.clone()).or_insert(0) += 1;
        }
    }
    freq
}

/// Keeps the `restriction_k` most frequent graph types, drops those at or
/// above `threshold_c`, and adds the coarse classes.
pub fn build_vocabulary(
    dataset: &[AugmentedExample],
    restriction_k: usize,
    threshold_c: usize,
) -> Result<TypeVocabulary> {
    vocabulary_from_frequencies(&type_frequencies(dataset), restriction_k, threshold_c)
}

pub fn vocabulary_from_frequencies(
    freq: &BTreeMap<TypeId, usize>,
    restriction_k: usize,
    threshold_c: usize,
) -> Result<TypeVocabulary> {
    if restriction_k == 0 || threshold_c == 0 {
        return Err(PrepError::Config(
            "restriction_k and threshold_c must be at least 1".into(),
        ));
    }
    let mut ranked: Vec<(&TypeId, usize)> = freq.iter().map(|(t, &n)| (t, n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(restriction_k);
    let had_candidates = !ranked.is_empty();
    let kept: Vec<TypeId> = ranked
        .into_iter()
        .filter(|&(_, n)| n < threshold_c)
        .map(|(t, _)| t.clone())
        .collect();
    if had_candidates && kept.is_empty() {
        return Err(PrepError::EmptyVocabulary);
    }
    Ok(TypeVocabulary::from_kg_types(
        kept,
        restriction_k,
        threshold_c,
    ))
}

/// Outcome of restricting one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Restricted {
    pub example: AugmentedExample,
    pub remapped: usize,
    pub dropped: usize,
}

/// Nearest vocabulary graph type to `t`, ties by smaller id.
pub fn nearest_vocab_type(
    g: &TypeSystemGraph,
    t: &TypeId,
    vocab: &TypeVocabulary,
) -> Option<(TypeId, usize)> {
    let dist = g.distances_from(t).ok()?;
    vocab
        .kg_types()
        .filter_map(|v| dist.get(v).map(|&d| (d, v)))
        .min()
        .map(|(d, v)| (v.clone(), d))
}

/// Keeps in-vocabulary types, remaps the rest to their nearest vocabulary
/// type, drops unreachable ones and merges duplicates by summing weights.
/// Entries with non-positive weight are dropped.
pub fn restrict_types(
    g: &TypeSystemGraph,
    example: &AugmentedExample,
    vocab: &TypeVocabulary,
) -> Restricted {
    let mut merged: BTreeMap<AnswerType, f64> = BTreeMap::new();
    let (mut remapped, mut dropped) = (0, 0);
    for (t, s) in example.types.entries() {
        let target = if vocab.contains(t) {
            Some(t.clone())
        } else if let AnswerType::Kg(id) = t {
            nearest_vocab_type(g, id, vocab).map(|(v, _)| AnswerType::Kg(v))
        } else {
            None
        };
        match target {
            Some(x) => {
                if &x != t {
                    remapped += 1;
                }
                *merged.entry(x).or_insert(0.0) += s;
            }
            None => dropped += 1,
        }
    }
    let entries: Vec<(AnswerType, f64)> = merged.into_iter().filter(|(_, s)| *s > 0.0).collect();
    Restricted {
        example: AugmentedExample {
            question: example.question.clone(),
            answer: example.answer.clone(),
            types: RankedList::from_unsorted(entries),
        },
        remapped,
        dropped,
    }
}

/// Rescales weights to sum to one. Returns `None` for an empty or
/// all-zero list.
pub fn normalize_weights(list: &AnswerTypeList) -> Option<AnswerTypeList> {
    let total: f64 = list.entries().iter().map(|(_, s)| s).sum();
    if list.is_empty() || total.is_nan() || total <= 0.0 {
        return None;
    }
    Some(RankedList::from_unsorted(
        list.entries()
            .iter()
            .map(|(t, s)| (t.clone(), s / total))
            .collect(),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrepSummary {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub remapped: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub vocabulary: TypeVocabulary,
    pub examples: Vec<AugmentedExample>,
    pub summary: PrepSummary,
}

/// Acquisition, vocabulary construction and restriction for a whole set of
/// pairs. Output order follows input order.
pub fn prepare_dataset(
    suggester: &TypeSuggester<'_>,
    pairs: &[QAPair],
    cfg: &PrepConfig,
) -> Result<PreparedDataset> {
    cfg.validate()?;
    let acquired: Vec<AugmentedExample> = pairs
        .iter()
        .filter_map(|p| acquire_types(suggester, p, cfg))
        .collect();
    if acquired.is_empty() {
        return Err(PrepError::EmptyDataset);
    }
    let vocabulary = build_vocabulary(&acquired, cfg.restriction_k, cfg.threshold_c)?;
    let mut summary = PrepSummary {
        input: pairs.len(),
        ..Default::default()
    };
    let mut examples = Vec::with_capacity(acquired.len());
    for ex in &acquired {
        let r = restrict_types(suggester.graph(), ex, &vocabulary);
        summary.remapped += r.remapped;
        match normalize_weights(&r.example.types) {
            Some(types) => examples.push(AugmentedExample { types, ..r.example }),
            None => debug!("answer `{}` lost all types in restriction", ex.answer),
        }
    }
    if examples.is_empty() {
        return Err(PrepError::EmptyDataset);
    }
    summary.kept = examples.len();
    summary.dropped = pairs.len() - examples.len();
    info!(
        "prepared {} of {} pairs, {} types remapped, vocabulary size {}",
        summary.kept,
        summary.input,
        summary.remapped,
        vocabulary.len()
    );
    Ok(PreparedDataset {
        vocabulary,
        examples,
        summary,
    })
}

/// Reads `question<TAB>answer` lines; blank lines and `#` comments skipped.
pub fn parse_qa_tsv(text: &str) -> Result<Vec<QAPair>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (q, a) = raw.split_once('\t').ok_or_else(|| PrepError::Parse {
            line,
            message: "expected question<TAB>answer".into(),
        })?;
        let (q, a) = (q.trim(), a.trim());
        if q.is_empty() || a.is_empty() || a.contains('\t') {
            return Err(PrepError::Parse {
                line,
                message: "question and answer must be non-empty single fields".into(),
            });
        }
        pairs.push(QAPair {
            index: pairs.len(),
            question: q.to_string(),
            answer: a.to_string(),
        });
    }
    Ok(pairs)
}

pub fn load_qa_tsv(path: impl AsRef<Path>) -> Result<Vec<QAPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_qa_tsv(&text)
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    question: String,
    answer: String,
    types: Vec<(AnswerType, f64)>,
}

/// One JSON object per line: `{"question", "answer", "types": [[type, weight], ...]}`.
pub fn write_dataset<W: Write>(examples: &[AugmentedExample], mut w: W) -> std::io::Result<()> {
    for ex in examples {
        let rec = ExampleRecord {
            question: ex.question.clone(),
            answer: ex.answer.clone(),
            types: ex.types.entries().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_dataset(text: &str) -> Result<Vec<AugmentedExample>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(raw).map_err(|e| PrepError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let mut seen = BTreeSet::new();
        if rec.types.is_empty()
            || rec
                .types
                .iter()
                .any(|(t, s)| !s.is_finite() || *s <= 0.0 || !seen.insert(t.clone()))
        {
            return Err(PrepError::Parse {
                line: idx + 1,
                message: "types must be non-empty, distinct, with positive finite weights".into(),
            });
        }
        out.push(AugmentedExample {
            question: rec.question,
            answer: rec.answer,
            types: RankedList::from_unsorted(rec.types),
        });
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<AugmentedExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

/// Reads a vocabulary sidecar: one type label per line, row order.
pub fn parse_vocabulary_labels(text: &str) -> Result<Vec<AnswerType>> {
    let mut out: Vec<AnswerType> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let t: AnswerType = raw.parse().map_err(|message| PrepError::Parse {
            line: idx + 1,
            message,
        })?;
        if !seen.insert(t.clone()) {
            return Err(PrepError::Parse {
                line: idx + 1,
                message: format!("duplicate type `{t}`"),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_vocabulary_labels(path: impl AsRef<Path>) -> Result<Vec<AnswerType>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_vocabulary_labels(&text)
}
