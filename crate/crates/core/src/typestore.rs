//! In-memory type system: entities, types, labels, instance-of and
//! subclass-of edges, with per-type entity counts and hop distances.
//!
//! The on-disk form is a three-column TSV of records:
//!
//! ```text
//! <type>    IS           TYPE
//! <type>    SUBCLASS_OF  <type>
//! <entity>  LABEL        <surface string>
//! <entity>  TYPE_OF      <type>
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Types must be
//! declared with an `IS TYPE` record before they can be referenced; an
//! entity is declared by carrying at least one `LABEL`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TypeStoreError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: reference to undeclared {kind} `{id}`")]
    Dangling {
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("line {line}: duplicate id `{id}`: {message}")]
    Duplicate {
        line: usize,
        id: String,
        message: String,
    },
    #[error("invalid type system: {0}")]
    Invalid(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

pub type Result<T> = std::result::Result<T, TypeStoreError>;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(EntityId);
string_id!(TypeId);

/// Hop count between two types, or no path at all.
pub type Distance = Option<usize>;

/// Immutable type system graph. Construct with [`TypeSystemGraph::builder`]
/// or [`load_type_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSystemGraph {
    entities: BTreeSet<EntityId>,
    types: BTreeSet<TypeId>,
    labels: BTreeMap<EntityId, Vec<String>>,
    instance_of: BTreeMap<EntityId, BTreeSet<TypeId>>,
    subclass_of: BTreeSet<(TypeId, TypeId)>,
    adjacency: BTreeMap<TypeId, BTreeSet<TypeId>>,
    stats: TypeStats,
}

/// Number of entities directly instance-of each type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TypeStats {
    pub entity_count: BTreeMap<TypeId, usize>,
}

#[derive(Debug, Default)]
pub struct GraphBuilder {
    types: BTreeSet<TypeId>,
    labels: BTreeMap<EntityId, Vec<String>>,
    instance_of: BTreeMap<EntityId, BTreeSet<TypeId>>,
    subclass_of: BTreeSet<(TypeId, TypeId)>,
}

impl GraphBuilder {
    pub fn add_type(&mut self, t: impl Into<String>) -> &mut Self {
        self.types.insert(TypeId::new(t));
        self
    }

    pub fn add_label(&mut self, e: impl Into<String>, label: impl Into<String>) -> &mut Self {
        let labels = self.labels.entry(EntityId::new(e)).or_default();
        let label = label.into();
        if !labels.contains(&label) {
            labels.push(label);
        }
        self
    }

    pub fn add_instance_of(&mut self, e: impl Into<String>, t: impl Into<String>) -> &mut Self {
        self.instance_of
            .entry(EntityId::new(e))
            .or_default()
            .insert(TypeId::new(t));
        self
    }

    pub fn add_subclass_of(&mut self, sub: impl Into<String>, sup: impl Into<String>) -> &mut Self {
        self.subclass_of
            .insert((TypeId::new(sub), TypeId::new(sup)));
        self
    }

    /// Validates the collected records and computes the type statistics.
    pub fn build(self) -> Result<TypeSystemGraph> {
        let entities: BTreeSet<EntityId> = self.labels.keys().cloned().collect();
        for t in &self.types {
            if t.as_str().is_empty() {
                return Err(TypeStoreError::Invalid("empty type id".into()));
            }
            if entities.contains(&EntityId::new(t.as_str())) {
                return Err(TypeStoreError::Invalid(format!(
                    "`{t}` is used both as an entity and as a type"
                )));
            }
        }
        for e in &entities {
            if e.as_str().is_empty() {
                return Err(TypeStoreError::Invalid("empty entity id".into()));
            }
            if !self.instance_of.get(e).is_some_and(|ts| !ts.is_empty()) {
                return Err(TypeStoreError::Invalid(format!("entity `{e}` has no type")));
            }
        }
        for (e, ts) in &self.instance_of {
            if !entities.contains(e) {
                return Err(TypeStoreError::Invalid(format!(
                    "entity `{e}` has no label"
                )));
            }
            if let Some(t) = ts.iter().find(|t| !self.types.contains(*t)) {
                return Err(TypeStoreError::UnknownType(t.to_string()));
            }
        }
        let mut adjacency: BTreeMap<TypeId, BTreeSet<TypeId>> = BTreeMap::new();
        for (a, b) in &self.subclass_of {
            if a == b {
                return Err(TypeStoreError::Invalid(format!("self-loop on `{a}`")));
            }
            for t in [a, b] {
                if !self.types.contains(t) {
                    return Err(TypeStoreError::UnknownType(t.to_string()));
                }
            }
            adjacency.entry(a.clone()).or_default().insert(b.clone());
            adjacency.entry(b.clone()).or_default().insert(a.clone());
        }

        let mut stats = TypeStats::default();
        for ts in self.instance_of.values() {
            for t in ts {
                *stats.entity_count.entry(t.clone()).or_default() += 1;
            }
        }

        Ok(TypeSystemGraph {
            entities,
            types: self.types,
            labels: self.labels,
            instance_of: self.instance_of,
            subclass_of: self.subclass_of,
            adjacency,
            stats,
        })
    }
}

impl TypeSystemGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.iter()
    }

    pub fn types(&self) -> impl Iterator<Item = &TypeId> {
        self.types.iter()
    }

    pub fn contains_type(&self, t: &TypeId) -> bool {
        self.types.contains(t)
    }

    pub fn contains_entity(&self, e: &EntityId) -> bool {
        self.entities.contains(e)
    }

    pub fn total_entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn labels(&self, e: &EntityId) -> &[String] {
        self.labels.get(e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All (entity, label) pairs in entity order.
    pub fn all_labels(&self) -> impl Iterator<Item = (&EntityId, &str)> {
        self.labels
            .iter()
            .flat_map(|(e, ls)| ls.iter().map(move |l| (e, l.as_str())))
    }

    pub fn subclass_edges(&self) -> impl Iterator<Item = &(TypeId, TypeId)> {
        self.subclass_of.iter()
    }

    pub fn stats(&self) -> &TypeStats {
        &self.stats
    }

    /// Number of entities directly typed `t`.
    pub fn entity_count(&self, t: &TypeId) -> Result<usize> {
        if !self.types.contains(t) {
            return Err(TypeStoreError::UnknownType(t.to_string()));
        }
        Ok(self.stats.entity_count.get(t).copied().unwrap_or(0))
    }

    /// Direct types of `e`; no closure over subclass edges.
    pub fn types_of(&self, e: &EntityId) -> Result<&BTreeSet<TypeId>> {
        self.instance_of
            .get(e)
            .ok_or_else(|| TypeStoreError::UnknownEntity(e.to_string()))
    }

    /// Shortest path length between two types with subclass edges taken as
    /// undirected.
    pub fn type_distance(&self, a: &TypeId, b: &TypeId) -> Result<Distance> {
        if !self.types.contains(b) {
            return Err(TypeStoreError::UnknownType(b.to_string()));
        }
        if !self.types.contains(a) {
            return Err(TypeStoreError::UnknownType(a.to_string()));
        }
        if a == b {
            return Ok(Some(0));
        }
        let mut seen: BTreeSet<&TypeId> = BTreeSet::from([a]);
        let mut queue = VecDeque::from([(a, 0usize)]);
        while let Some((t, d)) = queue.pop_front() {
            for n in self.adjacency.get(t).into_iter().flatten() {
                if n == b {
                    return Ok(Some(d + 1));
                }
                if seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        Ok(None)
    }

    /// BFS from `source`: every reachable type with its hop count,
    /// including `source` itself at 0.
    pub fn distances_from(&self, source: &TypeId) -> Result<BTreeMap<TypeId, usize>> {
        if !self.types.contains(source) {
            return Err(TypeStoreError::UnknownType(source.to_string()));
        }
        let mut dist = BTreeMap::new();
        dist.insert(source.clone(), 0usize);
        let mut queue = VecDeque::from([source]);
        while let Some(t) = queue.pop_front() {
            let d = dist[t];
            for n in self.adjacency.get(t).into_iter().flatten() {
                if !dist.contains_key(n) {
                    dist.insert(n.clone(), d + 1);
                    queue.push_back(n);
                }
            }
        }
        Ok(dist)
    }

    /// Writes the graph in canonical record order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.types {
            writeln!(w, "{t}\tIS\tTYPE")?;
        }
        for (a, b) in &self.subclass_of {
            writeln!(w, "{a}\tSUBCLASS_OF\t{b}")?;
        }
        for e in &self.entities {
            for l in self.labels(e) {
                writeln!(w, "{e}\tLABEL\t{l}")?;
            }
            for t in self.instance_of.get(e).into_iter().flatten() {
                writeln!(w, "{e}\tTYPE_OF\t{t}")?;
            }
        }
        Ok(())
    }
}

pub fn load_type_system(path: impl AsRef<Path>) -> Result<TypeSystemGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TypeStoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_type_system(&text)
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Entity,
    Type,
}

/// Parses the triple TSV format. References may appear before their
/// declarations; dangling references are reported at the line of first use.
pub fn parse_type_system(text: &str) -> Result<TypeSystemGraph> {
    let mut builder = GraphBuilder::default();
    let mut roles: BTreeMap<String, (Role, usize)> = BTreeMap::new();
    let mut type_refs: Vec<(String, usize)> = Vec::new();
    let mut typed_entities: Vec<(String, usize)> = Vec::new();

    let mut claim = |id: &str, role: Role, line: usize| -> Result<()> {
        if id.is_empty() {
            return Err(TypeStoreError::Parse {
                line,
                message: "empty identifier".into(),
            });
        }
        match roles.get(id) {
            Some((r, first)) if *r != role => Err(TypeStoreError::Duplicate {
                line,
                id: id.to_string(),
                message: format!("already used as a different kind on line {first}"),
            }),
            _ => {
                roles.entry(id.to_string()).or_insert((role, line));
                Ok(())
            }
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(TypeStoreError::Parse {
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (subject, relation, object) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        match relation {
            "IS" => {
                if object != "TYPE" {
                    return Err(TypeStoreError::Parse {
                        line,
                        message: format!("unknown declaration `{object}`"),
                    });
                }
                if builder.types.contains(&TypeId::new(subject)) {
                    return Err(TypeStoreError::Duplicate {
                        line,
                        id: subject.to_string(),
                        message: "type declared twice".into(),
                    });
                }
                claim(subject, Role::Type, line)?;
                builder.add_type(subject);
            }
            "LABEL" => {
                claim(subject, Role::Entity, line)?;
                if object.is_empty() {
                    return Err(TypeStoreError::Parse {
                        line,
                        message: "empty label".into(),
                    });
                }
                builder.add_label(subject, object);
            }
            "TYPE_OF" => {
                claim(subject, Role::Entity, line)?;
                claim(object, Role::Type, line)?;
                type_refs.push((object.to_string(), line));
                typed_entities.push((subject.to_string(), line));
                builder.add_instance_of(subject, object);
            }
            "SUBCLASS_OF" => {
                claim(subject, Role::Type, line)?;
                claim(object, Role::Type, line)?;
                if subject == object {
                    return Err(TypeStoreError::Parse {
                        line,
                        message: format!("self-loop on `{subject}`"),
                    });
                }
                type_refs.push((subject.to_string(), line));
                type_refs.push((object.to_string(), line));
                builder.add_subclass_of(subject, object);
            }
            other => {
                return Err(TypeStoreError::Parse {
                    line,
                    message: format!("unknown relation `{other}`"),
                })
            }
        }
    }

    if let Some((id, line)) = type_refs
        .iter()
        .find(|(t, _)| !builder.types.contains(&TypeId::new(t.as_str())))
    {
        return Err(TypeStoreError::Dangling {
            line: *line,
            kind: "type",
            id: id.clone(),
        });
    }
    if let Some((id, line)) = typed_entities
        .iter()
        .find(|(e, _)| !builder.labels.contains_key(&EntityId::new(e.as_str())))
    {
        return Err(TypeStoreError::Dangling {
            line: *line,
            kind: "entity",
            id: id.clone(),
        });
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> TypeSystemGraph {
        let mut b = TypeSystemGraph::builder();
        b.add_type("A")
            .add_type("B")
            .add_type("C")
            .add_type("X")
            .add_type("Y");
        b.add_subclass_of("A", "B").add_subclass_of("B", "C");
        b.add_subclass_of("X", "Y");
        b.add_label("e1", "one").add_instance_of("e1", "A");
        b.build().unwrap()
    }

    #[test]
    fn minimal_file() {
        let g = parse_type_system("T\tIS\tTYPE\ne\tLABEL\tthing\ne\tTYPE_OF\tT\n").unwrap();
        assert_eq!(g.total_entity_count(), 1);
        assert_eq!(g.type_count(), 1);
    }

    #[test]
    fn undeclared_type_is_dangling() {
        let err = parse_type_system("e\tLABEL\tthing\ne\tTYPE_OF\tT\n").unwrap_err();
        match err {
            TypeStoreError::Dangling { line, id, .. } => {
                assert_eq!(line, 2);
                assert_eq!(id, "T");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn entity_without_label_is_dangling() {
        let err = parse_type_system("T\tIS\tTYPE\ne\tTYPE_OF\tT\n").unwrap_err();
        assert!(matches!(
            err,
            TypeStoreError::Dangling { kind: "entity", .. }
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = parse_type_system("T\tIS\tTYPE\nT\tIS\tTYPE\n").unwrap_err();
        assert!(matches!(err, TypeStoreError::Duplicate { line: 2, .. }));
        let err = parse_type_system("T\tIS\tTYPE\nT\tLABEL\tx\n").unwrap_err();
        assert!(matches!(err, TypeStoreError::Duplicate { .. }));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_type_system("# c\nT\tIS\n").unwrap_err(),
            TypeStoreError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            parse_type_system("T\tIS\tTYPE\nT\tSUBCLASS_OF\tT\n").unwrap_err(),
            TypeStoreError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            parse_type_system("a\tKNOWS\tb\n").unwrap_err(),
            TypeStoreError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn entity_without_type_rejected() {
        assert!(parse_type_system("T\tIS\tTYPE\ne\tLABEL\tx\n").is_err());
    }

    #[test]
    fn entity_counts() {
        let mut b = TypeSystemGraph::builder();
        b.add_type("all").add_type("none");
        for i in 0..7 {
            b.add_label(format!("e{i}"), format!("l{i}"))
                .add_instance_of(format!("e{i}"), "all");
        }
        let g = b.build().unwrap();
        assert_eq!(g.entity_count(&"all".into()).unwrap(), 7);
        assert_eq!(g.entity_count(&"none".into()).unwrap(), 0);
        assert!(matches!(
            g.entity_count(&"nope".into()),
            Err(TypeStoreError::UnknownType(_))
        ));
    }

    #[test]
    fn distances() {
        let g = chain();
        let d = |a: &str, b: &str| g.type_distance(&a.into(), &b.into()).unwrap();
        assert_eq!(d("A", "A"), Some(0));
        assert_eq!(d("A", "C"), Some(2));
        assert_eq!(d("C", "A"), Some(2));
        assert_eq!(d("A", "X"), None);
        assert!(g.type_distance(&"A".into(), &"Q".into()).is_err());
    }

    #[test]
    fn types_of_is_direct_only() {
        let g = chain();
        let ts = g.types_of(&"e1".into()).unwrap();
        assert_eq!(ts.iter().map(TypeId::as_str).collect::<Vec<_>>(), ["A"]);
        assert!(matches!(
            g.types_of(&"zz".into()),
            Err(TypeStoreError::UnknownEntity(_))
        ));
    }

    #[test]
    fn reserialize_round_trip() {
        let g = chain();
        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let g2 = parse_type_system(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(g, g2);
    }
}
