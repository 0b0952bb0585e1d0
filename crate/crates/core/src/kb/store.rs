use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct Sense {
    pub entity: String,
    pub vector: Vec<f64>,
}

/// Word, sense and entity vectors sharing one dimension.
///
/// Tables keep insertion order so that a saved store reloads and re-saves
/// to identical bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    words: IndexMap<String, Vec<f64>>,
    senses: IndexMap<String, Sense>,
    entities: IndexMap<String, Vec<f64>>,
    // entity id -> first sense id referring to it
    sense_of_entity: IndexMap<String, String>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            words: IndexMap::new(),
            senses: IndexMap::new(),
            entities: IndexMap::new(),
            sense_of_entity: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_vector(&self, what: &str, key: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Data(format!(
                "{what} `{key}` has {} components, expected {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("{what} `{key}` has non-finite components")));
        }
        Ok(())
    }

    pub fn add_word(&mut self, surface: &str, vector: Vec<f64>) -> Result<()> {
        self.check_vector("word", surface, &vector)?;
        if self.words.contains_key(surface) {
            return Err(Error::Data(format!("duplicate word `{surface}`")));
        }
        self.words.insert(surface.to_string(), vector);
        Ok(())
    }

    pub fn add_entity(&mut self, id: &str, vector: Vec<f64>) -> Result<()> {
        self.check_vector("entity", id, &vector)?;
        if self.entities.contains_key(id) {
            return Err(Error::Data(format!("duplicate entity `{id}`")));
        }
        self.entities.insert(id.to_string(), vector);
        Ok(())
    }

    /// Adds a sense vector. The referenced entity must already exist.
    pub fn add_sense(&mut self, id: &str, entity: &str, vector: Vec<f64>) -> Result<()> {
        self.check_vector("sense", id, &vector)?;
        if self.senses.contains_key(id) {
            return Err(Error::Data(format!("duplicate sense `{id}`")));
        }
        if !self.entities.contains_key(entity) {
            return Err(Error::Data(format!(
                "sense `{id}` refers to unknown entity `{entity}`"
            )));
        }
        self.sense_of_entity
            .entry(entity.to_string())
            .or_insert_with(|| id.to_string());
        self.senses.insert(
            id.to_string(),
            Sense {
                entity: entity.to_string(),
                vector,
            },
        );
        Ok(())
    }

    pub fn word(&self, surface: &str) -> Option<&[f64]> {
        self.words.get(surface).map(Vec::as_slice)
    }

    pub fn entity(&self, id: &str) -> Option<&[f64]> {
        self.entities.get(id).map(Vec::as_slice)
    }

    pub fn sense(&self, id: &str) -> Option<&Sense> {
        self.senses.get(id)
    }

    /// The sense vector tied to `entity`, if the store has one.
    pub fn sense_for_entity(&self, entity: &str) -> Option<&[f64]> {
        self.sense_of_entity
            .get(entity)
            .and_then(|s| self.senses.get(s))
            .map(|s| s.vector.as_slice())
    }

    pub fn word_mut(&mut self, surface: &str) -> Option<&mut Vec<f64>> {
        self.words.get_mut(surface)
    }

    pub fn entity_mut(&mut self, id: &str) -> Option<&mut Vec<f64>> {
        self.entities.get_mut(id)
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn entities(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entities.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn senses(&self) -> impl Iterator<Item = (&str, &Sense)> {
        self.senses.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn sense_count(&self) -> usize {
        self.senses.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("d {}\n", self.dim);
        let push = |out: &mut String, v: &[f64]| {
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        };
        for (e, v) in &self.entities {
            out.push_str("e ");
            out.push_str(e);
            push(&mut out, v);
        }
        for (s, sense) in &self.senses {
            let _ = write!(out, "s {s} {}", sense.entity);
            push(&mut out, &sense.vector);
        }
        for (w, v) in &self.words {
            out.push_str("w ");
            out.push_str(w);
            push(&mut out, v);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the text format; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut store: Option<EmbeddingStore> = None;
        let mut pending_senses = Vec::new();
        for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some(store) = store.as_mut() else {
                if fields.len() != 2 || fields[0] != "d" {
                    return Err(Error::parse(origin, lineno, "expected header `d <dim>`"));
                }
                let dim = fields[1]
                    .parse::<usize>()
                    .map_err(|_| Error::parse(origin, lineno, "bad dimension"))?;
                store = Some(
                    EmbeddingStore::new(dim).map_err(|e| Error::parse(origin, lineno, e.to_string()))?,
                );
                continue;
            };
            let dim = store.dim;
            let split_vector = |min_keys: usize| -> Result<(Vec<&str>, Vec<f64>)> {
                if fields.len() < 1 + min_keys + dim {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("expected {dim} components, found {}", fields.len().saturating_sub(1 + min_keys)),
                    ));
                }
                let cut = fields.len() - dim;
                let vector = fields[cut..]
                    .iter()
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse(origin, lineno, "malformed float"))?;
                Ok((fields[1..cut].to_vec(), vector))
            };
            let at_line = |e: Error| Error::parse(origin, lineno, e.to_string());
            match fields[0] {
                "w" => {
                    let (keys, v) = split_vector(1)?;
                    store.add_word(&keys.join(" "), v).map_err(at_line)?;
                }
                "e" => {
                    let (keys, v) = split_vector(1)?;
                    if keys.len() != 1 {
                        return Err(Error::parse(origin, lineno, "entity ids are single tokens"));
                    }
                    store.add_entity(keys[0], v).map_err(at_line)?;
                }
                "s" => {
                    let (keys, v) = split_vector(2)?;
                    if keys.len() != 2 {
                        return Err(Error::parse(origin, lineno, "expected `s <sense_id> <entity_id> ...`"));
                    }
                    pending_senses.push((lineno, keys[0].to_string(), keys[1].to_string(), v));
                }
                other => {
                    return Err(Error::parse(origin, lineno, format!("unknown record type `{other}`")));
                }
            }
        }
        let mut store = store.ok_or_else(|| Error::parse(origin, 0, "missing header `d <dim>`"))?;
        // senses may precede the entities they point to
        for (lineno, id, entity, v) in pending_senses {
            store
                .add_sense(&id, &entity, v)
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        }
        Ok(store)
    }
}

/// Cosine similarity; zero vectors are rejected.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "cosine",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Entity relatedness in `[0, 1]`: clamped cosine, and 1 for an entity with itself.
pub fn relatedness(a: &str, b: &str, store: &EmbeddingStore) -> Result<f64> {
    let va = store.entity(a).ok_or_else(|| Error::Lookup {
        kind: "entity",
        id: a.to_string(),
    })?;
    let vb = store.entity(b).ok_or_else(|| Error::Lookup {
        kind: "entity",
        id: b.to_string(),
    })?;
    if a == b {
        return Ok(1.0);
    }
    Ok(cosine(va, vb)?.max(0.0))
}
