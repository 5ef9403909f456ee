//! The shared vector database: word embeddings for every class name.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("zero vector for {0}")]
    ZeroVector(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("{0}")]
    Io(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Parse { line, msg: msg.into() }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Word to unit-vector table.
///
/// Text format: a `count dim` header line, then one `word c1 ... cdim` line
/// per word. Words are lowercased and vectors normalized on load.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings<T> {
    dim: usize,
    entries: BTreeMap<String, Vec<T>>,
}

impl<T: Real> Embeddings<T> {
    /// Builds a table from raw vectors, normalizing each one.
    pub fn from_vectors<I, S>(dim: usize, vectors: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (i, (word, mut v)) in vectors.into_iter().enumerate() {
            let word = word.into().to_lowercase();
            if v.len() != dim {
                return Err(EmbeddingError::DimMismatch(dim, v.len()));
            }
            let n = norm(&v);
            if !n.is_finite() {
                return Err(parse_err(i + 2, format!("non-finite vector for {word:?}")));
            }
            if n == T::zero() {
                return Err(EmbeddingError::ZeroVector(word));
            }
            v.iter_mut().for_each(|x| *x = *x / n);
            if entries.insert(word.clone(), v).is_some() {
                return Err(parse_err(i + 2, format!("duplicate word {word:?}")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let mut head = header.split_whitespace().map(str::parse::<usize>);
        let (count, dim) = match (head.next(), head.next(), head.next()) {
            (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
            _ => return Err(parse_err(1, format!("bad header {header:?}"))),
        };
        let mut rows = Vec::with_capacity(count);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut parts = line.split_whitespace();
            let word = parts.next().ok_or_else(|| parse_err(lineno, "missing word"))?;
            let v = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map(T::of)
                        .map_err(|_| parse_err(lineno, format!("non-numeric component {p:?}")))
                })
                .collect::<Result<Vec<T>, _>>()?;
            if v.len() != dim {
                return Err(parse_err(lineno, format!("{} components, header says {dim}", v.len())));
            }
            rows.push((word.to_string(), v));
        }
        if rows.len() != count {
            return Err(parse_err(1, format!("header count {count}, found {} rows", rows.len())));
        }
        Self::from_vectors(dim, rows)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes in the load format; `parse(to_text())` reproduces the table.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.entries.len(), self.dim);
        for (word, v) in &self.entries {
            out.push_str(word);
            for x in v {
                out.push(' ');
                out.push_str(&x.as_f64().to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Unit vector for a possibly multi-word name: the word itself when
    /// present, otherwise the renormalized mean of its words' vectors.
    pub fn embed(&self, name: &str) -> Option<Vec<T>> {
        let name = name.to_lowercase();
        if let Some(v) = self.entries.get(&name) {
            return Some(v.clone());
        }
        let mut acc = vec![T::zero(); self.dim];
        let mut words = 0usize;
        for w in name.split_whitespace() {
            let v = self.entries.get(w)?;
            acc.iter_mut().zip(v).for_each(|(a, &x)| *a = *a + x);
            words += 1;
        }
        let n = norm(&acc);
        if words == 0 || n == T::zero() {
            return None;
        }
        acc.iter_mut().for_each(|a| *a = *a / n);
        Some(acc)
    }
}

pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() {
        return Err(EmbeddingError::ZeroVector("left operand".into()));
    }
    if nv == T::zero() {
        return Err(EmbeddingError::ZeroVector("right operand".into()));
    }
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    Ok((dot / (nu * nv)).max(-T::one()).min(T::one()))
}

/// Ordered class names; a category id is the index into this list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub const MAX_CLASSES: usize = 255;

    /// Builds a vocabulary whose every name can be embedded by `table`.
    pub fn new<T: Real>(names: Vec<String>, table: &Embeddings<T>) -> Result<Self, EmbeddingError> {
        if names.len() > Self::MAX_CLASSES {
            return Err(EmbeddingError::Vocabulary(format!("{} classes exceed 255", names.len())));
        }
        let names: Vec<String> = names.into_iter().map(|n| n.to_lowercase()).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(EmbeddingError::Vocabulary(format!("duplicate class {n:?}")));
            }
            if table.embed(n).is_none() {
                return Err(EmbeddingError::Vocabulary(format!("class {n:?} has no embedding")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| i as u8)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Category whose embedding is most similar to `query`; ties go to the lowest id.
pub fn nearest_category_to<T: Real>(
    query: &[T],
    table: &Embeddings<T>,
    vocab: &ClassVocabulary,
) -> Result<(u8, T), EmbeddingError> {
    let mut best: Option<(u8, T)> = None;
    for (id, name) in vocab.names.iter().enumerate() {
        let v = table.embed(name).ok_or_else(|| EmbeddingError::UnknownWord(name.clone()))?;
        let s = cosine_similarity(query, &v)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id as u8, s));
        }
    }
    best.ok_or_else(|| EmbeddingError::Vocabulary("empty vocabulary".into()))
}

pub fn nearest_category<T: Real>(
    word: &str,
    table: &Embeddings<T>,
    vocab: &ClassVocabulary,
) -> Result<(String, T), EmbeddingError> {
    let q = table.get(word).ok_or_else(|| EmbeddingError::UnknownWord(word.to_string()))?;
    let (id, s) = nearest_category_to(q, table, vocab)?;
    Ok((vocab.names[id as usize].clone(), s))
}
