//! Receiver-side correlation analysis.
//!
//! Entity words are pulled out of the task description and the received
//! caption, compared in embedding space, and mapped onto A-seg categories to
//! decide whether more sub-semantics are worth requesting.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::{cosine_similarity, nearest_category, ClassVocabulary, EmbeddingError, Embeddings};
use crate::protocol::FeedbackMessage;
use crate::semantics::{ElementKind, IsText};
use crate::Real;

/// Similarity threshold used when a scenario does not set one.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Caption,
    Segmentation,
    Reconstruction,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Caption, TaskKind::Segmentation, TaskKind::Reconstruction];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Caption => "caption",
            TaskKind::Segmentation => "segmentation",
            TaskKind::Reconstruction => "reconstruction",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub kind: TaskKind,
    pub description: String,
}

impl TaskDescriptor {
    pub fn new(kind: TaskKind, description: impl Into<String>) -> Option<Self> {
        let description = description.into();
        (!description.trim().is_empty()).then_some(Self { kind, description })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceDecision<T> {
    pub relevant: bool,
    pub matched_categories: Vec<String>,
    pub best_score: T,
}

impl<T: Real> RelevanceDecision<T> {
    fn irrelevant() -> Self {
        Self { relevant: false, matched_categories: Vec::new(), best_score: -T::one() }
    }
}

/// Noun list used as the entity recognizer: one lowercase noun per line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Gazetteer(HashSet<String>);

impl Gazetteer {
    pub fn parse(text: &str) -> Self {
        Self(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    /// One noun per line, sorted.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&String> = self.0.iter().collect();
        words.sort();
        words.into_iter().map(|w| format!("{w}\n")).collect()
    }
}

impl<S: Into<String>> FromIterator<S> for Gazetteer {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

fn strip_plural<'a, T: Real>(token: &'a str, lexicon: &Embeddings<T>) -> &'a str {
    for suffix in ["es", "s"] {
        if let Some(stem) = token.strip_suffix(suffix) {
            if !stem.is_empty() && lexicon.contains(stem) {
                return stem;
            }
        }
    }
    token
}

/// Entity words of `text` in order of appearance, duplicates kept.
///
/// Tokens are lowercased alphanumeric runs; a trailing "es" or "s" is dropped
/// when the stem is a lexicon word; survivors must be in both the lexicon and
/// the gazetteer.
pub fn extract_entities<T: Real>(text: &str, lexicon: &Embeddings<T>, nouns: &Gazetteer) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| strip_plural(t, lexicon))
        .filter(|t| lexicon.contains(t) && nouns.contains(t))
        .map(str::to_string)
        .collect()
}

/// Decides whether the image behind `caption` is relevant to `task`.
///
/// Caption tasks are satisfied by the text alone and short-circuit to an
/// irrelevant decision, as does a side with no entity words.
pub fn assess_relevance<T: Real>(
    task: &TaskDescriptor,
    caption: &IsText,
    table: &Embeddings<T>,
    vocab: &ClassVocabulary,
    nouns: &Gazetteer,
    threshold: T,
) -> Result<RelevanceDecision<T>, EmbeddingError> {
    if task.kind == TaskKind::Caption {
        return Ok(RelevanceDecision::irrelevant());
    }
    let task_words = extract_entities(&task.description, table, nouns);
    let caption_words = extract_entities(caption.as_str(), table, nouns);
    if task_words.is_empty() || caption_words.is_empty() {
        return Ok(RelevanceDecision::irrelevant());
    }
    let vec_of = |w: &str| table.get(w).ok_or_else(|| EmbeddingError::UnknownWord(w.to_string()));
    let mut best = -T::one();
    let mut hits: Vec<&str> = Vec::new();
    for c in &caption_words {
        let cv = vec_of(c)?;
        let mut c_best = -T::one();
        for t in &task_words {
            c_best = c_best.max(cosine_similarity(vec_of(t)?, cv)?);
        }
        best = best.max(c_best);
        if c_best >= threshold && !hits.contains(&c.as_str()) {
            hits.push(c);
        }
    }
    if best < threshold {
        return Ok(RelevanceDecision { relevant: false, matched_categories: Vec::new(), best_score: best });
    }
    let mut matched = Vec::new();
    for c in hits {
        let (name, _) = nearest_category(c, table, vocab)?;
        if !matched.contains(&name) {
            matched.push(name);
        }
    }
    Ok(RelevanceDecision { relevant: true, matched_categories: matched, best_score: best })
}

/// Feedback for the transmitter given the decision and the next ladder kind
/// (`None` once the ladder is exhausted).
pub fn make_feedback<T: Real>(
    decision: &RelevanceDecision<T>,
    next: Option<ElementKind>,
    vocab: &ClassVocabulary,
) -> FeedbackMessage {
    match next {
        Some(kind) if decision.relevant => FeedbackMessage::Request {
            kind,
            categories: decision.matched_categories.iter().filter_map(|n| vocab.id_of(n)).collect(),
        },
        _ => FeedbackMessage::Complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Embeddings<f64> {
        Embeddings::parse("5 3\ncat 1 0 0\ndog 0 1 0\nbus 0 0 1\nglass 1 1 0\nfield 1 0 1").unwrap()
    }

    #[test]
    fn plural_strip_and_gazetteer() {
        let t = table();
        let g: Gazetteer = ["cat", "dog", "bus", "glass"].into_iter().collect();
        let got = extract_entities("Cats, DOGS and buses; the glasses in a field.", &t, &g);
        assert_eq!(got, vec!["cat", "dog", "bus", "glass"]);
        assert!(extract_entities("", &t, &g).is_empty());
    }

    #[test]
    fn decisions() {
        let t = table();
        let g: Gazetteer = ["cat", "dog", "bus"].into_iter().collect();
        let vocab = ClassVocabulary::new(vec!["cat".into(), "dog".into(), "bus".into()], &t).unwrap();
        let cap = IsText::new("a cat and a dog").unwrap();
        let same = TaskDescriptor::new(TaskKind::Segmentation, "segment the dog and the cat").unwrap();
        let d = assess_relevance(&same, &cap, &t, &vocab, &g, 1.0).unwrap();
        assert!(d.relevant);
        assert!((d.best_score - 1.0).abs() < 1e-12);
        assert_eq!(d.matched_categories, vec!["cat", "dog"]);

        let other = TaskDescriptor::new(TaskKind::Reconstruction, "rebuild the bus").unwrap();
        let d = assess_relevance(&other, &cap, &t, &vocab, &g, 0.5).unwrap();
        assert!(!d.relevant);
        assert_eq!(d.best_score, 0.0);
        assert!(d.matched_categories.is_empty());

        let nothing = TaskDescriptor::new(TaskKind::Segmentation, "segment everything").unwrap();
        let d = assess_relevance(&nothing, &cap, &t, &vocab, &g, 0.5).unwrap();
        assert_eq!((d.relevant, d.best_score), (false, -1.0));

        let caption = TaskDescriptor::new(TaskKind::Caption, "describe the cat").unwrap();
        let d = assess_relevance(&caption, &cap, &t, &vocab, &g, 0.5).unwrap();
        assert!(!d.relevant);
        assert_eq!(make_feedback(&d, Some(ElementKind::Aseg), &vocab), FeedbackMessage::Complete);
    }

    #[test]
    fn feedback_messages() {
        let t = table();
        let vocab = ClassVocabulary::new(vec!["cat".into(), "dog".into()], &t).unwrap();
        let yes = RelevanceDecision { relevant: true, matched_categories: vec!["dog".into()], best_score: 0.9 };
        let no = RelevanceDecision::<f64> { relevant: false, matched_categories: vec![], best_score: 0.1 };
        assert_eq!(
            make_feedback(&yes, Some(ElementKind::Aseg), &vocab),
            FeedbackMessage::Request { kind: ElementKind::Aseg, categories: vec![1] }
        );
        assert_eq!(make_feedback(&yes, None, &vocab), FeedbackMessage::Complete);
        assert_eq!(make_feedback(&no, Some(ElementKind::Aseg), &vocab), FeedbackMessage::Complete);
    }
}
