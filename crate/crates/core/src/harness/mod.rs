//! Corpus generation and ingestion, scenario execution and reporting.

mod dataset;
mod names;
mod scenario;
mod synthetic;

use thiserror::Error;

use crate::baseline::{CodecError, Scheme};
use crate::correlation::{Gazetteer, TaskKind};
use crate::embeddings::{ClassVocabulary, EmbeddingError, Embeddings};
use crate::metrics::MetricsError;
use crate::protocol::ProtocolError;
use crate::reconstruct::ReconstructError;
use crate::semantics::{ImageRaster, SemanticBundle, SemanticsError};

pub use dataset::{
    image_file, ingest_annotations, parse_annotations, write_corpus, AnnotatedImage, AnnotatedInstance,
    AnnotationSet, DirCorpus,
};
pub use names::{category_names, COCO_CATEGORIES, EXTRA_NOUNS, PERSON_SYNONYMS};
pub use scenario::{
    generate_tasks, run_progressive, run_scenario, write_outputs, ProgressiveOutput, ProgressiveSpec, ScenarioConfig,
    ScenarioOutput, StageRender, Task, TaskSpec,
};
pub use synthetic::{caption_for, synthetic_knowledge, CorpusConfig, SyntheticCorpus};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("schema error at {pointer:?}: {message}")]
    Schema { pointer: String, message: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error("session {session_id} ({scheme}, {task}): {source}")]
    Session { session_id: u16, scheme: Scheme, task: TaskKind, source: ProtocolError },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    /// True for errors caused by the user's configuration or input files
    /// rather than by a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::ConfigInvalid(_) | HarnessError::Schema { .. })
    }
}

/// Word vectors, class vocabulary and noun list shared by both endpoints.
#[derive(Clone, Debug)]
pub struct Knowledge {
    pub table: Embeddings<f64>,
    pub vocab: ClassVocabulary,
    pub nouns: Gazetteer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusImage {
    pub bundle: SemanticBundle,
    /// Ground truth, when the corpus has it.
    pub raster: Option<ImageRaster>,
}

/// An indexed image collection with per-image category presence.
pub trait Corpus: Sync {
    fn categories(&self) -> &[String];
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Sorted, distinct category ids present in `image`.
    fn presence(&self, image: usize) -> &[u8];
    fn load(&self, image: usize) -> Result<CorpusImage, HarnessError>;
    fn knowledge(&self) -> &Knowledge;
}
