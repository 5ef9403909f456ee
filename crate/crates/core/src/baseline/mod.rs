//! The conventional digital scheme and byte accounting.
//!
//! Sizes are tracked in integer hundredths of a byte ([`CentiBytes`]) so that
//! sums and means over many sessions are exact and order-independent.

pub mod dct;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::TaskKind;
use crate::policy::{knowledge_policy, EscalationLadder, LadderPreset};
use crate::protocol::{PayloadKind, SessionLog};
use crate::semantics::ElementKind;

pub use dct::{dct_decode, dct_encode, CodecError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
    #[error("invalid size model: {0}")]
    InvalidSizeModel(String),
}

/// Hundredths of a byte.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CentiBytes(pub u64);

impl CentiBytes {
    pub const ZERO: CentiBytes = CentiBytes(0);

    pub fn from_bytes(bytes: u64) -> Self {
        Self(bytes * 100)
    }

    /// Rounds to the nearest hundredth.
    pub fn from_f64(bytes: f64) -> Self {
        Self((bytes * 100.0).round().max(0.0) as u64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Add for CentiBytes {
    type Output = CentiBytes;
    fn add(self, o: CentiBytes) -> CentiBytes {
        CentiBytes(self.0 + o.0)
    }
}

impl std::ops::AddAssign for CentiBytes {
    fn add_assign(&mut self, o: CentiBytes) {
        self.0 += o.0;
    }
}

impl std::iter::Sum for CentiBytes {
    fn sum<I: Iterator<Item = CentiBytes>>(iter: I) -> Self {
        CentiBytes(iter.map(|c| c.0).sum())
    }
}

impl fmt::Display for CentiBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Digital,
    DigitalKnowledge,
    IscKnowledge,
    #[serde(rename = "multirate")]
    MultiRate,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Digital, Scheme::DigitalKnowledge, Scheme::IscKnowledge, Scheme::MultiRate];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Digital => "digital",
            Scheme::DigitalKnowledge => "digital_knowledge",
            Scheme::IscKnowledge => "isc_knowledge",
            Scheme::MultiRate => "multirate",
        }
    }

    /// Small stable code, used to derive per-scheme session ids.
    pub fn code(self) -> u16 {
        self as u16
    }

    /// JPEG-style quality a digital scheme compresses at, `None` for the
    /// semantic schemes.
    pub fn image_quality(self, task: TaskKind) -> Option<u8> {
        match (self, task) {
            (Scheme::Digital, _) => Some(30),
            (Scheme::DigitalKnowledge, TaskKind::Caption) => Some(25),
            (Scheme::DigitalKnowledge, _) => Some(30),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BaselineError::UnknownScheme(s.to_string()))
    }
}

/// Whether semantic bytes come from the codecs or from [`SizeModel`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMode {
    Measured,
    #[default]
    Configured,
}

impl SizeMode {
    pub fn name(self) -> &'static str {
        match self {
            SizeMode::Measured => "measured",
            SizeMode::Configured => "configured",
        }
    }
}

/// Average bytes per artifact used in configured mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeModel {
    pub jpeg_q1: f64,
    pub jpeg_q25: f64,
    pub jpeg_q30: f64,
    pub istext: f64,
    pub aseg: f64,
    pub bseg: f64,
}

impl Default for SizeModel {
    fn default() -> Self {
        Self { jpeg_q1: 2094.93, jpeg_q25: 4684.57, jpeg_q30: 5761.12, istext: 200.0, aseg: 1952.09, bseg: 2650.29 }
    }
}

impl SizeModel {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let fields = [
            ("jpeg_q1", self.jpeg_q1),
            ("jpeg_q25", self.jpeg_q25),
            ("jpeg_q30", self.jpeg_q30),
            ("istext", self.istext),
            ("aseg", self.aseg),
            ("bseg", self.bseg),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(BaselineError::InvalidSizeModel(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Configured size of an element; `None` for sub-images, which have no
    /// configured average.
    pub fn element(&self, kind: ElementKind) -> Option<CentiBytes> {
        match kind {
            ElementKind::Text => Some(CentiBytes::from_f64(self.istext)),
            ElementKind::Aseg => Some(CentiBytes::from_f64(self.aseg)),
            ElementKind::Bseg => Some(CentiBytes::from_f64(self.bseg)),
            ElementKind::Simg => None,
        }
    }

    /// Configured size of a compressed image at quality `q`, for the
    /// qualities the model knows.
    pub fn image(&self, q: u8) -> Option<CentiBytes> {
        match q {
            1 => Some(CentiBytes::from_f64(self.jpeg_q1)),
            25 => Some(CentiBytes::from_f64(self.jpeg_q25)),
            30 => Some(CentiBytes::from_f64(self.jpeg_q30)),
            _ => None,
        }
    }

    /// Size of one transmitted payload; falls back to the measured length
    /// when the model has no entry for it.
    pub fn payload(&self, payload: PayloadKind, measured: u64, mode: SizeMode) -> CentiBytes {
        let configured = match (mode, payload) {
            (SizeMode::Measured, _) => None,
            (SizeMode::Configured, PayloadKind::Element(k)) => self.element(k),
            (SizeMode::Configured, PayloadKind::Image(q)) => self.image(q),
        };
        configured.unwrap_or(CentiBytes::from_bytes(measured))
    }

    /// Semantic bytes of a whole session under `mode`.
    pub fn session(&self, log: &SessionLog, mode: SizeMode) -> CentiBytes {
        log.elements.iter().map(|e| self.payload(e.payload, e.bytes, mode)).sum()
    }
}

fn elements_size(model: &SizeModel, kinds: &[ElementKind]) -> CentiBytes {
    kinds.iter().map(|&k| model.element(k).unwrap_or(CentiBytes::ZERO)).sum()
}

/// Configured per-task cost of a scheme. For the feedback-driven scheme
/// this is the cost when the whole ladder is used, i.e. the relevant case.
pub fn accounted_size(scheme: Scheme, task: TaskKind, model: &SizeModel) -> CentiBytes {
    match scheme {
        Scheme::Digital | Scheme::DigitalKnowledge => {
            model.image(scheme.image_quality(task).expect("digital scheme")).expect("configured quality")
        }
        Scheme::IscKnowledge => elements_size(model, &knowledge_policy(task)),
        Scheme::MultiRate => elements_size(model, EscalationLadder::preset(LadderPreset::Table2, task).kinds()),
    }
}

/// Expected per-task cost when a fraction `relevance` of tasks escalate.
pub fn expected_size(scheme: Scheme, task: TaskKind, model: &SizeModel, relevance: f64) -> f64 {
    match scheme {
        Scheme::MultiRate => {
            let kinds = EscalationLadder::preset(LadderPreset::Table2, task);
            let text = model.element(ElementKind::Text).unwrap_or_default().as_f64();
            let sub = elements_size(model, &kinds.kinds()[1..]).as_f64();
            crate::policy::expected_multirate_bytes(text, sub, relevance)
        }
        _ => accounted_size(scheme, task, model).as_f64(),
    }
}
