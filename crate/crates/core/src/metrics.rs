//! Evaluation: BLEU, PSNR and the per-scheme byte report.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{CentiBytes, Scheme, SizeMode};
use crate::correlation::TaskKind;
use crate::semantics::ImageRaster;

pub const REPORT_SCHEMA: &str = "report_v1";
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no non-empty reference")]
    EmptyReference,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram count.
fn clipped<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> (usize, usize) {
    let cand = ngrams(candidate, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (g, c) in ngrams(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`, the shorter one on ties.
fn closest_ref_len<S>(references: &[Vec<S>], c: usize) -> usize {
    references.iter().map(Vec::len).min_by_key(|&r| (r.abs_diff(c), r)).unwrap_or(0)
}

fn combine(precisions: &[(f64, f64)], c: usize, r: usize) -> f64 {
    if c == 0 || precisions.iter().any(|&(num, den)| num == 0.0 || den == 0.0) {
        return 0.0;
    }
    let log_p: f64 = precisions.iter().map(|&(num, den)| (num / den).ln()).sum::<f64>() / precisions.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

/// Sentence BLEU in [0, 1]: geometric mean of clipped n-gram precisions
/// for n = 1..=max_n times the brevity penalty. With `smoothing`, orders
/// n >= 2 add one to both numerator and denominator.
pub fn bleu<S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<S>],
    max_n: usize,
    smoothing: bool,
) -> Result<f64, MetricsError> {
    if max_n == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    if references.iter().all(Vec::is_empty) {
        return Err(MetricsError::EmptyReference);
    }
    let precisions: Vec<(f64, f64)> = (1..=max_n)
        .map(|n| {
            let (m, d) = clipped(candidate, references, n);
            if smoothing && n >= 2 {
                (m as f64 + 1.0, d as f64 + 1.0)
            } else {
                (m as f64, d as f64)
            }
        })
        .collect();
    Ok(combine(&precisions, candidate.len(), closest_ref_len(references, candidate.len())))
}

/// Corpus BLEU: n-gram statistics and lengths pooled before combining.
pub fn corpus_bleu<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<Vec<S>>)],
    max_n: usize,
    smoothing: bool,
) -> Result<f64, MetricsError> {
    if max_n == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    let mut stats = vec![(0.0, 0.0); max_n];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refs) in pairs {
        if refs.iter().all(Vec::is_empty) {
            return Err(MetricsError::EmptyReference);
        }
        for (n, s) in stats.iter_mut().enumerate() {
            let (m, d) = clipped(cand, refs, n + 1);
            s.0 += m as f64;
            s.1 += d as f64;
        }
        c += cand.len();
        r += closest_ref_len(refs, cand.len());
    }
    if smoothing {
        for s in stats.iter_mut().skip(1) {
            s.0 += 1.0;
            s.1 += 1.0;
        }
    }
    Ok(combine(&stats, c, r))
}

pub fn mse(a: &ImageRaster, b: &ImageRaster) -> Result<f64, MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let n = a.pixels().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sse: u64 = a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64).sum();
    Ok(sse as f64 / n as f64)
}

/// PSNR in dB over all RGB samples, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageRaster, b: &ImageRaster) -> Result<f64, MetricsError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0f64 * 255.0 / m).log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuMode {
    Sentence,
    Corpus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: bool,
    pub mode: BleuMode,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { max_n: 4, smoothing: true, mode: BleuMode::Sentence }
    }
}

/// One finished session as seen by the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: u16,
    pub scheme: Scheme,
    pub task: TaskKind,
    pub image_id: u32,
    pub target: String,
    pub semantic: CentiBytes,
    pub measured_bytes: u64,
    pub wire_bytes: u64,
    pub retransmissions: u32,
    pub relevant: Option<bool>,
    /// Received caption tokens against the reference caption; ×100.
    pub bleu: Option<f64>,
    #[serde(skip)]
    pub bleu_tokens: Option<(Vec<String>, Vec<String>)>,
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub task: TaskKind,
    pub count: u64,
    pub semantic_sum: CentiBytes,
    pub mean_semantic_bytes: f64,
    pub mean_wire_bytes: f64,
    pub bleu: Option<f64>,
    pub psnr: Option<f64>,
    /// Reserved for externally computed perceptual metrics.
    pub lpips: Option<f64>,
    pub fid: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub scheme: Scheme,
    /// `None` for the average over tasks.
    pub task: Option<TaskKind>,
    pub reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByteReport {
    pub schema: String,
    pub size_mode: SizeMode,
    pub bleu: BleuConfig,
    pub rows: Vec<ReportRow>,
    /// `1 - mean(scheme) / mean(digital)`.
    pub reductions: Vec<Reduction>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub size_mode: SizeMode,
    pub bleu: BleuConfig,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Default)]
struct Acc<'a> {
    count: u64,
    semantic: CentiBytes,
    wire: u64,
    bleu: Vec<&'a SessionRecord>,
    psnr: Vec<f64>,
}

impl ByteReport {
    pub fn row(&self, scheme: Scheme, task: TaskKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.task == task)
    }

    /// Mean of the per-task means of `scheme`.
    pub fn overall_mean(&self, scheme: Scheme) -> Option<f64> {
        let means: Vec<f64> = self.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.mean_semantic_bytes).collect();
        mean_of(&means)
    }

    pub fn reduction(&self, scheme: Scheme, task: Option<TaskKind>) -> Option<f64> {
        self.reductions.iter().find(|r| r.scheme == scheme && r.task == task).map(|r| r.reduction)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "schema",
            "size_mode",
            "scheme",
            "task",
            "count",
            "mean_semantic_bytes",
            "mean_wire_bytes",
            "reduction_vs_digital",
            "bleu",
            "psnr",
            "lpips",
            "fid",
        ])
        .expect("csv header");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        for r in &self.rows {
            w.write_record([
                REPORT_SCHEMA.to_string(),
                self.size_mode.name().to_string(),
                r.scheme.name().to_string(),
                r.task.name().to_string(),
                r.count.to_string(),
                format!("{:.2}", r.mean_semantic_bytes),
                format!("{:.2}", r.mean_wire_bytes),
                opt(self.reduction(r.scheme, Some(r.task))),
                opt(r.bleu),
                opt(r.psnr),
                opt(r.lpips),
                opt(r.fid),
            ])
            .expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8")
    }
}

/// Aggregates sessions per (scheme, task). Sums are integers, so the result
/// does not depend on record order.
pub fn build_report(records: &[SessionRecord], config: &ReportConfig) -> ByteReport {
    let mut groups: BTreeMap<(Scheme, TaskKind), Acc> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.scheme, r.task)).or_default();
        g.count += 1;
        g.semantic += r.semantic;
        g.wire += r.wire_bytes;
        if r.bleu_tokens.is_some() || r.bleu.is_some() {
            g.bleu.push(r);
        }
        if let Some(p) = r.psnr {
            g.psnr.push(p);
        }
    }
    let rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((scheme, task), g)| {
            let mut bleu_of = g.bleu;
            bleu_of.sort_by_key(|r| r.session_id);
            ReportRow {
                scheme,
                task,
                count: g.count,
                semantic_sum: g.semantic,
                mean_semantic_bytes: g.semantic.0 as f64 / 100.0 / g.count as f64,
                mean_wire_bytes: g.wire as f64 / g.count as f64,
                bleu: aggregate_bleu(&bleu_of, &config.bleu),
                psnr: {
                    let mut p = g.psnr;
                    p.sort_by(f64::total_cmp);
                    mean_of(&p)
                },
                lpips: None,
                fid: None,
            }
        })
        .collect();
    let mut report =
        ByteReport { schema: REPORT_SCHEMA.into(), size_mode: config.size_mode, bleu: config.bleu, rows, reductions: vec![] };
    let digital_overall = report.overall_mean(Scheme::Digital);
    for scheme in Scheme::ALL.into_iter().filter(|&s| s != Scheme::Digital) {
        for task in TaskKind::ALL {
            if let (Some(r), Some(d)) = (report.row(scheme, task), report.row(Scheme::Digital, task)) {
                if d.mean_semantic_bytes > 0.0 {
                    let reduction = 1.0 - r.mean_semantic_bytes / d.mean_semantic_bytes;
                    report.reductions.push(Reduction { scheme, task: Some(task), reduction });
                }
            }
        }
        if let (Some(m), Some(d)) = (report.overall_mean(scheme), digital_overall) {
            if d > 0.0 {
                report.reductions.push(Reduction { scheme, task: None, reduction: 1.0 - m / d });
            }
        }
    }
    report
}

fn aggregate_bleu(records: &[&SessionRecord], cfg: &BleuConfig) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    match cfg.mode {
        BleuMode::Sentence => {
            let scores: Vec<f64> = records.iter().filter_map(|r| r.bleu).collect();
            mean_of(&scores)
        }
        BleuMode::Corpus => {
            let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = records
                .iter()
                .filter_map(|r| r.bleu_tokens.clone())
                .map(|(cand, reference)| (cand, vec![reference]))
                .collect();
            corpus_bleu(&pairs, cfg.max_n, cfg.smoothing).ok().map(|b| b * 100.0)
        }
    }
}
