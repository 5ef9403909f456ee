use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusImage, HarnessError};
use crate::baseline::{dct_decode, dct_encode, Scheme, SizeMode, SizeModel};
use crate::channel::ChannelConfig;
use crate::correlation::{TaskDescriptor, TaskKind, DEFAULT_THRESHOLD};
use crate::metrics::{bleu, build_report, psnr, tokenize, BleuConfig, ByteReport, ReportConfig, SessionRecord};
use crate::policy::{knowledge_policy, EscalationLadder, LadderPreset, TransmitterSession};
use crate::protocol::{
    run_fixed_session, run_session, FrameEvent, PayloadKind, ProtocolError, ReceiverContext, ReceiverState,
    SessionLog, SessionParams, DEFAULT_MAX_RETRIES,
};
use crate::reconstruct::{render_received, Palette, ReceivedSemantics};
use crate::semantics::{decode_element, encode_element, ElementKind, ImageRaster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub caption: usize,
    pub segmentation: usize,
    pub reconstruction: usize,
    /// Fraction of tasks whose image contains the target. Defaults to the
    /// corpus-wide category presence rate.
    pub relevance: Option<f64>,
    /// Drives image choice and the presentation order.
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self { caption: 160, segmentation: 160, reconstruction: 160, relevance: None, seed: 0 }
    }
}

impl TaskSpec {
    fn count(&self, kind: TaskKind) -> usize {
        match kind {
            TaskKind::Caption => self.caption,
            TaskKind::Segmentation => self.segmentation,
            TaskKind::Reconstruction => self.reconstruction,
        }
    }

    pub fn total(&self) -> usize {
        self.caption + self.segmentation + self.reconstruction
    }
}

/// A single reconstruction task run on the progressive ladder, rendering
/// after every element.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgressiveSpec {
    /// Image index; defaults to the first image containing the target.
    pub image: Option<usize>,
    /// Target category; defaults to "person" when present, else the first
    /// category of the image.
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub schemes: Vec<Scheme>,
    pub tasks: TaskSpec,
    pub ladder: LadderPreset,
    pub threshold: f64,
    pub channel: ChannelConfig,
    pub max_retries: u32,
    pub feedback_over_channel: bool,
    pub size_model: SizeModel,
    pub size_mode: SizeMode,
    pub bleu: BleuConfig,
    pub progressive: Option<ProgressiveSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            tasks: TaskSpec::default(),
            ladder: LadderPreset::Table2,
            threshold: DEFAULT_THRESHOLD,
            channel: ChannelConfig::perfect(),
            max_retries: DEFAULT_MAX_RETRIES,
            feedback_over_channel: false,
            size_model: SizeModel::default(),
            size_mode: SizeMode::Configured,
            bleu: BleuConfig::default(),
            progressive: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if !self.channel.is_valid() {
            return bad("channel Eb/N0 must be finite".into());
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        if self.tasks.total() * 4 > 1 << 16 {
            return bad(format!("{} tasks exceed the 16-bit session id space", self.tasks.total()));
        }
        if let Some(p) = self.tasks.relevance {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("relevance {p} outside [0, 1]"));
            }
        }
        if self.bleu.max_n == 0 {
            return bad("bleu.max_n must be at least 1".into());
        }
        self.size_model.validate().map_err(|e| HarnessError::ConfigInvalid(e.to_string()))
    }

    fn params(&self) -> SessionParams {
        SessionParams {
            channel: self.channel,
            max_retries: self.max_retries,
            feedback_over_channel: self.feedback_over_channel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Position in the presentation order.
    pub index: usize,
    pub kind: TaskKind,
    pub target: u8,
    pub image: usize,
    pub target_present: bool,
    pub descriptor: TaskDescriptor,
}

fn describe(kind: TaskKind, target: &str) -> String {
    match kind {
        TaskKind::Caption => format!("caption the image of the {target}"),
        TaskKind::Segmentation => format!("segment the {target}"),
        TaskKind::Reconstruction => format!("reconstruct the {target}"),
    }
}

/// Builds the task list. Targets go round-robin over the categories; task
/// `j` of a kind is relevant exactly when `floor((j + 1) p) > floor(j p)`,
/// so a kind with `N` tasks has exactly `floor(N p)` relevant ones. The
/// combined list is shuffled with the task seed.
pub fn generate_tasks(corpus: &dyn Corpus, spec: &TaskSpec) -> Result<Vec<Task>, HarnessError> {
    let k = corpus.categories().len();
    if spec.total() == 0 {
        return Ok(Vec::new());
    }
    if k == 0 || corpus.is_empty() {
        return Err(HarnessError::ConfigInvalid("tasks need a corpus with images and categories".into()));
    }
    // p as an exact fraction num/den.
    let (num, den): (u128, u128) = match spec.relevance {
        Some(p) => ((p * 1e6).round() as u128, 1_000_000),
        None => {
            let total: usize = (0..corpus.len()).map(|i| corpus.presence(i).len()).sum();
            (total as u128, (k * corpus.len()) as u128)
        }
    };
    let mut with: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..corpus.len() {
        for &c in corpus.presence(i) {
            with[c as usize].push(i);
        }
    }
    let mut tasks = Vec::with_capacity(spec.total());
    for (ki, kind) in TaskKind::ALL.into_iter().enumerate() {
        for j in 0..spec.count(kind) {
            let target = (j % k) as u8;
            let (a, b) = (j as u128 * num / den, (j as u128 + 1) * num / den);
            let relevant = b > a;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((ki as u64) << 32) | j as u64);
            let pool = &with[target as usize];
            let image = if relevant {
                *pool.choose(&mut rng).ok_or_else(|| {
                    HarnessError::ConfigInvalid(format!("no image contains {}", corpus.categories()[target as usize]))
                })?
            } else {
                let free = corpus.len() - pool.len();
                if free == 0 {
                    return Err(HarnessError::ConfigInvalid(format!(
                        "every image contains {}",
                        corpus.categories()[target as usize]
                    )));
                }
                let nth = rng.gen_range(0..free);
                (0..corpus.len()).filter(|i| pool.binary_search(i).is_err()).nth(nth).expect("counted")
            };
            let name = &corpus.categories()[target as usize];
            let descriptor = TaskDescriptor::new(kind, describe(kind, name)).expect("non-empty description");
            tasks.push(Task { index: 0, kind, target, image, target_present: relevant, descriptor });
        }
    }
    let mut order = ChaCha8Rng::seed_from_u64(spec.seed);
    order.set_stream(u64::MAX);
    tasks.shuffle(&mut order);
    for (i, t) in tasks.iter_mut().enumerate() {
        t.index = i;
    }
    Ok(tasks)
}

pub fn session_id(task_index: usize, scheme: Scheme) -> u16 {
    (task_index * 4 + scheme.code() as usize) as u16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRender {
    pub kinds: Vec<ElementKind>,
    pub psnr: Option<f64>,
    #[serde(skip)]
    pub image: Option<ImageRaster>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveOutput {
    pub image_id: u32,
    pub target: String,
    pub matched_categories: Vec<String>,
    pub stages: Vec<StageRender>,
    #[serde(skip)]
    pub original: Option<ImageRaster>,
}

impl ProgressiveOutput {
    /// Stage renders followed by the original, the order they are shown in.
    pub fn renders(&self) -> Vec<&ImageRaster> {
        self.stages.iter().filter_map(|s| s.image.as_ref()).chain(self.original.as_ref()).collect()
    }
}

#[derive(Debug)]
pub struct ScenarioOutput {
    pub report: ByteReport,
    pub records: Vec<SessionRecord>,
    pub logs: Vec<SessionLog>,
    pub progressive: Option<ProgressiveOutput>,
}

struct Shared<'a> {
    corpus: &'a dyn Corpus,
    config: &'a ScenarioConfig,
    palette: Palette,
}

fn session_err(task: &Task, scheme: Scheme) -> impl FnOnce(ProtocolError) -> HarnessError + '_ {
    move |source| HarnessError::Session { session_id: session_id(task.index, scheme), scheme, task: task.kind, source }
}

fn run_one(
    sh: &Shared,
    task: &Task,
    img: &CorpusImage,
    scheme: Scheme,
) -> Result<(SessionRecord, SessionLog), HarnessError> {
    let cfg = sh.config;
    let params = cfg.params();
    let sid = session_id(task.index, scheme);
    let bundle = &img.bundle;
    let log = match scheme {
        Scheme::Digital | Scheme::DigitalKnowledge => {
            let q = scheme.image_quality(task.kind).expect("digital scheme");
            let raster = img.raster.as_ref().ok_or_else(|| {
                HarnessError::ConfigInvalid(format!("image {} has no raster for the digital schemes", bundle.image_id))
            })?;
            let blob = dct_encode(raster, q)?;
            run_fixed_session(vec![(PayloadKind::Image(q), blob)], bundle.image_id, &params, sid)
        }
        Scheme::IscKnowledge => {
            let payloads = knowledge_policy(task.kind)
                .into_iter()
                .map(|k| Ok((PayloadKind::Element(k), encode_element(&bundle.element(k))?)))
                .collect::<Result<Vec<_>, HarnessError>>()?;
            run_fixed_session(payloads, bundle.image_id, &params, sid)
        }
        Scheme::MultiRate => {
            let k = sh.corpus.knowledge();
            let ladder = EscalationLadder::preset(cfg.ladder, task.kind);
            let ctx = ReceiverContext { table: &k.table, vocab: &k.vocab, nouns: &k.nouns, threshold: cfg.threshold };
            let tx = TransmitterSession::new(bundle, ladder.clone());
            let rx = ReceiverState::new(ctx, task.descriptor.clone(), ladder, bundle.image_id);
            run_session(tx, rx, &params, sid)
        }
    }
    .map_err(session_err(task, scheme))?;

    let mut bleu_score = None;
    let mut bleu_tokens = None;
    if task.kind == TaskKind::Caption {
        if let Some(text) = &log.received.text {
            let cand = tokenize(text.as_str());
            let reference = tokenize(bundle.text.as_str());
            let b = bleu(&cand, std::slice::from_ref(&reference), cfg.bleu.max_n, cfg.bleu.smoothing)?;
            bleu_score = Some(b * 100.0);
            bleu_tokens = Some((cand, reference));
        }
    }
    let mut psnr_db = None;
    if task.kind == TaskKind::Reconstruction {
        if let Some(truth) = &img.raster {
            let recon = match scheme {
                Scheme::Digital | Scheme::DigitalKnowledge => dct_decode(&log.delivered[0])?,
                _ => render_received(&log.received, Some(bundle.dimensions()), &sh.palette)?,
            };
            psnr_db = Some(psnr(&recon, truth)?);
        }
    }
    let record = SessionRecord {
        session_id: sid,
        scheme,
        task: task.kind,
        image_id: bundle.image_id,
        target: sh.corpus.categories()[task.target as usize].clone(),
        semantic: cfg.size_model.session(&log, cfg.size_mode),
        measured_bytes: log.semantic_bytes,
        wire_bytes: log.wire_bytes,
        retransmissions: log.retransmissions,
        relevant: log.decision.as_ref().map(|d| d.relevant),
        bleu: bleu_score,
        bleu_tokens,
        psnr: psnr_db,
    };
    Ok((record, log))
}

pub fn run_scenario(corpus: &dyn Corpus, config: &ScenarioConfig) -> Result<ScenarioOutput, HarnessError> {
    config.validate()?;
    let tasks = generate_tasks(corpus, &config.tasks)?;
    let mut schemes = config.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let sh = Shared { corpus, config, palette: Palette::new(&corpus.knowledge().vocab) };
    let per_task = tasks
        .par_iter()
        .map(|task| -> Result<Vec<(SessionRecord, SessionLog)>, HarnessError> {
            if schemes.is_empty() {
                return Ok(Vec::new());
            }
            let img = corpus.load(task.image)?;
            schemes.iter().map(|&s| run_one(&sh, task, &img, s)).collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (records, logs): (Vec<_>, Vec<_>) = per_task.into_iter().flatten().unzip();
    let report = build_report(&records, &ReportConfig { size_mode: config.size_mode, bleu: config.bleu });
    let progressive = match &config.progressive {
        Some(spec) => Some(run_progressive(corpus, config, spec)?),
        None => None,
    };
    Ok(ScenarioOutput { report, records, logs, progressive })
}

/// One reconstruction task on the progressive ladder, with a render and PSNR
/// after each delivered element.
pub fn run_progressive(
    corpus: &dyn Corpus,
    config: &ScenarioConfig,
    spec: &ProgressiveSpec,
) -> Result<ProgressiveOutput, HarnessError> {
    let cats = corpus.categories();
    let knowledge = corpus.knowledge();
    let named = |n: &str| {
        knowledge.vocab.id_of(n).ok_or_else(|| HarnessError::ConfigInvalid(format!("unknown category {n:?}")))
    };
    let (image, target) = match (spec.image, &spec.target) {
        (Some(i), _) if i >= corpus.len() => {
            return Err(HarnessError::ConfigInvalid(format!("image {i} outside the corpus")));
        }
        (Some(i), Some(t)) => (i, named(t)?),
        (Some(i), None) => {
            let p = corpus.presence(i);
            let person = knowledge.vocab.id_of("person").filter(|c| p.contains(c));
            let t = person.or(p.first().copied()).ok_or_else(|| {
                HarnessError::ConfigInvalid(format!("image {i} has no objects to target"))
            })?;
            (i, t)
        }
        (None, t) => {
            let t = match t {
                Some(t) => named(t)?,
                None => knowledge.vocab.id_of("person").unwrap_or(0),
            };
            let i = (0..corpus.len()).find(|&i| corpus.presence(i).contains(&t)).ok_or_else(|| {
                HarnessError::ConfigInvalid(format!("no image contains {}", cats[t as usize]))
            })?;
            (i, t)
        }
    };
    let img = corpus.load(image)?;
    let name = cats[target as usize].clone();
    let ladder = EscalationLadder::preset(LadderPreset::Progressive, TaskKind::Reconstruction);
    let ctx = ReceiverContext {
        table: &knowledge.table,
        vocab: &knowledge.vocab,
        nouns: &knowledge.nouns,
        threshold: config.threshold,
    };
    let descriptor = TaskDescriptor::new(TaskKind::Reconstruction, describe(TaskKind::Reconstruction, &name))
        .expect("non-empty description");
    let tx = TransmitterSession::new(&img.bundle, ladder.clone());
    let rx = ReceiverState::new(ctx, descriptor, ladder, img.bundle.image_id);
    let log = run_session(tx, rx, &config.params(), 0).map_err(|source| HarnessError::Session {
        session_id: 0,
        scheme: Scheme::MultiRate,
        task: TaskKind::Reconstruction,
        source,
    })?;
    let palette = Palette::new(&knowledge.vocab);
    let dims = img.bundle.dimensions();
    let mut received = ReceivedSemantics::new(img.bundle.image_id);
    let mut stages = Vec::new();
    for bytes in &log.delivered {
        received.insert(decode_element(bytes)?);
        let render = render_received(&received, Some(dims), &palette)?;
        let p = img.raster.as_ref().map(|t| psnr(&render, t)).transpose()?;
        stages.push(StageRender { kinds: received.kinds(), psnr: p, image: Some(render) });
    }
    Ok(ProgressiveOutput {
        image_id: img.bundle.image_id,
        target: name,
        matched_categories: log.decision.map(|d| d.matched_categories).unwrap_or_default(),
        stages,
        original: img.raster,
    })
}

#[derive(Serialize)]
struct SessionEvent<'a> {
    session: u16,
    #[serde(flatten)]
    event: &'a FrameEvent,
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Writes `report.json`, `report.csv`, `sessions.jsonl`, `events.jsonl` and,
/// for progressive runs, `progressive/`.
pub fn write_outputs(out: &ScenarioOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let put = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io(&p, e))
    };
    put("report.json", out.report.to_json())?;
    put("report.csv", out.report.to_csv())?;
    let mut sessions = String::new();
    for r in &out.records {
        sessions.push_str(&serde_json::to_string(r).expect("record serializes"));
        sessions.push('\n');
    }
    put("sessions.jsonl", sessions)?;
    let mut events = String::new();
    for log in &out.logs {
        for e in &log.events {
            events.push_str(&serde_json::to_string(&SessionEvent { session: log.session_id, event: e }).expect("event"));
            events.push('\n');
        }
    }
    put("events.jsonl", events)?;
    if let Some(p) = &out.progressive {
        let pd = dir.join("progressive");
        std::fs::create_dir_all(&pd).map_err(|e| io(&pd, e))?;
        let mut csv = String::from("stage,elements,psnr_db\n");
        for (i, s) in p.stages.iter().enumerate() {
            let kinds: Vec<&str> = s.kinds.iter().map(|k| k.name()).collect();
            csv.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                kinds.join("+"),
                s.psnr.map_or(String::new(), |v| format!("{v:.4}"))
            ));
            if let Some(img) = &s.image {
                let f = pd.join(format!("stage{}.ppm", i + 1));
                crate::semantics::ppm::write_ppm(&f, img).map_err(|e| io(&f, e))?;
            }
        }
        if let Some(orig) = &p.original {
            let f = pd.join("original.ppm");
            crate::semantics::ppm::write_ppm(&f, orig).map_err(|e| io(&f, e))?;
        }
        std::fs::write(pd.join("psnr.csv"), csv).map_err(|e| io(&pd, e))?;
        let meta = serde_json::to_string_pretty(p).expect("progressive serializes");
        std::fs::write(pd.join("progressive.json"), meta).map_err(|e| io(&pd, e))?;
    }
    Ok(())
}

