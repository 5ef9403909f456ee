use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use semcom::baseline::{dct_decode, dct_encode, SizeMode};
use semcom::channel::{measure_ber, ChannelMode};
use semcom::harness::{
    run_scenario, write_corpus, Corpus, CorpusConfig, DirCorpus, HarnessError, ScenarioConfig, SyntheticCorpus,
};
use semcom::metrics::{psnr, ByteReport};
use semcom::semantics::{encode_element, ElementKind};

#[derive(Parser)]
#[command(name = "semcom", version, about = "Task-oriented semantic communication simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Perfect,
    Awgn,
    Ldpc,
}

impl From<ChannelArg> for ChannelMode {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Perfect => ChannelMode::Perfect,
            ChannelArg::Awgn => ChannelMode::AwgnUncoded,
            ChannelArg::Ldpc => ChannelMode::AwgnLdpc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BerMode {
    Uncoded,
    Ldpc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus directory.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4000)]
        images: usize,
        #[arg(long, default_value_t = 80)]
        categories: usize,
        #[arg(long, default_value_t = 0.10)]
        presence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        width: u16,
        #[arg(long, default_value_t = 256)]
        height: u16,
    },
    /// Run a scenario over a corpus directory.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// Scenario config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Account real encoded sizes instead of the configured averages.
        #[arg(long)]
        measured: bool,
        #[arg(long, value_enum)]
        channel: Option<ChannelArg>,
        #[arg(long, allow_negative_numbers = true)]
        ebn0: Option<f64>,
    },
    /// Monte-Carlo BER over a list of Eb/N0 points.
    BerSweep {
        #[arg(long, value_enum)]
        mode: BerMode,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        ebn0_list: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encoded sizes of the element codecs and the DCT baseline.
    CodecBench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [20u8, 50, 75, 90])]
        q: Vec<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a stored report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Reference reconstruction tool: serves one external-reconstructor request.
    RenderBridge { workdir: PathBuf },
}

/// Distinguishes bad input (exit 1) from failures while running (exit 2).
struct ConfigError(anyhow::Error);

fn config_err(e: impl Into<anyhow::Error>) -> ConfigError {
    ConfigError(e.into())
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::GenCorpus { out, images, categories, presence, seed, width, height } => {
            let config = CorpusConfig {
                n_images: images,
                n_categories: categories,
                presence,
                width,
                height,
                ..Default::default()
            };
            let corpus = SyntheticCorpus::new(config, seed)?;
            write_corpus(&corpus, &out)?;
            eprintln!("wrote {} images to {}", corpus.len(), out.display());
        }
        Cmd::Run { corpus, config, out, measured, channel, ebn0 } => {
            let mut cfg = match &config {
                Some(p) => load_config(p)?,
                None => ScenarioConfig::default(),
            };
            if measured {
                cfg.size_mode = SizeMode::Measured;
            }
            if let Some(c) = channel {
                cfg.channel.mode = c.into();
            }
            if let Some(e) = ebn0 {
                cfg.channel.ebn0_db = e;
            }
            let corpus = DirCorpus::open(&corpus)?;
            let output = run_scenario(&corpus, &cfg)?;
            semcom::harness::write_outputs(&output, &out)?;
            print!("{}", output.report.to_csv());
        }
        Cmd::BerSweep { mode, ebn0_list, bits, seed, out } => {
            if bits == 0 {
                return Err(config_err(anyhow::anyhow!("--bits must be positive")).into());
            }
            if let Some(bad) = ebn0_list.iter().find(|e| !e.is_finite()) {
                return Err(config_err(anyhow::anyhow!("Eb/N0 {bad} is not finite")).into());
            }
            let mode = match mode {
                BerMode::Uncoded => ChannelMode::AwgnUncoded,
                BerMode::Ldpc => ChannelMode::AwgnLdpc,
            };
            let mut csv = String::from("mode,ebn0_db,bits,errors,ber\n");
            for &e in &ebn0_list {
                let p = measure_ber(mode, e, bits, seed);
                csv.push_str(&format!("{},{},{},{},{:e}\n", p.mode, p.ebn0_db, p.bits, p.errors, p.ber));
            }
            write(&out, &csv)?;
            print!("{csv}");
        }
        Cmd::CodecBench { corpus, q, out } => {
            if let Some(bad) = q.iter().find(|&&q| !(1..=100).contains(&q)) {
                return Err(config_err(anyhow::anyhow!("quality {bad} outside 1..=100")).into());
            }
            let corpus = DirCorpus::open(&corpus)?;
            let csv = codec_bench(&corpus, &q)?;
            write(&out, &csv)?;
            print!("{csv}");
        }
        Cmd::Report { input, format } => {
            let path = input.join("report.json");
            let raw = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report: ByteReport = serde_json::from_str(&raw)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config_err)?;
            match format {
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => println!("{}", report.to_json()),
            }
        }
        Cmd::RenderBridge { workdir } => {
            semcom::reconstruct::serve_request(&workdir)
                .with_context(|| format!("serving {}", workdir.display()))?;
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display())).map_err(config_err)
}

fn write(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn codec_bench(corpus: &dyn Corpus, qs: &[u8]) -> Result<String, Failure> {
    let mut elem = [0u64; 4];
    let mut dct = vec![(0u64, 0f64); qs.len()];
    let mut rasters = 0usize;
    for i in 0..corpus.len() {
        let img = corpus.load(i)?;
        for (slot, kind) in ElementKind::ALL.into_iter().enumerate() {
            elem[slot] += encode_element(&img.bundle.element(kind)).context("encoding element")?.len() as u64;
        }
        let Some(raster) = &img.raster else { continue };
        rasters += 1;
        for (slot, &q) in qs.iter().enumerate() {
            let blob = dct_encode(raster, q).context("dct encode")?;
            let back = dct_decode(&blob).context("dct decode")?;
            dct[slot].0 += blob.len() as u64;
            dct[slot].1 += psnr(&back, raster).context("psnr")?;
        }
    }
    if corpus.is_empty() {
        return Err(config_err(anyhow::anyhow!("corpus has no images")).into());
    }
    let n = corpus.len() as f64;
    let mut csv = String::from("codec,param,images,mean_bytes,mean_psnr_db\n");
    for (slot, kind) in ElementKind::ALL.into_iter().enumerate() {
        csv.push_str(&format!("element,{},{},{:.2},\n", kind.name(), corpus.len(), elem[slot] as f64 / n));
    }
    for (slot, &q) in qs.iter().enumerate() {
        if rasters == 0 {
            break;
        }
        let r = rasters as f64;
        csv.push_str(&format!("dct,q{q},{rasters},{:.2},{:.4}\n", dct[slot].0 as f64 / r, dct[slot].1 / r));
    }
    Ok(csv)
}
