//! `segpipe`: palette and codec tools, dataset ingestion, synthesis batches,
//! feed planning, metrics and a mock generator server.

mod ingest;
mod metrics;

use std::fs;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use segpipe_core::colorcodec::{self, build_palette, CodecError, DEFAULT_EDGE_WIDTH, DEFAULT_MIN_SEPARATION};
use segpipe_core::genbackend::{
    self, Backend, BackendError, HttpBackend, HttpBackendConfig, MockBackend, MockConfig, StubBackend,
    DEFAULT_MAX_MOCK_CATEGORIES, ENV_BACKEND_URL,
};
use segpipe_core::seeds::SeedHasher;
use segpipe_core::segdata::{
    load_coco_panoptic, load_semantic_png, save_semantic_png, DataError, Manifest, ManifestFilter, ManifestHeader,
    Provenance, SegmentInfo,
};
use segpipe_core::segmetrics::MetricError;
use segpipe_core::synthpipe::{self, JobConfig, Mode, PipelineError, Task};
use segpipe_core::trainfeed::{self, FeedError, FeedPlan, ReplacementSource};
use segpipe_core::{ColorMap, Palette};

pub(crate) const ENV_DATA_ROOT: &str = "SEGPIPE_DATA_ROOT";

#[derive(Parser, Debug)]
#[command(name = "segpipe", version, about = "Segmentation data synthesis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a category palette and write it as JSON.
    Palette(PaletteArgs),
    /// Encode a label mask into a color map PNG.
    Encode(EncodeArgs),
    /// Decode a color map PNG into a label mask PNG.
    Decode(DecodeArgs),
    /// Write a REAL manifest for an on-disk dataset.
    #[command(subcommand)]
    Ingest(ingest::IngestCommand),
    /// Run a MaskSyn or ImgSyn generation batch.
    Gen(GenArgs),
    /// Materialize the training feed as a sample id list.
    Feed(FeedArgs),
    /// Compute mIoU or PQ and print a JSON report.
    Metrics(metrics::MetricsArgs),
    /// Serve the deterministic mock generator over HTTP.
    MockServe(MockServeArgs),
}

#[derive(Args, Debug, Serialize)]
struct PaletteArgs {
    /// Number of categories.
    #[arg(long)]
    num_categories: usize,
    /// Minimum Euclidean distance between any two palette colors.
    #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION)]
    min_separation: f64,
    /// Output palette JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub(crate) enum TaskArg {
    #[default]
    Semantic,
    Panoptic,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Semantic => Task::Semantic,
            TaskArg::Panoptic => Task::Panoptic,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    /// Label mask: shifted-by-one grayscale PNG (semantic) or COCO panoptic PNG.
    #[arg(long)]
    mask: PathBuf,
    /// Segments-info JSON array for a panoptic mask.
    #[arg(long, required_if_eq("task", "panoptic"))]
    segments: Option<PathBuf>,
    /// Palette JSON.
    #[arg(long)]
    palette: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    task: TaskArg,
    /// Boundary band width in pixels (panoptic only).
    #[arg(long, default_value_t = DEFAULT_EDGE_WIDTH)]
    edge_width: usize,
    /// Output color map PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    /// RGB color map PNG.
    #[arg(long)]
    color_map: PathBuf,
    /// Palette JSON.
    #[arg(long)]
    palette: PathBuf,
    /// Output shifted-by-one grayscale label PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Masksyn,
    Imgsyn,
}

#[derive(Args, Debug, Serialize)]
struct BackendArgs {
    /// Use the in-process deterministic mock generator.
    #[arg(long, conflicts_with_all = ["stub", "backend_url"])]
    mock: bool,
    /// Use the constant-payload stub generator.
    #[arg(long, conflicts_with = "backend_url")]
    stub: bool,
    /// Generator service base URL.
    #[arg(long, env = ENV_BACKEND_URL)]
    backend_url: Option<String>,
    /// Per-request timeout in seconds for the remote backend.
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Attempts per remote request, including the first.
    #[arg(long)]
    retries: Option<u32>,
    /// Most categories per mock-generated mask.
    #[arg(long, default_value_t = DEFAULT_MAX_MOCK_CATEGORIES)]
    mock_max_categories: usize,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(value_enum)]
    mode: ModeArg,
    /// Input manifest; its REAL records are the sources.
    #[arg(long)]
    manifest: PathBuf,
    /// Outputs per real sample (k for MaskSyn, n for ImgSyn).
    #[arg(long)]
    count: u32,
    /// Root the input manifest refs resolve against.
    #[arg(long, env = ENV_DATA_ROOT)]
    data_root: PathBuf,
    /// Root for generated payloads, the output manifest and the failure ledger.
    #[arg(long)]
    output_root: PathBuf,
    /// Palette JSON.
    #[arg(long)]
    palette: PathBuf,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value_t = 0)]
    job_seed: u64,
    #[arg(long, value_enum, default_value_t)]
    task: TaskArg,
    #[arg(long, default_value_t = DEFAULT_EDGE_WIDTH)]
    edge_width: usize,
    #[arg(long, default_value_t = genbackend::DEFAULT_RESOLUTION)]
    resolution: u32,
    #[arg(long, default_value_t = genbackend::TEXT2MASK_STEPS)]
    text2mask_steps: u32,
    #[arg(long, default_value_t = genbackend::MASK2IMG_STEPS)]
    mask2img_steps: u32,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Debug, Serialize)]
struct FeedArgs {
    /// Manifest holding the REAL samples.
    #[arg(long)]
    real: PathBuf,
    /// Synthetic manifests (repeatable).
    #[arg(long = "syn")]
    syn: Vec<PathBuf>,
    /// Per-iteration replacement probability.
    #[arg(long)]
    p_aug: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of draws to emit.
    #[arg(long)]
    iterations: u64,
    /// Keep at most this many synthetics per real sample.
    #[arg(long)]
    cap_per_real: Option<usize>,
    /// Draw replacements from every linked synthetic instead of the drawn
    /// sample's own.
    #[arg(long)]
    global_pool: bool,
    /// Output id list, one sample id per line.
    #[arg(long)]
    out: PathBuf,
    /// Also write a synthetic-only manifest for pre-training.
    #[arg(long)]
    emit_pretrain: Option<PathBuf>,
    /// Also write a real-only manifest for fine-tuning.
    #[arg(long)]
    emit_finetune: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MockServeArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Palette JSON.
    #[arg(long)]
    palette: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_MOCK_CATEGORIES)]
    max_categories: usize,
}

/// One JSON line on stderr identifying the run.
pub(crate) fn repro_header(command: &str, args: &impl Serialize, seeds: serde_json::Value, config_hash: Option<String>) {
    let hash = config_hash.unwrap_or_else(|| {
        let canonical = serde_json::to_string(args).expect("args serialize");
        format!("{:016x}", SeedHasher::new("segpipe.cli").str(command).str(&canonical).finish())
    });
    let header = json!({
        "segpipe": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seeds": seeds,
        "config_hash": hash,
    });
    eprintln!("{header}");
}

/// Prints one line of output; a closed stdout (`| head`) is not an error.
pub(crate) fn emit(line: impl std::fmt::Display) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn load_palette(path: &Path) -> Result<Palette> {
    Palette::from_json(&read(path)?).with_context(|| format!("loading palette {}", path.display()))
}

pub(crate) fn load_segments(path: &Path) -> Result<Vec<SegmentInfo>> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing segments info {}", path.display()))
}

fn cmd_palette(args: PaletteArgs) -> Result<()> {
    repro_header("palette", &args, json!({}), None);
    let palette = build_palette(args.num_categories, args.min_separation)?;
    write(&args.out, palette.to_json().as_bytes())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    repro_header("encode", &args, json!({}), None);
    let palette = load_palette(&args.palette)?;
    let mask = read(&args.mask)?;
    let color_map = match args.task {
        TaskArg::Semantic => colorcodec::encode_semantic(&load_semantic_png(&mask, palette.num_categories())?, &palette)?,
        TaskArg::Panoptic => {
            let segments = load_segments(args.segments.as_deref().expect("required by clap"))?;
            colorcodec::encode_panoptic(&load_coco_panoptic(&mask, &segments)?, &palette, args.edge_width)?
        }
    };
    write(&args.out, &color_map.to_png())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    repro_header("decode", &args, json!({}), None);
    let palette = load_palette(&args.palette)?;
    let color_map = ColorMap::from_png(&read(&args.color_map)?)?;
    write(&args.out, &save_semantic_png(&colorcodec::decode_semantic(&color_map, &palette)))
}

fn make_backend(args: &BackendArgs, palette: &Palette) -> Result<Box<dyn Backend>> {
    if args.mock {
        let config = MockConfig { max_categories: args.mock_max_categories, ..MockConfig::default() };
        return Ok(Box::new(MockBackend::new(palette.clone(), config)));
    }
    if args.stub {
        return Ok(Box::new(StubBackend::new(palette.clone())));
    }
    let Some(url) = &args.backend_url else {
        bail!("no backend: pass --mock, --stub or --backend-url (or set {ENV_BACKEND_URL})");
    };
    let mut config = HttpBackendConfig::from_env()
        .filter(|c| c.base_url == url.trim_end_matches('/'))
        .unwrap_or_else(|| HttpBackendConfig::new(url.clone()));
    if let Some(secs) = args.timeout_secs {
        config.timeout = std::time::Duration::from_secs_f64(secs);
    }
    if let Some(n) = args.retries {
        config.attempts = n;
    }
    Ok(Box::new(HttpBackend::new(config)?))
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::Masksyn => Mode::MaskSyn,
        ModeArg::Imgsyn => Mode::ImgSyn,
    };
    let mut config = JobConfig::new(mode, args.count, args.job_seed, &args.data_root, &args.output_root);
    config.parallelism = args.parallelism;
    config.task = args.task.into();
    config.edge_width = args.edge_width;
    config.resolution = args.resolution;
    config.text2mask_steps = args.text2mask_steps;
    config.mask2img_steps = args.mask2img_steps;
    config.validate()?;
    let palette = load_palette(&args.palette)?;
    let backend = make_backend(&args.backend, &palette)?;
    let info = backend.info();
    repro_header(
        "gen",
        &args,
        json!({"job_seed": args.job_seed, "backend": format!("{}/{}", info.name, info.version)}),
        Some(config.config_hash()),
    );
    let report = synthpipe::run_batch(&args.manifest, &config, backend.as_ref(), &palette)?;
    emit(json!({
        "output_manifest": report.output_manifest,
        "failure_ledger": report.failure_ledger,
        "generated": report.generated,
        "skipped": report.skipped,
        "failed": report.failed,
    }))
}

fn cmd_feed(args: FeedArgs) -> Result<()> {
    repro_header("feed", &args, json!({"seed": args.seed}), None);
    let real = Manifest::open(&args.real)?;
    let real_ids: Vec<String> = real
        .scan(ManifestFilter::provenance(Provenance::Real))?
        .map(|r| r.map(|r| r.sample_id))
        .collect::<Result<_, _>>()?;
    let syn: Vec<Manifest> = args.syn.iter().map(Manifest::open).collect::<Result<_, _>>()?;
    let mut synthetic = Vec::new();
    for m in &syn {
        for rec in m.scan(ManifestFilter::all())? {
            synthetic.push(rec?);
        }
    }
    let linkage = trainfeed::build_linkage(real_ids.iter().map(String::as_str), synthetic, args.cap_per_real, args.seed)?;
    let source = if args.global_pool { ReplacementSource::GlobalPool } else { ReplacementSource::PerSample };
    let plan = FeedPlan::new(args.p_aug, args.seed, real_ids, linkage, source)?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut out = BufWriter::new(file);
    let shortfall = trainfeed::write_id_list(trainfeed::augment_stream(&plan, args.iterations), &mut out)?;
    out.flush()?;

    let num_categories = real.header().num_categories;
    let mut summary = json!({
        "id_list": args.out,
        "iterations": args.iterations,
        "linked_real": plan.linkage().len(),
        "linked_synthetic": plan.linkage().total(),
        "shortfall": shortfall,
    });
    if let Some(path) = &args.emit_pretrain {
        let header = ManifestHeader::new(format!("{}-pretrain", real.header().dataset), num_categories);
        summary["pretrain_records"] = trainfeed::emit_pretrain(&syn, path, header)?.into();
    }
    if let Some(path) = &args.emit_finetune {
        let header = ManifestHeader::new(format!("{}-finetune", real.header().dataset), num_categories);
        summary["finetune_records"] = trainfeed::emit_finetune(&real, path, header)?.into();
    }
    emit(summary)
}

fn cmd_mock_serve(args: MockServeArgs) -> Result<()> {
    repro_header("mock-serve", &args, json!({}), None);
    let palette = load_palette(&args.palette)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
    let mock = MockBackend::new(palette, MockConfig { max_categories: args.max_categories, ..MockConfig::default() });
    let handle = genbackend::mock_serve(addr, mock)?;
    emit(json!({"listening": handle.url()}))?;
    handle.wait();
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            return e.kind();
        }
        if cause.is::<CodecError>() {
            return "codec";
        }
        if cause.is::<DataError>() {
            return "data";
        }
        if cause.is::<PipelineError>() {
            return "pipeline";
        }
        if cause.is::<FeedError>() {
            return "feed";
        }
        if cause.is::<MetricError>() {
            return "metric";
        }
        if cause.is::<serde_json::Error>() {
            return "format";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Palette(a) => cmd_palette(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Ingest(c) => ingest::run(c),
        Command::Gen(a) => cmd_gen(a),
        Command::Feed(a) => cmd_feed(a),
        Command::Metrics(a) => metrics::run(a),
        Command::MockServe(a) => cmd_mock_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}");
            eprintln!("{}", json!({"error": {"kind": error_kind(&err), "message": message}}));
            ExitCode::from(1)
        }
    }
}
