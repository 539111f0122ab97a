//! `drivepat` command-line front end.
//!
//! Every subcommand reads an optional TOML configuration (`--config`),
//! applies its own flags on top and validates the result before touching any
//! data. Data goes to files; stdout carries progress lines only. Failures
//! print a JSON object on stderr and exit with 1 (usage), 2 (data) or
//! 3 (numerical).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drivepat::gaze::{self, AoiGrid, StationaryMode, WindowConfig};
use drivepat::ingest::{self, IngestError};
use drivepat::pipeline::{self, ErrorKind, PipelineConfig, PipelineError, StageSource};
use drivepat::quantize::{self, GmmConfig, WordDocument};
use drivepat::synth::{self, CoupledSpec, SynthError};
use drivepat::topics::{self, TopicModel};
use drivepat::{bcp, Exec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stdout line that tolerates a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "drivepat", version, about = "Behavior and driver-state pattern mining for driving telemetry")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Change-point segmentation of a telemetry file.
    Segment(SegmentArgs),
    /// Fit the word codebook and build one document per segment.
    Quantize(QuantizeArgs),
    /// Fit topics to a document file.
    Topics(TopicsArgs),
    /// Rolling gaze entropy of a gaze file.
    Entropy(EntropyArgs),
    /// Full pipeline over one or more session directories.
    Analyze(AnalyzeArgs),
    /// Write a synthetic session with planted patterns.
    Synth(SynthArgs),
    /// Topic log-likelihood over a range of topic counts.
    Ktest(KtestArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long, value_name = "FILE")]
    telemetry: PathBuf,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    w0: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_len_s: Option<f64>,
    /// Resampling rate; the native IMU rate (1 Hz for speed) when unset.
    #[arg(long)]
    rate_hz: Option<f64>,
    /// Sampler seed, used as given.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    #[arg(long, value_name = "FILE")]
    telemetry: PathBuf,
    #[arg(long, value_name = "FILE")]
    segments: PathBuf,
    /// Mixture components (vocabulary size).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LdaArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TopicsArgs {
    #[arg(long, value_name = "FILE")]
    documents: PathBuf,
    /// Number of topics.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    lda: LdaArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[arg(long, value_name = "FILE")]
    gaze: PathBuf,
    /// Grid shape as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    stride_s: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<StationaryMode>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Session directory; repeat for several sessions.
    #[arg(long = "session-dir", value_name = "DIR", required = true)]
    session_dirs: Vec<PathBuf>,
    /// Base seed; per-session seeds derive from it and the participant id.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML generator spec; defaults apply to missing keys.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KtestArgs {
    #[arg(long, value_name = "FILE")]
    documents: PathBuf,
    /// Inclusive range of topic counts, as MIN:MAX.
    #[arg(long, value_parser = parse_range, default_value = "2:6")]
    k_range: (usize, usize),
    #[command(flatten)]
    lda: LdaArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let r = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let c = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    Ok((r, c))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let a: usize = a.trim().parse().map_err(|e| format!("min: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("max: {e}"))?;
    if a == 0 || a > b {
        return Err(format!("need 1 <= MIN <= MAX, got {a}:{b}"));
    }
    Ok((a, b))
}

fn parse_mode(s: &str) -> Result<StationaryMode, String> {
    match s {
        "empirical" => Ok(StationaryMode::Empirical),
        "stationary" => Ok(StationaryMode::Stationary),
        _ => Err("expected `empirical` or `stationary`".into()),
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
struct CliError {
    kind: ErrorKind,
    stage: Option<String>,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            stage: None,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            stage: None,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }

    fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        };
        serde_json::json!({
            "error": {
                "kind": kind,
                "code": self.exit_code(),
                "stage": self.stage,
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let stage = match &e {
            PipelineError::Stage { stage, .. } => Some(stage.to_string()),
            _ => None,
        };
        Self {
            kind: e.kind(),
            stage,
            message: e.to_string(),
        }
    }
}

fn at<E: Into<StageSource>>(stage: &'static str) -> impl FnOnce(E) -> CliError {
    move |e| {
        PipelineError::Stage {
            stage,
            source: e.into(),
        }
        .into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// Vocabulary size and the documents of one corpus.
#[derive(Debug, Serialize, Deserialize)]
struct Corpus {
    vocab_size: usize,
    documents: Vec<WordDocument>,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))
        }
    }
}

fn show<T: Serialize>(value: &T, notes: &[&str]) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))?;
    let _ = std::io::stdout().write_all(text.as_bytes());
    for n in notes {
        say!("# {n}");
    }
    Ok(())
}

fn show_pipeline_config(cfg: &PipelineConfig) -> Result<()> {
    let mut notes = Vec::new();
    if cfg.segmentation.rate_hz.is_none() {
        notes.push("segmentation.rate_hz unset: native IMU rate, 1 Hz for speed-only sessions");
    }
    if cfg.behavior.alpha.is_none() {
        notes.push("behavior.alpha unset: 50 / behavior.topics");
    }
    if cfg.states.alpha.is_none() {
        notes.push("states.alpha unset: 50 / states.topics");
    }
    show(cfg, &notes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn apply_lda(cfg: &mut PipelineConfig, a: &LdaArgs) {
    let b = &mut cfg.behavior;
    if a.alpha.is_some() {
        b.alpha = a.alpha;
    }
    set(&mut b.beta, a.beta);
    set(&mut b.iters, a.iters);
    set(&mut b.burn_in, a.burnin);
    set(&mut b.chains, a.chains);
    set(&mut cfg.seed, a.seed);
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn ingest_err(e: IngestError) -> CliError {
    at::<IngestError>("ingest")(e)
}

fn segment_cmd(cfg: &mut PipelineConfig, a: &SegmentArgs, show_only: bool) -> Result<()> {
    let s = &mut cfg.segmentation;
    set(&mut s.p0, a.p0);
    set(&mut s.w0, a.w0);
    set(&mut s.sweeps, a.sweeps);
    set(&mut s.burn_in, a.burnin);
    set(&mut s.threshold, a.threshold);
    set(&mut s.min_len_s, a.min_len_s);
    if a.rate_hz.is_some() {
        s.rate_hz = a.rate_hz;
    }
    set(&mut cfg.seed, a.seed);
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let session = ingest::load_telemetry(&a.telemetry).map_err(ingest_err)?.data;
    let input = pipeline::kinematic_input(&session, &cfg.segmentation)?;
    let (result, segs) = pipeline::segment(&input.matrix, &cfg.segmentation, input.rate_hz, cfg.seed)?;
    ensure_dir(&a.out)?;
    bcp::write_segments_json(&a.out.join("segments.json"), &segs).map_err(at("output"))?;
    bcp::write_change_prob_csv(&a.out.join("changeprob.csv"), &result, input.matrix.times())
        .map_err(at("output"))?;
    say!(
        "segment: {} samples, {} segments -> {}",
        input.matrix.n_rows(),
        segs.len(),
        a.out.display()
    );
    Ok(())
}

fn quantize_cmd(cfg: &mut PipelineConfig, a: &QuantizeArgs, show_only: bool) -> Result<()> {
    set(&mut cfg.behavior.words, a.k);
    set(&mut cfg.gmm.restarts, a.restarts);
    set(&mut cfg.gmm.max_iter, a.max_iter);
    set(&mut cfg.gmm.tol, a.tol);
    if a.rate_hz.is_some() {
        cfg.segmentation.rate_hz = a.rate_hz;
    }
    set(&mut cfg.seed, a.seed);
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let session = ingest::load_telemetry(&a.telemetry).map_err(ingest_err)?.data;
    let segs = bcp::read_segments_json(&a.segments).map_err(at("segment"))?;
    let input = pipeline::kinematic_input(&session, &cfg.segmentation)?;
    let m = &input.matrix;
    let gcfg = GmmConfig {
        k: cfg.behavior.words,
        max_iter: cfg.gmm.max_iter,
        tol: cfg.gmm.tol,
        restarts: cfg.gmm.restarts,
        seed: cfg.seed,
    };
    let fit = quantize::fit_gmm(m.values(), m.n_cols(), &gcfg, cfg.exec).map_err(at("quantize"))?;
    let words = quantize::encode(&fit.codebook, m.values(), m.n_cols(), cfg.exec).map_err(at("quantize"))?;
    let documents = quantize::documents_from_segments(m.times(), &words, &segs);
    ensure_dir(&a.out)?;
    write_json(&a.out.join("codebook.json"), &fit.codebook)?;
    write_json(
        &a.out.join("documents.json"),
        &Corpus {
            vocab_size: fit.codebook.k,
            documents,
        },
    )?;
    say!(
        "quantize: {} samples, {} words, {} documents -> {}",
        m.n_rows(),
        fit.codebook.k,
        segs.len(),
        a.out.display()
    );
    Ok(())
}

fn topics_cmd(cfg: &mut PipelineConfig, a: &TopicsArgs, show_only: bool) -> Result<()> {
    set(&mut cfg.behavior.topics, a.k);
    apply_lda(cfg, &a.lda);
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let corpus: Corpus = read_json(&a.documents)?;
    let model = topics::fit_lda(&corpus.documents, corpus.vocab_size, &cfg.behavior.lda(cfg.seed), cfg.exec)
        .map_err(at("topics"))?;
    let assignments = topics::assign_patterns(&model, &corpus.documents).map_err(at("topics"))?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("topics.json"), &model)?;
    write_json(&a.out.join("assignments.json"), &assignments)?;
    say!(
        "topics: {} topics over {} documents -> {}",
        model.k,
        corpus.documents.len(),
        a.out.display()
    );
    Ok(())
}

fn entropy_cmd(cfg: &mut PipelineConfig, a: &EntropyArgs, show_only: bool) -> Result<()> {
    let g = &mut cfg.gaze;
    if let Some((rows, cols)) = a.grid {
        g.grid = AoiGrid { rows, cols, ..g.grid };
    }
    set(&mut g.window_s, a.window_s);
    set(&mut g.stride_s, a.stride_s);
    set(&mut g.mode, a.mode);
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let channels = ingest::load_gaze_channels(&a.gaze).map_err(ingest_err)?.data;
    let samples = pipeline::gaze_samples(&channels[0], &channels[1]);
    let seq = gaze::bin_gaze(&samples, &cfg.gaze.grid).map_err(at("gaze"))?;
    let wc = WindowConfig {
        window_s: cfg.gaze.window_s,
        stride_s: cfg.gaze.stride_s,
        mode: cfg.gaze.mode,
    };
    let series = gaze::rolling_entropy(&seq, &wc, cfg.exec).map_err(at("gaze"))?;
    ensure_dir(&a.out)?;
    gaze::write_entropy_csv(&a.out.join("entropy.csv"), &series).map_err(at("output"))?;
    say!(
        "entropy: {} samples, {} windows -> {}",
        samples.len(),
        series.window_centers.len(),
        a.out.display()
    );
    Ok(())
}

/// Runs `f` with `jobs` worker threads; without the parallel feature the
/// thread count has no effect.
#[cfg(feature = "parallel")]
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::usage(format!("--jobs: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T: Send>(_jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

fn analyze_cmd(cfg: &mut PipelineConfig, a: &AnalyzeArgs, show_only: bool) -> Result<()> {
    set(&mut cfg.seed, a.seed);
    match a.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be at least 1")),
        Some(1) => cfg.exec = Exec::Sequential,
        _ => {}
    }
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let mut sessions = Vec::with_capacity(a.session_dirs.len());
    for dir in &a.session_dirs {
        let loaded = ingest::load_session_dir(dir).map_err(ingest_err)?;
        if loaded.dropped_rows > 0 {
            say!(
                "analyze: {}: dropped {} malformed rows",
                dir.display(),
                loaded.dropped_rows
            );
        }
        sessions.push(loaded.data);
    }
    let mut ids: Vec<&str> = sessions.iter().map(|s| s.participant_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::usage(format!("participant id `{}` appears twice", w[0])));
    }
    let exec = cfg.exec;
    let results = with_jobs(a.jobs, || pipeline::run_sessions(&sessions, cfg, exec))?;
    let analyses = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    ensure_dir(&a.out)?;
    if let [single] = analyses.as_slice() {
        pipeline::write_outputs(&a.out, single)?;
    } else {
        for an in &analyses {
            pipeline::write_outputs(&a.out.join(&an.report.meta.participant_id), an)?;
        }
        let reports: Vec<_> = analyses.iter().map(|an| an.report.clone()).collect();
        pipeline::write_styles_csv(&a.out.join("styles.csv"), &reports)?;
    }
    for an in &analyses {
        let r = &an.report;
        say!(
            "analyze: {}: {} segments, {} tests",
            r.meta.participant_id,
            r.segments.len(),
            r.tests.len()
        );
        for w in &r.meta.warnings {
            say!("analyze: {}: warning: {w}", r.meta.participant_id);
        }
    }
    say!("analyze: outputs -> {}", a.out.display());
    Ok(())
}

fn synth_cmd(config: Option<&Path>, a: &SynthArgs, show_only: bool) -> Result<()> {
    if config.is_some() {
        return Err(CliError::usage("synth takes --spec, not --config"));
    }
    let mut spec = match &a.spec {
        None => CoupledSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read spec {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("spec {}: {e}", p.display())))?
        }
    };
    set(&mut spec.seed, a.seed);
    spec.validate()?;
    if show_only {
        return show(&spec, &[]);
    }
    let (session, truth) = synth::gen_coupled_session(&spec)?;
    synth::write_session_dir(&a.out, &session, &truth)?;
    say!(
        "synth: {} s, {} segments -> {}",
        spec.duration_s,
        truth.segments.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct KtestRow {
    k: usize,
    log_likelihood: f64,
    perplexity: f64,
}

fn ktest_cmd(cfg: &mut PipelineConfig, a: &KtestArgs, show_only: bool) -> Result<()> {
    apply_lda(cfg, &a.lda);
    cfg.validate()?;
    if show_only {
        return show_pipeline_config(cfg);
    }
    let corpus: Corpus = read_json(&a.documents)?;
    let n_tokens: usize = corpus.documents.iter().map(|d| d.words.len()).sum();
    let mut rows = Vec::new();
    for k in a.k_range.0..=a.k_range.1 {
        let mut family = cfg.behavior.clone();
        family.topics = k;
        let model: TopicModel = topics::fit_lda(&corpus.documents, corpus.vocab_size, &family.lda(cfg.seed), cfg.exec)
            .map_err(at("topics"))?;
        let ll = model.log_likelihood(&corpus.documents);
        rows.push(KtestRow {
            k,
            log_likelihood: ll,
            perplexity: (-ll / n_tokens.max(1) as f64).exp(),
        });
        say!("ktest: K = {k}: log-likelihood {ll:.3}");
    }
    ensure_dir(&a.out)?;
    let path = a.out.join("ktest.csv");
    let mut text = String::from("k,log_likelihood,perplexity\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.k, r.log_likelihood, r.perplexity));
    }
    std::fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    say!("ktest: table -> {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let show_only = cli.show_config;
    if let Some(Command::Synth(a)) = &cli.command {
        return synth_cmd(cli.config.as_deref(), a, show_only);
    }
    let mut cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        None if show_only => {
            cfg.validate()?;
            show_pipeline_config(&cfg)
        }
        None => Err(CliError::usage("no subcommand given; see --help")),
        Some(Command::Segment(a)) => segment_cmd(&mut cfg, a, show_only),
        Some(Command::Quantize(a)) => quantize_cmd(&mut cfg, a, show_only),
        Some(Command::Topics(a)) => topics_cmd(&mut cfg, a, show_only),
        Some(Command::Entropy(a)) => entropy_cmd(&mut cfg, a, show_only),
        Some(Command::Analyze(a)) => analyze_cmd(&mut cfg, a, show_only),
        Some(Command::Ktest(a)) => ktest_cmd(&mut cfg, a, show_only),
        Some(Command::Synth(_)) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
