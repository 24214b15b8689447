//! Command line interface. Every flag can also be set through a
//! `WARPBCI_`-prefixed environment variable.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use warpbci_core::classify::{evaluate, knn_classify, featurize, FeatureConfig, FeatureMode, Protocol, ReferenceSet};
use warpbci_core::detect::{detect_continuous, f1_sweep, ContinuousConfig, ThresholdSpec, OVERLAP_MIN};
use warpbci_core::lexicon::{load_lexicon, Lexicon, DEFAULT_MIN_COUNT, SUGGESTION_LIMIT};
use warpbci_core::online::{replay, EngineMode, StreamConfig, Template, TemplateBank};
use warpbci_core::signal::{load_trials, save_trials, TrialFormat};
use warpbci_core::speller::{outputs_to_jsonl, parse_script, run_script, LayoutKind, SpellerState, DEFAULT_DWELL_MS};
use warpbci_core::synth::{
    blink_demo_stream, gen_dataset, gen_stream, gesture_demo_stream, random_schedule, GenSpec,
};
use warpbci_core::{ArtifactClass, EegTrial, Method, Series, WarpVariant};

use crate::fixtures::FixtureRegistry;
use crate::server::{serve, ServerConfig, DEFAULT_TICK_MS};

#[derive(Debug, Parser)]
#[command(name = "warpbci", version, about = "Artifact-driven EEG speller toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic trials or streams.
    Gen(GenArgs),
    /// Find artifact events in continuous recordings, or sweep eta for F1.
    Detect(DetectArgs),
    /// kNN accuracy under an evaluation protocol.
    Evaluate(EvaluateArgs),
    /// Label trials by their nearest references.
    Classify(ClassifyArgs),
    /// Word suggestions for a T9 digit string or a letter prefix.
    Suggest(SuggestArgs),
    /// Stream a recording through the online engine and print its events.
    Replay(ReplayArgs),
    /// Run a speller tick/event script and print the output log.
    Spell(SpellArgs),
    /// Start the session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Labeled fixed-length epochs, one per artifact.
    Epochs,
    /// Annotated continuous recordings with randomly placed artifacts.
    Stream,
    /// 30 s single-electrode stream with two double blinks after calibration.
    BlinkDemo,
    /// 30 s four-electrode stream with a double blink and a double jaw clench.
    GestureDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for TrialFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TrialFormat::Csv,
            FormatArg::Jsonl => TrialFormat::Jsonl,
        }
    }
}

fn format_for(path: &Path, explicit: Option<FormatArg>) -> TrialFormat {
    explicit.map_or_else(|| TrialFormat::from_path(path), Into::into)
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "epochs", env = "WARPBCI_GEN_KIND")]
    pub kind: GenKind,
    /// Output file; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long, env = "WARPBCI_OUT")]
    pub out: PathBuf,
    #[arg(long, value_enum, env = "WARPBCI_FORMAT")]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 7, env = "WARPBCI_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 250.0, env = "WARPBCI_RATE")]
    pub rate: f64,
    #[arg(long, default_value_t = 4, env = "WARPBCI_CHANNELS")]
    pub channels: usize,
    /// Baseline noise standard deviation (microvolts).
    #[arg(long, default_value_t = 10.0, env = "WARPBCI_NOISE")]
    pub noise: f64,
    #[arg(long, default_value_t = 1, env = "WARPBCI_SUBJECTS")]
    pub subjects: usize,
    #[arg(long, default_value_t = 1, env = "WARPBCI_SESSIONS")]
    pub sessions: usize,
    #[arg(long, default_value_t = 25, env = "WARPBCI_PER_CLASS")]
    pub per_class: usize,
    /// Also generate jaw clenches (the four offline classes otherwise).
    #[arg(long, env = "WARPBCI_ALL_CLASSES")]
    pub all_classes: bool,
    /// Streams to write (kind `stream`).
    #[arg(long, default_value_t = 1, env = "WARPBCI_STREAMS")]
    pub streams: usize,
    /// Stream length in seconds.
    #[arg(long, default_value_t = 60.0, env = "WARPBCI_DURATION")]
    pub duration: f64,
    /// Artifacts per stream.
    #[arg(long, default_value_t = 8, env = "WARPBCI_EVENTS")]
    pub events: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, env = "WARPBCI_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, env = "WARPBCI_FORMAT")]
    pub format: Option<FormatArg>,
    /// Threshold offset in standard deviations above the mean.
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true, env = "WARPBCI_ETA")]
    pub eta: f64,
    /// Moving-average length in samples (default 0.4 s).
    #[arg(long, env = "WARPBCI_SMOOTH")]
    pub smooth: Option<usize>,
    #[arg(long, default_value_t = 0.2, env = "WARPBCI_MERGE_GAP")]
    pub merge_gap: f64,
    /// Sweep `lo:hi:step` against the annotations and print F1 per eta.
    #[arg(long, allow_hyphen_values = true, env = "WARPBCI_SWEEP")]
    pub sweep: Option<String>,
    /// Fraction of a true window a detection must cover.
    #[arg(long, default_value_t = OVERLAP_MIN, env = "WARPBCI_OVERLAP")]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Distance: ltw, dtw, ndtw or tsdtw.
    #[arg(long, default_value = "ndtw", env = "WARPBCI_VARIANT")]
    pub variant: Method,
    /// Feature series: energy or multichannel.
    #[arg(long, default_value = "energy", env = "WARPBCI_FEATURE")]
    pub feature: FeatureMode,
}

impl FeatureArgs {
    fn features(&self) -> FeatureConfig {
        FeatureConfig { mode: self.feature, ..FeatureConfig::default() }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "WARPBCI_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, env = "WARPBCI_FORMAT")]
    pub format: Option<FormatArg>,
    /// intra, inter-session or inter-subject.
    #[arg(long, default_value = "intra", env = "WARPBCI_PROTOCOL")]
    pub protocol: Protocol,
    /// Neighbor counts, comma separated.
    #[arg(long, default_value = "1", value_delimiter = ',', env = "WARPBCI_K")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Seed of the intra-session split.
    #[arg(long, default_value_t = 7, env = "WARPBCI_SEED")]
    pub seed: u64,
    /// Also print the confusion matrix.
    #[arg(long, env = "WARPBCI_CONFUSION")]
    pub confusion: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labeled reference trials.
    #[arg(long, env = "WARPBCI_REFS")]
    pub refs: PathBuf,
    #[arg(long, env = "WARPBCI_INPUT")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1, env = "WARPBCI_K")]
    pub k: usize,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("query").required(true).args(["t9", "prefix"])))]
pub struct SuggestArgs {
    /// Digits 2-9.
    #[arg(long)]
    pub t9: Option<String>,
    /// Letters.
    #[arg(long)]
    pub prefix: Option<String>,
    #[arg(long, default_value_t = SUGGESTION_LIMIT, env = "WARPBCI_LIMIT")]
    pub limit: usize,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// `word<TAB>count` file; the bundled English list otherwise.
    #[arg(long, env = "WARPBCI_LEXICON")]
    pub lexicon: Option<PathBuf>,
    /// Drop words rarer than this (applies to --lexicon files).
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT, env = "WARPBCI_MIN_COUNT")]
    pub min_count: u64,
}

impl LexiconArgs {
    fn load(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Ok(load_lexicon(p, self.min_count).with_context(|| format!("reading {}", p.display()))?.0),
            None => Ok(Lexicon::bundled()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Blink counting on one electrode.
    Blink,
    /// Blink and jaw-clench classification on several electrodes.
    Gesture,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, env = "WARPBCI_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, env = "WARPBCI_FORMAT")]
    pub format: Option<FormatArg>,
    /// Trial index within the file.
    #[arg(long, default_value_t = 0, env = "WARPBCI_TRIAL")]
    pub trial: usize,
    /// Defaults to blink for one channel, gesture otherwise.
    #[arg(long, value_enum, env = "WARPBCI_MODE")]
    pub mode: Option<ModeArg>,
    /// Labeled template trials for gesture mode; generated ones otherwise.
    #[arg(long, env = "WARPBCI_TEMPLATES")]
    pub templates: Option<PathBuf>,
    #[arg(long, env = "WARPBCI_SMOOTHING")]
    pub smoothing: Option<usize>,
    #[arg(long, env = "WARPBCI_CALIBRATION_S")]
    pub calibration_s: Option<f64>,
    #[arg(long, env = "WARPBCI_SIGMA_MULT")]
    pub sigma_mult: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpellArgs {
    /// JSON lines of `{"tick_ms":..}` and `{"event":{..}}`.
    #[arg(long, env = "WARPBCI_SCRIPT")]
    pub script: PathBuf,
    #[arg(long, default_value = "T9", env = "WARPBCI_LAYOUT")]
    pub layout: LayoutKind,
    #[arg(long, default_value_t = DEFAULT_DWELL_MS, env = "WARPBCI_DWELL_MS")]
    pub dwell_ms: u64,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1", env = "WARPBCI_HOST")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080, env = "WARPBCI_PORT")]
    pub port: u16,
    #[arg(long, default_value_t = DEFAULT_TICK_MS, env = "WARPBCI_TICK_MS")]
    pub tick_ms: u64,
    /// Disable the wall clock; clients advance time with Tick messages.
    #[arg(long, env = "WARPBCI_TEST_CLOCK")]
    pub test_clock: bool,
    #[arg(long, default_value_t = DEFAULT_DWELL_MS, env = "WARPBCI_DWELL_MS")]
    pub dwell_ms: u64,
    /// Extra replay fixtures: `<id>.csv` or `<id>.jsonl` files.
    #[arg(long, env = "WARPBCI_FIXTURES_DIR")]
    pub fixtures_dir: Option<PathBuf>,
    /// Seed of the built-in demo fixtures.
    #[arg(long, default_value_t = 7, env = "WARPBCI_SEED")]
    pub seed: u64,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &mut out),
        Command::Detect(a) => cmd_detect(&a, &mut out),
        Command::Evaluate(a) => cmd_evaluate(&a, &mut out),
        Command::Classify(a) => cmd_classify(&a, &mut out),
        Command::Suggest(a) => cmd_suggest(&a, &mut out),
        Command::Replay(a) => cmd_replay(&a, &mut out),
        Command::Spell(a) => cmd_spell(&a, &mut out),
        Command::Serve(a) => {
            drop(out);
            cmd_serve(a)
        }
    }
}

fn read_trials(path: &Path, format: Option<FormatArg>) -> Result<Vec<EegTrial>> {
    load_trials(path, format_for(path, format)).with_context(|| format!("reading {}", path.display()))
}

fn cmd_gen(a: &GenArgs, out: &mut impl Write) -> Result<()> {
    let spec = GenSpec { sample_rate: a.rate, channels: a.channels, noise_sigma: a.noise, seed: a.seed, ..GenSpec::default() };
    let classes: &[ArtifactClass] = if a.all_classes { &ArtifactClass::ALL } else { &ArtifactClass::OFFLINE };
    let trials = match a.kind {
        GenKind::Epochs => gen_dataset(&spec, a.subjects, a.sessions, a.per_class, classes)?,
        GenKind::Stream => (0..a.streams as u64)
            .map(|i| {
                let schedule = random_schedule(&spec, a.duration, a.events, classes, a.seed.wrapping_add(i))?;
                gen_stream(&GenSpec { seed: a.seed.wrapping_add(i), ..spec.clone() }, a.duration, &schedule)
            })
            .collect::<warpbci_core::Result<_>>()?,
        GenKind::BlinkDemo => vec![blink_demo_stream(a.seed)?],
        GenKind::GestureDemo => vec![gesture_demo_stream(a.seed)?],
    };
    save_trials(&a.out, &trials, format_for(&a.out, a.format)).with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(out, "wrote {} trial(s) to {}", trials.len(), a.out.display())?;
    Ok(())
}

/// Parses `lo:hi:step` into an inclusive grid.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?} in sweep {s:?}")))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else { bail!("sweep must be lo:hi:step, got {s:?}") };
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        bail!("sweep {s:?} needs lo <= hi and a positive step");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // round to the step's precision so printed grids read cleanly
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

fn cmd_detect(a: &DetectArgs, out: &mut impl Write) -> Result<()> {
    let trials = read_trials(&a.input, a.format)?;
    let config = ContinuousConfig { threshold: ThresholdSpec::new(a.eta)?, smooth_len: a.smooth, merge_gap_s: a.merge_gap };
    if let Some(grid) = &a.sweep {
        let rows = f1_sweep(&trials, &parse_grid(grid)?, &config, a.overlap)?;
        writeln!(out, "eta,tp,fp,fn,f1")?;
        for r in &rows {
            writeln!(out, "{},{},{},{},{:.4}", r.eta, r.counts.tp, r.counts.fp, r.counts.fn_, r.f1)?;
        }
        let best = rows.iter().max_by(|x, y| x.f1.total_cmp(&y.f1).then(y.eta.total_cmp(&x.eta))).expect("grid is nonempty");
        writeln!(out, "# best eta {} f1 {:.4}", best.eta, best.f1)?;
        return Ok(());
    }
    for (i, t) in trials.iter().enumerate() {
        for ev in detect_continuous(t, &config)? {
            let rate = t.sample_rate();
            let line = serde_json::json!({
                "trial": i,
                "onset": ev.onset,
                "offset": ev.offset,
                "onset_s": ev.onset as f64 / rate,
                "offset_s": (ev.offset + 1) as f64 / rate,
                "peak_energy": ev.peak_energy,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut impl Write) -> Result<()> {
    let trials = read_trials(&a.input, a.format)?;
    let reports = evaluate(&trials, a.protocol, &a.k, &WarpVariant::new(a.features.variant), &a.features.features(), a.seed)?;
    for (i, r) in reports.iter().enumerate() {
        let csv = r.to_csv();
        // one header for the whole table
        let body = if i == 0 { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
        write!(out, "{body}")?;
    }
    if a.confusion {
        for r in &reports {
            writeln!(out, "\n# confusion k={} ({} tests)", r.k, r.tests)?;
            write!(out, "{}", r.confusion_csv())?;
        }
    }
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs, out: &mut impl Write) -> Result<()> {
    let features = a.features.features();
    let refs = ReferenceSet::from_trials(&read_trials(&a.refs, None)?, &features)?;
    let variant = WarpVariant::new(a.features.variant);
    let trials = read_trials(&a.input, None)?;
    let (mut labeled, mut correct) = (0, 0);
    for (i, t) in trials.iter().enumerate() {
        let p = knn_classify(&featurize(t, &features)?, &refs, a.k, &variant)?;
        let line = serde_json::json!({
            "trial": i,
            "predicted": p.label,
            "truth": t.label(),
            "distance": p.neighbors.first().map(|n| n.distance),
        });
        writeln!(out, "{line}")?;
        if let Some(truth) = t.label() {
            labeled += 1;
            correct += usize::from(truth == p.label);
        }
    }
    if labeled > 0 {
        eprintln!("accuracy {correct}/{labeled} = {:.4}", correct as f64 / labeled as f64);
    }
    Ok(())
}

fn cmd_suggest(a: &SuggestArgs, out: &mut impl Write) -> Result<()> {
    let lex = a.lexicon.load()?;
    let words = match (&a.t9, &a.prefix) {
        (Some(d), _) => {
            if d.is_empty() || !d.chars().all(|c| ('2'..='9').contains(&c)) {
                bail!("--t9 takes digits 2-9, got {d:?}");
            }
            lex.suggest_t9(d, a.limit)
        }
        (None, Some(p)) => lex.suggest_prefix(p, a.limit),
        (None, None) => unreachable!("clap requires one query"),
    };
    for w in words {
        writeln!(out, "{w}")?;
    }
    Ok(())
}

/// Each labeled trial becomes one template over all its channels.
fn load_templates(path: &Path) -> Result<TemplateBank> {
    let templates = read_trials(path, None)?
        .iter()
        .map(|t| {
            let class = t.label().with_context(|| format!("template trials in {} must be labeled", path.display()))?;
            let series = Series::from_frames((0..t.len()).map(|i| t.frame(i)).collect())?;
            Ok(Template { class, series })
        })
        .collect::<Result<_>>()?;
    Ok(TemplateBank::new(templates))
}

fn cmd_replay(a: &ReplayArgs, out: &mut impl Write) -> Result<()> {
    let trials = read_trials(&a.input, a.format)?;
    let Some(trial) = trials.get(a.trial) else {
        bail!("{} has {} trial(s); index {} is out of range", a.input.display(), trials.len(), a.trial);
    };
    let mode = a.mode.unwrap_or(if trial.channels() == 1 { ModeArg::Blink } else { ModeArg::Gesture });
    let (mut config, engine_mode) = match mode {
        ModeArg::Blink => (StreamConfig::single_electrode(), EngineMode::BlinkOnly),
        ModeArg::Gesture => (StreamConfig::four_electrode(), EngineMode::BlinkAndJaw),
    };
    config.smoothing = a.smoothing.unwrap_or(config.smoothing);
    config.calibration_s = a.calibration_s.unwrap_or(config.calibration_s);
    config.sigma_mult = a.sigma_mult.unwrap_or(config.sigma_mult);
    let bank = match (engine_mode, &a.templates) {
        (EngineMode::BlinkOnly, _) => None,
        (_, Some(p)) => Some(load_templates(p)?),
        (_, None) => Some(warpbci_core::synth::gen_templates(&GenSpec { sample_rate: trial.sample_rate(), ..GenSpec::default() })?),
    };
    for ev in replay(trial, config, engine_mode, bank.as_ref())? {
        writeln!(out, "{}", serde_json::to_string(&ev)?)?;
    }
    Ok(())
}

fn cmd_spell(a: &SpellArgs, out: &mut impl Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.script).with_context(|| format!("reading {}", a.script.display()))?;
    let steps = parse_script(&text).with_context(|| format!("parsing {}", a.script.display()))?;
    let mut state = SpellerState::with_dwell(a.layout, Arc::new(a.lexicon.load()?), a.dwell_ms)?;
    write!(out, "{}", outputs_to_jsonl(&run_script(&mut state, &steps)))?;
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    if a.tick_ms == 0 {
        bail!("--tick-ms must be positive");
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", a.host, a.port))?;
    let config = ServerConfig {
        tick_ms: a.tick_ms,
        injected_clock: a.test_clock,
        dwell_ms: a.dwell_ms,
        lexicon: Arc::new(a.lexicon.load()?),
        fixtures: Arc::new(FixtureRegistry::new(a.fixtures_dir.clone(), a.seed)),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        serve(listener, config).await?;
        Ok(())
    })
}
