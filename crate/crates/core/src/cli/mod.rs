//! `mmprobe` command line. Every flag can also come from a `PROBE_*` environment
//! variable; an explicit flag wins. Exit codes: 0 success, 1 runtime failure, 2 usage error.

pub mod manifest;
pub mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{load_confounders, load_dataset, save_confounders, save_dataset, GrayImage, LabeledDataset};
use crate::harness::{
    caption_effect_experiment, confounder_eval, cross_domain_matrix, evaluate, generate_domain, modality_report, suite_domain, synthetic_confounders,
    AttributionMode, CaptionMode, DomainSpec,
};
use crate::metrics::{krippendorff_alpha, load_agreement_csv, MetricsReport};
use crate::predictor::external::BridgeConnection;
use crate::predictor::train::train_with_history;
use crate::predictor::{trained_predictor, TrainConfig};
use crate::segment::{MaskingPolicy, PatchFill};
use crate::shapley::{Explainer, McConfig};

pub use manifest::{config_hash, RunManifest};
pub use spec::{parse_predictor, SpecContext};

#[derive(Debug, Parser)]
#[command(name = "mmprobe", version, about = "Modality attribution and evaluation harness for text + image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shapley attributions and the aggregate text/image contribution report.
    Shapley(ShapleyArgs),
    /// Cross-domain train/test macro-F1 matrix.
    Matrix(MatrixArgs),
    /// 2×2 caption design: train with/without captions × test with/without.
    CaptionEffect(CaptionEffectArgs),
    /// Macro-F1 on text/image confounder sets and their extended variants.
    Confounder(ConfounderArgs),
    /// Train the hashed late-fusion logistic model.
    Train(TrainArgs),
    /// Macro-F1 of a predictor on a dataset.
    Eval(EvalArgs),
    /// Krippendorff's alpha (nominal) for an annotation CSV.
    Agreement(AgreementArgs),
    /// Generate a synthetic dataset (or confounder groups) from a domain spec.
    Gen(GenArgs),
    /// Conformance check of an external predictor bridge.
    BridgeCheck(BridgeCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    /// Exact Shapley; fails on memes with too many entities.
    Exact,
    /// Monte Carlo Shapley for every meme.
    Mc,
    /// Exact up to 12 entities, Monte Carlo beyond.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    Zero,
    Gray,
    /// Dataset mean intensity.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionArg {
    Off,
    Train,
    Test,
    Both,
}

impl From<CaptionArg> for CaptionMode {
    fn from(c: CaptionArg) -> Self {
        match c {
            CaptionArg::Off => CaptionMode::Off,
            CaptionArg::Train => CaptionMode::Train,
            CaptionArg::Test => CaptionMode::Test,
            CaptionArg::Both => CaptionMode::Both,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictorArgs {
    /// lexicon:PATH | patchint:THRESH | fusion:ALPHA:SPEC:SPEC | model:PATH | external:CMD
    #[arg(long, env = "PROBE_PREDICTOR")]
    pub predictor: String,
    /// Per-request timeout for external bridges, in milliseconds.
    #[arg(long, env = "PROBE_TIMEOUT_MS", default_value_t = 30_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainFlags {
    #[arg(long, env = "PROBE_EPOCHS", default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, env = "PROBE_LR", default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, env = "PROBE_WEIGHT_DECAY", default_value_t = 1e-3)]
    pub weight_decay: f64,
    /// Mini-batch size; omit for full-batch training.
    #[arg(long, env = "PROBE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "PROBE_HASH_DIM", default_value_t = 1024)]
    pub hash_dim: usize,
}

impl TrainFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            seed,
            hash_dim: self.hash_dim,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShapleyArgs {
    #[arg(long, env = "PROBE_DATASET")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, env = "PROBE_MODE", value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Monte Carlo sample count P (2P+1 draws per entity).
    #[arg(long, env = "PROBE_SAMPLES", default_value_t = 100)]
    pub samples: usize,
    #[arg(long, env = "PROBE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "PROBE_POLICY", value_enum, default_value_t = PolicyArg::Gray)]
    pub policy: PolicyArg,
    /// Number of memes to attribute, taken from the start of the dataset.
    #[arg(long, env = "PROBE_CAP", default_value_t = 50)]
    pub cap: usize,
    #[arg(long, env = "PROBE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatrixArgs {
    /// Comma-separated dataset files; rows and columns follow this order.
    #[arg(long, env = "PROBE_DATASETS", value_delimiter = ',', required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long, env = "PROBE_CAPTION_MODE", value_enum, default_value_t = CaptionArg::Off)]
    pub caption_mode: CaptionArg,
    /// Split and training seed.
    #[arg(long, env = "PROBE_SEED", default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, env = "PROBE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CaptionEffectArgs {
    #[arg(long, env = "PROBE_DATASETS", value_delimiter = ',', required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long, env = "PROBE_SEED", default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, env = "PROBE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConfounderArgs {
    /// Confounder groups file.
    #[arg(long, env = "PROBE_GROUPS")]
    pub groups: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, env = "PROBE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, env = "PROBE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "PROBE_SEED", default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, env = "PROBE_DATASET")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, env = "PROBE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AgreementArgs {
    /// Headerless CSV, one row per annotator, one column per item; empty cell = missing.
    #[arg(long, env = "PROBE_CSV")]
    pub csv: PathBuf,
    /// Optional directory for the manifest and a JSON result.
    #[arg(long, env = "PROBE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    /// Domain spec JSON; missing fields take the built-in defaults.
    #[arg(long, env = "PROBE_SPEC")]
    pub spec: Option<PathBuf>,
    /// Built-in suite domain to start from when no spec file is given; domains
    /// with different indices share no vocabulary.
    #[arg(long, env = "PROBE_DOMAIN", default_value_t = 0, conflicts_with = "spec")]
    pub domain: usize,
    /// Overrides the spec's seed.
    #[arg(long, env = "PROBE_SEED")]
    pub seed: Option<u64>,
    /// Overrides the spec's sample count.
    #[arg(long, env = "PROBE_SAMPLES")]
    pub samples: Option<usize>,
    /// Overrides the spec's label-noise rate.
    #[arg(long, env = "PROBE_NOISE")]
    pub noise: Option<f64>,
    /// Emit this many confounder groups instead of a dataset.
    #[arg(long, env = "PROBE_CONFOUNDERS")]
    pub confounders: Option<usize>,
    /// Fraction of confounder edits that stay hateful.
    #[arg(long, env = "PROBE_RETAIN_RATE", default_value_t = 0.0)]
    pub retain_rate: f64,
    /// Output JSONL file.
    #[arg(long, env = "PROBE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BridgeCheckArgs {
    /// Shell command that launches the bridge.
    #[arg(long = "cmd", env = "PROBE_CMD")]
    pub command: String,
    #[arg(long, env = "PROBE_TIMEOUT_MS", default_value_t = 30_000)]
    pub timeout_ms: u64,
}

/// Parses the process arguments and runs; the bin is a one-line wrapper around this.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Shapley(a) => cmd_shapley(&a),
        Command::Matrix(a) => cmd_matrix(&a),
        Command::CaptionEffect(a) => cmd_caption_effect(&a),
        Command::Confounder(a) => cmd_confounder(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Agreement(a) => cmd_agreement(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::BridgeCheck(a) => cmd_bridge_check(&a),
    }
}

fn manifest_for<A: Serialize>(command: &str, args: &A, seeds: Vec<u64>) -> RunManifest {
    RunManifest::new(command, serde_json::to_value(args).expect("flags serialize"), seeds)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load(path: &Path) -> Result<LabeledDataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn spec_context(p: &PredictorArgs, workers: usize) -> SpecContext {
    SpecContext { workers, timeout: Duration::from_millis(p.timeout_ms) }
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

pub fn cmd_shapley(a: &ShapleyArgs) -> Result<()> {
    let dataset = load(&a.dataset)?;
    let predictor = parse_predictor(&a.predictor.predictor, &spec_context(&a.predictor, a.workers))?;
    let fill = match a.policy {
        PolicyArg::Zero => PatchFill::Zero,
        PolicyArg::Gray => PatchFill::Gray,
        PolicyArg::Mean => PatchFill::Mean(dataset.mean_intensity()),
    };
    let explainer = Explainer::new(MaskingPolicy { fill, ..MaskingPolicy::default() }).with_workers(a.workers);
    let mode = match a.mode {
        ModeArg::Exact => AttributionMode::Exact,
        ModeArg::Mc => AttributionMode::MonteCarlo,
        ModeArg::Auto => AttributionMode::Auto,
    };

    let mut manifest = manifest_for("shapley", a, vec![a.seed]);
    let report_name = manifest.output_name("attribution", "json");
    let samples_dir = manifest.output_name("samples", "d");
    manifest.outputs = vec![report_name.clone(), samples_dir.clone()];
    manifest.write(&a.out)?;

    let run = rayon_pool(a.workers)?.install(|| {
        modality_report(&dataset, &predictor, mode, &McConfig::new(a.samples, a.seed), a.cap, &explainer, Some(&a.out.join(&samples_dir)))
    })?;
    write_text(&a.out.join(&report_name), &(run.report.to_json() + "\n"))?;
    match run.report.aggregate.mean_ts {
        Some(ts) => println!("TS {ts:.6} IS {:.6} over {} memes ({} excluded)", 1.0 - ts, run.report.aggregate.included, run.report.aggregate.excluded),
        None => println!("TS undefined: all {} attributions were zero", run.report.aggregate.excluded),
    }
    Ok(())
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<LabeledDataset>> {
    paths.iter().map(|p| load(p)).collect()
}

pub fn cmd_matrix(a: &MatrixArgs) -> Result<()> {
    let datasets = load_all(&a.datasets)?;
    let mut manifest = manifest_for("matrix", a, vec![a.seed]);
    let csv = manifest.output_name("matrix", "csv");
    let json = manifest.output_name("matrix", "json");
    manifest.outputs = vec![csv.clone(), json.clone()];
    manifest.write(&a.out)?;

    let report = cross_domain_matrix(&datasets, &a.train.config(a.seed), a.caption_mode.into())?;
    write_text(&a.out.join(&csv), &report.to_csv())?;
    write_json(&a.out.join(&json), &report)?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn cmd_caption_effect(a: &CaptionEffectArgs) -> Result<()> {
    let datasets = load_all(&a.datasets)?;
    let mut manifest = manifest_for("caption-effect", a, vec![a.seed]);
    let json = manifest.output_name("caption_effect", "json");
    let modes = [CaptionMode::Off, CaptionMode::Train, CaptionMode::Test, CaptionMode::Both];
    let csvs: Vec<String> = modes.iter().map(|m| manifest.output_name(&format!("caption_{}", mode_name(*m)), "csv")).collect();
    manifest.outputs = std::iter::once(json.clone()).chain(csvs.iter().cloned()).collect();
    manifest.write(&a.out)?;

    let report = caption_effect_experiment(&datasets, &a.train.config(a.seed))?;
    for (m, name) in modes.iter().zip(&csvs) {
        write_text(&a.out.join(name), &report.matrix(*m).to_csv())?;
    }
    write_json(&a.out.join(&json), &report)?;
    for m in modes {
        println!("[{}]", mode_name(m));
        print!("{}", report.matrix(m).to_csv());
    }
    println!("p = {:.6} ({:?})", report.significance.test.p_value, report.significance.pairing);
    Ok(())
}

fn mode_name(m: CaptionMode) -> &'static str {
    match m {
        CaptionMode::Off => "off",
        CaptionMode::Train => "train",
        CaptionMode::Test => "test",
        CaptionMode::Both => "both",
    }
}

pub fn cmd_confounder(a: &ConfounderArgs) -> Result<()> {
    let groups = load_confounders(&a.groups).with_context(|| format!("loading {}", a.groups.display()))?;
    let predictor = parse_predictor(&a.predictor.predictor, &spec_context(&a.predictor, a.workers))?;
    let mut manifest = manifest_for("confounder", a, vec![]);
    let json = manifest.output_name("confounder", "json");
    manifest.outputs = vec![json.clone()];
    manifest.write(&a.out)?;

    let report = confounder_eval(&predictor, &groups)?;
    write_json(&a.out.join(&json), &report)?;
    println!(
        "F1 T {:.4} I {:.4} T+ {:.4} I+ {:.4} | dF1(T,I) {:.4} dF1(T+,I+) {:.4}",
        report.text.macro_f1, report.image.macro_f1, report.text_extended.macro_f1, report.image_extended.macro_f1, report.delta_ti, report.delta_ti_extended
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    dataset: String,
    loss_history: Vec<f64>,
    train: MetricsReport,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let dataset = load(&a.dataset)?;
    let mut manifest = manifest_for("train", a, vec![a.seed]);
    let model = manifest.output_name("model", "json");
    let summary = manifest.output_name("train", "json");
    manifest.outputs = vec![model.clone(), summary.clone()];
    manifest.write(&a.out)?;

    let outcome = train_with_history(&dataset, &a.train.config(a.seed))?;
    write_json(&a.out.join(&model), &outcome.params)?;
    let fit = evaluate(&trained_predictor(outcome.params.clone()), &dataset)?;
    let train = MetricsReport::new(&dataset.name, &fit);
    println!("final loss {:.6}, training macro-F1 {:.4}", outcome.loss_history.last().copied().unwrap_or(f64::NAN), train.macro_f1);
    write_json(&a.out.join(&summary), &TrainSummary { dataset: dataset.name, loss_history: outcome.loss_history, train })?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let dataset = load(&a.dataset)?;
    let predictor = parse_predictor(&a.predictor.predictor, &spec_context(&a.predictor, a.workers))?;
    let mut manifest = manifest_for("eval", a, vec![]);
    let json = manifest.output_name("metrics", "json");
    manifest.outputs = vec![json.clone()];
    manifest.write(&a.out)?;

    let report = MetricsReport::new(&dataset.name, &evaluate(&predictor, &dataset)?);
    write_json(&a.out.join(&json), &report)?;
    println!("macro-F1 {:.6} on {} samples", report.macro_f1, report.n);
    Ok(())
}

#[derive(Serialize)]
struct AgreementResult {
    items: usize,
    raters: usize,
    alpha: f64,
}

pub fn cmd_agreement(a: &AgreementArgs) -> Result<()> {
    let matrix = load_agreement_csv(&a.csv).with_context(|| format!("loading {}", a.csv.display()))?;
    let alpha = krippendorff_alpha(&matrix)?;
    if let Some(out) = &a.out {
        let mut manifest = manifest_for("agreement", a, vec![]);
        let json = manifest.output_name("agreement", "json");
        manifest.outputs = vec![json.clone()];
        manifest.write(out)?;
        write_json(&out.join(&json), &AgreementResult { items: matrix.items(), raters: matrix.raters(), alpha })?;
    }
    println!("alpha {alpha:?}");
    Ok(())
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let mut spec: DomainSpec = match &a.spec {
        Some(path) => {
            let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))?
        }
        None => suite_domain(a.domain, 2, 0.0, a.seed.unwrap_or(0)),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(n) = a.samples {
        spec.samples = n;
    }
    if let Some(noise) = a.noise {
        spec.noise_rate = noise;
    }
    let dir = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut manifest = manifest_for("gen", a, vec![spec.seed]);
    manifest.outputs = vec![a.out.file_name().context("--out must name a file")?.to_string_lossy().into_owned()];
    manifest.write(&dir)?;

    match a.confounders {
        Some(n) => {
            let groups = synthetic_confounders(&spec, n, a.retain_rate, spec.seed)?;
            save_confounders(&groups, &a.out)?;
            println!("wrote {} confounder groups to {}", groups.len(), a.out.display());
        }
        None => {
            let dataset = generate_domain(&spec)?;
            save_dataset(&dataset, &a.out)?;
            let [benign, hateful] = dataset.class_counts();
            println!("wrote {} samples ({hateful} hateful, {benign} non-hateful) to {}", dataset.len(), a.out.display());
        }
    }
    Ok(())
}

/// The three canonical requests sent by `bridge-check`.
pub fn bridge_fixtures() -> Vec<(String, GrayImage)> {
    let gradient = GrayImage::new(8, 8, (0..64).map(|i| (i * 4) as u8).collect()).expect("8x8");
    vec![
        ("hello world".to_string(), GrayImage::new(2, 2, vec![0, 64, 128, 255]).expect("2x2")),
        ("[MASK] [MASK]".to_string(), GrayImage::filled(4, 4, 128)),
        ("a longer caption with several plain tokens".to_string(), gradient),
    ]
}

pub fn cmd_bridge_check(a: &BridgeCheckArgs) -> Result<()> {
    let timeout = Duration::from_millis(a.timeout_ms);
    let mut conn = BridgeConnection::open(&a.command, timeout).context("handshake")?;
    println!("ok handshake ({})", conn.name());
    for (i, (text, image)) in bridge_fixtures().iter().enumerate() {
        match conn.predict(text, image) {
            Ok(score) => println!("ok request {} score {score}", i + 1),
            Err(e) => bail!("request {}: {e}", i + 1),
        }
    }
    conn.shutdown().context("shutdown")?;
    println!("ok shutdown");
    Ok(())
}
