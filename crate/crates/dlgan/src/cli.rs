//! `dlgan` command line.
//!
//! Exit codes: 0 on success, 1 on bad flags or input, 2 on runtime failure.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dlgan_core::data::Dataset;
use dlgan_core::infer::Manipulator;
use dlgan_core::label::LabelSchema;
use dlgan_core::metrics::{disentanglement_probe, FeatureExtractor, LabelOracle};
use dlgan_core::model::ModelBundle;
use dlgan_core::synth::SynthSpec;
use dlgan_core::train::Ablation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::dataset::{load_attribute_folder, load_labeled_folder, write_synthetic, GroupSpecFile};
use crate::error::{AppError, Result};
use crate::eval::{self, EvalConfig, ExtractorOracle};
use crate::grid::Grid;
use crate::imageio::{batch, read_png, unbatch, write_bytes, write_png};
use crate::run::{self, RunConfig};
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "dlgan", version, about = "Train and run label-guided image manipulation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labelled synthetic shapes dataset.
    SynthData(SynthArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Change labelled attributes of one image, optionally taking the rest from a reference.
    Manipulate(ManipulateArgs),
    /// Interpolate between the attributes of two references.
    Interpolate(InterpolateArgs),
    /// Draw attribute codes at random.
    Sample(SampleArgs),
    /// Image quality and oracle accuracies on held-out data.
    Eval(EvalArgs),
    /// Linear probes on attribute codes and content maps.
    Probe(ProbeArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Maximum shape offset from the centre, in pixels.
    #[arg(long, default_value_t = 3)]
    pub jitter: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset folder (schema.json, labels.jsonl and PNGs, or images for --attributes).
    #[arg(long)]
    pub data: PathBuf,
    /// Attribute list file; requires --groups.
    #[arg(long, requires = "groups")]
    pub attributes: Option<PathBuf>,
    /// Group spec JSON mapping attribute columns onto label groups.
    #[arg(long, requires = "attributes")]
    pub groups: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match (&self.attributes, &self.groups) {
            (Some(a), Some(g)) => {
                let text = std::fs::read_to_string(g).map_err(|e| AppError::io(g, e))?;
                let spec: GroupSpecFile = serde_json::from_str(&text).map_err(|e| AppError::json(g.display().to_string(), e))?;
                let (data, parsed) = load_attribute_folder(&self.data, a, &spec)?;
                if parsed.skipped() > 0 {
                    eprintln!("skipped {} attribute rows", parsed.skipped());
                }
                Ok(data)
            }
            _ => load_labeled_folder(&self.data),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    A,
    B,
    C,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::A => Ablation::A,
            AblationArg::B => Ablation::B,
            AblationArg::C => Ablation::C,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config: trainer fields plus an optional `model` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub n_critic: Option<usize>,
    #[arg(long)]
    pub max_generator_steps: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub sample_every: Option<usize>,
    /// Switch off an auxiliary branch; repeatable.
    #[arg(long, value_enum)]
    pub ablation: Vec<AblationArg>,
    /// Print a progress line every this many generator steps; 0 is silent.
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct ManipulateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Target label bits; all zeros keeps every attribute.
    #[arg(long)]
    pub label: Option<String>,
    /// Reference image for the attributes the label leaves unspecified.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub ref_a: PathBuf,
    #[arg(long)]
    pub ref_b: PathBuf,
    /// Number of evenly spaced points from 0 to 1.
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[arg(long)]
    pub label: Option<String>,
    /// Output grid PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
    /// Number of samples.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output grid PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Held-out data.
    #[command(flatten)]
    pub data: DataArgs,
    /// Folder the feature extractor trains on; defaults to --data.
    #[arg(long)]
    pub extractor_data: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub extractor_steps: usize,
    #[arg(long, default_value_t = 100)]
    pub kid_subsets: usize,
    #[arg(long, default_value_t = 100)]
    pub kid_subset_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for metrics.json and report.md.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for probe.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = 4 << 20)]
    pub max_body_bytes: usize,
    #[arg(long, default_value_t = 30)]
    pub request_timeout_s: u64,
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    /// Allowed browser origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

fn parse_label(bundle: &ModelBundle<f32>, bits: Option<&str>) -> Result<dlgan_core::label::LabelVector> {
    match bits {
        Some(b) => Ok(bundle.schema.parse_bits(b)?),
        None => Ok(bundle.schema.empty()),
    }
}

fn load_image(path: &Path, bundle: &ModelBundle<f32>) -> Result<dlgan_core::Tensor<f32>> {
    let img = read_png(path)?;
    let [h, w, _] = bundle.image_shape();
    if img.shape()[1..] != [h, w] {
        return Err(AppError::Usage(format!(
            "{} is {}x{}, the model takes {h}x{w}",
            path.display(),
            img.shape()[2],
            img.shape()[1]
        )));
    }
    batch(&[&img])
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec { height: a.height, width: a.width, jitter: a.jitter, seed: a.seed };
    let recs = write_synthetic(&a.out, &spec, a.n)?;
    println!("wrote {} images to {}", recs.len(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?)?,
        None => RunConfig::default(),
    };
    let t = &mut cfg.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.n_critic {
        t.n_critic = v;
    }
    if a.max_generator_steps.is_some() {
        t.max_generator_steps = a.max_generator_steps;
    }
    if let Some(v) = a.checkpoint_every {
        t.checkpoint_every = v;
    }
    if let Some(v) = a.sample_every {
        t.sample_every = v;
    }
    t.ablation.extend(a.ablation.iter().map(|&x| Ablation::from(x)));
    t.validate()?;
    let data = a.data.load()?;
    let model = cfg.model_for(&data)?;
    let bundle = run::init_bundle(model, data.schema.clone(), cfg.train.seed)?;
    let every = a.log_every;
    let summary = run::fit(bundle, &data, &cfg.train, &a.out, |l| {
        if every > 0 && l.step % every == 0 {
            let r = &l.report;
            eprintln!("step {} total_G={:.4} total_D={:.4} adv={:.4} cyc={:.4}", l.step, r.total_g, r.total_d, r.adv, r.cyc);
        }
    })?;
    println!(
        "trained {} generator steps; checkpoint {} ({})",
        summary.generator_steps,
        summary.final_checkpoint.display(),
        summary.manifest.checkpoint_id
    );
    Ok(())
}

fn manipulate(a: &ManipulateArgs) -> Result<()> {
    let (bundle, _) = checkpoint::load(&a.ckpt)?;
    let y = [parse_label(&bundle, a.label.as_deref())?];
    let x = load_image(&a.input, &bundle)?;
    let m = Manipulator::new(&bundle);
    let out = match &a.reference {
        Some(r) => m.hybrid(&x, &load_image(r, &bundle)?, &y)?,
        None => m.label_only(&x, &y)?,
    };
    write_png(&a.out, &unbatch(&out)[0])
}

fn interpolate(a: &InterpolateArgs) -> Result<()> {
    if a.steps < 2 {
        return Err(AppError::Usage("--steps must be at least 2".into()));
    }
    let (bundle, _) = checkpoint::load(&a.ckpt)?;
    let y = [parse_label(&bundle, a.label.as_deref())?];
    let x = load_image(&a.input, &bundle)?;
    let (xa, xb) = (load_image(&a.ref_a, &bundle)?, load_image(&a.ref_b, &bundle)?);
    let ts: Vec<f64> = (0..a.steps).map(|i| i as f64 / (a.steps - 1) as f64).collect();
    let outs = Manipulator::new(&bundle).interpolate(&x, &xa, &xb, &ts, &y)?;
    let row: Vec<_> = outs.iter().map(|o| unbatch(o).remove(0)).collect();
    let caps: Vec<String> = ts.iter().map(|t| format!("{t:.1}")).collect();
    write_bytes(&a.out, &Grid::new(vec![row]).with_captions(vec![caps]).to_png()?)
}

fn sample(a: &SampleArgs) -> Result<()> {
    let (bundle, _) = checkpoint::load(&a.ckpt)?;
    let y = [parse_label(&bundle, a.label.as_deref())?];
    let x = load_image(&a.input, &bundle)?;
    let outs = Manipulator::new(&bundle).stochastic(&x, &y, a.n, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let row: Vec<_> = outs.iter().map(|o| unbatch(o).remove(0)).collect();
    write_bytes(&a.out, &Grid::new(vec![row]).to_png()?)
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::json(path.display().to_string(), e))?;
    write_bytes(path, text.as_bytes())
}

fn evaluate(a: &EvalArgs) -> Result<()> {
    let (bundle, manifest) = checkpoint::load(&a.ckpt)?;
    let held = a.data.load()?;
    let ex_data = match &a.extractor_data {
        Some(p) => load_labeled_folder(p)?,
        None => held.clone(),
    };
    let cfg = EvalConfig {
        seed: a.seed,
        kid_subsets: a.kid_subsets,
        kid_subset_size: a.kid_subset_size,
        extractor_steps: a.extractor_steps,
        ..EvalConfig::default()
    };
    let extractor: FeatureExtractor = eval::train_extractor(&ex_data, &cfg)?;
    let rule;
    let learned;
    let oracle: &dyn LabelOracle = if held.schema == LabelSchema::synthetic_shapes() {
        rule = eval::shapes_oracle(held.height, held.width);
        &rule
    } else {
        learned = ExtractorOracle(&extractor);
        &learned
    };
    let metrics = eval::evaluate(&bundle, &held, &extractor, oracle, &cfg)?;
    write_json(&a.out.join("metrics.json"), &metrics)?;
    let report = eval::markdown_report(&format!("Evaluation of {}", manifest.checkpoint_id), &metrics);
    write_bytes(&a.out.join("report.md"), report.as_bytes())?;
    let mut stdout = std::io::stdout().lock();
    for m in &metrics {
        let _ = writeln!(stdout, "{} {:.6}", m.metric, m.value);
    }
    Ok(())
}

fn probe(a: &ProbeArgs) -> Result<()> {
    let (bundle, _) = checkpoint::load(&a.ckpt)?;
    let data = a.data.load()?;
    let report = disentanglement_probe(&bundle, &data)?;
    write_json(&a.out.join("probe.json"), &report)?;
    for (i, g) in report.groups.iter().enumerate() {
        println!(
            "{g}: attribute {:.3} content {:.3} chance {:.3}",
            report.attr_probe_accuracy[i], report.content_probe_accuracy[i], report.chance_levels[i]
        );
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let cfg = ServiceConfig {
        bind: a.bind,
        checkpoint: a.ckpt.clone(),
        max_body_bytes: a.max_body_bytes,
        request_timeout_s: a.request_timeout_s,
        workers: a.workers,
        cors_origin: a.cors_origin.clone(),
    };
    checkpoint::read_manifest(&cfg.checkpoint)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io(&cfg.checkpoint, e))?;
    rt.block_on(service::serve(cfg, |addr| eprintln!("listening on http://{addr}")))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SynthData(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Manipulate(a) => manipulate(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => evaluate(a),
        Command::Probe(a) => probe(a),
        Command::Serve(a) => serve(a),
    }
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
