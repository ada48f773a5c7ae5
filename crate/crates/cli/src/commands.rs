use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use encforge::data::{self, Encounter, Family, Format, Manifest, NormMode, SynthSpec};
use encforge::metrics::{self, IdentityModel, LatentRoundTrip, ScanOptions, DEFAULT_SIGMA_GRID};
use encforge::model::{self, load_checkpoint, Model, SweepRange, TrainConfig, Variant};

use crate::config::{resolve, write_snapshot};
use crate::{CliError, Global};

pub const SEED_ENV: &str = "ENCFORGE_SEED";
pub const DATA_FILE: &str = "encounters.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";

/// `--seed` wins; a seed from `--config` or `--set` comes next; the
/// environment variable only fills in when neither gave one.
fn seed_flag(g: &Global, flags: &mut Table) -> Result<(), CliError> {
    let seed = match (g.seed, std::env::var(SEED_ENV)) {
        (Some(s), _) => s,
        (None, Ok(v)) => {
            let configured = g
                .overrides
                .iter()
                .any(|o| o.split('=').next().map(str::trim) == Some("seed"))
                || config_has_seed(g.config.as_deref())?;
            if configured {
                return Ok(());
            }
            v.trim().parse::<u64>().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))
            })?
        }
        (None, Err(_)) => return Ok(()),
    };
    let v =
        i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} is too large")))?;
    flags.insert("seed".into(), Value::Integer(v));
    Ok(())
}

fn config_has_seed(path: Option<&Path>) -> Result<bool, CliError> {
    let Some(path) = path else { return Ok(false) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let t: Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(t.contains_key("seed"))
}

fn put(flags: &mut Table, key: &str, v: impl Into<Value>) {
    flags.insert(key.into(), v.into());
}

fn out_dir(g: &Global) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(&g.out)
}

fn write(path: PathBuf, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load(path: &Path) -> Result<Model, CliError> {
    load_checkpoint(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(CliError::Runtime)
}

fn to_i64(v: usize) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

pub fn synth(g: &Global, a: &SynthArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    seed_flag(g, &mut flags)?;
    if let Some(f) = &a.family {
        f.parse::<Family>()?;
        put(&mut flags, "family", f.as_str());
    }
    if let Some(c) = a.count {
        put(&mut flags, "count", to_i64(c));
    }
    if let Some(n) = a.noise {
        put(&mut flags, "noise", n);
    }
    let spec: SynthSpec = resolve(g.config.as_deref(), &g.overrides, flags)?;
    spec.validate()?;
    let encs = data::synth_generate(&spec)?;
    let dir = out_dir(g)?;
    data::export(&encs, dir.join(DATA_FILE), Format::Xy)?;
    data::write_manifest(
        &Manifest::describe(&encs, DATA_FILE),
        dir.join(MANIFEST_FILE),
    )?;
    write_snapshot(dir, "synth", &spec)?;
    eprintln!(
        "wrote {} encounters to {}",
        encs.len(),
        dir.join(DATA_FILE).display()
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub variant: Variant,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub latent: usize,
    pub teacher_forcing: bool,
    /// Steps per encounter after resampling.
    pub length: usize,
    pub literal_normalize: bool,
    pub format: Format,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            variant: c.variant,
            beta: c.beta,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            seed: c.seed,
            hidden: c.hidden,
            latent: c.latent,
            teacher_forcing: c.teacher_forcing,
            length: data::DEFAULT_LENGTH,
            literal_normalize: false,
            format: Format::Xy,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            beta: self.beta,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            hidden: self.hidden,
            latent: self.latent,
            teacher_forcing: self.teacher_forcing,
        }
    }
}

fn norm_mode(literal: bool) -> NormMode {
    if literal {
        NormMode::Literal
    } else {
        NormMode::Shared
    }
}

fn load_dataset(
    path: &Path,
    format: Format,
    length: usize,
    literal: bool,
) -> Result<Vec<Encounter>, CliError> {
    let raw = data::ingest(path, format)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    data::prepare(&raw, length, norm_mode(literal))
        .with_context(|| format!("preparing dataset {}", path.display()))
        .map_err(CliError::Runtime)
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset CSV (`encounter_id,t_index,x1,y1,x2,y2`).
    pub dataset: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub literal_normalize: bool,
}

pub fn train(g: &Global, a: &TrainArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    seed_flag(g, &mut flags)?;
    if let Some(v) = &a.variant {
        v.parse::<Variant>()?;
        put(&mut flags, "variant", v.as_str());
    }
    if let Some(b) = a.beta {
        put(&mut flags, "beta", b);
    }
    if let Some(h) = a.hidden {
        put(&mut flags, "hidden", to_i64(h));
    }
    if let Some(k) = a.latent {
        put(&mut flags, "latent", to_i64(k));
    }
    if let Some(e) = a.epochs {
        put(&mut flags, "epochs", to_i64(e));
    }
    if a.literal_normalize {
        put(&mut flags, "literal_normalize", true);
    }
    let s: TrainSettings = resolve(g.config.as_deref(), &g.overrides, flags)?;
    let cfg = s.train_config();
    cfg.validate()?;
    let dataset = load_dataset(&a.dataset, s.format, s.length, s.literal_normalize)?;
    let dir = out_dir(g)?;

    let model = Model::new(cfg.model_config(s.length), cfg.seed)?;
    let every = (cfg.epochs / 10).max(1);
    let (model, history) = model::train_from(model, &dataset, &cfg, |e| {
        if e.epoch % every == 0 || e.epoch == 1 {
            eprintln!(
                "epoch {:>5}  total {:.6e}  recon {:.6e}  kl {:.6e}",
                e.epoch, e.total, e.recon, e.kl
            );
        }
    })?;

    let mut csv = String::from("epoch,total,recon,kl\n");
    for e in &history {
        let _ = writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.16e}",
            e.epoch, e.total, e.recon, e.kl
        );
    }
    write(dir.join(HISTORY_FILE), csv)?;
    model::save_checkpoint(&model, dir.join(CHECKPOINT_FILE))?;
    write_snapshot(dir, "train", &s)?;
    eprintln!("wrote {}", dir.join(CHECKPOINT_FILE).display());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub code: usize,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Values of the other codes; empty means all zeros.
    pub base_z: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let r = SweepRange::default();
        Self {
            code: 0,
            lo: r.lo,
            hi: r.hi,
            step: r.step,
            base_z: Vec::new(),
        }
    }
}

impl SweepSettings {
    pub fn range(&self) -> SweepRange {
        SweepRange {
            lo: self.lo,
            hi: self.hi,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Latent code to vary.
    #[arg(long)]
    pub code: Option<usize>,
}

pub fn sweep_file_stem(code: usize) -> String {
    format!("sweep_code{code}")
}

pub fn sweep(g: &Global, a: &SweepArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    if let Some(k) = a.code {
        put(&mut flags, "code", to_i64(k));
    }
    let s: SweepSettings = resolve(g.config.as_deref(), &g.overrides, flags)?;
    let model = load(&a.checkpoint)?;
    let base = (!s.base_z.is_empty()).then_some(s.base_z.as_slice());
    let frames = model::latent_sweep(&model, s.code, s.range(), base)?;
    let dir = out_dir(g)?;
    let stem = sweep_file_stem(s.code);
    write(dir.join(format!("{stem}.csv")), metrics::sweep_csv(&frames))?;
    let title = format!(
        "code {} from {} to {} (step {})",
        s.code, s.lo, s.hi, s.step
    );
    write(
        dir.join(format!("{stem}.svg")),
        metrics::sweep_svg(&frames, &title),
    )?;
    write_snapshot(dir, "sweep", &s)?;
    eprintln!(
        "wrote {} frames to {}",
        frames.len(),
        dir.join(format!("{stem}.csv")).display()
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisentangleSettings {
    pub sigma_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub pin_non_targets: bool,
    /// Draws for the prior-metric profile.
    pub prior_samples: usize,
    /// Latent width of the identity fixture (`--identity`).
    pub identity_latent: usize,
}

impl Default for DisentangleSettings {
    fn default() -> Self {
        let o = ScanOptions::default();
        Self {
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            samples: o.samples,
            seed: o.seed,
            pin_non_targets: o.pin_non_targets,
            prior_samples: 1000,
            identity_latent: 10,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(id = "disentangle_source", required = true, args = ["checkpoint", "identity"])]
pub struct DisentangleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use the lossless identity fixture instead of a trained model.
    #[arg(long)]
    pub identity: bool,
    /// Comma-separated input standard deviations.
    #[arg(long, value_delimiter = ',')]
    pub sigma_grid: Option<Vec<f64>>,
    /// Samples per group.
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn disentangle(g: &Global, a: &DisentangleArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    seed_flag(g, &mut flags)?;
    if let Some(grid) = &a.sigma_grid {
        put(
            &mut flags,
            "sigma_grid",
            Value::Array(grid.iter().map(|&s| Value::Float(s)).collect()),
        );
    }
    if let Some(l) = a.samples {
        put(&mut flags, "samples", to_i64(l));
    }
    let s: DisentangleSettings = resolve(g.config.as_deref(), &g.overrides, flags)?;
    let opts = ScanOptions {
        sigma_grid: s.sigma_grid.clone(),
        samples: s.samples,
        seed: s.seed,
        pin_non_targets: s.pin_non_targets,
    };
    let model: Box<dyn LatentRoundTrip> = match &a.checkpoint {
        Some(p) => Box::new(load(p)?),
        None => Box::new(IdentityModel {
            latent: s.identity_latent,
        }),
    };
    let profile = metrics::disentanglement_scan(model.as_ref(), &opts)?;
    let ratios = metrics::variance_ratio(&profile)?;
    let prior = metrics::prior_metric_profile(model.as_ref(), s.prior_samples, s.seed)?;
    let dir = out_dir(g)?;
    write(
        dir.join("disentanglement.csv"),
        metrics::disentanglement_csv(&profile),
    )?;
    write(dir.join("variance_ratio.csv"), metrics::ratio_csv(&ratios))?;
    write(
        dir.join("prior_metric.csv"),
        metrics::prior_metric_csv(&prior),
    )?;
    write(
        dir.join("disentanglement.svg"),
        metrics::disentanglement_svg(&profile),
    )?;
    write_snapshot(dir, "disentangle", &s)?;
    let flagged = ratios
        .iter()
        .flatten()
        .filter(|r| r.ratio.is_none())
        .count();
    if flagged > 0 {
        eprintln!("warning: {flagged} group(s) had zero realized input variance; ratio omitted");
    }
    eprintln!(
        "wrote {} groups to {}",
        profile.groups(),
        dir.join("disentanglement.csv").display()
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RationalitySettings {
    /// Latent vector to decode with `--checkpoint`; empty means zeros.
    pub z: Vec<f64>,
    /// Which encounter of `--dataset` to profile.
    pub encounter: usize,
    pub length: usize,
    pub literal_normalize: bool,
    pub format: Format,
}

impl Default for RationalitySettings {
    fn default() -> Self {
        Self {
            z: Vec::new(),
            encounter: 0,
            length: data::DEFAULT_LENGTH,
            literal_normalize: false,
            format: Format::Xy,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(id = "rationality_source", required = true, args = ["checkpoint", "dataset"])]
pub struct RationalityArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset whose mean profiles are overlaid.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub literal_normalize: bool,
}

pub fn rationality(g: &Global, a: &RationalityArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    if a.literal_normalize {
        put(&mut flags, "literal_normalize", true);
    }
    let s: RationalitySettings = resolve(g.config.as_deref(), &g.overrides, flags)?;
    let (enc, length) = match (&a.checkpoint, &a.dataset) {
        (Some(p), _) => {
            let model = load(p)?;
            let z = if s.z.is_empty() {
                vec![0.0; model.latent()]
            } else {
                s.z.clone()
            };
            (model.decode(&z, model.length())?, model.length())
        }
        (None, Some(p)) => {
            let mut encs = load_dataset(p, s.format, s.length, s.literal_normalize)?;
            if s.encounter >= encs.len() {
                return Err(encforge::Error::Index {
                    index: s.encounter,
                    len: encs.len(),
                }
                .into());
            }
            (encs.swap_remove(s.encounter), s.length)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let reference = match &a.reference {
        Some(p) => Some(load_dataset(p, s.format, length, s.literal_normalize)?),
        None => None,
    };
    let report = metrics::rationality_report(&enc, reference.as_deref())?;
    let dir = out_dir(g)?;
    for (name, csv) in metrics::profile_csv(&report) {
        write(dir.join(format!("{name}.csv")), csv)?;
    }
    write(
        dir.join("rationality.svg"),
        metrics::rationality_svg(&report),
    )?;
    let summary = serde_json::json!({
        "encounter": enc.id,
        "distance": report.distance_summary,
        "speed": report.speed_summary,
        "direction": report.direction_summary,
        "degenerate_direction": report.has_degenerate_direction(),
        "reference_count": report.reference.as_ref().map(|o| o.count),
    });
    write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("json") + "\n",
    )?;
    write_snapshot(dir, "rationality", &s)?;
    eprintln!("wrote rationality profiles to {}", dir.display());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8765,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
}

pub fn serve(g: &Global, a: &ServeArgs) -> Result<(), CliError> {
    let mut flags = Table::new();
    if let Some(p) = a.port {
        put(&mut flags, "port", i64::from(p));
    }
    let s: ServeSettings = resolve(g.config.as_deref(), &g.overrides, flags)?;
    let model = Arc::new(load(&a.checkpoint)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    runtime.block_on(crate::serve::serve(model, &s.host, s.port))?;
    Ok(())
}
