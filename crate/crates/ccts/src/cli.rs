//! `ccts` command line.
//!
//! Every command writes under `--out`, records its resolved configuration in
//! `run-<command>.json` and rewrites `manifest.json` afterwards. Exit codes:
//! 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ccts_core::attribution::{
    cell_stream, effect_matrix_in, first_term_diagnostic, AttributionResult, EngineConfig, Executor, ImputerSet, Kind,
    Region,
};
use ccts_core::classifier::{auroc, ProbClassifier};
use ccts_core::concepts::{
    assign_concepts, concept_stats, elbow_select, kmeans_fit, validate_concepts, ConceptStatsRow, KmeansOptions,
};
use ccts_core::data::{ClassLabel, Dataset, Split};
use ccts_core::imputer::diffusion::{ddpm_train, DdpmImputer, DdpmTrainOptions};
use ccts_core::imputer::{donor_fit, Conditioning, DenoiserConfig, DiffusionSchedule, MaskSampler, SegmentImputer};
use ccts_core::classifier::{train_pooled_logistic, LogisticOptions};
use ccts_core::scm::{
    bayes_classifier, brute_force_effects, conditional_imputer, generate_dataset, interventional_imputer,
    GroundTruth, OracleOptions, ScmConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_classifier, load_denoiser, save_classifier, save_denoiser};
use crate::error::{Error, Result};
use crate::io::{load_dataset_auto, save_dataset, DatasetFormat};
use crate::manifest::{sha256_hex, write_manifest};
use crate::parallel::RayonExecutor;
use crate::report::{concept_stats_csv, emit_report, read_json, write_json, DiagnosticRow, OracleRow};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ccts", version, about = "Causal and associational concept attributions for time-series classifiers")]
pub struct Cli {
    /// Master seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON run configuration, or a bare SCM configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "ccts-out")]
    pub out: PathBuf,
    /// Suppress progress messages on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a labeled dataset from an SCM.
    Synth(SynthArgs),
    /// Cluster timesteps into concepts and relabel the dataset.
    Discover(DiscoverArgs),
    /// Check that concept statistics predict the class.
    Validate(DataArgs),
    /// Fit the pooled logistic classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Fit a diffusion imputer.
    TrainImputer(TrainImputerArgs),
    /// Estimate causal and associational effect matrices.
    Attribute(AttributeArgs),
    /// Render CSV, SVG and JSON summaries of an attribution run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value = "jsonl")]
    pub format: DatasetFormat,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file (`.jsonl` or `.csv`).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fixed number of concepts; otherwise chosen by the elbow rule.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long, default_value = "jsonl")]
    pub format: DatasetFormat,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelArg {
    Baseline,
    Target,
    All,
}

impl LabelArg {
    pub fn tag(self) -> &'static str {
        match self {
            LabelArg::Baseline => "0",
            LabelArg::Target => "1",
            LabelArg::All => "all",
        }
    }

    fn filter(self) -> Option<ClassLabel> {
        match self {
            LabelArg::Baseline => Some(ClassLabel::BASELINE),
            LabelArg::Target => Some(ClassLabel::TARGET),
            LabelArg::All => None,
        }
    }
}

impl FromStr for LabelArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "0" => Ok(LabelArg::Baseline),
            "1" => Ok(LabelArg::Target),
            "all" => Ok(LabelArg::All),
            _ => Err(format!("expected 0, 1 or all, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskMode {
    ConceptRegions,
    BlackoutRandom,
}

impl MaskMode {
    fn sampler(self) -> MaskSampler {
        match self {
            MaskMode::ConceptRegions => MaskSampler::ConceptRegions,
            MaskMode::BlackoutRandom => MaskSampler::BlackoutRandom,
        }
    }
}

/// File name of a diffusion checkpoint for a class and mask mode.
pub fn imputer_file(label: LabelArg, sampler: MaskSampler) -> String {
    format!("imputer-{}-{}.ddpm", label.tag(), sampler.as_str())
}

#[derive(Debug, Args)]
pub struct TrainImputerArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training class: 0, 1 or all.
    #[arg(long, default_value = "all")]
    pub label: LabelArg,
    #[arg(long, value_enum, default_value = "concept-regions")]
    pub mask_mode: MaskMode,
    /// Diffusion steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub time_dim: Option<usize>,
    /// Only mask this concept where a sample has it.
    #[arg(long)]
    pub concept: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ImputerKind {
    Ddpm,
    Donor,
    Scm,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Classifier checkpoint from `train-classifier`.
    #[arg(long, conflicts_with = "bayes", required_unless_present = "bayes")]
    pub classifier: Option<PathBuf>,
    /// Use the Bayes-optimal classifier of the SCM.
    #[arg(long)]
    pub bayes: bool,
    /// SCM configuration; defaults to the one in `--config`.
    #[arg(long)]
    pub scm: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ddpm")]
    pub imputer: ImputerKind,
    /// Directory holding diffusion checkpoints; defaults to `--out`.
    #[arg(long)]
    pub imputers: Option<PathBuf>,
    #[arg(long)]
    pub n_imputations: Option<usize>,
    #[arg(long)]
    pub bootstrap_b: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated concept ids; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub concepts: Option<Vec<u32>>,
    /// Compare global cells against exact SCM effects (needs an SCM).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding the `attribute` outputs; defaults to `--out`.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

/// Optional parameters read from `--config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scm: Option<ScmConfig>,
    pub engine: Option<EngineConfig>,
    pub logistic: Option<LogisticOptions>,
    pub kmeans: Option<KmeansOptions>,
}

impl ConfigFile {
    /// A JSON object with an `n_channels` key is taken as a bare SCM configuration.
    pub fn parse(text: &str) -> serde_json::Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        if v.get("n_channels").is_some() {
            Ok(Self { scm: Some(serde_json::from_value(v)?), ..Self::default() })
        } else {
            serde_json::from_value(v)
        }
    }
}

/// An input file referenced by its name and content hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

/// Resolved configuration of one command, written as `run-<command>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputRef>,
    pub params: serde_json::Value,
    pub outputs: Vec<String>,
}

struct Ctx {
    seed: u64,
    quiet: bool,
    out: PathBuf,
    config: ConfigFile,
    inputs: Vec<InputRef>,
    outputs: Vec<String>,
}

impl Ctx {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        let file = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
        self.inputs.push(InputRef { role: role.into(), file, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    fn load_data(&mut self, path: &Path) -> Result<Dataset> {
        self.input("data", path)?;
        load_dataset_auto(path)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn scm(&mut self, path: Option<&Path>) -> Result<ScmConfig> {
        match path {
            Some(p) => {
                self.input("scm", p)?;
                let text = std::fs::read_to_string(p).map_err(Error::io(p))?;
                ConfigFile::parse(&text)?
                    .scm
                    .ok_or_else(|| Error::Invalid(format!("{} holds no SCM configuration", p.display())))
            }
            None => self
                .config
                .scm
                .clone()
                .ok_or_else(|| Error::Invalid("an SCM configuration is required (--config or --scm)".into())),
        }
    }

    fn finish(self, command: &str, params: serde_json::Value) -> Result<()> {
        let name = format!("run-{command}.json");
        self.finish_as(command, &name, params)
    }

    fn finish_as(self, command: &str, name: &str, params: serde_json::Value) -> Result<()> {
        let mut outputs = self.outputs;
        outputs.sort();
        let record = RunConfig {
            version: VERSION.into(),
            command: command.into(),
            seed: self.seed,
            inputs: self.inputs,
            params,
            outputs,
        };
        write_json(&record, &self.out.join(name))?;
        write_manifest(&self.out)?;
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            EXIT_RUNTIME
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(Error::io(&cli.out))?;
    let mut ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        out: cli.out,
        config: ConfigFile::default(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    if let Some(p) = &cli.config {
        ctx.input("config", p)?;
        let text = std::fs::read_to_string(p).map_err(Error::io(p))?;
        ctx.config = ConfigFile::parse(&text).map_err(|e| Error::Parse {
            path: p.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
    }
    match cli.command {
        Command::Synth(a) => synth(ctx, a),
        Command::Discover(a) => discover(ctx, a),
        Command::Validate(a) => validate(ctx, a),
        Command::TrainClassifier(a) => train_classifier(ctx, a),
        Command::TrainImputer(a) => train_imputer(ctx, a),
        Command::Attribute(a) => attribute(ctx, a),
        Command::Report(a) => report(ctx, a),
    }
}

fn synth(mut ctx: Ctx, a: SynthArgs) -> Result<()> {
    let scm = ctx.scm(None)?;
    let d = generate_dataset(&scm, a.n, ctx.seed)?;
    let data = ctx.path(&format!("dataset.{}", a.format.extension()));
    save_dataset(&d, &data, a.format)?;
    write_json(&scm, &ctx.path("scm.json"))?;
    ctx.say(format!("wrote {} samples to {}", d.len(), data.display()));
    let params = serde_json::json!({ "n": a.n, "format": a.format, "scm": scm });
    ctx.finish("synth", params)
}

fn stats_rows(d: &Dataset) -> Vec<ConceptStatsRow> {
    d.samples().iter().flat_map(|s| concept_stats(s, true)).collect()
}

fn discover(mut ctx: Ctx, a: DiscoverArgs) -> Result<()> {
    let d = ctx.load_data(&a.data)?;
    let opts = ctx.config.kmeans.unwrap_or_default();
    let (k, elbow) = match a.k {
        Some(k) => (k, None),
        None => {
            let e = elbow_select(&d, a.k_min, a.k_max, ctx.seed, &opts)?;
            (e.k_star, Some(e))
        }
    };
    let model = kmeans_fit(&d, k, ctx.seed, &opts)?;
    let relabeled = assign_concepts(&model, &d)?;
    save_dataset(&relabeled, &ctx.path(&format!("concepts.{}", a.format.extension())), a.format)?;
    write_json(&model, &ctx.path("clustering.json"))?;
    if let Some(e) = &elbow {
        write_json(e, &ctx.path("elbow.json"))?;
    }
    let csv = concept_stats_csv(&stats_rows(&relabeled), &relabeled.channel_names());
    let p = ctx.path("concept-stats.csv");
    std::fs::write(&p, csv).map_err(Error::io(&p))?;
    ctx.say(format!("k = {k}"));
    let params = serde_json::json!({
        "k": a.k, "k_min": a.k_min, "k_max": a.k_max, "k_selected": k, "kmeans": opts, "format": a.format,
    });
    ctx.finish("discover", params)
}

fn validate(mut ctx: Ctx, a: DataArgs) -> Result<()> {
    let d = ctx.load_data(&a.data)?;
    let v = validate_concepts(&d, ctx.seed)?;
    write_json(&v, &ctx.path("validation.json"))?;
    ctx.say(format!("concept AUROC {:.4} [{:.4}, {:.4}]", v.auroc, v.interval.low, v.interval.high));
    ctx.finish("validate", serde_json::json!({}))
}

#[derive(Serialize)]
struct ClassifierEval {
    split: Split,
    n: usize,
    auroc: Option<f64>,
}

fn train_classifier(mut ctx: Ctx, a: TrainClassifierArgs) -> Result<()> {
    let d = ctx.load_data(&a.data)?;
    let mut opts = ctx.config.logistic.unwrap_or_default();
    opts.l2 = a.l2.unwrap_or(opts.l2);
    opts.epochs = a.epochs.unwrap_or(opts.epochs);
    opts.lr = a.lr.unwrap_or(opts.lr);
    let model = train_pooled_logistic(&d, &opts)?;
    save_classifier(&model, &ctx.path("classifier.json"))?;
    let (scores, labels): (Vec<f64>, Vec<u8>) = d
        .in_split(Split::Test)
        .map(|s| Ok((model.predict(&s.series)?, s.label.value())))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let eval = ClassifierEval { split: Split::Test, n: scores.len(), auroc: auroc(&scores, &labels).ok() };
    write_json(&eval, &ctx.path("classifier-eval.json"))?;
    if let Some(v) = eval.auroc {
        ctx.say(format!("test AUROC {v:.4}"));
    }
    ctx.finish("train-classifier", serde_json::json!({ "logistic": opts }))
}

fn train_imputer(mut ctx: Ctx, a: TrainImputerArgs) -> Result<()> {
    let d = ctx.load_data(&a.data)?;
    let base = DdpmTrainOptions::default();
    let schedule = match a.steps {
        Some(t) => DiffusionSchedule::new(t, base.schedule.beta0(), base.schedule.beta1())?,
        None => base.schedule.clone(),
    };
    let dc = DenoiserConfig::default();
    let opts = DdpmTrainOptions {
        schedule,
        label_filter: a.label.filter(),
        mask_sampler: a.mask_mode.sampler(),
        concept_filter: a.concept,
        iters: a.iters.unwrap_or(base.iters),
        lr: a.lr.unwrap_or(base.lr),
        batch_size: a.batch_size.unwrap_or(base.batch_size),
        eval_every: a.eval_every.unwrap_or(base.eval_every),
        val_draws: base.val_draws,
        denoiser: DenoiserConfig {
            radius: a.radius.unwrap_or(dc.radius),
            hidden: a.hidden.unwrap_or(dc.hidden),
            time_dim: a.time_dim.unwrap_or(dc.time_dim),
        },
        seed: ctx.seed,
    };
    let (model, train_report) = ddpm_train(&d, &opts)?;
    let name = imputer_file(a.label, opts.mask_sampler);
    save_denoiser(&model, &ctx.path(&name))?;
    write_json(&train_report, &ctx.path(&name.replace(".ddpm", "-training.json")))?;
    ctx.say(format!("selected iteration {} (validation loss {:.5})", train_report.selected_iter, train_report.selected_loss));
    let params = serde_json::json!({
        "label": a.label.tag(),
        "mask_mode": opts.mask_sampler.as_str(),
        "concept": opts.concept_filter,
        "steps": opts.schedule.steps(),
        "beta0": opts.schedule.beta0(),
        "beta1": opts.schedule.beta1(),
        "iters": opts.iters,
        "lr": opts.lr,
        "batch_size": opts.batch_size,
        "eval_every": opts.eval_every,
        "val_draws": opts.val_draws,
        "radius": opts.denoiser.radius,
        "hidden": opts.denoiser.hidden,
        "time_dim": opts.denoiser.time_dim,
    });
    let record = format!("run-{}", name.replace(".ddpm", ".json"));
    ctx.finish_as("train-imputer", &record, params)
}

/// Diffusion imputers for one class slot: a global one and, if trained, a blackout one.
struct DdpmSlot {
    global: DdpmImputer,
    channel: Option<DdpmImputer>,
}

fn load_slot(ctx: &mut Ctx, dir: &Path, label: LabelArg) -> Result<DdpmSlot> {
    let regions = dir.join(imputer_file(label, MaskSampler::ConceptRegions));
    let blackout = dir.join(imputer_file(label, MaskSampler::BlackoutRandom));
    let expected = match label.filter() {
        Some(l) => Conditioning::ClassSpecific(l),
        None => Conditioning::Unconditional,
    };
    let load = |ctx: &mut Ctx, p: &Path| -> Result<DdpmImputer> {
        ctx.input("imputer", p)?;
        let m = load_denoiser(p)?;
        if m.conditioning() != expected {
            return Err(Error::Checkpoint {
                path: p.to_path_buf(),
                msg: format!("trained as {}, expected {}", m.conditioning().tag(), expected.tag()),
            });
        }
        Ok(DdpmImputer::new(m))
    };
    let channel = if blackout.is_file() { Some(load(ctx, &blackout)?) } else { None };
    let global = if regions.is_file() {
        load(ctx, &regions)?
    } else if let Some(c) = &channel {
        c.clone()
    } else {
        return Err(Error::Invalid(format!(
            "missing imputer checkpoint {} (run train-imputer --label {} first)",
            regions.display(),
            label.tag()
        )));
    };
    Ok(DdpmSlot { global, channel })
}

enum Imputers {
    Ddpm([DdpmSlot; 3]),
    Donor([ccts_core::imputer::DonorPool; 3]),
    Scm([ccts_core::scm::ScmImputer; 3]),
}

impl Imputers {
    fn set(&self) -> ImputerSet<'_> {
        fn dy<T: SegmentImputer>(x: &T) -> Option<&dyn SegmentImputer> {
            Some(x)
        }
        match self {
            Imputers::Ddpm([t, b, u]) => ImputerSet {
                target: dy(&t.global),
                baseline: dy(&b.global),
                unconditional: dy(&u.global),
                channel_target: t.channel.as_ref().and_then(|x| dy(x)),
                channel_baseline: b.channel.as_ref().and_then(|x| dy(x)),
                channel_unconditional: u.channel.as_ref().and_then(|x| dy(x)),
            },
            Imputers::Donor([t, b, u]) => ImputerSet::shared(dy(t), dy(b), dy(u)),
            Imputers::Scm([t, b, u]) => ImputerSet::shared(dy(t), dy(b), dy(u)),
        }
    }
}

fn attribute(mut ctx: Ctx, a: AttributeArgs) -> Result<()> {
    let d = ctx.load_data(&a.data)?;
    let needs_scm = a.bayes || a.imputer == ImputerKind::Scm || a.oracle;
    let gt = if needs_scm { Some(GroundTruth::new(ctx.scm(a.scm.as_deref())?)?) } else { None };

    let classifier: Box<dyn ProbClassifier> = match (&a.classifier, &gt) {
        (Some(p), _) => {
            ctx.input("classifier", p)?;
            Box::new(load_classifier(p)?)
        }
        (None, Some(gt)) => Box::new(bayes_classifier(gt)),
        (None, None) => unreachable!("clap requires --classifier or --bayes"),
    };
    let f: &dyn ProbClassifier = classifier.as_ref();

    let imputers = match a.imputer {
        ImputerKind::Ddpm => {
            let dir = a.imputers.clone().unwrap_or_else(|| ctx.out.clone());
            Imputers::Ddpm([
                load_slot(&mut ctx, &dir, LabelArg::Target)?,
                load_slot(&mut ctx, &dir, LabelArg::Baseline)?,
                load_slot(&mut ctx, &dir, LabelArg::All)?,
            ])
        }
        ImputerKind::Donor => Imputers::Donor([
            donor_fit(&d, Some(ClassLabel::TARGET))?,
            donor_fit(&d, Some(ClassLabel::BASELINE))?,
            donor_fit(&d, None)?,
        ]),
        ImputerKind::Scm => {
            let gt = gt.as_ref().expect("scm loaded");
            Imputers::Scm([
                interventional_imputer(gt, ClassLabel::TARGET),
                interventional_imputer(gt, ClassLabel::BASELINE),
                conditional_imputer(gt),
            ])
        }
    };
    let set = imputers.set();

    let mut cfg = ctx.config.engine.clone().unwrap_or_default();
    cfg.seed = ctx.seed;
    cfg.n_imputations = a.n_imputations.unwrap_or(cfg.n_imputations);
    cfg.bootstrap_b = a.bootstrap_b.unwrap_or(cfg.bootstrap_b);
    cfg.level = a.level.unwrap_or(cfg.level);
    let concepts: Vec<u32> = a.concepts.clone().unwrap_or_else(|| (1..=d.n_concepts()).collect());
    if let Some(&c) = concepts.iter().find(|&&c| c == 0 || c > d.n_concepts()) {
        return Err(Error::Invalid(format!("concept {c} outside 1..={}", d.n_concepts())));
    }

    let exec = RayonExecutor::from_env();
    let results = effect_matrix_in(&exec, &d, f, &set, &concepts, &cfg)?;
    for r in &results {
        write_json(r, &ctx.path(&format!("attribution-{}.json", r.kind.as_str())))?;
    }

    let diagnostics = first_term_rows(&exec, &d, f, set.target, &concepts, &cfg)?;
    write_json(&diagnostics, &ctx.path("diagnostics.json"))?;

    if a.oracle {
        let rows = oracle_rows(&exec, gt.as_ref().expect("scm loaded"), &d, f, &results)?;
        write_json(&rows, &ctx.path("oracle.json"))?;
    }

    for r in &results {
        let n_sig = r.cells.iter().filter(|c| c.summary.is_some_and(|s| s.significant)).count();
        ctx.say(format!("{}: {n_sig} of {} cells significant", r.kind.as_str(), r.cells.len()));
    }
    let params = serde_json::json!({
        "classifier": if a.bayes { "bayes" } else { "pooled-logistic" },
        "imputer": format!("{:?}", a.imputer).to_lowercase(),
        "engine": cfg,
        "concepts": concepts,
        "oracle": a.oracle,
    });
    ctx.finish("attribute", params)
}

fn first_term_rows(
    exec: &impl Executor,
    d: &Dataset,
    f: &dyn ProbClassifier,
    target: Option<&dyn SegmentImputer>,
    concepts: &[u32],
    cfg: &EngineConfig,
) -> Result<Vec<DiagnosticRow>> {
    let Some(target) = target else { return Ok(Vec::new()) };
    let samples: Vec<_> = d.in_split(Split::Test).filter(|s| s.label == cfg.target_class).collect();
    let jobs: Vec<(usize, u32)> = (0..samples.len()).flat_map(|i| concepts.iter().map(move |&c| (i, c))).collect();
    let values = exec.map(jobs.len(), &|j| {
        let (i, c) = jobs[j];
        let s = samples[i];
        let rng = cell_stream(cfg.seed, &s.sample_id, Region::Global(c), Kind::Causal).substream("first-term");
        first_term_diagnostic(s, f, c, target, cfg, &rng)
    });
    let mut rows = Vec::new();
    for (&(i, c), v) in jobs.iter().zip(values) {
        if let Some(value) = v? {
            rows.push(DiagnosticRow { sample_id: samples[i].sample_id.clone(), concept: c, value });
        }
    }
    Ok(rows)
}

/// Mean exact effect over the samples each global cell used.
fn oracle_rows(
    exec: &impl Executor,
    gt: &GroundTruth,
    d: &Dataset,
    f: &dyn ProbClassifier,
    results: &[AttributionResult],
) -> Result<Vec<OracleRow>> {
    let opts = OracleOptions::default();
    let mut rows = Vec::new();
    for r in results {
        for cell in r.cells.iter().filter(|c| c.channel.is_none()) {
            let Some(summary) = cell.summary else { continue };
            let samples: Vec<_> = cell
                .effects
                .iter()
                .map(|e| {
                    d.samples()
                        .iter()
                        .find(|s| s.sample_id == e.sample_id)
                        .ok_or_else(|| Error::Invalid(format!("sample {} not in dataset", e.sample_id)))
                })
                .collect::<Result<_>>()?;
            let exact = exec.map(samples.len(), &|i| brute_force_effects(gt, samples[i], f, cell.concept, &opts));
            let mut values = Vec::with_capacity(exact.len());
            for e in exact {
                let e = e?;
                values.push(match r.kind {
                    Kind::Causal => e.ite,
                    Kind::Associational => e.iaa,
                });
            }
            let oracle = ccts_core::stats::mean(&values);
            rows.push(OracleRow {
                concept: cell.concept,
                kind: r.kind,
                estimate: summary.ate,
                oracle,
                abs_error: (summary.ate - oracle).abs(),
                n: values.len(),
            });
        }
    }
    Ok(rows)
}

fn report(mut ctx: Ctx, a: ReportArgs) -> Result<()> {
    let dir = a.results.clone().unwrap_or_else(|| ctx.out.clone());
    let load = |ctx: &mut Ctx, name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(Error::Invalid(format!("missing {} (run attribute first)", p.display())));
        }
        ctx.input(name, &p)?;
        Ok(p)
    };
    let causal: AttributionResult = read_json(&load(&mut ctx, "attribution-causal.json")?)?;
    let assoc: AttributionResult = read_json(&load(&mut ctx, "attribution-associational.json")?)?;
    let diagnostics: Vec<DiagnosticRow> = if dir.join("diagnostics.json").is_file() {
        read_json(&load(&mut ctx, "diagnostics.json")?)?
    } else {
        Vec::new()
    };
    let oracle: Option<Vec<OracleRow>> = if dir.join("oracle.json").is_file() {
        Some(read_json(&load(&mut ctx, "oracle.json")?)?)
    } else {
        None
    };
    let report_dir = ctx.out.join("report");
    let summary = emit_report(&causal, &assoc, &diagnostics, oracle.as_deref(), &report_dir)?;
    for entry in std::fs::read_dir(&report_dir).map_err(Error::io(&report_dir))? {
        let entry = entry.map_err(Error::io(&report_dir))?;
        ctx.outputs.push(format!("report/{}", entry.file_name().to_string_lossy()));
    }
    match summary.sign_agreement.fraction {
        Some(fr) => ctx.say(format!("sign agreement {:.1}% over {} cells", 100.0 * fr, summary.sign_agreement.n_compared)),
        None => ctx.say("no cells with two nonzero effects to compare"),
    }
    ctx.finish("report", serde_json::json!({}))
}
