//! `skelact`: command-line interface for synthetic dataset generation,
//! preprocessing, training, transfer learning, evaluation, report rendering,
//! and numerical self-tests.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data error,
//! 3 numerical self-test failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skelact_core::data::{self, io as dataio, synth::SynthDomainSpec, Split};
use skelact_core::error::Error;
use skelact_core::experiment::{run_experiment, ExperimentOutput, ExperimentRecipe};
use skelact_core::metrics::{render_report, summary_csv};
use skelact_core::models::{Model, ModelSpec, ScalePreset, Variant};
use skelact_core::selfcheck;
use skelact_core::skelgraph::{builtin, SkeletonTopology};
use skelact_core::training::{evaluate, fit, FitConfig, ScheduleConfig};
use skelact_core::transfer::{
    self, parameter_checksums, transfer_run, Checkpoint, CheckpointMeta, Config2LrMode, FreezePlan,
    PlanKind, TransferOutcome,
};

/// Working precision of the CLI. Gradient checks run in f64 internally.
type Working = f32;

const OUT_ROOT_ENV: &str = "SKELACT_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "skelact",
    version,
    about = "Skeleton action recognition with spatio-temporal graph convolution models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic skeleton-motion dataset.
    GenSynth(GenSynthArgs),
    /// Expand to 25 joints, pad by replay, and normalize a dataset.
    Convert(ConvertArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Retrain from a checkpoint under a freeze plan.
    Transfer(TransferArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run the full baseline-vs-transfer experiment from a recipe file.
    Report(ReportArgs),
    /// Run the numerical self-test suite (gradient checks and oracles).
    Selftest,
}

/// `key = value` configuration file; every key must be consumed.
struct ConfigFile {
    entries: Vec<(String, String)>,
    origin: String,
}

impl ConfigFile {
    fn load(path: Option<&PathBuf>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(ConfigFile { entries: Vec::new(), origin: String::new() });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), no + 1))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(ConfigFile { entries, origin: path.display().to_string() })
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, Error> {
        match self.entries.iter().position(|(k, _)| k == key) {
            None => Ok(None),
            Some(pos) => {
                let (_, v) = self.entries.remove(pos);
                v.parse::<T>().map(Some).map_err(|_| {
                    Error::Config(format!("{}: bad value {v:?} for key {key}", self.origin))
                })
            }
        }
    }

    fn finish(self) -> Result<(), Error> {
        if let Some((k, _)) = self.entries.first() {
            return Err(Error::Config(format!("{}: unknown config key {k:?}", self.origin)));
        }
        Ok(())
    }
}

fn default_out(command: &str) -> PathBuf {
    let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".into());
    Path::new(&root).join(command)
}

fn write_config_echo(dir: &Path, entries: &[(String, String)]) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.join("config.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn kv(key: &str, value: impl std::fmt::Display) -> (String, String) {
    (key.to_string(), value.to_string())
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Tempo multiplier (larger = slower actions, longer sequences).
    #[arg(long)]
    tempo: Option<f64>,
    /// Coordinate noise level in meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Joint count: 20 or 25.
    #[arg(long)]
    joints: Option<usize>,
    /// Mean frame count at tempo 1.0.
    #[arg(long)]
    base_frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Global index of the first class (held-out domains share primitives).
    #[arg(long)]
    class_offset: Option<usize>,
    /// Fraction of each class assigned to the train split.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optional key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<(), Error> {
    let mut cfg = ConfigFile::load(args.config.as_ref())?;
    let spec = SynthDomainSpec {
        classes: args.classes.or(cfg.take("classes")?).unwrap_or(4),
        per_class: args.per_class.or(cfg.take("per_class")?).unwrap_or(10),
        tempo: args.tempo.or(cfg.take("tempo")?).unwrap_or(1.0),
        noise: args.noise.or(cfg.take("noise")?).unwrap_or(0.01),
        joints: args.joints.or(cfg.take("joints")?).unwrap_or(25),
        base_frames: args.base_frames.or(cfg.take("base_frames")?).unwrap_or(95),
        fps: args.fps.or(cfg.take("fps")?).unwrap_or(25.0),
        class_offset: args.class_offset.or(cfg.take("class_offset")?).unwrap_or(0),
        train_fraction: args.train_fraction.or(cfg.take("train_fraction")?).unwrap_or(0.75),
    };
    let seed = args.seed.or(cfg.take("seed")?).unwrap_or(0);
    let out = args.out.or(cfg.take("out")?).unwrap_or_else(|| default_out("gen-synth"));
    cfg.finish()?;

    let dataset = data::synth::synth_generate(&spec, seed)?;
    dataio::save_dataset(&dataset, &out)?;
    write_config_echo(&out, &[
        kv("command", "gen-synth"),
        kv("classes", spec.classes),
        kv("per_class", spec.per_class),
        kv("tempo", spec.tempo),
        kv("noise", spec.noise),
        kv("joints", spec.joints),
        kv("base_frames", spec.base_frames),
        kv("fps", spec.fps),
        kv("class_offset", spec.class_offset),
        kv("train_fraction", spec.train_fraction),
        kv("seed", seed),
    ])?;
    println!(
        "gen-synth: wrote {} samples over {} classes to {}",
        dataset.samples.len(),
        spec.classes,
        out.display()
    );
    Ok(())
}

#[derive(Args)]
struct ConvertArgs {
    /// Input manifest file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay-padding target frame count.
    #[arg(long)]
    target_frames: Option<usize>,
    /// Skip normalization/translation.
    #[arg(long)]
    no_normalize: bool,
    /// Topology override file (joint count line, `i j` bone lines, `center c`).
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_convert(args: ConvertArgs) -> Result<(), Error> {
    let mut cfg = ConfigFile::load(args.config.as_ref())?;
    let target_frames = args.target_frames.or(cfg.take("target_frames")?).unwrap_or(300);
    let normalize = !(args.no_normalize || cfg.take::<bool>("no_normalize")?.unwrap_or(false));
    let out = args.out.or(cfg.take("out")?).unwrap_or_else(|| default_out("convert"));
    cfg.finish()?;

    let topology = match &args.topology {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            Some(SkeletonTopology::from_text(&text)?)
        }
        None => None,
    };
    let dataset = dataio::load_dataset(&args.input)?;
    let converted = data::preprocess_dataset(&dataset, target_frames, normalize, topology.as_ref())?;
    dataio::save_dataset(&converted, &out)?;
    write_config_echo(&out, &[
        kv("command", "convert"),
        kv("in", args.input.display()),
        kv("target_frames", target_frames),
        kv("normalize", normalize),
    ])?;
    println!(
        "convert: {} samples -> {} joints, {} frames, at {}",
        converted.samples.len(),
        converted.manifest.joint_count,
        target_frames,
        out.display()
    );
    Ok(())
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    /// Initial learning rate (defaults to the preset schedule).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_factor: Option<f64>,
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    decay_start: Option<usize>,
}

impl ScheduleArgs {
    fn resolve(&self, base: ScheduleConfig) -> ScheduleConfig {
        ScheduleConfig {
            initial_lr: self.lr.unwrap_or(base.initial_lr),
            decay_factor: self.decay_factor.unwrap_or(base.decay_factor),
            interval_epochs: self.decay_every.unwrap_or(base.interval_epochs),
            start_epoch: self.decay_start.unwrap_or(base.start_epoch),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest (preprocessed; see `convert`).
    #[arg(long)]
    data: PathBuf,
    /// Model family: stgcn, agcn_2s, msg3d.
    #[arg(long)]
    variant: Option<String>,
    /// Scale preset: desk or paper.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_split_dataset(path: &Path) -> Result<(data::Dataset, usize), Error> {
    let dataset = dataio::load_dataset(path)?;
    let classes = dataset.manifest.class_count();
    if classes < 2 {
        return Err(Error::Data(format!(
            "{}: need at least 2 classes, found {classes}",
            path.display()
        )));
    }
    Ok((dataset, classes))
}

fn topology_for(joints: usize) -> Result<SkeletonTopology, Error> {
    builtin::for_joint_count(joints)
        .ok_or_else(|| Error::Config(format!("no built-in topology for {joints} joints")))
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = ConfigFile::load(args.config.as_ref())?;
    let variant = Variant::parse(
        &args.variant.or(cfg.take("variant")?).unwrap_or_else(|| "stgcn".into()),
    )?;
    let preset = ScalePreset::parse(
        &args.preset.or(cfg.take("preset")?).unwrap_or_else(|| "desk".into()),
    )?;
    let epochs = args.epochs.or(cfg.take("epochs")?).unwrap_or(50);
    let seed = args.seed.or(cfg.take("seed")?).unwrap_or(0);
    let batch = args.batch.or(cfg.take("batch")?).unwrap_or(8);
    let out = args.out.or(cfg.take("out")?).unwrap_or_else(|| default_out("train"));
    let base = match preset {
        ScalePreset::Paper => ScheduleConfig::paper_preset(variant),
        ScalePreset::Desk => ScheduleConfig::desk_default(),
    };
    let mut schedule_args = args.schedule.clone();
    schedule_args.lr = schedule_args.lr.or(cfg.take("lr")?);
    schedule_args.decay_factor = schedule_args.decay_factor.or(cfg.take("decay_factor")?);
    schedule_args.decay_every = schedule_args.decay_every.or(cfg.take("decay_every")?);
    schedule_args.decay_start = schedule_args.decay_start.or(cfg.take("decay_start")?);
    let schedule = schedule_args.resolve(base);
    cfg.finish()?;

    let (dataset, classes) = load_split_dataset(&args.data)?;
    let topology = topology_for(dataset.manifest.joint_count)?;
    let spec = ModelSpec::preset(variant, preset, topology, classes);
    let mut model = Model::<Working>::build(spec, seed)?;

    let train = dataset.split_samples(Split::Train);
    let test = dataset.split_samples(Split::Test);
    let mut fit_cfg = FitConfig::new(epochs, schedule.clone(), seed);
    fit_cfg.batch_size = batch;
    fit_cfg.config_echo = vec![
        kv("variant", variant.as_str()),
        kv("preset", preset.as_str()),
        kv("batch", batch),
    ];
    let report = fit(&mut model, &train, &test, &fit_cfg)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    report.save(&out.join("report.skreport"))?;
    transfer::save_checkpoint(
        &model,
        CheckpointMeta {
            dataset_tag: args.data.display().to_string(),
            seed,
            epochs_trained: epochs,
            final_acc: report.final_acc().unwrap_or(0.0),
        },
        &out.join("model.skckpt"),
    )?;
    write_config_echo(&out, &[
        kv("command", "train"),
        kv("data", args.data.display()),
        kv("variant", variant.as_str()),
        kv("preset", preset.as_str()),
        kv("epochs", epochs),
        kv("seed", seed),
        kv("batch", batch),
        kv("lr", schedule.initial_lr),
        kv("decay_factor", schedule.decay_factor),
        kv("decay_every", schedule.interval_epochs),
        kv("decay_start", schedule.start_epoch),
    ])?;
    println!(
        "train: {} epochs, final test accuracy {:.4}, outputs at {}",
        epochs,
        report.final_acc().unwrap_or(0.0),
        out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TransferArgs {
    /// Target dataset manifest (preprocessed).
    #[arg(long)]
    data: PathBuf,
    /// Source checkpoint; omit for a fresh baseline model.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Freeze plan: config1, config2, or none.
    #[arg(long)]
    plan: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Variant for fresh models (ignored when --source is given).
    #[arg(long)]
    variant: Option<String>,
    /// Preset for fresh models (ignored when --source is given).
    #[arg(long)]
    preset: Option<String>,
    /// How config2 lowers the rate: multiply (x0.01) or absolute (=0.01).
    #[arg(long)]
    config2_lr_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_transfer(args: TransferArgs) -> Result<(), Error> {
    let mut cfg = ConfigFile::load(args.config.as_ref())?;
    let plan_kind = PlanKind::parse(
        &args.plan.or(cfg.take("plan")?).unwrap_or_else(|| "config1".into()),
    )?;
    let epochs = args.epochs.or(cfg.take("epochs")?).unwrap_or(20);
    let seed = args.seed.or(cfg.take("seed")?).unwrap_or(0);
    let batch = args.batch.or(cfg.take("batch")?).unwrap_or(8);
    let out = args.out.or(cfg.take("out")?).unwrap_or_else(|| default_out("transfer"));
    let lr_mode = match args
        .config2_lr_mode
        .or(cfg.take("config2_lr_mode")?)
        .unwrap_or_else(|| "multiply".into())
        .as_str()
    {
        "multiply" => Config2LrMode::Multiply,
        "absolute" => Config2LrMode::Absolute,
        other => return Err(Error::Config(format!("unknown config2 lr mode {other:?}"))),
    };

    let source = match &args.source {
        Some(path) => Some(Checkpoint::<Working>::load(path)?),
        None => None,
    };
    let (dataset, classes) = load_split_dataset(&args.data)?;
    let topology = topology_for(dataset.manifest.joint_count)?;
    let (variant, preset) = match &source {
        Some(ckpt) => (ckpt.spec.variant, ckpt.spec.scale_preset),
        None => (
            Variant::parse(&args.variant.or(cfg.take("variant")?).unwrap_or_else(|| "stgcn".into()))?,
            ScalePreset::parse(&args.preset.or(cfg.take("preset")?).unwrap_or_else(|| "desk".into()))?,
        ),
    };
    let base = match preset {
        ScalePreset::Paper => ScheduleConfig::paper_preset(variant),
        ScalePreset::Desk => ScheduleConfig::desk_default(),
    };
    let mut schedule_args = args.schedule.clone();
    schedule_args.lr = schedule_args.lr.or(cfg.take("lr")?);
    schedule_args.decay_factor = schedule_args.decay_factor.or(cfg.take("decay_factor")?);
    schedule_args.decay_every = schedule_args.decay_every.or(cfg.take("decay_every")?);
    schedule_args.decay_start = schedule_args.decay_start.or(cfg.take("decay_start")?);
    let base_schedule = schedule_args.resolve(base);
    cfg.finish()?;

    let plan = match plan_kind {
        PlanKind::Config1 => FreezePlan::config1(&base_schedule),
        PlanKind::Config2 => FreezePlan::config2(&base_schedule, lr_mode),
        PlanKind::NoFreeze => FreezePlan::none(base_schedule.clone()),
    };
    let target_spec = ModelSpec::preset(variant, preset, topology, classes);
    let train = dataset.split_samples(Split::Train);
    let test = dataset.split_samples(Split::Test);
    let outcome: TransferOutcome<Working> = transfer_run(
        source.as_ref(),
        &target_spec,
        &train,
        &test,
        &plan,
        epochs,
        seed,
        batch,
    )?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    outcome.report.save(&out.join("report.skreport"))?;
    transfer::save_checkpoint(
        &outcome.model,
        CheckpointMeta {
            dataset_tag: args.data.display().to_string(),
            seed,
            epochs_trained: epochs,
            final_acc: outcome.report.final_acc().unwrap_or(0.0),
        },
        &out.join("model.skckpt"),
    )?;
    let mut checksum_text = String::new();
    for (name, checksum) in parameter_checksums(&outcome.model, true) {
        checksum_text.push_str(&format!("{name} {checksum:016x}\n"));
    }
    let checksum_path = out.join("frozen_checksums.txt");
    std::fs::write(&checksum_path, checksum_text)
        .map_err(|e| Error::io(checksum_path.display().to_string(), e))?;
    write_config_echo(&out, &[
        kv("command", "transfer"),
        kv("data", args.data.display()),
        kv("source", args.source.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        kv("plan", plan_kind.as_str()),
        kv("epochs", epochs),
        kv("seed", seed),
        kv("batch", batch),
        kv("lr", plan.lr_override.initial_lr),
        kv("config2_lr_mode", match lr_mode {
            Config2LrMode::Multiply => "multiply",
            Config2LrMode::Absolute => "absolute",
        }),
    ])?;
    println!(
        "transfer: plan {}, final test accuracy {:.4}, outputs at {}",
        plan_kind.as_str(),
        outcome.report.final_acc().unwrap_or(0.0),
        out.display()
    );
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Which split to evaluate: train, test, or all.
    #[arg(long, default_value = "test")]
    split: String,
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let ckpt = Checkpoint::<Working>::load(&args.ckpt)?;
    let model = ckpt.to_model()?;
    let dataset = dataio::load_dataset(&args.data)?;
    let samples = match args.split.as_str() {
        "train" => dataset.split_samples(Split::Train),
        "test" => dataset.split_samples(Split::Test),
        "all" => dataset.all_samples(),
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let accuracy = evaluate(&model, &samples)?;
    println!("accuracy {accuracy:.6} over {} samples ({})", samples.len(), args.split);
    Ok(())
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment recipe file (key = value lines).
    #[arg(long)]
    recipe: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_report(args: ReportArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.recipe)
        .map_err(|e| Error::io(args.recipe.display().to_string(), e))?;
    let recipe = ExperimentRecipe::from_text(&text, &args.recipe.display().to_string())?;
    let out = args.out.unwrap_or_else(|| default_out("report"));

    let output: ExperimentOutput<Working> = run_experiment(&recipe)?;
    render_report(&output.averaged, &out)?;
    let per_seed_path = out.join("summary_per_seed.csv");
    std::fs::write(&per_seed_path, summary_csv(&output.per_seed))
        .map_err(|e| Error::io(per_seed_path.display().to_string(), e))?;

    let reports_dir = out.join("reports");
    std::fs::create_dir_all(&reports_dir)
        .map_err(|e| Error::io(reports_dir.display().to_string(), e))?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(ckpt_dir.display().to_string(), e))?;
    for (runs, ckpt) in output.runs.iter().zip(&output.source_checkpoints) {
        let v = runs.variant.as_str();
        runs.source_report.save(&reports_dir.join(format!("source_{v}.skreport")))?;
        ckpt.save(&ckpt_dir.join(format!("source_{v}.skckpt")))?;
        for (seed, baseline, c1, c2) in &runs.seed_reports {
            baseline.save(&reports_dir.join(format!("{v}_seed{seed}_baseline.skreport")))?;
            c1.save(&reports_dir.join(format!("{v}_seed{seed}_config1.skreport")))?;
            c2.save(&reports_dir.join(format!("{v}_seed{seed}_config2.skreport")))?;
        }
    }
    write_config_echo(&out, &[
        kv("command", "report"),
        kv("recipe", args.recipe.display()),
        kv("variants", recipe.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(",")),
        kv("seeds", recipe.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
        kv("source_classes", recipe.source_classes),
        kv("target_classes", recipe.target_classes),
        kv("tempo_target", recipe.tempo_target),
        kv("data_seed", recipe.data_seed),
    ])?;

    println!(
        "report: wrote summary and curves for {} comparisons to {}",
        output.averaged.len(),
        out.display()
    );
    for c in &output.averaged {
        println!(
            "  {} {}: final {:.4}, jumpstart {:+.4}, asymptotic {:+.4}",
            c.model, c.plan, c.final_acc, c.jumpstart, c.asymptotic
        );
    }
    Ok(())
}

fn cmd_selftest() -> ExitCode {
    let results = selfcheck::run_selftest();
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "pass" } else { "FAIL" };
        println!("selftest {status}: {} ({})", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("selftest: {} checks passed", results.len());
        ExitCode::SUCCESS
    } else {
        eprintln!("selftest: {failed} of {} checks failed", results.len());
        ExitCode::from(3)
    }
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) => ExitCode::from(1),
        Error::Data(_) | Error::Io { .. } | Error::Shape(_) => ExitCode::from(2),
        Error::Numeric(_) => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap treats --help/--version as errors that print to stdout.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Train(args) => cmd_train(args),
        Command::Transfer(args) => cmd_transfer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::Selftest => return cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("skelact: {err}");
            exit_code_for(&err)
        }
    }
}
