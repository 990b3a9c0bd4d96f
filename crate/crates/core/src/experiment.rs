//! The full transfer experiment behind the `report` command: synthesize a
//! source and a held-out target domain, train source checkpoints, run the
//! baseline plus both transfer configurations over several seeds, and
//! collect the comparisons.

use crate::data::{self, synth::SynthDomainSpec, Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{average_comparisons, TransferComparison};
use crate::models::{Model, ModelSpec, ScalePreset, Variant};
use crate::real::Real;
use crate::skelgraph::builtin;
use crate::training::{fit, FitConfig, ScheduleConfig, TrainReport};
use crate::transfer::{
    transfer_run, Checkpoint, CheckpointMeta, Config2LrMode, FreezePlan, TransferOutcome,
};

/// Everything a transfer experiment needs. The target domain's classes are
/// held out (offset past the source classes) and run at a different tempo,
/// while both domains share the motion primitive pool.
#[derive(Debug, Clone)]
pub struct ExperimentRecipe {
    pub variants: Vec<Variant>,
    pub preset: ScalePreset,
    pub source_classes: usize,
    pub target_classes: usize,
    pub source_per_class: usize,
    pub target_per_class: usize,
    pub tempo_source: f64,
    pub tempo_target: f64,
    pub noise: f64,
    /// Joint count of the generated data; 20 exercises the joint expansion.
    pub joints: usize,
    pub base_frames: usize,
    /// Replay-padding target for model inputs.
    pub pad_to: usize,
    pub source_epochs: usize,
    pub target_epochs: usize,
    /// Target-side run seeds; metrics are averaged over them.
    pub seeds: Vec<u64>,
    pub batch: usize,
    /// Initial learning rate of the source/baseline schedule.
    pub lr: f64,
    pub config2_lr_mode: Config2LrMode,
    /// Seed for data generation and source training.
    pub data_seed: u64,
}

impl Default for ExperimentRecipe {
    fn default() -> Self {
        ExperimentRecipe {
            variants: vec![Variant::Stgcn],
            preset: ScalePreset::Desk,
            source_classes: 8,
            target_classes: 6,
            source_per_class: 12,
            target_per_class: 10,
            tempo_source: 1.0,
            tempo_target: 1.8,
            noise: 0.01,
            joints: 20,
            base_frames: 22,
            pad_to: 48,
            source_epochs: 30,
            target_epochs: 12,
            seeds: vec![1, 2, 3],
            batch: 8,
            lr: 0.01,
            config2_lr_mode: Config2LrMode::Multiply,
            data_seed: 9,
        }
    }
}

impl ExperimentRecipe {
    /// Parses the `key = value` recipe format; unknown keys are rejected.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut recipe = ExperimentRecipe::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Config(format!("{origin}:{}: bad {what} value {value:?}", no + 1))
            };
            match key {
                "variants" => {
                    recipe.variants = value
                        .split(',')
                        .map(|v| Variant::parse(v.trim()))
                        .collect::<Result<_>>()?;
                }
                "preset" => recipe.preset = ScalePreset::parse(value)?,
                "source_classes" => recipe.source_classes = value.parse().map_err(|_| bad(key))?,
                "target_classes" => recipe.target_classes = value.parse().map_err(|_| bad(key))?,
                "source_per_class" => recipe.source_per_class = value.parse().map_err(|_| bad(key))?,
                "target_per_class" => recipe.target_per_class = value.parse().map_err(|_| bad(key))?,
                "tempo_source" => recipe.tempo_source = value.parse().map_err(|_| bad(key))?,
                "tempo_target" => recipe.tempo_target = value.parse().map_err(|_| bad(key))?,
                "noise" => recipe.noise = value.parse().map_err(|_| bad(key))?,
                "joints" => recipe.joints = value.parse().map_err(|_| bad(key))?,
                "base_frames" => recipe.base_frames = value.parse().map_err(|_| bad(key))?,
                "pad_to" => recipe.pad_to = value.parse().map_err(|_| bad(key))?,
                "source_epochs" => recipe.source_epochs = value.parse().map_err(|_| bad(key))?,
                "target_epochs" => recipe.target_epochs = value.parse().map_err(|_| bad(key))?,
                "seeds" => {
                    recipe.seeds = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad(key)))
                        .collect::<Result<_>>()?;
                }
                "batch" => recipe.batch = value.parse().map_err(|_| bad(key))?,
                "lr" => recipe.lr = value.parse().map_err(|_| bad(key))?,
                "config2_lr_mode" => {
                    recipe.config2_lr_mode = match value {
                        "multiply" => Config2LrMode::Multiply,
                        "absolute" => Config2LrMode::Absolute,
                        _ => return Err(bad(key)),
                    };
                }
                "data_seed" => recipe.data_seed = value.parse().map_err(|_| bad(key))?,
                other => {
                    return Err(Error::Config(format!(
                        "{origin}:{}: unknown recipe key {other:?}",
                        no + 1
                    )))
                }
            }
        }
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("recipe needs at least one variant".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("recipe needs at least one seed".into()));
        }
        if self.target_classes < 2 || self.source_classes < 2 {
            return Err(Error::Config("recipe needs at least 2 classes per domain".into()));
        }
        Ok(())
    }

    fn domain_spec(&self, target: bool) -> SynthDomainSpec {
        SynthDomainSpec {
            classes: if target { self.target_classes } else { self.source_classes },
            per_class: if target { self.target_per_class } else { self.source_per_class },
            tempo: if target { self.tempo_target } else { self.tempo_source },
            noise: self.noise,
            joints: self.joints,
            base_frames: self.base_frames,
            fps: 25.0,
            class_offset: if target { self.source_classes } else { 0 },
            train_fraction: 0.7,
        }
    }

    /// The baseline/source training schedule.
    pub fn base_schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            initial_lr: self.lr,
            decay_factor: 0.1,
            interval_epochs: 50,
            start_epoch: 50,
        }
    }
}

/// One variant's outputs.
pub struct VariantRuns {
    pub variant: Variant,
    pub source_report: TrainReport,
    pub source_checkpoint_meta: CheckpointMeta,
    /// (seed, baseline, config1, config2) reports.
    pub seed_reports: Vec<(u64, TrainReport, TrainReport, TrainReport)>,
}

/// Full experiment results.
pub struct ExperimentOutput<R: Real> {
    pub runs: Vec<VariantRuns>,
    /// Per-seed comparisons, one per (variant, seed, plan).
    pub per_seed: Vec<TransferComparison>,
    /// Seed-averaged comparisons, one per (variant, plan).
    pub averaged: Vec<TransferComparison>,
    /// Source checkpoints, one per variant (kept for persistence).
    pub source_checkpoints: Vec<Checkpoint<R>>,
}

fn split_refs(ds: &Dataset) -> (Vec<&data::ActionSample>, Vec<&data::ActionSample>) {
    (ds.split_samples(Split::Train), ds.split_samples(Split::Test))
}

/// Runs the whole recipe: generate and preprocess both domains, train one
/// source checkpoint per variant, then run baseline/config1/config2 per seed
/// and compute the comparisons.
pub fn run_experiment<R: Real>(recipe: &ExperimentRecipe) -> Result<ExperimentOutput<R>> {
    recipe.validate()?;
    let source_raw = data::synth::synth_generate(&recipe.domain_spec(false), recipe.data_seed)?;
    let target_raw = data::synth::synth_generate(&recipe.domain_spec(true), recipe.data_seed + 1)?;
    let source = data::preprocess_dataset(&source_raw, recipe.pad_to, true, None)?;
    let target = data::preprocess_dataset(&target_raw, recipe.pad_to, true, None)?;
    let (source_train, source_test) = split_refs(&source);
    let (target_train, target_test) = split_refs(&target);
    let topology = builtin::for_joint_count(source.manifest.joint_count).ok_or_else(|| {
        Error::Config(format!("no built-in topology for {} joints", source.manifest.joint_count))
    })?;

    let schedule = recipe.base_schedule();
    let mut output = ExperimentOutput {
        runs: Vec::new(),
        per_seed: Vec::new(),
        averaged: Vec::new(),
        source_checkpoints: Vec::new(),
    };

    for &variant in &recipe.variants {
        let source_spec =
            ModelSpec::preset(variant, recipe.preset, topology.clone(), recipe.source_classes);
        let mut source_model = Model::<R>::build(source_spec.clone(), recipe.data_seed)?;
        let mut source_cfg = FitConfig::new(recipe.source_epochs, schedule.clone(), recipe.data_seed);
        source_cfg.batch_size = recipe.batch;
        let source_report = fit(&mut source_model, &source_train, &source_test, &source_cfg)?;
        let meta = CheckpointMeta {
            dataset_tag: "synth-source".into(),
            seed: recipe.data_seed,
            epochs_trained: recipe.source_epochs,
            final_acc: source_report.final_acc().unwrap_or(0.0),
        };
        let ckpt = Checkpoint::from_model(&source_model, meta.clone());

        let target_spec =
            ModelSpec::preset(variant, recipe.preset, topology.clone(), recipe.target_classes);
        let mut seed_reports = Vec::new();
        let mut c1_group = Vec::new();
        let mut c2_group = Vec::new();
        for &seed in &recipe.seeds {
            let baseline: TransferOutcome<R> = transfer_run(
                None,
                &target_spec,
                &target_train,
                &target_test,
                &FreezePlan::none(schedule.clone()),
                recipe.target_epochs,
                seed,
                recipe.batch,
            )?;
            let c1: TransferOutcome<R> = transfer_run(
                Some(&ckpt),
                &target_spec,
                &target_train,
                &target_test,
                &FreezePlan::config1(&schedule),
                recipe.target_epochs,
                seed,
                recipe.batch,
            )?;
            let c2: TransferOutcome<R> = transfer_run(
                Some(&ckpt),
                &target_spec,
                &target_train,
                &target_test,
                &FreezePlan::config2(&schedule, recipe.config2_lr_mode),
                recipe.target_epochs,
                seed,
                recipe.batch,
            )?;
            c1_group.push(TransferComparison::new(baseline.report.clone(), c1.report.clone())?);
            c2_group.push(TransferComparison::new(baseline.report.clone(), c2.report.clone())?);
            seed_reports.push((seed, baseline.report, c1.report, c2.report));
        }
        output.averaged.push(average_comparisons(&c1_group)?);
        output.averaged.push(average_comparisons(&c2_group)?);
        output.per_seed.extend(c1_group);
        output.per_seed.extend(c2_group);
        output.runs.push(VariantRuns {
            variant,
            source_report,
            source_checkpoint_meta: meta,
            seed_reports,
        });
        output.source_checkpoints.push(ckpt);
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_parses_and_rejects_unknown_keys() {
        let text = "variants = stgcn,msg3d\nsource_classes = 4\nseeds = 1,2\nlr = 0.02\n";
        let recipe = ExperimentRecipe::from_text(text, "mem").unwrap();
        assert_eq!(recipe.variants, vec![Variant::Stgcn, Variant::Msg3d]);
        assert_eq!(recipe.source_classes, 4);
        assert_eq!(recipe.seeds, vec![1, 2]);
        assert!((recipe.lr - 0.02).abs() < 1e-15);

        assert!(ExperimentRecipe::from_text("bogus_key = 3\n", "mem").is_err());
        assert!(ExperimentRecipe::from_text("variants = warp\n", "mem").is_err());
        assert!(ExperimentRecipe::from_text("seeds =\n", "mem").is_err());
    }

    #[test]
    fn minimal_experiment_produces_comparisons_for_both_configurations() {
        // Tiny end-to-end run: one variant, one seed, minimal sizes.
        let recipe = ExperimentRecipe {
            variants: vec![Variant::Stgcn],
            source_classes: 2,
            target_classes: 2,
            source_per_class: 4,
            target_per_class: 4,
            base_frames: 6,
            pad_to: 16,
            source_epochs: 1,
            target_epochs: 2,
            seeds: vec![5],
            ..ExperimentRecipe::default()
        };
        let out: ExperimentOutput<f32> = run_experiment(&recipe).unwrap();
        assert_eq!(out.runs.len(), 1);
        assert_eq!(out.per_seed.len(), 2);
        assert_eq!(out.averaged.len(), 2);
        let plans: Vec<&str> = out.averaged.iter().map(|c| c.plan.as_str()).collect();
        assert_eq!(plans, vec!["config1", "config2"]);
        assert_eq!(out.source_checkpoints.len(), 1);
    }
}
