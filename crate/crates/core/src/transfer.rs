//! Transfer learning: checkpoint persistence, output-head replacement, and
//! the two freeze-plan configurations.
//!
//! Checkpoint files (`SKCKPT 1`) are versioned line-oriented text: a spec
//! block, a metadata block, then one `name ndim dims.. values..` line per
//! parameter, written with shortest round-trip decimals so a save/load cycle
//! is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{BlockPlan, Model, ModelSpec, RoleTag, ScalePreset, Variant};
use crate::real::Real;
use crate::skelgraph::{builtin, SkeletonTopology};
use crate::training::{fit, ActionSampleRefs, FitConfig, ScheduleConfig, TrainReport};

/// Provenance recorded alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub dataset_tag: String,
    pub seed: u64,
    pub epochs_trained: usize,
    pub final_acc: f64,
}

/// Serialized model snapshot.
#[derive(Debug, Clone)]
pub struct Checkpoint<R: Real> {
    pub spec: ModelSpec,
    pub meta: CheckpointMeta,
    /// (name, shape, values) in model parameter order.
    pub params: Vec<(String, Vec<usize>, Vec<R>)>,
}

fn blocks_to_string(blocks: &[BlockPlan]) -> String {
    blocks
        .iter()
        .map(|b| format!("{} {} {}", b.in_channels, b.out_channels, b.stride))
        .collect::<Vec<_>>()
        .join(";")
}

fn blocks_from_string(s: &str) -> Result<Vec<BlockPlan>> {
    s.split(';')
        .map(|part| {
            let nums: Vec<usize> = part
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Data(format!("bad block plan {part:?}"))))
                .collect::<Result<_>>()?;
            if nums.len() != 3 {
                return Err(Error::Data(format!("bad block plan {part:?}")));
            }
            Ok(BlockPlan { in_channels: nums[0], out_channels: nums[1], stride: nums[2] })
        })
        .collect()
}

impl<R: Real> Checkpoint<R> {
    /// Snapshot of a model's spec and parameter table.
    pub fn from_model(model: &Model<R>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            spec: model.spec.clone(),
            meta,
            params: model
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone(), p.values.clone()))
                .collect(),
        }
    }

    /// Rebuilds a model carrying exactly this checkpoint's weights.
    pub fn to_model(&self) -> Result<Model<R>> {
        let mut model = Model::build(self.spec.clone(), 0)?;
        if model.params().len() != self.params.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameters but the spec expects {}",
                self.params.len(),
                model.params().len()
            )));
        }
        for (p, (name, shape, values)) in model.params_mut().iter_mut().zip(&self.params) {
            if &p.name != name {
                return Err(Error::Data(format!(
                    "checkpoint parameter {name} does not match expected {}",
                    p.name
                )));
            }
            if &p.shape != shape {
                return Err(Error::Data(format!(
                    "checkpoint parameter {name} has shape {shape:?}, expected {:?}",
                    p.shape
                )));
            }
            p.values = values.clone();
        }
        Ok(model)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "SKCKPT 1");
        let _ = writeln!(out, "precision {}", R::TAG);
        let _ = writeln!(out, "spec variant {}", self.spec.variant.as_str());
        let _ = writeln!(out, "spec preset {}", self.spec.scale_preset.as_str());
        let _ = writeln!(out, "spec classes {}", self.spec.num_classes);
        let _ = writeln!(out, "spec scales {}", self.spec.num_scales);
        let _ = writeln!(out, "spec window {}", self.spec.window);
        let _ = writeln!(out, "spec tkernel {}", self.spec.temporal_kernel);
        let topo = &self.spec.topology;
        let is_builtin = builtin::for_joint_count(topo.joint_count())
            .map(|b| b == *topo)
            .unwrap_or(false);
        if is_builtin {
            let _ = writeln!(out, "spec topology builtin {}", topo.joint_count());
        } else {
            let _ = writeln!(out, "spec topology custom {}", topo.joint_count());
            for &(a, b) in topo.edges() {
                let _ = writeln!(out, "spec bone {a} {b}");
            }
            let _ = writeln!(out, "spec center {}", topo.center_joint());
        }
        let _ = writeln!(out, "spec blocks {}", blocks_to_string(&self.spec.blocks));
        let _ = writeln!(out, "meta dataset {}", self.meta.dataset_tag);
        let _ = writeln!(out, "meta seed {}", self.meta.seed);
        let _ = writeln!(out, "meta epochs {}", self.meta.epochs_trained);
        let _ = writeln!(out, "meta final_acc {:e}", self.meta.final_acc);
        let _ = writeln!(out, "params {}", self.params.len());
        for (name, shape, values) in &self.params {
            let _ = write!(out, "{name} {}", shape.len());
            for d in shape {
                let _ = write!(out, " {d}");
            }
            for v in values {
                let _ = write!(out, " {v:e}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("SKCKPT 1") {
            return Err(Error::Data(format!("{origin}: expected SKCKPT 1 header")));
        }

        let mut precision = None;
        let mut variant = None;
        let mut preset = None;
        let mut classes = None;
        let mut scales = None;
        let mut window = None;
        let mut tkernel = None;
        let mut topology_kind: Option<(String, usize)> = None;
        let mut bones: Vec<(usize, usize)> = Vec::new();
        let mut center = None;
        let mut blocks = None;
        let mut meta = CheckpointMeta {
            dataset_tag: String::new(),
            seed: 0,
            epochs_trained: 0,
            final_acc: 0.0,
        };
        let mut param_count: Option<usize> = None;
        let mut params = Vec::new();

        let bad = |msg: String| Error::Data(format!("{origin}: {msg}"));
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            if param_count.is_some() {
                let mut toks = line.split_whitespace();
                let name = toks.next().ok_or_else(|| bad("empty parameter line".into()))?.to_string();
                let ndim: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("parameter {name}: missing rank")))?;
                let mut shape = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    let d: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad(format!("parameter {name}: truncated shape")))?;
                    shape.push(d);
                }
                let expect: usize = shape.iter().product();
                let mut values = Vec::with_capacity(expect);
                for tok in toks {
                    let v = R::parse(tok)
                        .ok_or_else(|| bad(format!("parameter {name}: bad value {tok:?}")))?;
                    values.push(v);
                }
                if values.len() != expect {
                    return Err(bad(format!(
                        "parameter {name}: {} values for shape {shape:?}",
                        values.len()
                    )));
                }
                params.push((name, shape, values));
                continue;
            }
            if let Some(rest) = line.strip_prefix("precision ") {
                precision = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("spec variant ") {
                variant = Some(Variant::parse(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix("spec preset ") {
                preset = Some(ScalePreset::parse(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix("spec classes ") {
                classes = rest.trim().parse::<usize>().ok();
                if classes.is_none() {
                    return Err(bad(format!("bad classes line {line:?}")));
                }
            } else if let Some(rest) = line.strip_prefix("spec scales ") {
                scales = rest.trim().parse::<usize>().ok();
            } else if let Some(rest) = line.strip_prefix("spec window ") {
                window = rest.trim().parse::<usize>().ok();
            } else if let Some(rest) = line.strip_prefix("spec tkernel ") {
                tkernel = rest.trim().parse::<usize>().ok();
            } else if let Some(rest) = line.strip_prefix("spec topology ") {
                let mut toks = rest.split_whitespace();
                let kind = toks.next().unwrap_or_default().to_string();
                let joints: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("bad topology line {line:?}")))?;
                topology_kind = Some((kind, joints));
            } else if let Some(rest) = line.strip_prefix("spec bone ") {
                let nums: Vec<usize> = rest
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
                if nums.len() != 2 {
                    return Err(bad(format!("bad bone line {line:?}")));
                }
                bones.push((nums[0], nums[1]));
            } else if let Some(rest) = line.strip_prefix("spec center ") {
                center = rest.trim().parse::<usize>().ok();
            } else if let Some(rest) = line.strip_prefix("spec blocks ") {
                blocks = Some(blocks_from_string(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix("meta dataset ") {
                meta.dataset_tag = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("meta seed ") {
                meta.seed = rest.trim().parse().map_err(|_| bad(format!("bad seed {rest:?}")))?;
            } else if let Some(rest) = line.strip_prefix("meta epochs ") {
                meta.epochs_trained =
                    rest.trim().parse().map_err(|_| bad(format!("bad epochs {rest:?}")))?;
            } else if let Some(rest) = line.strip_prefix("meta final_acc ") {
                meta.final_acc =
                    rest.trim().parse().map_err(|_| bad(format!("bad final_acc {rest:?}")))?;
            } else if let Some(rest) = line.strip_prefix("params ") {
                param_count = Some(
                    rest.trim().parse().map_err(|_| bad(format!("bad params count {rest:?}")))?,
                );
            } else {
                return Err(bad(format!("unexpected line {line:?}")));
            }
        }

        let precision = precision.ok_or_else(|| bad("missing precision line".into()))?;
        if precision != R::TAG {
            return Err(bad(format!(
                "checkpoint precision {precision} does not match requested {}",
                R::TAG
            )));
        }
        let (topo_kind, joints) =
            topology_kind.ok_or_else(|| bad("missing topology line".into()))?;
        let topology = match topo_kind.as_str() {
            "builtin" => builtin::for_joint_count(joints)
                .ok_or_else(|| bad(format!("no builtin topology with {joints} joints")))?,
            "custom" => SkeletonTopology::new(
                joints,
                bones,
                center.ok_or_else(|| bad("custom topology missing center".into()))?,
            )?,
            other => return Err(bad(format!("unknown topology kind {other:?}"))),
        };
        let expected = param_count.ok_or_else(|| bad("missing params count line".into()))?;
        if params.len() != expected {
            return Err(bad(format!("expected {expected} parameters, found {}", params.len())));
        }
        let spec = ModelSpec {
            variant: variant.ok_or_else(|| bad("missing variant".into()))?,
            topology,
            num_classes: classes.ok_or_else(|| bad("missing classes".into()))?,
            blocks: blocks.ok_or_else(|| bad("missing blocks".into()))?,
            num_scales: scales.ok_or_else(|| bad("missing scales".into()))?,
            window: window.ok_or_else(|| bad("missing window".into()))?,
            temporal_kernel: tkernel.ok_or_else(|| bad("missing tkernel".into()))?,
            scale_preset: preset.ok_or_else(|| bad("missing preset".into()))?,
        };
        Ok(Checkpoint { spec, meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Checkpoint::from_text(&text, &path.display().to_string())
    }
}

/// Saves a model with provenance metadata.
pub fn save_checkpoint<R: Real>(model: &Model<R>, meta: CheckpointMeta, path: &Path) -> Result<()> {
    Checkpoint::from_model(model, meta).save(path)
}

/// True when two specs agree on everything but the class count, which head
/// replacement reconciles after loading.
pub fn spec_compatible(a: &ModelSpec, b: &ModelSpec) -> bool {
    a.variant == b.variant
        && a.topology == b.topology
        && a.blocks == b.blocks
        && a.num_scales == b.num_scales
        && a.window == b.window
        && a.temporal_kernel == b.temporal_kernel
}

/// Loads a checkpoint whose structure matches `expected` (class counts may
/// differ) and instantiates the model with the checkpoint's own head.
pub fn load_checkpoint<R: Real>(path: &Path, expected: &ModelSpec) -> Result<Model<R>> {
    let ckpt = Checkpoint::<R>::load(path)?;
    if !spec_compatible(&ckpt.spec, expected) {
        return Err(Error::Data(format!(
            "{}: checkpoint structure ({} {:?} blocks) does not match the requested spec",
            path.display(),
            ckpt.spec.variant.as_str(),
            ckpt.spec.blocks.len()
        )));
    }
    ckpt.to_model()
}

/// Replaces the classifier head(s) with zero-initialized weights for a new
/// class count; every other parameter is untouched.
pub fn replace_head<R: Real>(model: &mut Model<R>, num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::Config(format!("head needs at least 2 classes, got {num_classes}")));
    }
    let feature_dim = model.spec.blocks.last().expect("validated spec").out_channels;
    model.spec.num_classes = num_classes;
    for p in model.params_mut() {
        if p.role == RoleTag::Head {
            p.shape = vec![feature_dim, num_classes];
            p.values = vec![R::zero(); feature_dim * num_classes];
            p.grad = None;
        }
    }
    Ok(())
}

/// Freeze-plan configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    /// Fixed-weights transfer: only the classifier head trains.
    Config1,
    /// Temporal fine-tuning: temporal convolutions and the head train; all
    /// spatial-graph machinery (including the adaptive matrix and the
    /// similarity embeddings) stays frozen.
    Config2,
    /// Everything trainable (baseline).
    NoFreeze,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Config1 => "config1",
            PlanKind::Config2 => "config2",
            PlanKind::NoFreeze => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "config1" => Ok(PlanKind::Config1),
            "config2" => Ok(PlanKind::Config2),
            "none" => Ok(PlanKind::NoFreeze),
            other => Err(Error::Config(format!("unknown freeze plan {other:?}"))),
        }
    }

    pub fn trainable_roles(self) -> Vec<RoleTag> {
        match self {
            PlanKind::Config1 => vec![RoleTag::Head],
            PlanKind::Config2 => vec![RoleTag::Temporal, RoleTag::Head],
            PlanKind::NoFreeze => RoleTag::ALL.to_vec(),
        }
    }
}

/// How the second configuration derives its learning rate from the source
/// schedule: multiply the source rate by 0.01, or set it to 0.01 outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Config2LrMode {
    Multiply,
    Absolute,
}

/// A named trainable-role assignment with its retraining schedule.
#[derive(Debug, Clone)]
pub struct FreezePlan {
    pub kind: PlanKind,
    pub trainable_roles: Vec<RoleTag>,
    pub lr_override: ScheduleConfig,
}

impl FreezePlan {
    /// Fixed-weights transfer: the source rate divided by ten, decayed by
    /// 0.1 after every 10 epochs.
    pub fn config1(source: &ScheduleConfig) -> Self {
        FreezePlan {
            kind: PlanKind::Config1,
            trainable_roles: PlanKind::Config1.trainable_roles(),
            lr_override: ScheduleConfig {
                initial_lr: source.initial_lr / 10.0,
                decay_factor: 0.1,
                interval_epochs: 10,
                start_epoch: 10,
            },
        }
    }

    /// Temporal fine-tuning: the rate lowered by 0.01 (multiplicatively by
    /// default, or set to 0.01 absolute), decayed by 0.1 every 10 epochs.
    pub fn config2(source: &ScheduleConfig, mode: Config2LrMode) -> Self {
        let initial_lr = match mode {
            Config2LrMode::Multiply => source.initial_lr * 0.01,
            Config2LrMode::Absolute => 0.01,
        };
        FreezePlan {
            kind: PlanKind::Config2,
            trainable_roles: PlanKind::Config2.trainable_roles(),
            lr_override: ScheduleConfig {
                initial_lr,
                decay_factor: 0.1,
                interval_epochs: 10,
                start_epoch: 10,
            },
        }
    }

    /// Baseline: everything trainable under the given schedule.
    pub fn none(schedule: ScheduleConfig) -> Self {
        FreezePlan {
            kind: PlanKind::NoFreeze,
            trainable_roles: PlanKind::NoFreeze.trainable_roles(),
            lr_override: schedule,
        }
    }
}

/// Sets trainable flags exactly per the plan's role set. Values are never
/// touched.
pub fn apply_freeze<R: Real>(model: &mut Model<R>, plan: &FreezePlan) {
    for p in model.params_mut() {
        p.trainable = plan.trainable_roles.contains(&p.role);
    }
}

/// FNV-1a over a parameter's name and value bits.
pub fn parameter_checksum<R: Real>(name: &str, values: &[R]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for b in name.bytes() {
        eat(b);
    }
    for v in values {
        for b in v.bits().to_le_bytes() {
            eat(b);
        }
    }
    h
}

/// Per-parameter checksums, optionally restricted to frozen parameters.
pub fn parameter_checksums<R: Real>(model: &Model<R>, frozen_only: bool) -> Vec<(String, u64)> {
    model
        .params()
        .iter()
        .filter(|p| !frozen_only || !p.trainable)
        .map(|p| (p.name.clone(), parameter_checksum(&p.name, &p.values)))
        .collect()
}

/// Outcome of a transfer run: the retrained model and its tagged report.
pub struct TransferOutcome<R: Real> {
    pub model: Model<R>,
    pub report: TrainReport,
}

/// Full transfer pipeline: load (or build fresh when no source is given),
/// replace the head for the target class count, apply the freeze plan, and
/// retrain under the plan's schedule. The report is tagged with the plan
/// name and the source metadata.
#[allow(clippy::too_many_arguments)]
pub fn transfer_run<R: Real>(
    source: Option<&Checkpoint<R>>,
    target_spec: &ModelSpec,
    train: ActionSampleRefs<'_>,
    test: ActionSampleRefs<'_>,
    plan: &FreezePlan,
    epochs: usize,
    seed: u64,
    batch_size: usize,
) -> Result<TransferOutcome<R>> {
    let mut model = match source {
        Some(ckpt) => {
            if !spec_compatible(&ckpt.spec, target_spec) {
                return Err(Error::Data(
                    "source checkpoint structure does not match the target spec".into(),
                ));
            }
            let mut m = ckpt.to_model()?;
            replace_head(&mut m, target_spec.num_classes)?;
            m
        }
        None => Model::build(target_spec.clone(), seed)?,
    };
    apply_freeze(&mut model, plan);

    let mut cfg = FitConfig::new(epochs, plan.lr_override.clone(), seed);
    cfg.batch_size = batch_size;
    cfg.plan_name = plan.kind.as_str().to_string();
    if let Some(ckpt) = source {
        cfg.config_echo = vec![
            ("source_dataset".into(), ckpt.meta.dataset_tag.clone()),
            ("source_seed".into(), ckpt.meta.seed.to_string()),
            ("source_epochs".into(), ckpt.meta.epochs_trained.to_string()),
            ("source_final_acc".into(), format!("{:e}", ckpt.meta.final_acc)),
        ];
    }
    let report = fit(&mut model, train, test, &cfg)?;
    Ok(TransferOutcome { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActionSample, SkeletonSequence};
    use crate::models::ScalePreset;

    fn tiny_spec(classes: usize) -> ModelSpec {
        let topo = SkeletonTopology::new(3, vec![(0, 1), (1, 2)], 0).unwrap();
        ModelSpec {
            variant: Variant::Stgcn,
            topology: topo,
            num_classes: classes,
            blocks: vec![
                BlockPlan { in_channels: 3, out_channels: 4, stride: 1 },
                BlockPlan { in_channels: 4, out_channels: 6, stride: 1 },
            ],
            num_scales: 1,
            window: 1,
            temporal_kernel: 3,
            scale_preset: ScalePreset::Desk,
        }
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            dataset_tag: "synth-src".into(),
            seed: 5,
            epochs_trained: 12,
            final_acc: 0.875,
        }
    }

    fn sample(label: usize, wiggle: f64) -> ActionSample {
        let mut seq = SkeletonSequence::new(4, 1, 3).unwrap();
        for t in 0..4 {
            for j in 0..3 {
                seq.set_position(t, 0, j, [
                    label as f64 * 0.7 + wiggle,
                    0.1 * t as f64 + 0.2 * j as f64,
                    1.0,
                ]);
            }
        }
        ActionSample {
            sequence: seq,
            label,
            class_name: format!("c{label}"),
            view_tag: "synthetic".into(),
            subject_tag: "s".into(),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for seed in [1u64, 2] {
            let model = Model::<f32>::build(tiny_spec(4), seed).unwrap();
            let ckpt = Checkpoint::from_model(&model, meta());
            let text = ckpt.to_text();
            let loaded = Checkpoint::<f32>::from_text(&text, "mem").unwrap();
            assert_eq!(loaded.meta, ckpt.meta);
            assert_eq!(loaded.spec, ckpt.spec);
            for ((n1, s1, v1), (n2, s2, v2)) in ckpt.params.iter().zip(&loaded.params) {
                assert_eq!(n1, n2);
                assert_eq!(s1, s2);
                for (a, b) in v1.iter().zip(v2) {
                    assert_eq!(a.to_bits(), b.to_bits(), "{n1}");
                }
            }
        }
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.skckpt");
        let model = Model::<f64>::build(tiny_spec(3), 9).unwrap();
        save_checkpoint(&model, meta(), &path).unwrap();
        let reloaded = load_checkpoint::<f64>(&path, &tiny_spec(3)).unwrap();
        for (a, b) in model.params().iter().zip(reloaded.params()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_precision_mismatch_is_rejected() {
        let model = Model::<f32>::build(tiny_spec(3), 1).unwrap();
        let text = Checkpoint::from_model(&model, meta()).to_text();
        assert!(Checkpoint::<f64>::from_text(&text, "mem").is_err());
    }

    #[test]
    fn corrupted_value_names_the_parameter() {
        let model = Model::<f32>::build(tiny_spec(3), 1).unwrap();
        let text = Checkpoint::from_model(&model, meta()).to_text();
        let corrupted = text.replace("block1.spatial.w 2 4 6 ", "block1.spatial.w 2 4 6 oops ");
        let err = Checkpoint::<f32>::from_text(&corrupted, "mem").unwrap_err().to_string();
        assert!(err.contains("block1.spatial.w"), "{err}");
    }

    #[test]
    fn load_accepts_different_class_count_for_head_replacement() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.skckpt");
        let model = Model::<f32>::build(tiny_spec(60), 1).unwrap();
        save_checkpoint(&model, meta(), &path).unwrap();
        let target = tiny_spec(36);
        let mut loaded = load_checkpoint::<f32>(&path, &target).unwrap();
        assert_eq!(loaded.spec.num_classes, 60);
        replace_head(&mut loaded, 36).unwrap();
        assert_eq!(loaded.spec.num_classes, 36);
        let head = loaded.parameter_view(&[RoleTag::Head])[0];
        assert_eq!(loaded.params()[head].shape, vec![6, 36]);
        assert!(loaded.params()[head].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_rejects_structural_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.skckpt");
        let model = Model::<f32>::build(tiny_spec(4), 1).unwrap();
        save_checkpoint(&model, meta(), &path).unwrap();
        let mut other = tiny_spec(4);
        other.blocks[1].out_channels = 8;
        assert!(load_checkpoint::<f32>(&path, &other).is_err());
    }

    #[test]
    fn replace_head_preserves_non_head_parameters_bitwise() {
        let mut model = Model::<f64>::build(tiny_spec(5), 4).unwrap();
        let before: Vec<(String, u64)> = model
            .params()
            .iter()
            .filter(|p| p.role != RoleTag::Head)
            .map(|p| (p.name.clone(), parameter_checksum(&p.name, &p.values)))
            .collect();
        replace_head(&mut model, 9).unwrap();
        replace_head(&mut model, 9).unwrap(); // idempotent re-zeroing
        let after: Vec<(String, u64)> = model
            .params()
            .iter()
            .filter(|p| p.role != RoleTag::Head)
            .map(|p| (p.name.clone(), parameter_checksum(&p.name, &p.values)))
            .collect();
        assert_eq!(before, after);
        assert!(replace_head(&mut model, 1).is_err());
    }

    #[test]
    fn freeze_plans_set_exactly_the_planned_roles() {
        let mut model = Model::<f32>::build(tiny_spec(4), 2).unwrap();
        let schedule = ScheduleConfig::paper_preset(Variant::Stgcn);

        apply_freeze(&mut model, &FreezePlan::config1(&schedule));
        for p in model.params() {
            assert_eq!(p.trainable, p.role == RoleTag::Head, "{}", p.name);
        }

        apply_freeze(&mut model, &FreezePlan::config2(&schedule, Config2LrMode::Multiply));
        for p in model.params() {
            let expect = matches!(p.role, RoleTag::Head | RoleTag::Temporal);
            assert_eq!(p.trainable, expect, "{}", p.name);
        }

        apply_freeze(&mut model, &FreezePlan::none(schedule));
        assert!(model.params().iter().all(|p| p.trainable));
    }

    #[test]
    fn plan_learning_rates_follow_the_source_schedule() {
        let source = ScheduleConfig::paper_preset(Variant::Msg3d); // 0.5
        let c1 = FreezePlan::config1(&source);
        assert!((c1.lr_override.initial_lr - 0.05).abs() < 1e-15);
        assert_eq!(c1.lr_override.interval_epochs, 10);
        let c2m = FreezePlan::config2(&source, Config2LrMode::Multiply);
        assert!((c2m.lr_override.initial_lr - 0.005).abs() < 1e-15);
        let c2a = FreezePlan::config2(&source, Config2LrMode::Absolute);
        assert!((c2a.lr_override.initial_lr - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config1_keeps_non_head_parameters_bitwise_fixed_through_training() {
        let spec = tiny_spec(3);
        let source_model = Model::<f64>::build(spec.clone(), 8).unwrap();
        let ckpt = Checkpoint::from_model(&source_model, meta());

        let data: Vec<ActionSample> =
            (0..3).flat_map(|c| (0..3).map(move |i| sample(c, 0.02 * i as f64))).collect();
        let refs: Vec<&ActionSample> = data.iter().collect();
        let plan = FreezePlan::config1(&ScheduleConfig::desk_default());
        let outcome =
            transfer_run(Some(&ckpt), &spec, &refs, &refs, &plan, 5, 3, 4).unwrap();
        assert_eq!(outcome.report.plan, "config1");

        let frozen_before: std::collections::HashMap<String, u64> = ckpt
            .params
            .iter()
            .filter(|(n, _, _)| !n.contains("head"))
            .map(|(n, _, v)| (n.clone(), parameter_checksum(n, v)))
            .collect();
        for p in outcome.model.params() {
            if p.role != RoleTag::Head {
                assert_eq!(
                    parameter_checksum(&p.name, &p.values),
                    frozen_before[&p.name],
                    "{} changed under config1",
                    p.name
                );
            }
        }
    }

    #[test]
    fn config2_trains_temporal_but_not_spatial() {
        let spec = tiny_spec(3);
        let source_model = Model::<f64>::build(spec.clone(), 8).unwrap();
        let ckpt = Checkpoint::from_model(&source_model, meta());

        let data: Vec<ActionSample> =
            (0..3).flat_map(|c| (0..3).map(move |i| sample(c, 0.02 * i as f64))).collect();
        let refs: Vec<&ActionSample> = data.iter().collect();
        let plan = FreezePlan::config2(&ScheduleConfig::desk_default(), Config2LrMode::Multiply);
        let outcome = transfer_run(Some(&ckpt), &spec, &refs, &refs, &plan, 2, 3, 4).unwrap();

        let before: std::collections::HashMap<String, u64> = ckpt
            .params
            .iter()
            .map(|(n, _, v)| (n.clone(), parameter_checksum(n, v)))
            .collect();
        let mut temporal_changed = 0;
        for p in outcome.model.params() {
            let checksum = parameter_checksum(&p.name, &p.values);
            match p.role {
                RoleTag::Spatial | RoleTag::Adaptive | RoleTag::Embedding => {
                    assert_eq!(checksum, before[&p.name], "{} changed under config2", p.name);
                }
                RoleTag::Temporal => {
                    if checksum != before[&p.name] {
                        temporal_changed += 1;
                    }
                }
                RoleTag::Head => {}
            }
        }
        assert!(temporal_changed >= 1, "no temporal parameter changed");
    }

    #[test]
    fn plan_none_with_a_source_is_full_fine_tuning() {
        // Loaded weights as the starting point, new zeroed head, every
        // parameter trainable.
        let spec = tiny_spec(3);
        let source_model = Model::<f64>::build(spec.clone(), 8).unwrap();
        let ckpt = Checkpoint::from_model(&source_model, meta());
        let data: Vec<ActionSample> =
            (0..3).flat_map(|c| (0..2).map(move |i| sample(c, 0.04 * i as f64))).collect();
        let refs: Vec<&ActionSample> = data.iter().collect();

        let mut target = tiny_spec(5);
        target.num_classes = 5;
        let plan = FreezePlan::none(ScheduleConfig::desk_default());
        // one epoch so non-head weights move but stay comparable
        let outcome: TransferOutcome<f64> =
            transfer_run(Some(&ckpt), &target, &refs[..0], &refs, &plan, 0, 4, 4).unwrap();
        assert_eq!(outcome.model.spec.num_classes, 5);
        assert!(outcome.model.params().iter().all(|p| p.trainable));
        // with zero epochs the loaded non-head weights are exactly the source's
        let before: std::collections::HashMap<String, u64> = ckpt
            .params
            .iter()
            .map(|(n, _, v)| (n.clone(), parameter_checksum(n, v)))
            .collect();
        for p in outcome.model.params() {
            if p.role == RoleTag::Head {
                assert!(p.values.iter().all(|&v| v == 0.0));
                assert_eq!(p.shape, vec![6, 5]);
            } else {
                assert_eq!(parameter_checksum(&p.name, &p.values), before[&p.name]);
            }
        }
        // and one epoch of training moves non-head weights (unlike config1)
        let trained: TransferOutcome<f64> =
            transfer_run(Some(&ckpt), &target, &refs, &refs, &plan, 1, 4, 4).unwrap();
        let moved = trained
            .model
            .params()
            .iter()
            .filter(|p| p.role != RoleTag::Head)
            .filter(|p| parameter_checksum(&p.name, &p.values) != before[&p.name])
            .count();
        assert!(moved > 0, "full fine-tuning left every non-head parameter untouched");
    }

    #[test]
    fn plan_none_with_fresh_model_reproduces_baseline_fit() {
        let spec = tiny_spec(2);
        let data: Vec<ActionSample> =
            (0..2).flat_map(|c| (0..3).map(move |i| sample(c, 0.05 * i as f64))).collect();
        let refs: Vec<&ActionSample> = data.iter().collect();
        let schedule = ScheduleConfig::desk_default();

        let mut baseline_model = Model::<f64>::build(spec.clone(), 21).unwrap();
        let cfg = FitConfig::new(3, schedule.clone(), 21);
        let baseline = fit(&mut baseline_model, &refs, &refs, &cfg).unwrap();

        let plan = FreezePlan::none(schedule);
        let outcome: TransferOutcome<f64> =
            transfer_run(None, &spec, &refs, &refs, &plan, 3, 21, 8).unwrap();
        assert_eq!(outcome.report.to_text(), baseline.to_text());
        for (a, b) in outcome.model.params().iter().zip(baseline_model.params()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
