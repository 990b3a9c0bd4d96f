//! Optimization: stepped learning-rate schedules, the Adam optimizer, the
//! epoch loop, and evaluation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::data::ActionSample;
use crate::error::{Error, Result};
use crate::models::{Binder, Model, Variant};
use crate::real::Real;
use crate::rng;
use crate::skelgraph;
use crate::tensor::{ops, GradTape, Tensor};

/// Borrowed sample list, as consumed by `fit` and `evaluate`.
pub type ActionSampleRefs<'a> = &'a [&'a ActionSample];

/// Stepped learning-rate schedule: the rate is multiplied by the decay
/// factor at `start_epoch`, `start_epoch + interval`, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub interval_epochs: usize,
    pub start_epoch: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial lr must be positive, got {}", self.initial_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay factor must be in (0,1], got {}",
                self.decay_factor
            )));
        }
        if self.interval_epochs == 0 {
            return Err(Error::Config("decay interval must be positive".into()));
        }
        Ok(())
    }

    /// The published training schedule of each model family: 0.1 decayed by
    /// 0.1 every 20 epochs (from epoch 20) for the plain GCN; the same but
    /// starting at epoch 30 for the two-stream variant; 0.5 divided by 10
    /// every 30 epochs starting at epoch 10 for the multi-scale variant.
    pub fn paper_preset(variant: Variant) -> Self {
        match variant {
            Variant::Stgcn => ScheduleConfig {
                initial_lr: 0.1,
                decay_factor: 0.1,
                interval_epochs: 20,
                start_epoch: 20,
            },
            Variant::Agcn2s => ScheduleConfig {
                initial_lr: 0.1,
                decay_factor: 0.1,
                interval_epochs: 20,
                start_epoch: 30,
            },
            Variant::Msg3d => ScheduleConfig {
                initial_lr: 0.5,
                decay_factor: 0.1,
                interval_epochs: 30,
                start_epoch: 10,
            },
        }
    }

    /// Default schedule for desk-scale runs, where the published rates are
    /// far too hot for Adam on tiny models.
    pub fn desk_default() -> Self {
        ScheduleConfig { initial_lr: 0.01, decay_factor: 0.1, interval_epochs: 50, start_epoch: 50 }
    }

    /// Learning rate at a (0-based) epoch: `initial * factor^d` where `d`
    /// counts the decay points at or before the epoch.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = if epoch < self.start_epoch {
            0
        } else {
            (epoch - self.start_epoch) / self.interval_epochs + 1
        };
        self.initial_lr * self.decay_factor.powi(decays as i32)
    }

    /// Same shape with the initial rate scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ScheduleConfig { initial_lr: self.initial_lr * factor, ..self.clone() }
    }
}

/// Adam moment tables for the trainable parameters of one model.
#[derive(Debug, Clone)]
pub struct OptimizerState<R: Real> {
    first: Vec<Option<Vec<R>>>,
    second: Vec<Option<Vec<R>>>,
    step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<R: Real> OptimizerState<R> {
    /// Allocates moment slots for exactly the trainable parameters.
    pub fn new(model: &Model<R>) -> Self {
        let slot = |p: &crate::models::Parameter<R>| {
            p.trainable.then(|| vec![R::zero(); p.len()])
        };
        OptimizerState {
            first: model.params().iter().map(slot).collect(),
            second: model.params().iter().map(slot).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One Adam update with bias correction. Frozen parameters are untouched;
    /// a trainable parameter without a gradient is an error.
    pub fn adam_step(&mut self, model: &mut Model<R>, lr: f64) -> Result<()> {
        self.step += 1;
        let b1 = R::from_f64(self.beta1);
        let b2 = R::from_f64(self.beta2);
        let eps = R::from_f64(self.epsilon);
        let one = R::one();
        let corr1 = R::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = R::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr_r = R::from_f64(lr);
        for (idx, p) in model.params_mut().iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_ref().ok_or_else(|| {
                Error::Numeric(format!("adam: trainable parameter {} has no gradient", p.name))
            })?;
            let m = self.first[idx].as_mut().expect("state exists for trainable parameter");
            let v = self.second[idx].as_mut().expect("state exists for trainable parameter");
            for ((value, &g), (mi, vi)) in
                p.values.iter_mut().zip(grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *value = *value - lr_r * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One epoch of the accuracy/loss curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Per-epoch curves and run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub variant: String,
    /// Freeze-plan tag: "none" for baselines.
    pub plan: String,
    pub seed: u64,
    /// Test accuracy of the untouched model, recorded before any training.
    pub epoch0_test_acc: f64,
    pub rows: Vec<EpochRow>,
    /// Resolved configuration echoed for the record.
    pub config: Vec<(String, String)>,
    /// Wall-clock seconds; in-memory only, never serialized, so seeded runs
    /// stay byte-reproducible on disk.
    pub wall_secs: f64,
}

impl TrainReport {
    /// Initial performance: test accuracy after the first epoch.
    pub fn initial_acc(&self) -> Result<f64> {
        self.rows
            .first()
            .map(|r| r.test_acc)
            .ok_or_else(|| Error::Data("report has an empty accuracy curve".into()))
    }

    /// Final performance: best test accuracy over the run.
    pub fn final_acc(&self) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(Error::Data("report has an empty accuracy curve".into()));
        }
        Ok(self.rows.iter().map(|r| r.test_acc).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "SKREPORT 1");
        let _ = writeln!(out, "variant {}", self.variant);
        let _ = writeln!(out, "plan {}", self.plan);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "epoch0_test_acc {:e}", self.epoch0_test_acc);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config {k} = {v}");
        }
        let _ = writeln!(out, "curve epoch,lr,loss,train_acc,test_acc");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", r.epoch, r.lr, r.loss, r.train_acc, r.test_acc);
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic.trim() != "SKREPORT 1" {
            return Err(Error::Data(format!("{origin}: expected SKREPORT 1 header")));
        }
        let mut report = TrainReport {
            variant: String::new(),
            plan: String::new(),
            seed: 0,
            epoch0_test_acc: 0.0,
            rows: Vec::new(),
            config: Vec::new(),
            wall_secs: 0.0,
        };
        let mut in_curve = false;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("curve ") {
                if rest.trim() != "epoch,lr,loss,train_acc,test_acc" {
                    return Err(Error::Data(format!("{origin}: unexpected curve header {rest:?}")));
                }
                in_curve = true;
                continue;
            }
            if in_curve {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 5 {
                    return Err(Error::Data(format!("{origin}: bad curve row {line:?}")));
                }
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Data(format!("{origin}: bad number {s:?}")))
                };
                report.rows.push(EpochRow {
                    epoch: fields[0]
                        .parse()
                        .map_err(|_| Error::Data(format!("{origin}: bad epoch {:?}", fields[0])))?,
                    lr: parse(fields[1])?,
                    loss: parse(fields[2])?,
                    train_acc: parse(fields[3])?,
                    test_acc: parse(fields[4])?,
                });
            } else if let Some(rest) = line.strip_prefix("variant ") {
                report.variant = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("plan ") {
                report.plan = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("seed ") {
                report.seed = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("{origin}: bad seed {rest:?}")))?;
            } else if let Some(rest) = line.strip_prefix("epoch0_test_acc ") {
                report.epoch0_test_acc = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("{origin}: bad epoch0 accuracy {rest:?}")))?;
            } else if let Some(rest) = line.strip_prefix("config ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| Error::Data(format!("{origin}: bad config line {line:?}")))?;
                report.config.push((k.to_string(), v.to_string()));
            } else {
                return Err(Error::Data(format!("{origin}: unexpected line {line:?}")));
            }
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        TrainReport::from_text(&text, &path.display().to_string())
    }
}

/// Knobs of one training run.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    pub seed: u64,
    /// Freeze-plan tag recorded in the report.
    pub plan_name: String,
    /// Extra key/value pairs echoed into the report.
    pub config_echo: Vec<(String, String)>,
}

impl FitConfig {
    pub fn new(epochs: usize, schedule: ScheduleConfig, seed: u64) -> Self {
        FitConfig {
            epochs,
            batch_size: 8,
            schedule,
            seed,
            plan_name: "none".into(),
            config_echo: Vec::new(),
        }
    }
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax<R: Real>(scores: &[R]) -> usize {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate<R: Real>(model: &Model<R>, dataset: &[&ActionSample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for sample in dataset {
        let scores = model.predict(sample)?;
        if argmax(&scores) == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Per-sample stream inputs cached for the epoch loop.
struct PreparedSample {
    joints: crate::data::SkeletonSequence,
    bones: Option<crate::data::SkeletonSequence>,
    label: usize,
}

fn prepare<R: Real>(model: &Model<R>, samples: &[&ActionSample]) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            if s.sequence.joints() != model.spec.topology.joint_count() {
                return Err(Error::Shape(format!(
                    "sample has {} joints but the model topology has {}",
                    s.sequence.joints(),
                    model.spec.topology.joint_count()
                )));
            }
            let bones = match model.spec.variant {
                Variant::Agcn2s => Some(skelgraph::bone_vectors(&s.sequence, &model.spec.topology)?),
                _ => None,
            };
            Ok(PreparedSample { joints: s.sequence.clone(), bones, label: s.label })
        })
        .collect()
}

fn batch_inputs<R: Real>(
    model: &Model<R>,
    prepared: &[PreparedSample],
    batch: &[usize],
) -> Result<Vec<Tensor<R>>> {
    let joint_refs: Vec<&crate::data::SkeletonSequence> =
        batch.iter().map(|&i| &prepared[i].joints).collect();
    let mut inputs = vec![crate::models::sequence_tensor::<R>(&joint_refs)?];
    if model.spec.variant == Variant::Agcn2s {
        let bone_refs: Vec<&crate::data::SkeletonSequence> = batch
            .iter()
            .map(|&i| prepared[i].bones.as_ref().expect("bones prepared for two-stream model"))
            .collect();
        inputs.push(crate::models::sequence_tensor::<R>(&bone_refs)?);
    }
    Ok(inputs)
}

/// Minibatch training loop: per-epoch shuffling from the seed, forward /
/// backward / Adam step per batch, and a test evaluation after every epoch.
/// Deterministic given (model bits, data, seed).
pub fn fit<R: Real>(
    model: &mut Model<R>,
    train: &[&ActionSample],
    test: &[&ActionSample],
    cfg: &FitConfig,
) -> Result<TrainReport> {
    cfg.schedule.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let start = Instant::now();
    let epoch0_test_acc = evaluate(model, test)?;
    let mut report = TrainReport {
        variant: model.spec.variant.as_str().to_string(),
        plan: cfg.plan_name.clone(),
        seed: cfg.seed,
        epoch0_test_acc,
        rows: Vec::new(),
        config: cfg.config_echo.clone(),
        wall_secs: 0.0,
    };
    if cfg.epochs == 0 {
        report.wall_secs = start.elapsed().as_secs_f64();
        return Ok(report);
    }
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }

    let prepared = prepare(model, train)?;
    let mut optimizer = OptimizerState::new(model);
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = cfg.schedule.lr_at_epoch(epoch - 1);
        let mut shuffle_rng = rng::stream(cfg.seed, &[0xf17, epoch as u64]);
        order.sort_unstable();
        rng::shuffle(&mut shuffle_rng, &mut order);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| prepared[i].label).collect();
            let inputs = batch_inputs(model, &prepared, batch)?;

            let tape = GradTape::new();
            let binder = Binder::train(&tape);
            let stream_logits = model.forward_logits(&binder, &inputs)?;

            // Loss: sum of per-stream cross entropies.
            let mut loss: Option<Tensor<R>> = None;
            for logits in &stream_logits {
                let ce = ops::cross_entropy(logits, &labels)?;
                loss = Some(match loss {
                    None => ce,
                    Some(prev) => ops::add(&prev, &ce)?,
                });
            }
            let loss = loss.expect("at least one stream");
            loss_sum += loss.item().to_f64() * batch.len() as f64;

            // Training accuracy from the fused stream scores.
            let mut fused = vec![R::zero(); batch.len() * model.spec.num_classes];
            for logits in &stream_logits {
                let scores = ops::softmax(logits, 1)?;
                for (f, &s) in fused.iter_mut().zip(scores.data()) {
                    *f = *f + s;
                }
            }
            for (bi, &label) in labels.iter().enumerate() {
                let row = &fused[bi * model.spec.num_classes..(bi + 1) * model.spec.num_classes];
                if argmax(row) == label {
                    correct += 1;
                }
            }

            let grads = tape.backward(&loss)?;
            model.clear_grads();
            model.store_grads(&binder.into_bindings(), &grads);
            optimizer.adam_step(model, lr)?;
        }

        report.rows.push(EpochRow {
            epoch,
            lr,
            loss: loss_sum / prepared.len() as f64,
            train_acc: correct as f64 / prepared.len() as f64,
            test_acc: evaluate(model, test)?,
        });
    }
    report.wall_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
