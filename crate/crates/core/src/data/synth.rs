//! Synthetic skeleton-motion datasets.
//!
//! Each class is a parametric motion: a deterministic pair of primitives from
//! a shared pool (arm swings, leg alternation, torso bob, head nod, arm
//! raise, squat, lean), with class-specific frequency, amplitude, and phase,
//! superimposed on a canonical standing pose. Per-sample variation is a tempo
//! jitter (always) plus coordinate/amplitude/phase noise scaled by the noise
//! level, so a zero noise level yields pure time-warped copies of the class
//! prototype.
//!
//! Distinct domains that share the primitive pool are produced by offsetting
//! the class index: a target domain holds out classes the source never saw
//! while both draw from the same motion vocabulary.

use super::{ActionSample, Dataset, DatasetManifest, ManifestEntry, SkeletonSequence, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Maximum frames a generated sample may have (the replay-padding cap).
pub const FRAME_CAP: usize = 300;

/// Generation parameters for one synthetic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDomainSpec {
    /// Number of classes in this domain.
    pub classes: usize,
    /// Samples generated per class.
    pub per_class: usize,
    /// Tempo multiplier: how much slower than the canonical pace the actions
    /// run. Frame counts scale with it; a multiplier of 1.8 on a 95-frame
    /// base yields roughly 171-frame sequences.
    pub tempo: f64,
    /// Coordinate noise level in meters; also scales amplitude/phase jitter.
    pub noise: f64,
    /// Joint count: 20 or 25.
    pub joints: usize,
    /// Mean frame count at tempo 1.0.
    pub base_frames: usize,
    /// Capture rate written to the manifest.
    pub fps: f64,
    /// Global index of this domain's first class. Domains with different
    /// offsets have disjoint class identities but share motion primitives.
    pub class_offset: usize,
    /// Fraction of each class assigned to the train split.
    pub train_fraction: f64,
}

impl Default for SynthDomainSpec {
    fn default() -> Self {
        SynthDomainSpec {
            classes: 4,
            per_class: 10,
            tempo: 1.0,
            noise: 0.01,
            joints: 25,
            base_frames: 95,
            fps: 25.0,
            class_offset: 0,
            train_fraction: 0.75,
        }
    }
}

impl SynthDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::Config("synth: class count must be positive".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("synth: samples per class must be positive".into()));
        }
        if !(self.tempo > 0.0 && self.tempo.is_finite()) {
            return Err(Error::Config(format!("synth: tempo must be positive, got {}", self.tempo)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("synth: noise must be non-negative, got {}", self.noise)));
        }
        if self.joints != 20 && self.joints != 25 {
            return Err(Error::Config(format!("synth: joint count must be 20 or 25, got {}", self.joints)));
        }
        if self.base_frames < 2 {
            return Err(Error::Config("synth: base frame count must be at least 2".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("synth: fps must be positive, got {}", self.fps)));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "synth: train fraction must be in [0,1], got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Canonical standing pose for the 20-joint skeleton, meters, sensor coords
/// (x right, y up, z away from the sensor).
const BASE_POSE_V1: [[f64; 3]; 20] = [
    [0.00, 0.95, 2.50],  // hip center
    [0.00, 1.15, 2.50],  // spine
    [0.00, 1.40, 2.50],  // shoulder center
    [0.00, 1.65, 2.50],  // head
    [-0.20, 1.38, 2.50], // shoulder left
    [-0.25, 1.10, 2.50], // elbow left
    [-0.27, 0.85, 2.50], // wrist left
    [-0.28, 0.75, 2.50], // hand left
    [0.20, 1.38, 2.50],  // shoulder right
    [0.25, 1.10, 2.50],  // elbow right
    [0.27, 0.85, 2.50],  // wrist right
    [0.28, 0.75, 2.50],  // hand right
    [-0.10, 0.90, 2.50], // hip left
    [-0.11, 0.50, 2.50], // knee left
    [-0.12, 0.10, 2.50], // ankle left
    [-0.12, 0.02, 2.62], // foot left
    [0.10, 0.90, 2.50],  // hip right
    [0.11, 0.50, 2.50],  // knee right
    [0.12, 0.10, 2.50],  // ankle right
    [0.12, 0.02, 2.62],  // foot right
];

/// Number of motion primitives in the shared pool.
pub const PRIMITIVE_COUNT: usize = 8;

/// Per-joint displacement directions for one primitive: (joint, [dx,dy,dz]).
fn primitive_gains(p: usize) -> Vec<(usize, [f64; 3])> {
    match p {
        // right arm swing
        0 => vec![
            (9, [0.05, 0.0, 0.40]),
            (10, [0.08, 0.0, 0.80]),
            (11, [0.10, 0.0, 1.00]),
        ],
        // left arm swing (antiphase)
        1 => vec![
            (5, [-0.05, 0.0, -0.40]),
            (6, [-0.08, 0.0, -0.80]),
            (7, [-0.10, 0.0, -1.00]),
        ],
        // alternating legs
        2 => vec![
            (13, [0.0, 0.05, 0.30]),
            (14, [0.0, 0.02, 0.60]),
            (15, [0.0, 0.02, 0.80]),
            (17, [0.0, 0.05, -0.30]),
            (18, [0.0, 0.02, -0.60]),
            (19, [0.0, 0.02, -0.80]),
        ],
        // torso bob
        3 => vec![
            (0, [0.0, 0.20, 0.0]),
            (1, [0.0, 0.30, 0.0]),
            (2, [0.0, 0.45, 0.0]),
            (3, [0.0, 0.50, 0.0]),
            (4, [0.0, 0.40, 0.0]),
            (8, [0.0, 0.40, 0.0]),
        ],
        // head nod
        4 => vec![(3, [0.0, -0.12, 0.50]), (2, [0.0, -0.04, 0.15])],
        // both arms raise
        5 => vec![
            (5, [0.0, 0.40, 0.0]),
            (6, [0.0, 0.80, 0.0]),
            (7, [0.0, 1.00, 0.0]),
            (9, [0.0, 0.40, 0.0]),
            (10, [0.0, 0.80, 0.0]),
            (11, [0.0, 1.00, 0.0]),
        ],
        // squat
        6 => vec![
            (0, [0.0, -0.60, 0.0]),
            (1, [0.0, -0.55, 0.0]),
            (2, [0.0, -0.50, 0.0]),
            (3, [0.0, -0.50, 0.0]),
            (13, [0.0, -0.10, 0.30]),
            (17, [0.0, -0.10, 0.30]),
        ],
        // side lean, displacement proportional to height
        7 => (0..20)
            .map(|j| (j, [0.4 * (BASE_POSE_V1[j][1] - 0.02), 0.0, 0.0]))
            .collect(),
        _ => unreachable!("primitive index out of range"),
    }
}

/// Class-level motion description derived deterministically from the global
/// class index.
#[derive(Debug, Clone)]
pub struct ClassMotion {
    /// The two active primitives.
    pub primitives: [usize; 2],
    /// Frequency in Hz for each active primitive.
    pub freq: [f64; 2],
    /// Amplitude multiplier for each active primitive.
    pub amp: [f64; 2],
    /// Phase in radians for each active primitive.
    pub phase: [f64; 2],
}

/// Motion description for a global class index. Classes with different
/// indices may share primitives but differ in frequency/amplitude/phase.
pub fn class_motion(global_class: usize) -> ClassMotion {
    let c = global_class;
    let prim = [c % PRIMITIVE_COUNT, (3 * c + 1) % PRIMITIVE_COUNT];
    let freq = [
        0.5 + 0.13 * ((5 * c + 1) % 7) as f64,
        0.4 + 0.11 * ((3 * c + 2) % 7) as f64,
    ];
    let amp = [
        0.18 + 0.03 * ((2 * c) % 5) as f64,
        0.15 + 0.03 * ((2 * c + 3) % 5) as f64,
    ];
    let golden = 2.399_963_229_728_653; // 2π/φ²
    let phase = [
        (golden * (c as f64 + 1.0)) % (2.0 * std::f64::consts::PI),
        (golden * (c as f64 + 1.0) * 1.7) % (2.0 * std::f64::consts::PI),
    ];
    ClassMotion { primitives: prim, freq, amp, phase }
}

/// Noise-free pose of the class motion at a point in time, on the 20-joint
/// skeleton. `jitter` perturbs amplitude and phase and is zero for the
/// canonical prototype.
fn motion_pose(motion: &ClassMotion, seconds: f64, amp_jitter: &[f64; 2], phase_jitter: &[f64; 2]) -> [[f64; 3]; 20] {
    let mut pose = BASE_POSE_V1;
    for k in 0..2 {
        let angle = 2.0 * std::f64::consts::PI * motion.freq[k] * seconds + motion.phase[k] + phase_jitter[k];
        let s = (motion.amp[k] * (1.0 + amp_jitter[k])) * angle.sin();
        for &(joint, dir) in &primitive_gains(motion.primitives[k]) {
            pose[joint][0] += s * dir[0];
            pose[joint][1] += s * dir[1];
            pose[joint][2] += s * dir[2];
        }
    }
    pose
}

/// The canonical class prototype: the noise-free 20-joint pose at `seconds`.
pub fn class_prototype(global_class: usize, seconds: f64) -> [[f64; 3]; 20] {
    motion_pose(&class_motion(global_class), seconds, &[0.0; 2], &[0.0; 2])
}

/// Per-sample draw, exposed so tests can reconstruct the prototype timing.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleParams {
    pub frames: usize,
    /// Effective tempo after jitter; frame t maps to
    /// `seconds = t / (fps * tempo_effective)`.
    pub tempo_effective: f64,
    pub amp_jitter: [f64; 2],
    pub phase_jitter: [f64; 2],
}

/// Deterministic per-sample parameters for (spec, class, sample index, seed).
pub fn sample_params(spec: &SynthDomainSpec, local_class: usize, idx: usize, seed: u64) -> SampleParams {
    let global = spec.class_offset + local_class;
    let mut rng = rng::stream(seed, &[0x5e9, global as u64, idx as u64]);
    let tempo_jitter = rng::uniform_in(&mut rng, 0.9, 1.1);
    let tempo_effective = spec.tempo * tempo_jitter;
    let frames = ((spec.base_frames as f64 * tempo_effective).round() as usize).clamp(2, FRAME_CAP);
    let amp_jitter = [
        spec.noise * 2.0 * rng::gaussian(&mut rng),
        spec.noise * 2.0 * rng::gaussian(&mut rng),
    ];
    let phase_jitter = [
        spec.noise * 8.0 * rng::gaussian(&mut rng),
        spec.noise * 8.0 * rng::gaussian(&mut rng),
    ];
    SampleParams { frames, tempo_effective, amp_jitter, phase_jitter }
}

fn generate_sample(spec: &SynthDomainSpec, local_class: usize, idx: usize, seed: u64) -> Result<ActionSample> {
    let global = spec.class_offset + local_class;
    let motion = class_motion(global);
    let params = sample_params(spec, local_class, idx, seed);
    // Separate stream for coordinate noise so SampleParams stays cheap to
    // reconstruct in tests.
    let mut noise_rng = rng::stream(seed, &[0x401e, global as u64, idx as u64]);

    let mut seq = SkeletonSequence::new(params.frames, 1, 20)?;
    for t in 0..params.frames {
        let seconds = t as f64 / (spec.fps * params.tempo_effective);
        let pose = motion_pose(&motion, seconds, &params.amp_jitter, &params.phase_jitter);
        for j in 0..20 {
            let jitter = [
                spec.noise * rng::gaussian(&mut noise_rng),
                spec.noise * rng::gaussian(&mut noise_rng),
                spec.noise * rng::gaussian(&mut noise_rng),
            ];
            seq.set_position(t, 0, j, [
                pose[j][0] + jitter[0],
                pose[j][1] + jitter[1],
                pose[j][2] + jitter[2],
            ]);
        }
    }
    let seq = if spec.joints == 25 { super::expand_20_to_25(&seq)? } else { seq };
    Ok(ActionSample {
        sequence: seq,
        label: local_class,
        class_name: format!("motion{global:02}"),
        view_tag: "synthetic".into(),
        subject_tag: format!("synth{idx:03}"),
    })
}

/// Generates a full synthetic dataset: manifest plus samples, deterministic
/// in (spec, seed).
pub fn synth_generate(spec: &SynthDomainSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let classes: Vec<String> = (0..spec.classes)
        .map(|c| format!("motion{:02}", spec.class_offset + c))
        .collect();
    let train_per_class = (spec.train_fraction * spec.per_class as f64).round() as usize;
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for c in 0..spec.classes {
        for i in 0..spec.per_class {
            let sample = generate_sample(spec, c, i, seed)?;
            let split = if i < train_per_class { Split::Train } else { Split::Test };
            entries.push(ManifestEntry {
                path: format!("class{:02}_s{:03}.skseq", spec.class_offset + c, i),
                split,
            });
            samples.push(sample);
        }
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            classes,
            joint_count: spec.joints,
            fps: spec.fps,
            entries,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthDomainSpec { classes: 3, per_class: 4, base_frames: 20, ..Default::default() };
        let a = synth_generate(&spec, 42).unwrap();
        let b = synth_generate(&spec, 42).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let spec = SynthDomainSpec { classes: 1, per_class: 1, base_frames: 20, ..Default::default() };
        let a = synth_generate(&spec, 1).unwrap();
        let b = synth_generate(&spec, 2).unwrap();
        assert_ne!(a.samples[0].sequence, b.samples[0].sequence);
    }

    #[test]
    fn tempo_scales_mean_frame_count() {
        let spec = SynthDomainSpec {
            classes: 4,
            per_class: 15,
            tempo: 1.8,
            base_frames: 95,
            ..Default::default()
        };
        let ds = synth_generate(&spec, 7).unwrap();
        let mean: f64 = ds.samples.iter().map(|s| s.sequence.frames() as f64).sum::<f64>()
            / ds.samples.len() as f64;
        assert!((mean - 171.0).abs() < 8.0, "mean frame count {mean}");
    }

    #[test]
    fn zero_noise_matches_prototype() {
        let spec = SynthDomainSpec {
            classes: 2,
            per_class: 3,
            noise: 0.0,
            joints: 20,
            base_frames: 18,
            ..Default::default()
        };
        let ds = synth_generate(&spec, 5).unwrap();
        for (k, sample) in ds.samples.iter().enumerate() {
            let c = sample.label;
            let idx = k % spec.per_class;
            let params = sample_params(&spec, c, idx, 5);
            assert_eq!(params.frames, sample.sequence.frames());
            for t in 0..params.frames {
                let seconds = t as f64 / (spec.fps * params.tempo_effective);
                let proto = class_prototype(spec.class_offset + c, seconds);
                for j in 0..20 {
                    let p = sample.sequence.position(t, 0, j);
                    for d in 0..3 {
                        assert!((p[d] - proto[j][d]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let spec = SynthDomainSpec { classes: 3, per_class: 10, base_frames: 12, ..Default::default() };
        let ds = synth_generate(&spec, 9).unwrap();
        let train = ds.split_samples(Split::Train).len();
        let test = ds.split_samples(Split::Test).len();
        assert_eq!(train + test, ds.samples.len());
        assert_eq!(ds.samples.len(), 30);
        assert!(train > 0 && test > 0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SynthDomainSpec::default();
        spec.classes = 0;
        assert!(synth_generate(&spec, 1).is_err());
        let mut spec = SynthDomainSpec::default();
        spec.joints = 21;
        assert!(synth_generate(&spec, 1).is_err());
        let mut spec = SynthDomainSpec::default();
        spec.tempo = 0.0;
        assert!(synth_generate(&spec, 1).is_err());
    }

    #[test]
    fn offset_domains_share_primitives_with_distinct_motions() {
        let a = class_motion(0);
        let b = class_motion(8);
        assert_eq!(a.primitives, b.primitives);
        assert!(a.freq != b.freq || a.phase != b.phase);
    }
}
