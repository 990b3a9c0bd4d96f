//! Skeleton sequence data: types, the 20-to-25 joint expansion, replay
//! padding, normalization/translation, file formats, and the synthetic
//! motion generator.

use crate::error::{Error, Result};
use crate::skelgraph::SkeletonTopology;

pub mod io;
pub mod synth;

/// Per-frame 3D joint positions for one or two bodies, in meters, sensor
/// coordinates. Layout is `[frame][body][joint][xyz]`, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: usize,
    bodies: usize,
    joints: usize,
    positions: Vec<f64>,
    /// One flag per body slot; an absent second body is all-zeros with a
    /// false flag.
    presence: Vec<bool>,
}

impl SkeletonSequence {
    pub fn new(frames: usize, bodies: usize, joints: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Data("sequence must have at least one frame".into()));
        }
        if !(1..=2).contains(&bodies) {
            return Err(Error::Data(format!("body count must be 1 or 2, got {bodies}")));
        }
        if joints == 0 {
            return Err(Error::Data("sequence must have at least one joint".into()));
        }
        Ok(SkeletonSequence {
            frames,
            bodies,
            joints,
            positions: vec![0.0; frames * bodies * joints * 3],
            presence: vec![true; bodies],
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bodies(&self) -> usize {
        self.bodies
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn body_present(&self, body: usize) -> bool {
        self.presence[body]
    }

    pub fn set_body_present(&mut self, body: usize, present: bool) {
        self.presence[body] = present;
    }

    #[inline]
    fn offset(&self, frame: usize, body: usize, joint: usize) -> usize {
        ((frame * self.bodies + body) * self.joints + joint) * 3
    }

    pub fn position(&self, frame: usize, body: usize, joint: usize) -> [f64; 3] {
        let o = self.offset(frame, body, joint);
        [self.positions[o], self.positions[o + 1], self.positions[o + 2]]
    }

    pub fn set_position(&mut self, frame: usize, body: usize, joint: usize, xyz: [f64; 3]) {
        let o = self.offset(frame, body, joint);
        self.positions[o] = xyz[0];
        self.positions[o + 1] = xyz[1];
        self.positions[o + 2] = xyz[2];
    }

    pub fn raw(&self) -> &[f64] {
        &self.positions
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().all(|x| x.is_finite())
    }

    /// First body slot whose presence flag is set; falls back to body 0.
    pub fn first_present_body(&self) -> usize {
        self.presence.iter().position(|&p| p).unwrap_or(0)
    }
}

/// A labeled skeleton sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub sequence: SkeletonSequence,
    pub label: usize,
    pub class_name: String,
    pub view_tag: String,
    pub subject_tag: String,
}

/// Which split a manifest entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

/// One sample reference inside a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Path relative to the manifest file's directory.
    pub path: String,
    pub split: Split,
}

/// Dataset description: class table, per-sample file list, and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub joint_count: usize,
    /// Capture rate in frames per second.
    pub fps: f64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// A manifest together with its loaded samples, indexed like `entries`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<ActionSample>,
}

impl Dataset {
    pub fn split_samples(&self, split: Split) -> Vec<&ActionSample> {
        self.manifest
            .entries
            .iter()
            .zip(&self.samples)
            .filter(|(e, _)| e.split == split)
            .map(|(_, s)| s)
            .collect()
    }

    pub fn all_samples(&self) -> Vec<&ActionSample> {
        self.samples.iter().collect()
    }
}

/// Target joint indices for the 20 Kinect v1 joints inside the 25-joint
/// Kinect v2 layout. v1 joint i lands at v2 joint `V1_TO_V2[i]`.
pub const V1_TO_V2: [usize; 20] =
    [0, 1, 20, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19];

/// The five v2 joints absent from v1, paired with the v1 joint whose
/// position is duplicated into them: (v2 index, v1 source index).
/// neck <- head, hand tip left <- hand left, thumb left <- hand left,
/// hand tip right <- hand right, thumb right <- hand right.
pub const V2_DUPLICATED: [(usize, usize); 5] = [(2, 3), (21, 7), (22, 7), (23, 11), (24, 11)];

/// Expands a 20-joint v1 sequence to the 25-joint v2 layout.
///
/// The 20 source joints are copied unchanged to their v2 indices; the five
/// missing joints duplicate their neighboring joint's position per frame and
/// body.
pub fn expand_20_to_25(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    if seq.joints() != 20 {
        return Err(Error::Data(format!(
            "joint expansion requires a 20-joint sequence, got {}",
            seq.joints()
        )));
    }
    let mut out = SkeletonSequence::new(seq.frames(), seq.bodies(), 25)?;
    for b in 0..seq.bodies() {
        out.set_body_present(b, seq.body_present(b));
    }
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            for (v1, &v2) in V1_TO_V2.iter().enumerate() {
                out.set_position(t, b, v2, seq.position(t, b, v1));
            }
            for &(v2, v1_src) in &V2_DUPLICATED {
                out.set_position(t, b, v2, seq.position(t, b, v1_src));
            }
        }
    }
    Ok(out)
}

/// Projects a 25-joint sequence back onto the 20 v1 source indices.
pub fn project_25_to_20(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    if seq.joints() != 25 {
        return Err(Error::Data(format!(
            "projection requires a 25-joint sequence, got {}",
            seq.joints()
        )));
    }
    let mut out = SkeletonSequence::new(seq.frames(), seq.bodies(), 20)?;
    for b in 0..seq.bodies() {
        out.set_body_present(b, seq.body_present(b));
    }
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            for (v1, &v2) in V1_TO_V2.iter().enumerate() {
                out.set_position(t, b, v1, seq.position(t, b, v2));
            }
        }
    }
    Ok(out)
}

/// Pads a sequence to `target_frames` by replaying it from the start:
/// output frame t = input frame (t mod T). Sequences longer than the target
/// are rejected.
pub fn pad_replay(seq: &SkeletonSequence, target_frames: usize) -> Result<SkeletonSequence> {
    let t_in = seq.frames();
    if t_in > target_frames {
        return Err(Error::Data(format!(
            "sequence has {t_in} frames, over the {target_frames}-frame cap"
        )));
    }
    if t_in == target_frames {
        return Ok(seq.clone());
    }
    let mut out = SkeletonSequence::new(target_frames, seq.bodies(), seq.joints())?;
    for b in 0..seq.bodies() {
        out.set_body_present(b, seq.body_present(b));
    }
    for t in 0..target_frames {
        let src = t % t_in;
        for b in 0..seq.bodies() {
            for j in 0..seq.joints() {
                out.set_position(t, b, j, seq.position(src, b, j));
            }
        }
    }
    Ok(out)
}

/// Translates so the first-frame center joint of the first present body sits
/// at the origin, then scales all coordinates by the reciprocal of the
/// first-frame spine length so skeleton scale is comparable across subjects.
///
/// A zero spine length (or a topology without a spine tip) leaves the scale
/// at 1. Applying the transform twice equals applying it once.
pub fn normalize_translate(seq: &SkeletonSequence, topology: &SkeletonTopology) -> Result<SkeletonSequence> {
    if seq.joints() != topology.joint_count() {
        return Err(Error::Shape(format!(
            "sequence has {} joints but topology has {}",
            seq.joints(),
            topology.joint_count()
        )));
    }
    let body = seq.first_present_body();
    let origin = seq.position(0, body, topology.center_joint());
    let scale = match topology.spine_tip() {
        Some(tip) => {
            let tip_pos = seq.position(0, body, tip);
            let spine = ((tip_pos[0] - origin[0]).powi(2)
                + (tip_pos[1] - origin[1]).powi(2)
                + (tip_pos[2] - origin[2]).powi(2))
            .sqrt();
            if spine > 0.0 {
                1.0 / spine
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let mut out = seq.clone();
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            for j in 0..seq.joints() {
                let p = seq.position(t, b, j);
                out.set_position(t, b, j, [
                    (p[0] - origin[0]) * scale,
                    (p[1] - origin[1]) * scale,
                    (p[2] - origin[2]) * scale,
                ]);
            }
        }
    }
    Ok(out)
}

/// Model-input preprocessing over a whole dataset: 20-joint data is expanded
/// to the 25-joint layout, every sequence is replay-padded to
/// `target_frames`, and (unless disabled) normalization/translation is
/// applied. The topology for normalization defaults to the built-in one for
/// the joint count.
pub fn preprocess_dataset(
    dataset: &Dataset,
    target_frames: usize,
    normalize: bool,
    topology: Option<&SkeletonTopology>,
) -> Result<Dataset> {
    let expanded_joints = if dataset.manifest.joint_count == 20 { 25 } else { dataset.manifest.joint_count };
    let builtin_topo;
    let topo = match topology {
        Some(t) => {
            if t.joint_count() != expanded_joints {
                return Err(Error::Config(format!(
                    "topology override has {} joints but the dataset yields {expanded_joints}",
                    t.joint_count()
                )));
            }
            Some(t)
        }
        None => {
            builtin_topo = crate::skelgraph::builtin::for_joint_count(expanded_joints);
            builtin_topo.as_ref()
        }
    };
    if normalize && topo.is_none() {
        return Err(Error::Config(format!(
            "no built-in topology for {expanded_joints} joints; pass a topology file or disable normalization"
        )));
    }

    let mut samples = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        let seq = &sample.sequence;
        if seq.joints() != dataset.manifest.joint_count {
            return Err(Error::Data(format!(
                "dataset mixes joint counts: {} vs manifest {}",
                seq.joints(),
                dataset.manifest.joint_count
            )));
        }
        let seq = if seq.joints() == 20 { expand_20_to_25(seq)? } else { seq.clone() };
        let seq = pad_replay(&seq, target_frames)?;
        let seq = if normalize {
            normalize_translate(&seq, topo.expect("checked above"))?
        } else {
            seq
        };
        samples.push(ActionSample { sequence: seq, ..sample.clone() });
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            joint_count: expanded_joints,
            classes: dataset.manifest.classes.clone(),
            fps: dataset.manifest.fps,
            entries: dataset.manifest.entries.clone(),
        },
        samples,
    })
}
