//! Model assembly: the three network families built from layer blocks, with
//! named, role-tagged parameters and prediction.

use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;

use crate::data::{ActionSample, SkeletonSequence};
use crate::error::{Error, Result};
use crate::layers::{self, Activation};
use crate::real::Real;
use crate::rng;
use crate::skelgraph::{self, SkeletonTopology};
use crate::tensor::{ops, GradTape, Gradients, Tensor};

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Stgcn,
    Agcn2s,
    Msg3d,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Stgcn => "stgcn",
            Variant::Agcn2s => "agcn_2s",
            Variant::Msg3d => "msg3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stgcn" => Ok(Variant::Stgcn),
            "agcn_2s" => Ok(Variant::Agcn2s),
            "msg3d" => Ok(Variant::Msg3d),
            other => Err(Error::Config(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Structural scale of the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalePreset {
    /// Full-size block and channel plan.
    Paper,
    /// Channel- and depth-reduced plan for CPU-scale runs; every structural
    /// mechanism (streams, scales, windowing) is kept.
    Desk,
}

impl ScalePreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalePreset::Paper => "paper",
            ScalePreset::Desk => "desk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ScalePreset::Paper),
            "desk" => Ok(ScalePreset::Desk),
            other => Err(Error::Config(format!("unknown scale preset {other:?}"))),
        }
    }
}

/// Channel plan of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPlan {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

/// Declarative model architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub topology: SkeletonTopology,
    pub num_classes: usize,
    pub blocks: Vec<BlockPlan>,
    /// k-adjacency scale count (multi-scale variant).
    pub num_scales: usize,
    /// Unified-operator temporal window (odd).
    pub window: usize,
    pub temporal_kernel: usize,
    pub scale_preset: ScalePreset,
}

impl ModelSpec {
    /// The standard block/channel plan of a variant at a given scale.
    pub fn preset(
        variant: Variant,
        preset: ScalePreset,
        topology: SkeletonTopology,
        num_classes: usize,
    ) -> Self {
        let plan = |list: &[(usize, usize, usize)]| {
            list.iter()
                .map(|&(i, o, s)| BlockPlan { in_channels: i, out_channels: o, stride: s })
                .collect::<Vec<_>>()
        };
        let (blocks, num_scales, window) = match (variant, preset) {
            (Variant::Msg3d, ScalePreset::Paper) => {
                (plan(&[(3, 96, 1), (96, 192, 2), (192, 384, 2)]), 8, 5)
            }
            (Variant::Msg3d, ScalePreset::Desk) => (plan(&[(3, 8, 1), (8, 16, 2)]), 2, 3),
            (_, ScalePreset::Paper) => (
                plan(&[
                    (3, 64, 1),
                    (64, 64, 1),
                    (64, 64, 1),
                    (64, 64, 1),
                    (64, 128, 2),
                    (128, 128, 1),
                    (128, 128, 1),
                    (128, 256, 2),
                    (256, 256, 1),
                ]),
                1,
                1,
            ),
            (_, ScalePreset::Desk) => (plan(&[(3, 8, 1), (8, 16, 2), (16, 32, 2)]), 1, 1),
        };
        ModelSpec {
            variant,
            topology,
            num_classes,
            blocks,
            num_scales,
            window,
            temporal_kernel: 9,
            scale_preset: preset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("model needs at least one block".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "model needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        for pair in self.blocks.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Config(format!(
                    "block channel chain broken: {} out vs {} in",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        for b in &self.blocks {
            if b.in_channels == 0 || b.out_channels == 0 || b.stride == 0 {
                return Err(Error::Config("block channels and stride must be positive".into()));
            }
        }
        if self.temporal_kernel.is_multiple_of(2) || self.window.is_multiple_of(2) {
            return Err(Error::Config("temporal kernel and window must be odd".into()));
        }
        if self.num_scales == 0 {
            return Err(Error::Config("scale count must be positive".into()));
        }
        Ok(())
    }

    pub fn stream_count(&self) -> usize {
        match self.variant {
            Variant::Agcn2s => 2,
            _ => 1,
        }
    }
}

/// Parameter groups used by freeze plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoleTag {
    Spatial,
    Temporal,
    Adaptive,
    Head,
    Embedding,
}

impl RoleTag {
    pub const ALL: [RoleTag; 5] = [
        RoleTag::Spatial,
        RoleTag::Temporal,
        RoleTag::Adaptive,
        RoleTag::Head,
        RoleTag::Embedding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Spatial => "spatial",
            RoleTag::Temporal => "temporal",
            RoleTag::Adaptive => "adaptive",
            RoleTag::Head => "head",
            RoleTag::Embedding => "embedding",
        }
    }
}

/// A named trainable (or frozen) tensor.
#[derive(Debug, Clone)]
pub struct Parameter<R: Real> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<R>,
    pub trainable: bool,
    pub role: RoleTag,
    /// Populated by the trainer after each backward pass.
    pub grad: Option<Vec<R>>,
}

impl<R: Real> Parameter<R> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-block parameter indices within the parameter table.
#[derive(Debug, Clone)]
struct BlockRefs {
    spatial_w: Option<usize>,
    adaptive_b: Option<usize>,
    theta: Option<usize>,
    phi: Option<usize>,
    scale_ws: Vec<usize>,
    g3d_w: Option<usize>,
    temporal_k: usize,
}

#[derive(Debug, Clone)]
struct StreamRefs {
    blocks: Vec<BlockRefs>,
    head_w: usize,
}

/// Binds parameters into a forward pass, either as plain constants (eval /
/// frozen) or as tracked tape leaves (training).
pub struct Binder<'a, R: Real> {
    tape: Option<&'a GradTape<R>>,
    bindings: RefCell<Vec<(usize, Tensor<R>)>>,
}

impl<'a, R: Real> Binder<'a, R> {
    pub fn eval() -> Binder<'static, R> {
        Binder { tape: None, bindings: RefCell::new(Vec::new()) }
    }

    pub fn train(tape: &'a GradTape<R>) -> Self {
        Binder { tape: Some(tape), bindings: RefCell::new(Vec::new()) }
    }

    fn bind(&self, params: &[Parameter<R>], idx: usize) -> Result<Tensor<R>> {
        let p = &params[idx];
        match self.tape {
            Some(tape) if p.trainable => {
                let leaf = tape.leaf(p.shape.clone(), p.values.clone())?;
                self.bindings.borrow_mut().push((idx, leaf.clone()));
                Ok(leaf)
            }
            _ => Tensor::from_vec(p.shape.clone(), p.values.clone()),
        }
    }

    /// (parameter index, leaf) pairs bound during the forward pass.
    pub fn into_bindings(self) -> Vec<(usize, Tensor<R>)> {
        self.bindings.into_inner()
    }
}

/// An assembled model: spec, parameter table, and precomputed graph tensors.
#[derive(Debug, Clone)]
pub struct Model<R: Real> {
    pub spec: ModelSpec,
    params: Vec<Parameter<R>>,
    streams: Vec<StreamRefs>,
    norm_adj: Tensor<R>,
    ms_scales: Vec<Tensor<R>>,
}

fn embed_channels(c: usize) -> usize {
    (c / 4).max(1)
}

impl<R: Real> Model<R> {
    /// Deterministic build from a seed: channel maps get fan-in-scaled
    /// uniform noise, the adaptive matrices and the head start at zero.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, &[0xb111d]);
        let mut params: Vec<Parameter<R>> = Vec::new();
        let push = |params: &mut Vec<Parameter<R>>,
                        rng: &mut ChaCha8Rng,
                        name: String,
                        shape: Vec<usize>,
                        role: RoleTag,
                        fan_in: Option<usize>| {
            let len: usize = shape.iter().product();
            let values: Vec<R> = match fan_in {
                None => vec![R::zero(); len],
                Some(fan) => {
                    let bound = 1.0 / (fan as f64).sqrt();
                    (0..len)
                        .map(|_| R::from_f64(rng::uniform_in(rng, -bound, bound)))
                        .collect()
                }
            };
            params.push(Parameter { name, shape, values, trainable: true, role, grad: None });
            params.len() - 1
        };

        let joints = spec.topology.joint_count();
        let prefixes: Vec<&str> = match spec.variant {
            Variant::Agcn2s => vec!["j.", "b."],
            _ => vec![""],
        };
        let mut streams = Vec::new();
        for prefix in prefixes {
            let mut blocks = Vec::new();
            for (i, plan) in spec.blocks.iter().enumerate() {
                let (cin, cout) = (plan.in_channels, plan.out_channels);
                let mut refs = BlockRefs {
                    spatial_w: None,
                    adaptive_b: None,
                    theta: None,
                    phi: None,
                    scale_ws: Vec::new(),
                    g3d_w: None,
                    temporal_k: 0,
                };
                match spec.variant {
                    Variant::Stgcn => {
                        refs.spatial_w = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.spatial.w"),
                            vec![cin, cout],
                            RoleTag::Spatial,
                            Some(cin),
                        ));
                    }
                    Variant::Agcn2s => {
                        refs.adaptive_b = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.adaptive.b"),
                            vec![joints, joints],
                            RoleTag::Adaptive,
                            None,
                        ));
                        let ce = embed_channels(cin);
                        refs.theta = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.embed.theta"),
                            vec![cin, ce],
                            RoleTag::Embedding,
                            Some(cin),
                        ));
                        refs.phi = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.embed.phi"),
                            vec![cin, ce],
                            RoleTag::Embedding,
                            Some(cin),
                        ));
                        refs.spatial_w = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.spatial.w"),
                            vec![cin, cout],
                            RoleTag::Spatial,
                            Some(cin),
                        ));
                    }
                    Variant::Msg3d => {
                        for k in 0..spec.num_scales {
                            refs.scale_ws.push(push(
                                &mut params,
                                &mut rng,
                                format!("{prefix}block{i}.scale{k}.w"),
                                vec![cin, cout],
                                RoleTag::Spatial,
                                Some(cin),
                            ));
                        }
                        refs.g3d_w = Some(push(
                            &mut params,
                            &mut rng,
                            format!("{prefix}block{i}.g3d.w"),
                            vec![cin, cout],
                            RoleTag::Spatial,
                            Some(cin),
                        ));
                    }
                }
                refs.temporal_k = push(
                    &mut params,
                    &mut rng,
                    format!("{prefix}block{i}.temporal.k"),
                    vec![cout, cout, spec.temporal_kernel],
                    RoleTag::Temporal,
                    Some(cout * spec.temporal_kernel),
                );
                blocks.push(refs);
            }
            let c_last = spec.blocks.last().unwrap().out_channels;
            let head_w = push(
                &mut params,
                &mut rng,
                format!("{prefix}head.w"),
                vec![c_last, spec.num_classes],
                RoleTag::Head,
                None,
            );
            streams.push(StreamRefs { blocks, head_w });
        }

        let adjacency = skelgraph::build_adjacency(&spec.topology);
        let norm_adj = layers::norm_adjacency_tensor(&adjacency);
        let ms_scales = match spec.variant {
            Variant::Msg3d => layers::ms_scale_tensors(&adjacency, spec.num_scales),
            _ => Vec::new(),
        };
        Ok(Model { spec, params, streams, norm_adj, ms_scales })
    }

    pub fn params(&self) -> &[Parameter<R>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<R>] {
        &mut self.params
    }

    /// Indices of parameters whose role is in the filter, in table order.
    pub fn parameter_view(&self, roles: &[RoleTag]) -> Vec<usize> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| roles.contains(&p.role))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    /// Logits of one stream for a `[N,3,T,V,M]` input.
    fn stream_logits(&self, binder: &Binder<R>, stream: usize, x: &Tensor<R>) -> Result<Tensor<R>> {
        let refs = &self.streams[stream];
        let mut h = x.clone();
        for (block, plan) in refs.blocks.iter().zip(&self.spec.blocks) {
            let kernel = binder.bind(&self.params, block.temporal_k)?;
            let input = h;
            h = layers::stgcn_block(
                &input,
                |inp| self.spatial_forward(binder, block, inp),
                &kernel,
                plan.stride,
                true,
                Activation::Relu,
            )?;
        }
        let head_w = binder.bind(&self.params, refs.head_w)?;
        layers::head_logits(&h, &head_w)
    }

    fn spatial_forward(&self, binder: &Binder<R>, block: &BlockRefs, x: &Tensor<R>) -> Result<Tensor<R>> {
        match self.spec.variant {
            Variant::Stgcn => {
                let w = binder.bind(&self.params, block.spatial_w.unwrap())?;
                layers::spatial_gcn_forward(x, &self.norm_adj, &w, Activation::None)
            }
            Variant::Agcn2s => {
                let b = binder.bind(&self.params, block.adaptive_b.unwrap())?;
                let theta = binder.bind(&self.params, block.theta.unwrap())?;
                let phi = binder.bind(&self.params, block.phi.unwrap())?;
                let w = binder.bind(&self.params, block.spatial_w.unwrap())?;
                layers::adaptive_gcn_forward(
                    x,
                    &self.norm_adj,
                    &b,
                    &theta,
                    &phi,
                    &w,
                    true,
                    Activation::None,
                )
            }
            Variant::Msg3d => {
                let ws: Vec<Tensor<R>> = block
                    .scale_ws
                    .iter()
                    .map(|&idx| binder.bind(&self.params, idx))
                    .collect::<Result<_>>()?;
                let multi = layers::ms_gcn_forward(x, &self.ms_scales, &ws, Activation::None)?;
                let wg = binder.bind(&self.params, block.g3d_w.unwrap())?;
                let unified =
                    layers::g3d_forward(x, &self.norm_adj, self.spec.window, &wg, Activation::None)?;
                ops::add(&multi, &unified)
            }
        }
    }

    /// Per-stream logits for the batched inputs. Single-stream variants take
    /// one input (joint positions); the two-stream variant takes joint
    /// positions and bone vectors.
    pub fn forward_logits(&self, binder: &Binder<R>, inputs: &[Tensor<R>]) -> Result<Vec<Tensor<R>>> {
        if inputs.len() != self.streams.len() {
            return Err(Error::Shape(format!(
                "model expects {} input stream(s), got {}",
                self.streams.len(),
                inputs.len()
            )));
        }
        inputs
            .iter()
            .enumerate()
            .map(|(s, x)| self.stream_logits(binder, s, x))
            .collect()
    }

    /// Class-score vector for one preprocessed sample: per-stream softmax
    /// scores, fused by summation and renormalized to sum to one.
    pub fn predict(&self, sample: &ActionSample) -> Result<Vec<R>> {
        let inputs = self.sample_inputs(&sample.sequence)?;
        let binder = Binder::eval();
        let logits = self.forward_logits(&binder, &inputs)?;
        let mut fused = vec![R::zero(); self.spec.num_classes];
        for stream_logits in &logits {
            let scores = ops::softmax(stream_logits, 1)?;
            for (f, &s) in fused.iter_mut().zip(scores.data()) {
                *f = *f + s;
            }
        }
        let total: R = fused.iter().fold(R::zero(), |acc, &v| acc + v);
        for f in &mut fused {
            *f = *f / total;
        }
        Ok(fused)
    }

    /// Builds the stream input tensors for one sequence.
    pub fn sample_inputs(&self, seq: &SkeletonSequence) -> Result<Vec<Tensor<R>>> {
        if seq.joints() != self.spec.topology.joint_count() {
            return Err(Error::Shape(format!(
                "sequence has {} joints but the model topology has {}",
                seq.joints(),
                self.spec.topology.joint_count()
            )));
        }
        let mut inputs = vec![sequence_tensor::<R>(&[seq])?];
        if self.spec.variant == Variant::Agcn2s {
            let bones = skelgraph::bone_vectors(seq, &self.spec.topology)?;
            inputs.push(sequence_tensor::<R>(&[&bones])?);
        }
        Ok(inputs)
    }

    /// Deposits gradients from a backward pass into the bound parameters.
    /// Unreached parameters get explicit zeros.
    pub fn store_grads(&mut self, bindings: &[(usize, Tensor<R>)], grads: &Gradients<R>) {
        for (idx, leaf) in bindings {
            let g = grads.wrt_or_zero(leaf);
            match &mut self.params[*idx].grad {
                Some(existing) => {
                    for (e, v) in existing.iter_mut().zip(&g) {
                        *e = *e + *v;
                    }
                }
                slot => *slot = Some(g),
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}

/// Stacks sequences into a `[B,3,T,V,2]` tensor. All sequences must share
/// frame and joint counts; a missing second body stays zero.
pub fn sequence_tensor<R: Real>(seqs: &[&SkeletonSequence]) -> Result<Tensor<R>> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Data("cannot build a tensor from an empty batch".into()))?;
    let (t_len, v_len) = (first.frames(), first.joints());
    let m_out = 2usize;
    let batch = seqs.len();
    let mut data = vec![R::zero(); batch * 3 * t_len * v_len * m_out];
    for (n, seq) in seqs.iter().enumerate() {
        if seq.frames() != t_len || seq.joints() != v_len {
            return Err(Error::Shape(format!(
                "batch mixes sequence shapes: {}x{} vs {t_len}x{v_len}",
                seq.frames(),
                seq.joints()
            )));
        }
        for c in 0..3 {
            for t in 0..t_len {
                for v in 0..v_len {
                    for m in 0..seq.bodies().min(m_out) {
                        let p = seq.position(t, m, v);
                        let idx = ((((n * 3 + c) * t_len + t) * v_len + v) * m_out) + m;
                        data[idx] = R::from_f64(p[c]);
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![batch, 3, t_len, v_len, m_out], data)
}
