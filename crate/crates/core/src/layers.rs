//! Differentiable layers: the three spatial aggregation rules, the unified
//! space-time operator, temporal convolution blocks, and the classifier head.
//!
//! Layers are stateless functions over tensors; parameters arrive as tensors
//! bound by the caller (tracked while training, plain constants otherwise).

use crate::error::{Error, Result};
use crate::real::Real;
use crate::skelgraph::{self, AdjacencyMatrix, NormalizedAdjacency};
use crate::tensor::{ops, Tensor};

/// Activation applied by a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }
}

/// Layer kinds assembled into blocks by the model builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    SpatialGcn,
    AdaptiveGcn,
    MsGcn,
    G3d,
    TemporalConv,
    Head,
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub temporal_kernel: usize,
    pub temporal_stride: usize,
    /// Number of k-adjacency scales (multi-scale aggregation only).
    pub num_scales: usize,
    /// Temporal window of the unified operator (odd).
    pub window: usize,
    pub activation: Activation,
    /// Whether an identity residual is added when shapes permit.
    pub residual: bool,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("layer channels must be positive".into()));
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "temporal kernel {} must be odd",
                self.temporal_kernel
            )));
        }
        if self.temporal_stride == 0 {
            return Err(Error::Config("temporal stride must be positive".into()));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window {} must be odd", self.window)));
        }
        if self.num_scales == 0 {
            return Err(Error::Config("scale count must be positive".into()));
        }
        Ok(())
    }
}

pub fn apply_activation<R: Real>(x: &Tensor<R>, act: Activation) -> Result<Tensor<R>> {
    match act {
        Activation::Relu => ops::relu(x),
        Activation::None => Ok(x.clone()),
    }
}

/// Converts a normalized adjacency into an untracked tensor at precision R.
pub fn adjacency_tensor<R: Real>(norm: &NormalizedAdjacency) -> Tensor<R> {
    let m = norm.size();
    let data: Vec<R> = norm.entries().iter().map(|&x| R::from_f64(x)).collect();
    Tensor::from_vec(vec![m, m], data).expect("normalized adjacency is finite")
}

/// Normalized self-loop adjacency of a graph as a tensor.
pub fn norm_adjacency_tensor<R: Real>(adj: &AdjacencyMatrix) -> Tensor<R> {
    adjacency_tensor(&skelgraph::normalize_adjacency(adj, true))
}

/// Per-scale normalized k-adjacency tensors for scales 1..=k.
pub fn ms_scale_tensors<R: Real>(adj: &AdjacencyMatrix, scales: usize) -> Vec<Tensor<R>> {
    (1..=scales)
        .map(|k| {
            adjacency_tensor(&skelgraph::normalize_adjacency(&skelgraph::k_adjacency(adj, k), false))
        })
        .collect()
}

/// Graph convolution: joint aggregation with a fixed normalized adjacency
/// followed by a channel projection and the activation.
pub fn spatial_gcn_forward<R: Real>(
    x: &Tensor<R>,
    norm_adj: &Tensor<R>,
    w: &Tensor<R>,
    act: Activation,
) -> Result<Tensor<R>> {
    let aggregated = ops::graph_contract(x, norm_adj)?;
    apply_activation(&ops::map_channels(&aggregated, w)?, act)
}

/// Node similarity matrix: features pooled over frames and bodies are mapped
/// through the two embeddings and combined into a row-softmaxed `[N,V,V]`
/// score, so every row sums to one.
pub fn similarity_matrix<R: Real>(
    x: &Tensor<R>,
    theta: &Tensor<R>,
    phi: &Tensor<R>,
) -> Result<Tensor<R>> {
    let pooled = ops::mean(x, &[2, 4])?; // [N,C,V]
    let emb_theta = ops::map_channels(&pooled, theta)?; // [N,Ce,V]
    let emb_phi = ops::map_channels(&pooled, phi)?; // [N,Ce,V]
    let theta_t = ops::permute(&emb_theta, &[0, 2, 1])?; // [N,V,Ce]
    let scores = ops::matmul(&theta_t, &emb_phi)?; // [N,V,V]
    ops::softmax(&scores, 2)
}

/// Adaptive graph convolution: aggregates with the sum of the fixed
/// normalized adjacency, the learned matrix B (unnormalized, starts at
/// zero), and the row-normalized similarity matrix, then projects channels.
///
/// With `use_similarity` off the similarity branch is absent entirely, so a
/// zero B reduces the layer to `spatial_gcn_forward` bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_gcn_forward<R: Real>(
    x: &Tensor<R>,
    norm_adj: &Tensor<R>,
    b: &Tensor<R>,
    theta: &Tensor<R>,
    phi: &Tensor<R>,
    w: &Tensor<R>,
    use_similarity: bool,
    act: Activation,
) -> Result<Tensor<R>> {
    let base = ops::add(norm_adj, b)?; // [V,V]
    let aggregated = if use_similarity {
        let sim = similarity_matrix(x, theta, phi)?; // [N,V,V]
        let adj = ops::add(&sim, &base)?; // broadcast base over batch
        ops::graph_contract(x, &adj)?
    } else {
        ops::graph_contract(x, &base)?
    };
    apply_activation(&ops::map_channels(&aggregated, w)?, act)
}

/// Disentangled multi-scale aggregation over precomputed normalized
/// k-adjacency scales, one channel projection per scale, summed.
pub fn ms_gcn_forward<R: Real>(
    x: &Tensor<R>,
    scales: &[Tensor<R>],
    ws: &[Tensor<R>],
    act: Activation,
) -> Result<Tensor<R>> {
    if scales.is_empty() || scales.len() != ws.len() {
        return Err(Error::Config(format!(
            "multi-scale layer needs matching scale/weight counts, got {}/{}",
            scales.len(),
            ws.len()
        )));
    }
    let mut acc: Option<Tensor<R>> = None;
    for (scale_adj, w) in scales.iter().zip(ws) {
        let term = ops::map_channels(&ops::graph_contract(x, scale_adj)?, w)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => ops::add(&prev, &term)?,
        });
    }
    apply_activation(&acc.expect("at least one scale"), act)
}

/// Multi-scale aggregation straight from a binary adjacency.
pub fn ms_gcn_from_adjacency<R: Real>(
    x: &Tensor<R>,
    adj: &AdjacencyMatrix,
    ws: &[Tensor<R>],
    act: Activation,
) -> Result<Tensor<R>> {
    let scales = ms_scale_tensors(adj, ws.len());
    ms_gcn_forward(x, &scales, ws, act)
}

/// Unified space-time graph convolution over a dense temporal window.
///
/// For each frame the τ-frame window centered there (zero-padded at the
/// boundaries) forms a τ·V-node graph in which a joint at any window frame
/// connects to every spatial neighbor (per A+I) at every window frame. The
/// windowed adjacency factorizes as an all-ones τ×τ block pattern times A+I,
/// so its symmetric normalization contracts to the per-frame normalized
/// adjacency scaled by 1/τ; the center-frame slice is then the window mean
/// of normalized spatial aggregations. τ = 1 degenerates to
/// `spatial_gcn_forward` exactly.
pub fn g3d_forward<R: Real>(
    x: &Tensor<R>,
    norm_adj: &Tensor<R>,
    window: usize,
    w: &Tensor<R>,
    act: Activation,
) -> Result<Tensor<R>> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("window {window} must be odd")));
    }
    let frames = *x
        .shape()
        .get(2)
        .ok_or_else(|| Error::Shape(format!("g3d: features must be [N,C,T,V,M], got {:?}", x.shape())))?;
    if window > frames {
        return Err(Error::Shape(format!(
            "g3d: window {window} exceeds the {frames}-frame sequence"
        )));
    }
    if window == 1 {
        return spatial_gcn_forward(x, norm_adj, w, act);
    }
    let half = (window / 2) as isize;
    let mut acc: Option<Tensor<R>> = None;
    for f in -half..=half {
        let shifted = if f == 0 { x.clone() } else { ops::time_shift(x, -f)? };
        let term = ops::graph_contract(&shifted, norm_adj)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => ops::add(&prev, &term)?,
        });
    }
    let mean_over_window = ops::scale(
        &acc.expect("window is non-empty"),
        R::one() / R::from_usize(window),
    )?;
    apply_activation(&ops::map_channels(&mean_over_window, w)?, act)
}

/// Unified operator straight from a binary adjacency.
pub fn g3d_from_adjacency<R: Real>(
    x: &Tensor<R>,
    adj: &AdjacencyMatrix,
    window: usize,
    w: &Tensor<R>,
    act: Activation,
) -> Result<Tensor<R>> {
    g3d_forward(x, &norm_adjacency_tensor(adj), window, w, act)
}

/// Temporal convolution layer.
pub fn temporal_conv_layer<R: Real>(
    x: &Tensor<R>,
    kernel: &Tensor<R>,
    stride: usize,
    act: Activation,
) -> Result<Tensor<R>> {
    apply_activation(&ops::temporal_conv1d(x, kernel, stride)?, act)
}

/// One spatio-temporal block: spatial aggregation (activation-free), then
/// temporal convolution, an identity residual when the shapes permit, and
/// the block activation.
pub fn stgcn_block<R: Real>(
    x: &Tensor<R>,
    spatial: impl FnOnce(&Tensor<R>) -> Result<Tensor<R>>,
    kernel: &Tensor<R>,
    stride: usize,
    residual: bool,
    act: Activation,
) -> Result<Tensor<R>> {
    let aggregated = spatial(x)?;
    let temporal = ops::temporal_conv1d(&aggregated, kernel, stride)?;
    let combined = if residual && temporal.shape() == x.shape() {
        ops::add(&temporal, x)?
    } else {
        temporal
    };
    apply_activation(&combined, act)
}

/// Pre-softmax class scores: global average pool over frames, joints, and
/// bodies followed by the fully-connected map.
pub fn head_logits<R: Real>(x: &Tensor<R>, w_fc: &Tensor<R>) -> Result<Tensor<R>> {
    let pooled = ops::mean(x, &[2, 3, 4])?; // [N,C]
    ops::matmul(&pooled, w_fc)
}

/// Classifier head: pool, fully-connected map, softmax scores.
pub fn head_forward<R: Real>(x: &Tensor<R>, w_fc: &Tensor<R>) -> Result<Tensor<R>> {
    ops::softmax(&head_logits(x, w_fc)?, 1)
}
