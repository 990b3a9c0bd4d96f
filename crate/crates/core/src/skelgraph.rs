//! Skeleton graph structures: topologies, adjacency matrices, normalization,
//! hop distances, and k-adjacency scales.
//!
//! A skeleton is an undirected graph whose nodes are body joints and whose
//! edges are bones. All model variants consume some normalized form of the
//! binary adjacency built here.

use crate::data::SkeletonSequence;
use crate::error::{Error, Result};

pub mod builtin;

/// Skeleton graph: joints, bones, a center joint, and the bone-direction tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    joint_count: usize,
    edges: Vec<(usize, usize)>,
    center_joint: usize,
    /// Parent of each joint in the spanning tree rooted at `center_joint`;
    /// `None` for the root. Defines bone direction for bone vectors.
    parent_of: Vec<Option<usize>>,
    /// Joint whose distance to the center defines the spine length used by
    /// scale normalization. `None` disables scale normalization.
    spine_tip: Option<usize>,
}

impl SkeletonTopology {
    /// Validates the edge set and derives the parent tree by breadth-first
    /// search from the center joint.
    pub fn new(joint_count: usize, edges: Vec<(usize, usize)>, center_joint: usize) -> Result<Self> {
        if joint_count == 0 {
            return Err(Error::Data("topology must have at least one joint".into()));
        }
        if center_joint >= joint_count {
            return Err(Error::Data(format!(
                "center joint {center_joint} out of range for {joint_count} joints"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a >= joint_count || b >= joint_count {
                return Err(Error::Data(format!(
                    "bone ({a},{b}) references a joint >= {joint_count}"
                )));
            }
            if a == b {
                return Err(Error::Data(format!("bone ({a},{b}) is a self-loop")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::Data(format!("duplicate bone ({a},{b})")));
            }
        }

        // BFS from the center: connectivity check + spanning-tree parents.
        let mut neighbors = vec![Vec::new(); joint_count];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let mut parent_of = vec![None; joint_count];
        let mut visited = vec![false; joint_count];
        visited[center_joint] = true;
        let mut queue = std::collections::VecDeque::from([center_joint]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &neighbors[v] {
                if !visited[u] {
                    visited[u] = true;
                    parent_of[u] = Some(v);
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        if reached != joint_count {
            return Err(Error::Data(format!(
                "skeleton graph is disconnected: reached {reached} of {joint_count} joints"
            )));
        }

        Ok(SkeletonTopology {
            joint_count,
            edges,
            center_joint,
            parent_of,
            spine_tip: None,
        })
    }

    pub fn with_spine_tip(mut self, tip: usize) -> Self {
        debug_assert!(tip < self.joint_count);
        self.spine_tip = Some(tip);
        self
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn center_joint(&self) -> usize {
        self.center_joint
    }

    pub fn parent_of(&self, joint: usize) -> Option<usize> {
        self.parent_of[joint]
    }

    pub fn spine_tip(&self) -> Option<usize> {
        self.spine_tip
    }

    /// Parses the topology override file format: a joint count line, one
    /// `i j` line per bone, and a final `center c` line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let m: usize = lines
            .next()
            .ok_or_else(|| Error::Data("topology file is empty".into()))?
            .parse()
            .map_err(|_| Error::Data("topology file: first line must be the joint count".into()))?;
        let mut edges = Vec::new();
        let mut center = None;
        for line in lines {
            if let Some(rest) = line.strip_prefix("center") {
                center = Some(rest.trim().parse::<usize>().map_err(|_| {
                    Error::Data(format!("topology file: bad center line {line:?}"))
                })?);
                continue;
            }
            let mut parts = line.split_whitespace();
            let (a, b) = (parts.next(), parts.next());
            match (a, b, parts.next()) {
                (Some(a), Some(b), None) => {
                    let a = a.parse().map_err(|_| {
                        Error::Data(format!("topology file: bad bone line {line:?}"))
                    })?;
                    let b = b.parse().map_err(|_| {
                        Error::Data(format!("topology file: bad bone line {line:?}"))
                    })?;
                    edges.push((a, b));
                }
                _ => return Err(Error::Data(format!("topology file: bad bone line {line:?}"))),
            }
        }
        let center =
            center.ok_or_else(|| Error::Data("topology file: missing center line".into()))?;
        SkeletonTopology::new(m, edges, center)
    }
}

/// Binary symmetric adjacency of a skeleton graph. Zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    size: usize,
    entries: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.size + j]
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count()
    }

    fn from_entries(size: usize, entries: Vec<u8>) -> Self {
        AdjacencyMatrix { size, entries }
    }

    /// Builds directly from a flat row-major 0/1 buffer. The caller
    /// guarantees symmetry and a zero diagonal; isolated nodes are allowed
    /// (unlike topology-derived adjacencies).
    pub fn from_raw(size: usize, entries: Vec<u8>) -> Self {
        debug_assert_eq!(entries.len(), size * size);
        debug_assert!((0..size).all(|i| entries[i * size + i] == 0));
        debug_assert!((0..size)
            .all(|i| (0..size).all(|j| entries[i * size + j] == entries[j * size + i])));
        AdjacencyMatrix { size, entries }
    }
}

/// Symmetrically normalized adjacency with non-negative real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    size: usize,
    entries: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// All-pairs hop distances. Unreachable pairs carry the sentinel `size`
/// (strictly larger than any possible path length).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopTable {
    size: usize,
    dist: Vec<usize>,
}

impl HopTable {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sentinel(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.dist[i * self.size + j]
    }

    pub fn is_reachable(&self, i: usize, j: usize) -> bool {
        self.get(i, j) < self.sentinel()
    }

    /// Longest finite distance in the table.
    pub fn diameter(&self) -> usize {
        self.dist.iter().copied().filter(|&d| d < self.size).max().unwrap_or(0)
    }
}

/// Binary adjacency of the topology's bone set.
pub fn build_adjacency(topology: &SkeletonTopology) -> AdjacencyMatrix {
    let m = topology.joint_count();
    let mut entries = vec![0u8; m * m];
    for &(a, b) in topology.edges() {
        entries[a * m + b] = 1;
        entries[b * m + a] = 1;
    }
    AdjacencyMatrix::from_entries(m, entries)
}

/// Symmetric normalization D^{-1/2} A' D^{-1/2} where A' is A or A+I.
///
/// Degree-zero nodes map to zero rows/columns instead of dividing by zero.
pub fn normalize_adjacency(adj: &AdjacencyMatrix, add_self_loops: bool) -> NormalizedAdjacency {
    let m = adj.size();
    let mut work = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            work[i * m + j] = f64::from(adj.get(i, j));
        }
        if add_self_loops {
            work[i * m + i] += 1.0;
        }
    }
    let mut deg_inv_sqrt = vec![0.0f64; m];
    for i in 0..m {
        let deg: f64 = work[i * m..(i + 1) * m].iter().sum();
        deg_inv_sqrt[i] = if deg > 0.0 { deg.powf(-0.5) } else { 0.0 };
    }
    for i in 0..m {
        for j in 0..m {
            work[i * m + j] *= deg_inv_sqrt[i] * deg_inv_sqrt[j];
        }
    }
    NormalizedAdjacency { size: m, entries: work }
}

/// Normalizes an arbitrary non-negative symmetric matrix the same way.
/// Used for k-adjacency scales, which already carry their self-loops.
pub fn normalize_general(size: usize, entries: &[f64]) -> NormalizedAdjacency {
    debug_assert_eq!(entries.len(), size * size);
    let mut work = entries.to_vec();
    let mut deg_inv_sqrt = vec![0.0f64; size];
    for i in 0..size {
        let deg: f64 = work[i * size..(i + 1) * size].iter().sum();
        deg_inv_sqrt[i] = if deg > 0.0 { deg.powf(-0.5) } else { 0.0 };
    }
    for i in 0..size {
        for j in 0..size {
            work[i * size + j] *= deg_inv_sqrt[i] * deg_inv_sqrt[j];
        }
    }
    NormalizedAdjacency { size, entries: work }
}

/// All-pairs shortest hop distances by BFS from every source.
pub fn hop_distance(adj: &AdjacencyMatrix) -> HopTable {
    let m = adj.size();
    let sentinel = m;
    let mut dist = vec![sentinel; m * m];
    let mut neighbors = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            if adj.get(i, j) != 0 {
                neighbors[i].push(j);
            }
        }
    }
    let mut queue = std::collections::VecDeque::new();
    for src in 0..m {
        dist[src * m + src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let dv = dist[src * m + v];
            for &u in &neighbors[v] {
                if dist[src * m + u] == sentinel {
                    dist[src * m + u] = dv + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    HopTable { size: m, dist }
}

/// k-adjacency: entry (i,j) = 1 iff the hop distance is exactly k, or i = j.
///
/// k = 0 yields the identity; k = 1 yields A + I.
pub fn k_adjacency(adj: &AdjacencyMatrix, k: usize) -> AdjacencyMatrix {
    let m = adj.size();
    let hops = hop_distance(adj);
    let mut entries = vec![0u8; m * m];
    for i in 0..m {
        for j in 0..m {
            let d = hops.get(i, j);
            // d < m excludes the unreachable sentinel.
            if i == j || (d == k && d < m) {
                entries[i * m + j] = 1;
            }
        }
    }
    AdjacencyMatrix::from_entries(m, entries)
}

/// Bone displacement vectors: value at joint j is position(j) − position(parent(j));
/// the root joint carries the zero vector. Shape and metadata mirror the input.
pub fn bone_vectors(seq: &SkeletonSequence, topology: &SkeletonTopology) -> Result<SkeletonSequence> {
    if seq.joints() != topology.joint_count() {
        return Err(Error::Shape(format!(
            "sequence has {} joints but topology has {}",
            seq.joints(),
            topology.joint_count()
        )));
    }
    let mut out = seq.clone();
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            for j in 0..seq.joints() {
                let bone = match topology.parent_of(j) {
                    Some(p) => {
                        let pj = seq.position(t, b, j);
                        let pp = seq.position(t, b, p);
                        [pj[0] - pp[0], pj[1] - pp[1], pj[2] - pp[2]]
                    }
                    None => [0.0; 3],
                };
                out.set_position(t, b, j, bone);
            }
        }
    }
    Ok(out)
}
