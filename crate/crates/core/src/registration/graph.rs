use std::collections::BTreeSet;

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, VoxelKey};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    /// Node spacing: nodes are centers of the source's occupied voxels.
    pub voxel_size: f64,
    /// Nearest-neighbor edges per node before symmetrization.
    pub k_edges: usize,
    /// Anchors per source point.
    pub anchors: usize,
    /// Gaussian kernel width for anchor weights.
    pub kernel_sigma: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.004,
            k_edges: 6,
            anchors: 8,
            kernel_sigma: 0.008,
        }
    }
}

/// Embedded deformation graph: nodes with a local rigid transform each.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGraph {
    pub nodes: Vec<Point3>,
    /// Undirected edges `(j, k)` with `j < k`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub rotations: Vec<Rotation3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl DeformationGraph {
    pub fn new(nodes: Vec<Point3>, edges: Vec<(usize, usize)>) -> Self {
        let n = nodes.len();
        Self {
            nodes,
            edges,
            rotations: vec![Rotation3::identity(); n],
            translations: vec![Vector3::zeros(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn reset(&mut self) {
        self.rotations.fill(Rotation3::identity());
        self.translations.fill(Vector3::zeros());
    }

    /// Axis-angle vector of node `j`'s rotation.
    pub fn rotation_vector(&self, j: usize) -> Vector3<f64> {
        self.rotations[j].scaled_axis()
    }

    /// Largest rotation angle over all nodes, radians.
    pub fn max_rotation_angle(&self) -> f64 {
        self.rotations.iter().map(|r| r.angle()).fold(0.0, f64::max)
    }

    pub fn params_finite(&self) -> bool {
        self.rotations
            .iter()
            .all(|r| r.matrix().iter().all(|v| v.is_finite()))
            && self
                .translations
                .iter()
                .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.nodes.len());
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        uf.components() <= 1
    }
}

/// Per-point anchor nodes and blend weights, stored row-major with a fixed
/// number of anchors per point.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTable {
    per_point: usize,
    nodes: Vec<usize>,
    weights: Vec<f64>,
}

impl AnchorTable {
    /// Anchors each point to its `k` nearest nodes with Gaussian weights
    /// normalized per point. `index` must be built over `nodes`.
    pub fn build(
        nodes: &[Point3],
        index: &SpatialIndex,
        source: &PointCloud,
        k: usize,
        sigma: f64,
    ) -> Self {
        debug_assert_eq!(index.len(), nodes.len());
        let k = k.min(nodes.len());
        let two_sigma2 = 2.0 * sigma * sigma;
        let mut anchor_nodes = Vec::with_capacity(source.len() * k);
        let mut anchor_weights = Vec::with_capacity(source.len() * k);
        for p in &source.points {
            let nbs = index.k_nearest(p, k);
            let raw: Vec<f64> = nbs
                .iter()
                .map(|nb| (-nb.distance * nb.distance / two_sigma2).exp())
                .collect();
            let sum: f64 = raw.iter().sum();
            for (m, nb) in nbs.iter().enumerate() {
                anchor_nodes.push(nb.index);
                anchor_weights.push(if sum > 0.0 {
                    raw[m] / sum
                } else if m == 0 {
                    // Kernel underflow: bind to the nearest node alone.
                    1.0
                } else {
                    0.0
                });
            }
        }
        Self {
            per_point: k,
            nodes: anchor_nodes,
            weights: anchor_weights,
        }
    }

    pub fn per_point(&self) -> usize {
        self.per_point
    }

    pub fn point_count(&self) -> usize {
        self.nodes.len().checked_div(self.per_point).unwrap_or(0)
    }

    pub fn anchors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = i * self.per_point..(i + 1) * self.per_point;
        self.nodes[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn node_indices(&self, i: usize) -> &[usize] {
        &self.nodes[i * self.per_point..(i + 1) * self.per_point]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.per_point..(i + 1) * self.per_point]
    }
}

/// Builds the deformation graph over `source` and anchors every source point
/// to its nearest nodes. Parameters start at the identity.
pub fn build_graph(
    source: &PointCloud,
    params: &GraphParams,
) -> Result<(DeformationGraph, AnchorTable)> {
    if source.is_empty() {
        return Err(Error::EmptyCloud);
    }
    source.validate()?;
    if params.voxel_size.is_nan()
        || params.voxel_size <= 0.0
        || params.kernel_sigma.is_nan()
        || params.kernel_sigma <= 0.0
        || params.anchors == 0
    {
        return Err(Error::invalid(
            "graph voxel size, kernel width and anchor count must be positive",
        ));
    }
    let origin = Point3::origin();
    let keys: BTreeSet<VoxelKey> = source
        .points
        .iter()
        .map(|p| VoxelKey::of(p, &origin, params.voxel_size))
        .collect();
    let nodes: Vec<Point3> = keys
        .iter()
        .map(|k| k.center(&origin, params.voxel_size))
        .collect();
    let index = SpatialIndex::new(&nodes);

    let mut edges = BTreeSet::new();
    for (j, n) in nodes.iter().enumerate() {
        for nb in index.k_nearest(n, params.k_edges + 1) {
            if nb.index != j {
                edges.insert((j.min(nb.index), j.max(nb.index)));
            }
        }
    }
    bridge_components(&nodes, &mut edges);

    let k = params.anchors.min(nodes.len());
    if k < params.anchors {
        log::warn!(
            "only {} graph node(s); anchoring each point to {k} instead of {}",
            nodes.len(),
            params.anchors
        );
    }
    let anchors = AnchorTable::build(&nodes, &index, source, k, params.kernel_sigma);
    Ok((
        DeformationGraph::new(nodes, edges.into_iter().collect()),
        anchors,
    ))
}

/// Adds the shortest edge between two different components until the graph
/// is connected.
fn bridge_components(nodes: &[Point3], edges: &mut BTreeSet<(usize, usize)>) {
    let mut uf = UnionFind::new(nodes.len());
    for &(a, b) in edges.iter() {
        uf.union(a, b);
    }
    while uf.components() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..nodes.len() {
            let ra = uf.find(a);
            for b in a + 1..nodes.len() {
                let d = (nodes[a] - nodes[b]).norm_squared();
                if d < best.0 && uf.find(b) != ra {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        edges.insert((a, b));
        uf.union(a, b);
    }
}

/// Applies the blended node transforms to every source point:
/// `p + Σ_j w_ij ((R_j − I)(p − n_j) + t_j)`, which equals
/// `Σ_j w_ij (R_j (p − n_j) + n_j + t_j)` for normalized weights and is exact
/// at the identity.
pub fn warp(graph: &DeformationGraph, anchors: &AnchorTable, source: &PointCloud) -> PointCloud {
    let points = source
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut disp = Vector3::zeros();
            for (j, w) in anchors.anchors(i) {
                let a = p - graph.nodes[j];
                disp += w * (graph.rotations[j] * a - a + graph.translations[j]);
            }
            p + disp
        })
        .collect();
    PointCloud {
        points,
        frame_id: source.frame_id.clone(),
    }
}

#[derive(Debug, Clone)]
struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.count -= 1;
        }
    }

    fn components(&self) -> usize {
        self.count
    }
}
