use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::SpatialIndex;

use super::graph::{AnchorTable, DeformationGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub arap: f64,
    pub cd: f64,
    pub lap: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            arap: 1.0,
            cd: 0.1,
            lap: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.arap, self.cd, self.lap]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )))
        }
    }
}

/// Gradient with respect to per-node parameters. Rotation entries are taken
/// with respect to a right-multiplied increment `R_j · exp(δ_j)` at `δ_j = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub rotation: Vec<Vector3<f64>>,
    pub translation: Vec<Vector3<f64>>,
}

impl ParamGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            rotation: vec![Vector3::zeros(); n],
            translation: vec![Vector3::zeros(); n],
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ParamGradient, scale: f64) {
        for (a, b) in self.rotation.iter_mut().zip(&other.rotation) {
            *a += b * scale;
        }
        for (a, b) in self.translation.iter_mut().zip(&other.translation) {
            *a += b * scale;
        }
    }
}

/// Edge regularizer summed over both orientations of every edge.
pub fn loss_arap(graph: &DeformationGraph) -> f64 {
    arap_loss_and_gradient(graph).0
}

pub fn arap_loss_and_gradient(graph: &DeformationGraph) -> (f64, ParamGradient) {
    let mut grad = ParamGradient::zeros(graph.node_count());
    let mut loss = 0.0;
    for &(a, b) in &graph.edges {
        for (j, k) in [(a, b), (b, a)] {
            let d = graph.nodes[k] - graph.nodes[j];
            let r = graph.rotations[j] * d - d + graph.translations[j] - graph.translations[k];
            loss += r.norm_squared();
            let g = 2.0 * r;
            grad.rotation[j] += d.cross(&(graph.rotations[j].inverse() * g));
            grad.translation[j] += g;
            grad.translation[k] -= g;
        }
    }
    (loss, grad)
}

/// Maps per-point gradients on the warped cloud back to node parameters.
pub fn pull_back(
    graph: &DeformationGraph,
    anchors: &AnchorTable,
    source: &PointCloud,
    point_grad: &[Vector3<f64>],
) -> ParamGradient {
    let mut grad = ParamGradient::zeros(graph.node_count());
    for (i, (p, g)) in source.points.iter().zip(point_grad).enumerate() {
        if *g == Vector3::zeros() {
            continue;
        }
        for (j, w) in anchors.anchors(i) {
            let a = p - graph.nodes[j];
            grad.translation[j] += w * g;
            grad.rotation[j] += w * a.cross(&(graph.rotations[j].inverse() * g));
        }
    }
    grad
}

/// Nearest-neighbor assignments between the warped cloud and the target,
/// held fixed while one gradient is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    /// Target index for every warped point.
    pub forward: Vec<usize>,
    /// `(target, warped)` pairs for target points within the truncation
    /// distance of the warped cloud.
    pub backward: Vec<(usize, usize)>,
}

impl Correspondences {
    pub fn compute(warped: &PointCloud, target_index: &SpatialIndex, truncation: f64) -> Self {
        let forward = warped
            .points
            .par_iter()
            .map(|p| target_index.nearest(p).map(|n| n.index).unwrap_or(0))
            .collect();
        let warped_index = SpatialIndex::new(&warped.points);
        let backward = target_index
            .points()
            .par_iter()
            .enumerate()
            .filter_map(|(q, p)| {
                let n = warped_index.nearest(p)?;
                (n.distance < truncation).then_some((q, n.index))
            })
            .collect();
        Self { forward, backward }
    }
}

/// Symmetric Chamfer loss under fixed correspondences and its gradient with
/// respect to each warped point. Coincident pairs contribute no gradient.
pub fn chamfer_loss_and_gradient(
    warped: &PointCloud,
    target: &PointCloud,
    corr: &Correspondences,
) -> (f64, Vec<Vector3<f64>>) {
    let mut grad = vec![Vector3::zeros(); warped.len()];
    let mut forward = 0.0;
    if !warped.is_empty() {
        let s = 0.5 / warped.len() as f64;
        for (i, &q) in corr.forward.iter().enumerate() {
            let d = warped.points[i] - target.points[q];
            let n = d.norm();
            forward += n;
            if n > 0.0 {
                grad[i] += d * (s / n);
            }
        }
        forward /= warped.len() as f64;
    }
    let mut backward = 0.0;
    if !corr.backward.is_empty() {
        let s = 0.5 / corr.backward.len() as f64;
        for &(q, i) in &corr.backward {
            let d = warped.points[i] - target.points[q];
            let n = d.norm();
            backward += n;
            if n > 0.0 {
                grad[i] += d * (s / n);
            }
        }
        backward /= corr.backward.len() as f64;
    }
    (0.5 * (forward + backward), grad)
}

/// First-order Laplacian smoothness with neighborhoods frozen on a reference
/// cloud.
#[derive(Debug, Clone)]
pub struct LaplacianTerm {
    samples: Vec<usize>,
    k: usize,
    neighbors: Vec<usize>,
}

impl LaplacianTerm {
    /// Samples `sample_count` points evenly by index (all points if fewer)
    /// and records each sample's `k` nearest other points in `reference`.
    pub fn new(reference: &PointCloud, sample_count: usize, k: usize) -> Self {
        let n = reference.len();
        let samples: Vec<usize> = if n <= sample_count {
            (0..n).collect()
        } else {
            (0..sample_count).map(|m| m * n / sample_count).collect()
        };
        let k = k.min(n.saturating_sub(1));
        let index = SpatialIndex::new(&reference.points);
        let neighbors = samples
            .par_iter()
            .flat_map_iter(|&i| {
                index
                    .k_nearest(&reference.points[i], k + 1)
                    .into_iter()
                    .map(|nb| nb.index)
                    .filter(move |&j| j != i)
                    .take(k)
            })
            .collect();
        Self {
            samples,
            k,
            neighbors,
        }
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn neighbors(&self, sample: usize) -> &[usize] {
        &self.neighbors[sample * self.k..(sample + 1) * self.k]
    }

    /// `p̃_i − mean of p̃ over i's neighbors` for every sample.
    pub fn residuals(&self, warped: &PointCloud) -> Vec<Vector3<f64>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(s, &i)| {
                if self.k == 0 {
                    return Vector3::zeros();
                }
                let mean = self
                    .neighbors(s)
                    .iter()
                    .fold(Vector3::zeros(), |acc, &j| acc + warped.points[j].coords)
                    / self.k as f64;
                warped.points[i].coords - mean
            })
            .collect()
    }

    pub fn loss(&self, warped: &PointCloud) -> f64 {
        self.loss_and_gradient(warped).0
    }

    pub fn loss_and_gradient(&self, warped: &PointCloud) -> (f64, Vec<Vector3<f64>>) {
        let mut grad = vec![Vector3::zeros(); warped.len()];
        if self.samples.is_empty() {
            return (0.0, grad);
        }
        let scale = 1.0 / self.samples.len() as f64;
        let mut loss = 0.0;
        for (s, r) in self.residuals(warped).into_iter().enumerate() {
            loss += r.norm_squared();
            let g = 2.0 * scale * r;
            grad[self.samples[s]] += g;
            for &j in self.neighbors(s) {
                grad[j] -= g / self.k as f64;
            }
        }
        (loss * scale, grad)
    }
}

/// The Laplacian functional of a cloud with neighborhoods taken from the
/// cloud itself.
pub fn loss_laplacian(cloud: &PointCloud, sample_count: usize, k_neighbors: usize) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(LaplacianTerm::new(cloud, sample_count, k_neighbors).loss(cloud))
}

#[cfg(test)]
mod tests {
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::Point3;
    use crate::registration::graph::warp;

    fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        ) * 2.0
            * s
    }

    fn path_graph(n: usize, rng: &mut ChaCha8Rng) -> DeformationGraph {
        let nodes = (0..n)
            .map(|i| Point3::new(0.004 * i as f64, 0.0, 0.0) + rvec(rng, 0.001))
            .collect();
        let mut g = DeformationGraph::new(nodes, (0..n - 1).map(|i| (i, i + 1)).collect());
        for j in 0..n {
            g.rotations[j] = Rotation3::new(rvec(rng, 0.3));
            g.translations[j] = rvec(rng, 0.003);
        }
        g
    }

    /// Random graph with 10 nodes, a cloud around them and anchors.
    fn fixture(seed: u64) -> (DeformationGraph, AnchorTable, PointCloud) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = path_graph(10, &mut rng);
        g.edges.extend([(0, 5), (2, 7), (3, 9)]);
        let src: PointCloud = (0..120)
            .map(|_| Point3::new(rng.random::<f64>() * 0.036, 0.0, 0.0) + rvec(&mut rng, 0.004))
            .collect();
        let index = SpatialIndex::new(&g.nodes);
        let anchors = AnchorTable::build(&g.nodes, &index, &src, 4, 0.008);
        (g, anchors, src)
    }

    /// Central differences of `f` over every node parameter, rotations
    /// perturbed on the right.
    fn numeric_gradient(
        g: &DeformationGraph,
        f: impl Fn(&DeformationGraph) -> f64,
    ) -> ParamGradient {
        let h = 1e-6;
        let mut out = ParamGradient::zeros(g.node_count());
        for j in 0..g.node_count() {
            for axis in 0..3 {
                let e = Vector3::ith(axis, h);
                let mut gp = g.clone();
                let mut gm = g.clone();
                gp.rotations[j] = g.rotations[j] * Rotation3::new(e);
                gm.rotations[j] = g.rotations[j] * Rotation3::new(-e);
                out.rotation[j][axis] = (f(&gp) - f(&gm)) / (2.0 * h);
                let mut gp = g.clone();
                let mut gm = g.clone();
                gp.translations[j][axis] += h;
                gm.translations[j][axis] -= h;
                out.translation[j][axis] = (f(&gp) - f(&gm)) / (2.0 * h);
            }
        }
        out
    }

    fn assert_close(analytic: &ParamGradient, numeric: &ParamGradient) {
        let flat = |p: &ParamGradient| -> Vec<f64> {
            p.rotation
                .iter()
                .chain(&p.translation)
                .flat_map(|v| v.iter().copied())
                .collect()
        };
        let (a, n) = (flat(analytic), flat(numeric));
        let diff: f64 = a
            .iter()
            .zip(&n)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 0.0);
        assert!(
            diff / norm < 1e-4,
            "relative gradient error {}",
            diff / norm
        );
    }

    #[test]
    fn arap_zero_at_identity_and_global_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = path_graph(5, &mut rng);
        g.reset();
        assert_eq!(loss_arap(&g), 0.0);
        g.translations.fill(Vector3::new(0.01, -0.02, 0.003));
        assert!(loss_arap(&g) < 1e-30);
    }

    #[test]
    fn arap_matches_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = path_graph(5, &mut rng);
        let mut oracle = 0.0;
        for i in 0..4 {
            for (j, k) in [(i, i + 1), (i + 1, i)] {
                let (nj, nk) = (g.nodes[j], g.nodes[k]);
                let r = g.rotations[j].matrix();
                let mut s = 0.0;
                for row in 0..3 {
                    let mut v = nj[row] + g.translations[j][row] - nk[row] - g.translations[k][row];
                    for col in 0..3 {
                        v += r[(row, col)] * (nk[col] - nj[col]);
                    }
                    s += v * v;
                }
                oracle += s;
            }
        }
        assert!((loss_arap(&g) - oracle).abs() < 1e-15 * oracle.max(1.0));
    }

    #[test]
    fn arap_invariant_to_common_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = path_graph(8, &mut rng);
        let mut shifted = g.clone();
        for t in &mut shifted.translations {
            *t += Vector3::new(0.05, 0.01, -0.02);
        }
        assert!((loss_arap(&g) - loss_arap(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn arap_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (g, _, _) = fixture(seed);
            let (_, analytic) = arap_loss_and_gradient(&g);
            assert_close(&analytic, &numeric_gradient(&g, loss_arap));
        }
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (g, anchors, src) = fixture(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let target: PointCloud = src
                .points
                .iter()
                .map(|p| p + rvec(&mut rng, 0.003))
                .collect();
            let warped = warp(&g, &anchors, &src);
            let corr = Correspondences::compute(&warped, &SpatialIndex::new(&target.points), 0.02);
            let (_, pg) = chamfer_loss_and_gradient(&warped, &target, &corr);
            let analytic = pull_back(&g, &anchors, &src, &pg);
            let f = |gg: &DeformationGraph| {
                chamfer_loss_and_gradient(&warp(gg, &anchors, &src), &target, &corr).0
            };
            assert_close(&analytic, &numeric_gradient(&g, f));
        }
    }

    #[test]
    fn laplacian_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (g, anchors, src) = fixture(seed);
            let term = LaplacianTerm::new(&src, 50, 6);
            let (_, pg) = term.loss_and_gradient(&warp(&g, &anchors, &src));
            let analytic = pull_back(&g, &anchors, &src, &pg);
            let f = |gg: &DeformationGraph| term.loss(&warp(gg, &anchors, &src));
            assert_close(&analytic, &numeric_gradient(&g, f));
        }
    }

    #[test]
    fn collinear_interior_samples_have_zero_residual() {
        let cloud: PointCloud = (0..20)
            .map(|i| Point3::new(0.001 * i as f64, 0.0, 0.0))
            .collect();
        let term = LaplacianTerm::new(&cloud, 4096, 2);
        let res = term.residuals(&cloud);
        for (s, &i) in term.samples().iter().enumerate() {
            if i > 0 && i < 19 {
                assert!(res[s].norm() < 1e-15, "sample {i}: {}", res[s].norm());
            }
        }
    }

    #[test]
    fn identity_warp_equals_source_functional() {
        let (mut g, anchors, src) = fixture(3);
        g.reset();
        let term = LaplacianTerm::new(&src, 4096, 6);
        let warped = warp(&g, &anchors, &src);
        let direct = loss_laplacian(&src, 4096, 6).unwrap();
        assert!((term.loss(&warped) - direct).abs() < 1e-15);
    }

    #[test]
    fn laplacian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud: PointCloud = (0..200)
            .map(|_| Point3::origin() + rvec(&mut rng, 0.05))
            .collect();
        let mut oracle = 0.0;
        for (i, p) in cloud.points.iter().enumerate() {
            let mut d: Vec<(f64, usize)> = cloud
                .points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| ((p - q).norm(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mean = d[..6].iter().fold(Vector3::zeros(), |acc, &(_, j)| {
                acc + cloud.points[j].coords
            }) / 6.0;
            oracle += (p.coords - mean).norm_squared();
        }
        oracle /= 200.0;
        let got = loss_laplacian(&cloud, 4096, 6).unwrap();
        assert!(
            (got - oracle).abs() < 1e-14 * oracle.max(1.0),
            "{got} vs {oracle}"
        );
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let cloud: PointCloud = (0..10_000)
            .map(|i| Point3::new(i as f64 * 1e-4, 0.0, 0.0))
            .collect();
        let a = LaplacianTerm::new(&cloud, 4096, 6);
        let b = LaplacianTerm::new(&cloud, 4096, 6);
        assert_eq!(a.samples().len(), 4096);
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.neighbors, b.neighbors);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(LossWeights {
            arap: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights::default().validate().is_ok());
    }
}
