//! Non-rigid alignment of the previous-cycle cloud to the current scan with an
//! embedded deformation graph.
//!
//! Each graph node carries a rotation and a translation; source points blend
//! the transforms of their nearest nodes. The parameters minimize a weighted
//! sum of an edge rigidity term, a symmetric Chamfer term against the target
//! and a sampled Laplacian smoothness term, using Adam with rotations updated
//! on SO(3) through the exponential map.

mod graph;
mod loss;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub use graph::{build_graph, warp, AnchorTable, DeformationGraph, GraphParams};
pub use loss::{
    arap_loss_and_gradient, chamfer_loss_and_gradient, loss_arap, loss_laplacian, pull_back,
    Correspondences, LaplacianTerm, LossWeights, ParamGradient,
};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationParams {
    pub voxel_size: f64,
    pub k_edges: usize,
    pub anchors: usize,
    pub kernel_sigma: f64,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Target points farther than this many node voxels from the warped
    /// cloud are left out of the target-to-source Chamfer direction.
    pub truncation_voxels: f64,
    pub laplacian_samples: usize,
    pub laplacian_k: usize,
    pub renormalize_every: usize,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.004,
            k_edges: 6,
            anchors: 8,
            kernel_sigma: 0.008,
            weights: LossWeights::default(),
            learning_rate: 0.1,
            iterations: 300,
            truncation_voxels: 5.0,
            laplacian_samples: 4096,
            laplacian_k: 6,
            renormalize_every: 50,
        }
    }
}

impl RegistrationParams {
    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            voxel_size: self.voxel_size,
            k_edges: self.k_edges,
            anchors: self.anchors,
            kernel_sigma: self.kernel_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if [self.learning_rate, self.truncation_voxels]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::invalid(
                "learning rate and truncation must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub arap: f64,
    pub cd: f64,
    pub lap: f64,
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// The source warped by the returned graph.
    pub aligned: PointCloud,
    pub graph: DeformationGraph,
    pub anchors: AnchorTable,
    /// Loss before each update; entry `i` is evaluated after `i` updates.
    pub trace: Vec<LossRecord>,
    /// Iteration whose parameters are returned (lowest total loss).
    pub best_iteration: usize,
}

impl Registration {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0].total
    }

    pub fn final_loss(&self) -> f64 {
        self.trace[self.best_iteration].total
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Returns the step to add to the parameters.
    fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                -self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

struct Objective<'a> {
    source: &'a PointCloud,
    target: &'a PointCloud,
    target_index: SpatialIndex,
    anchors: &'a AnchorTable,
    laplacian: LaplacianTerm,
    weights: LossWeights,
    truncation: f64,
}

impl Objective<'_> {
    fn evaluate(&self, graph: &DeformationGraph, iteration: usize) -> (LossRecord, ParamGradient) {
        let warped = warp(graph, self.anchors, self.source);
        let (arap, mut grad) = arap_loss_and_gradient(graph);
        for g in grad.rotation.iter_mut().chain(grad.translation.iter_mut()) {
            *g *= self.weights.arap;
        }
        let corr = Correspondences::compute(&warped, &self.target_index, self.truncation);
        let (cd, mut point_grad) = chamfer_loss_and_gradient(&warped, self.target, &corr);
        let (lap, lap_grad) = self.laplacian.loss_and_gradient(&warped);
        for (g, l) in point_grad.iter_mut().zip(&lap_grad) {
            *g = *g * self.weights.cd + l * self.weights.lap;
        }
        grad.add_scaled(
            &pull_back(graph, self.anchors, self.source, &point_grad),
            1.0,
        );
        let total = self.weights.arap * arap + self.weights.cd * cd + self.weights.lap * lap;
        (
            LossRecord {
                iteration,
                total,
                arap,
                cd,
                lap,
            },
            grad,
        )
    }
}

/// Deforms `source` toward `target`. Both clouds must already share a frame.
///
/// Translations are optimized in units of the node voxel size so that one
/// learning rate suits both rotations (radians) and translations. The
/// returned parameters are those of the lowest-loss iterate, so the final
/// loss never exceeds the initial one.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    params: &RegistrationParams,
) -> Result<Registration> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    source.validate()?;
    target.validate()?;
    params.validate()?;
    let (mut graph, anchors) = build_graph(source, &params.graph_params())?;
    let objective = Objective {
        source,
        target,
        target_index: SpatialIndex::new(&target.points),
        anchors: &anchors,
        laplacian: LaplacianTerm::new(source, params.laplacian_samples, params.laplacian_k),
        weights: params.weights,
        truncation: params.truncation_voxels * params.voxel_size,
    };
    let unit = params.voxel_size;
    let n = graph.node_count();
    let mut adam = Adam::new(6 * n, params.learning_rate);
    let mut trace = Vec::with_capacity(params.iterations + 1);
    let mut best = (f64::INFINITY, 0, graph.clone());

    for iteration in 0..=params.iterations {
        let (record, grad) = objective.evaluate(&graph, iteration);
        if !record.total.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        log::trace!("iteration {iteration}: {record:?}");
        trace.push(record);
        if record.total < best.0 {
            best = (record.total, iteration, graph.clone());
        }
        if iteration == params.iterations {
            break;
        }
        let flat: Vec<f64> = (0..n)
            .flat_map(|j| {
                let (r, t) = (grad.rotation[j], grad.translation[j] * unit);
                [r.x, r.y, r.z, t.x, t.y, t.z]
            })
            .collect();
        let step = adam.step(&flat);
        for j in 0..n {
            let s = &step[6 * j..6 * j + 6];
            graph.rotations[j] *= Rotation3::new(Vector3::new(s[0], s[1], s[2]));
            graph.translations[j] += Vector3::new(s[3], s[4], s[5]) * unit;
        }
        if params.renormalize_every > 0 && (iteration + 1) % params.renormalize_every == 0 {
            for r in &mut graph.rotations {
                r.renormalize();
            }
        }
        if !graph.params_finite() {
            return Err(Error::Diverged {
                iteration: iteration + 1,
            });
        }
    }

    let (_, best_iteration, graph) = best;
    let aligned = warp(&graph, &anchors, source);
    log::debug!(
        "registration: loss {:.3e} -> {:.3e} (best at iteration {best_iteration})",
        trace[0].total,
        trace[best_iteration].total
    );
    Ok(Registration {
        aligned,
        graph,
        anchors,
        trace,
        best_iteration,
    })
}
