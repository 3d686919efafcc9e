//! Spreading points on the sphere (or upper hemisphere) to maximize the
//! minimum pairwise angle.
//!
//! Projected-gradient pairwise repulsion: each iteration pushes every point
//! along the tangential component of a sharpened inverse-distance force, then
//! renormalizes. A step is accepted only if it does not shrink the minimum
//! pairwise angle; otherwise the step length is halved. The force exponent
//! grows over the run so that late iterations act almost only on the closest
//! pairs. The start is a golden-spiral layout, randomly rotated and jittered
//! per seed.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewSpaceKind {
    Hemisphere,
    Sphere,
}

impl ViewSpaceKind {
    /// Number of candidate views in the standard configuration.
    pub fn default_count(self) -> usize {
        match self {
            ViewSpaceKind::Hemisphere => 32,
            ViewSpaceKind::Sphere => 63,
        }
    }
}

impl std::fmt::Display for ViewSpaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViewSpaceKind::Hemisphere => "hemisphere",
            ViewSpaceKind::Sphere => "sphere",
        })
    }
}

impl std::str::FromStr for ViewSpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hemisphere" => Ok(ViewSpaceKind::Hemisphere),
            "sphere" => Ok(ViewSpaceKind::Sphere),
            other => Err(Error::invalid(format!("unknown view space kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TammesSolution {
    pub directions: Vec<Vector3<f64>>,
    /// Minimum pairwise angle in radians.
    pub min_angle: f64,
    /// Minimum pairwise angle after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Largest per-point displacement of the final accepted step.
    pub last_displacement: f64,
}

const MAX_ITERATIONS: usize = 20_000;
const CONVERGED_DISPLACEMENT: f64 = 1e-9;

pub fn min_pairwise_angle(dirs: &[Vector3<f64>]) -> f64 {
    let mut max_dot = -1.0f64;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            max_dot = max_dot.max(dirs[i].dot(&dirs[j]));
        }
    }
    max_dot.clamp(-1.0, 1.0).acos()
}

fn project(v: Vector3<f64>, kind: ViewSpaceKind) -> Vector3<f64> {
    let mut v = v;
    if kind == ViewSpaceKind::Hemisphere && v.z < 0.0 {
        v.z = 0.0;
    }
    let n = v.norm();
    if n < 1e-12 {
        // Degenerate: fall back to a fixed tangent direction.
        return Vector3::x();
    }
    v / n
}

/// Golden-spiral layout with a seeded rotation and jitter.
fn seeded_start(n: usize, kind: ViewSpaceKind, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let tilt = match kind {
        ViewSpaceKind::Sphere => {
            let axis = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            nalgebra::Rotation3::new(axis.normalize() * rng.random::<f64>() * std::f64::consts::PI)
        }
        ViewSpaceKind::Hemisphere => nalgebra::Rotation3::identity(),
    };
    let jitter = 0.05 * (4.0 * std::f64::consts::PI / n as f64).sqrt();
    (0..n)
        .map(|i| {
            let z = match kind {
                ViewSpaceKind::Sphere => 1.0 - (2 * i + 1) as f64 / n as f64,
                ViewSpaceKind::Hemisphere => 1.0 - (i as f64 + 0.5) / n as f64,
            };
            let r = (1.0 - z * z).sqrt();
            let phi = phase + golden * i as f64;
            let v = tilt * Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let noise = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            project(v + noise * jitter, kind)
        })
        .collect()
}

/// Tangential repulsion forces with potential `(d_min / d)^s`.
fn forces(dirs: &[Vector3<f64>], exponent: f64) -> Vec<Vector3<f64>> {
    let n = dirs.len();
    let mut d_min2 = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            d_min2 = d_min2.min((dirs[i] - dirs[j]).norm_squared());
        }
    }
    let d_min2 = d_min2.max(1e-24);
    let mut f = vec![Vector3::zeros(); n];
    for i in 0..n {
        for j in i + 1..n {
            let diff = dirs[i] - dirs[j];
            let r2 = diff.norm_squared().max(1e-24);
            // (d_min^2 / r^2)^(s/2) / r^2, scaled to stay finite for large s.
            let w = (d_min2 / r2).powf(0.5 * exponent) / r2;
            f[i] += diff * w;
            f[j] -= diff * w;
        }
    }
    for (fi, x) in f.iter_mut().zip(dirs) {
        *fi -= x * fi.dot(x);
    }
    f
}

pub fn solve_tammes(n: usize, kind: ViewSpaceKind, seed: u64) -> Result<TammesSolution> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = seeded_start(n, kind, &mut rng);
    let mut min_angle = min_pairwise_angle(&dirs);
    let mut trace = vec![min_angle];
    let spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let mut step = 0.5 * spacing;
    let mut exponent = 2.0;
    let mut last_displacement = f64::INFINITY;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let f = forces(&dirs, exponent);
        let f_max = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if f_max == 0.0 {
            last_displacement = 0.0;
            break;
        }
        let trial: Vec<Vector3<f64>> = dirs
            .iter()
            .zip(&f)
            .map(|(x, fi)| project(x + fi * (step / f_max), kind))
            .collect();
        let trial_angle = min_pairwise_angle(&trial);
        if trial_angle >= min_angle {
            last_displacement = dirs
                .iter()
                .zip(&trial)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            dirs = trial;
            min_angle = trial_angle;
            trace.push(min_angle);
            step = (step * 1.5).min(0.5 * spacing);
            exponent = (exponent * 1.01).min(96.0);
            if last_displacement < CONVERGED_DISPLACEMENT {
                break;
            }
        } else {
            step *= 0.5;
            if step < CONVERGED_DISPLACEMENT * 1e-3 {
                last_displacement = step;
                break;
            }
        }
    }

    Ok(TammesSolution {
        directions: dirs,
        min_angle,
        trace,
        iterations,
        last_displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_are_antipodal() {
        let s = solve_tammes(2, ViewSpaceKind::Sphere, 0).unwrap();
        assert!(
            (s.min_angle - std::f64::consts::PI).abs() < 1e-6,
            "{}",
            s.min_angle
        );
    }

    #[test]
    fn rejects_fewer_than_two() {
        assert!(solve_tammes(1, ViewSpaceKind::Sphere, 0).is_err());
        assert!(solve_tammes(0, ViewSpaceKind::Hemisphere, 0).is_err());
    }

    #[test]
    fn hemisphere_points_stay_in_upper_half() {
        let s = solve_tammes(32, ViewSpaceKind::Hemisphere, 3).unwrap();
        assert!(s
            .directions
            .iter()
            .all(|d| d.z >= 0.0 && (d.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let a = solve_tammes(20, ViewSpaceKind::Sphere, 5).unwrap();
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
        let b = solve_tammes(20, ViewSpaceKind::Sphere, 5).unwrap();
        assert_eq!(a.directions, b.directions);
    }
}
