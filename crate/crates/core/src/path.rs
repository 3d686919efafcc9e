//! Ordering selected views into the shortest open tour from the current pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::view_space::View;

/// Largest number of views solved exactly by dynamic programming.
pub const EXACT_LIMIT: usize = 20;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMethod {
    Exact,
    Heuristic,
}

impl std::fmt::Display for PathMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PathMethod::Exact => "exact",
            PathMethod::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPath {
    /// View ids in visiting order, starting with the start view.
    pub order: Vec<usize>,
    /// Length of each hop; `hops[i]` joins `order[i]` and `order[i + 1]`.
    pub hops: Vec<f64>,
    pub total_cost: f64,
    pub method: PathMethod,
}

impl ViewPath {
    /// Running cost after each view of `order`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(self.hops.iter().map(|h| {
                acc += h;
                acc
            }))
            .collect()
    }
}

/// Total Euclidean length of the polyline through `points`.
pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Shortest open path from `start` through every view in `views`.
///
/// Exact (Held–Karp) up to [`EXACT_LIMIT`] views, among equal-cost paths the
/// one whose id sequence is lexicographically smallest. Larger inputs use
/// nearest neighbor followed by 2-opt and are flagged heuristic.
pub fn shortest_hamiltonian_path(start: &View, views: &[View]) -> Result<ViewPath> {
    let (stops, positions) = prepare(start, views)?;
    if stops.len() <= EXACT_LIMIT {
        Ok(assemble(
            start,
            &stops,
            &positions,
            held_karp(&positions),
            PathMethod::Exact,
        ))
    } else {
        let visit = two_opt(&positions, nearest_neighbor(&positions));
        Ok(assemble(
            start,
            &stops,
            &positions,
            visit,
            PathMethod::Heuristic,
        ))
    }
}

/// Nearest neighbor followed by 2-opt regardless of size.
pub fn heuristic_path(start: &View, views: &[View]) -> Result<ViewPath> {
    let (stops, positions) = prepare(start, views)?;
    let visit = two_opt(&positions, nearest_neighbor(&positions));
    Ok(assemble(
        start,
        &stops,
        &positions,
        visit,
        PathMethod::Heuristic,
    ))
}

/// Stops sorted by id and the positions `[start, stops...]`.
fn prepare<'a>(start: &View, views: &'a [View]) -> Result<(Vec<&'a View>, Vec<Point3>)> {
    let mut stops: Vec<&View> = views.iter().collect();
    stops.sort_by_key(|v| v.id);
    if stops.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::invalid("duplicate view id in path request"));
    }
    if stops.iter().any(|v| v.id == start.id) {
        return Err(Error::invalid(format!(
            "start view {} is also listed as a stop",
            start.id
        )));
    }
    let positions = std::iter::once(start.position)
        .chain(stops.iter().map(|v| v.position))
        .collect();
    Ok((stops, positions))
}

fn assemble(
    start: &View,
    stops: &[&View],
    positions: &[Point3],
    visit: Vec<usize>,
    method: PathMethod,
) -> ViewPath {
    let order = std::iter::once(start.id)
        .chain(visit.iter().map(|&i| stops[i - 1].id))
        .collect();
    let pts: Vec<Point3> = std::iter::once(0)
        .chain(visit)
        .map(|i| positions[i])
        .collect();
    let hops: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    ViewPath {
        order,
        total_cost: hops.iter().sum(),
        hops,
        method,
    }
}

fn distances(p: &[Point3]) -> Vec<Vec<f64>> {
    p.iter()
        .map(|a| p.iter().map(|b| (b - a).norm()).collect())
        .collect()
}

/// Visiting order of points `1..n` from point 0. Point indices follow id
/// order, so the first index achieving the optimum at each step yields the
/// lexicographically smallest optimal sequence.
fn held_karp(p: &[Point3]) -> Vec<usize> {
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let d = distances(p);
    let full = (1usize << n) - 1;
    // rest[s * n + v]: cheapest path starting at stop v that visits every
    // stop in set s (which contains v).
    let mut rest = vec![f64::INFINITY; (full + 1) * n];
    for s in 1..=full {
        for v in 0..n {
            if s >> v & 1 == 0 {
                continue;
            }
            let others = s & !(1 << v);
            rest[s * n + v] = if others == 0 {
                0.0
            } else {
                (0..n)
                    .filter(|u| others >> u & 1 == 1)
                    .map(|u| d[v + 1][u + 1] + rest[others * n + u])
                    .fold(f64::INFINITY, f64::min)
            };
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut s = full;
    let mut at = 0;
    while s != 0 {
        let cost = |u: usize| d[at][u + 1] + rest[s * n + u];
        let best = (0..n)
            .filter(|u| s >> u & 1 == 1)
            .map(cost)
            .fold(f64::INFINITY, f64::min);
        let next = (0..n)
            .find(|&u| s >> u & 1 == 1 && cost(u) <= best + TIE_EPS)
            .expect("non-empty set");
        order.push(next + 1);
        s &= !(1 << next);
        at = next + 1;
    }
    order
}

fn nearest_neighbor(p: &[Point3]) -> Vec<usize> {
    let mut left: Vec<usize> = (1..p.len()).collect();
    let mut order = Vec::with_capacity(left.len());
    let mut at = 0;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, (p[i] - p[at]).norm()))
            .fold(
                (0, f64::INFINITY),
                |best, c| if c.1 < best.1 { c } else { best },
            );
        at = left.remove(k);
        order.push(at);
    }
    order
}

/// Segment reversals on the open path `0, order...` until no move shortens
/// it.
fn two_opt(p: &[Point3], order: Vec<usize>) -> Vec<usize> {
    let mut tour: Vec<usize> = std::iter::once(0).chain(order).collect();
    let d = |a: usize, b: usize| (p[a] - p[b]).norm();
    let m = tour.len();
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..m.saturating_sub(1) {
            for j in i + 1..m {
                let before = d(tour[i - 1], tour[i])
                    + if j + 1 < m {
                        d(tour[j], tour[j + 1])
                    } else {
                        0.0
                    };
                let after = d(tour[i - 1], tour[j])
                    + if j + 1 < m {
                        d(tour[i], tour[j + 1])
                    } else {
                        0.0
                    };
                if after < before - 1e-12 {
                    tour[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    tour.remove(0);
    tour
}

#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn view(id: usize, x: f64, y: f64, z: f64) -> View {
        View::look_at(id, Point3::new(x, y, z), &Point3::new(0.0, 0.0, -10.0))
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }

    /// Cheapest order over all permutations, lexicographically smallest
    /// among ties.
    fn brute_force(start: &View, views: &[View]) -> (Vec<usize>, f64) {
        let by_id = |id: usize| views.iter().find(|v| v.id == id).unwrap().position;
        let ids: Vec<usize> = views.iter().map(|v| v.id).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for perm in permutations(&ids) {
            let pts: Vec<Point3> = std::iter::once(start.position)
                .chain(perm.iter().map(|&i| by_id(i)))
                .collect();
            let c = polyline_length(&pts);
            let better = match &best {
                None => true,
                Some((o, bc)) => c < bc - TIE_EPS || ((c - bc).abs() <= TIE_EPS && perm < *o),
            };
            if better {
                best = Some((perm, c));
            }
        }
        best.unwrap()
    }

    fn random_views(rng: &mut ChaCha8Rng, n: usize, grid: bool) -> Vec<View> {
        (0..n)
            .map(|i| {
                let mut c = || {
                    if grid {
                        rng.random_range(0..3) as f64
                    } else {
                        rng.random::<f64>()
                    }
                };
                view(i + 1, c(), c(), c())
            })
            .collect()
    }

    #[test]
    fn collinear_views() {
        let p = shortest_hamiltonian_path(
            &view(0, 0.0, 0.0, 0.0),
            &[view(2, 2.0, 0.0, 0.0), view(1, 1.0, 0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(p.order, vec![0, 1, 2]);
        assert!((p.total_cost - 2.0).abs() < 1e-12);
        assert_eq!(p.method, PathMethod::Exact);
        assert_eq!(p.cumulative(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn unit_square() {
        let views = [
            view(1, 1.0, 0.0, 0.0),
            view(2, 1.0, 1.0, 0.0),
            view(3, 0.0, 1.0, 0.0),
        ];
        let p = shortest_hamiltonian_path(&view(0, 0.0, 0.0, 0.0), &views).unwrap();
        assert!((p.total_cost - 3.0).abs() < 1e-12);
        assert_eq!(p.order, vec![0, 1, 2, 3]);
        assert_eq!(
            brute_force(&view(0, 0.0, 0.0, 0.0), &views).0,
            vec![1, 2, 3]
        );
    }

    #[test]
    fn matches_permutation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..50 {
            let n = rng.random_range(1..=9);
            // Half the cases on a coarse lattice to force equal-cost ties.
            let views = random_views(&mut rng, n, case % 2 == 0);
            let start = view(0, 0.5, 0.5, 0.5);
            let got = shortest_hamiltonian_path(&start, &views).unwrap();
            let (order, cost) = brute_force(&start, &views);
            assert!((got.total_cost - cost).abs() < 1e-9, "case {case}");
            assert_eq!(&got.order[1..], &order[..], "case {case}");
        }
    }

    #[test]
    fn heuristic_never_beats_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let n = rng.random_range(2..=12);
            let views = random_views(&mut rng, n, false);
            let start = view(0, 0.0, 0.0, 0.0);
            let exact = shortest_hamiltonian_path(&start, &views).unwrap();
            let heur = heuristic_path(&start, &views).unwrap();
            assert!(heur.total_cost >= exact.total_cost - 1e-12);
            let mut ids = heur.order[1..].to_vec();
            ids.sort_unstable();
            assert_eq!(ids, (1..=n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn large_inputs_use_heuristic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let views = random_views(&mut rng, 30, false);
        let p = shortest_hamiltonian_path(&view(0, 0.0, 0.0, 0.0), &views).unwrap();
        assert_eq!(p.method, PathMethod::Heuristic);
        assert_eq!(p.order.len(), 31);
        assert!((p.total_cost - p.hops.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn empty_stop_list() {
        let p = shortest_hamiltonian_path(&view(4, 0.0, 0.0, 0.0), &[]).unwrap();
        assert_eq!(p.order, vec![4]);
        assert_eq!(p.total_cost, 0.0);
    }

    #[test]
    fn start_among_stops_is_rejected() {
        assert!(
            shortest_hamiltonian_path(&view(1, 0.0, 0.0, 0.0), &[view(1, 1.0, 0.0, 0.0)]).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cost_invariant_under_rigid_motion(
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..9),
            axis in prop::array::uniform3(-1.0f64..1.0),
            shift in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let axis = Vector3::from(axis);
            let rot = Rotation3::new(axis);
            let shift = Vector3::from(shift);
            let views: Vec<View> = pts.iter().enumerate().map(|(i, a)| view(i, a[0], a[1], a[2])).collect();
            let moved: Vec<View> = views
                .iter()
                .map(|v| View { position: rot * v.position + shift, ..v.clone() })
                .collect();
            let a = shortest_hamiltonian_path(&views[0], &views[1..]).unwrap();
            let b = shortest_hamiltonian_path(&moved[0], &moved[1..]).unwrap();
            prop_assert!((a.total_cost - b.total_cost).abs() < 1e-9);
        }
    }
}
