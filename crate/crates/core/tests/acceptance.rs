//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regrow::coverage::{solve_cover, CoverMode, SolveBudget, VisibilityMatrix};
use regrow::path::{heuristic_path, shortest_hamiltonian_path};
use regrow::pipeline::{
    metrics_table, run_experiment, run_matrix, CaseRow, ExperimentConfig, GrowthLevel, InitialView,
    MatrixConfig, SpeciesProfile,
};
use regrow::registration::{
    arap_loss_and_gradient, chamfer_loss_and_gradient, loss_arap, pull_back, register, warp,
    AnchorTable, Correspondences, DeformationGraph, LaplacianTerm, ParamGradient,
    RegistrationParams,
};
use regrow::view_space::{build_view_space, min_pairwise_angle, solve_tammes, View, ViewSpaceKind};
use regrow::{chamfer_distance, Point3, PointCloud, SpatialIndex};

/// Written straight to stdout so the line shows up without `--nocapture`.
fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n} ({name}): {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    ) * 2.0
        * s
}

// Criterion 1

fn random_graph(rng: &mut ChaCha8Rng) -> DeformationGraph {
    let nodes: Vec<Point3> = (0..10).map(|_| Point3::from(rvec(rng, 0.008))).collect();
    let mut edges = Vec::new();
    for j in 0..10 {
        let mut others: Vec<usize> = (0..10).filter(|&k| k != j).collect();
        others.sort_by(|&a, &b| {
            (nodes[a] - nodes[j])
                .norm()
                .total_cmp(&(nodes[b] - nodes[j]).norm())
        });
        edges.extend(others[..3].iter().map(|&k| (j.min(k), j.max(k))));
    }
    edges.sort_unstable();
    edges.dedup();
    let mut g = DeformationGraph::new(nodes, edges);
    for j in 0..10 {
        g.rotations[j] = Rotation3::new(rvec(rng, 0.3));
        g.translations[j] = rvec(rng, 0.003);
    }
    g
}

fn flatten(p: &ParamGradient) -> Vec<f64> {
    p.rotation
        .iter()
        .chain(&p.translation)
        .flat_map(|v| v.iter().copied())
        .collect()
}

/// Central differences with rotations perturbed on the right.
fn numeric_gradient(g: &DeformationGraph, f: &dyn Fn(&DeformationGraph) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let n = g.nodes.len();
    let mut out = vec![0.0; 6 * n];
    for j in 0..n {
        for axis in 0..3 {
            let e = Vector3::ith(axis, h);
            let (mut gp, mut gm) = (g.clone(), g.clone());
            gp.rotations[j] = g.rotations[j] * Rotation3::new(e);
            gm.rotations[j] = g.rotations[j] * Rotation3::new(-e);
            out[3 * j + axis] = (f(&gp) - f(&gm)) / (2.0 * h);
            let (mut gp, mut gm) = (g.clone(), g.clone());
            gp.translations[j][axis] += h;
            gm.translations[j][axis] -= h;
            out[3 * n + 3 * j + axis] = (f(&gp) - f(&gm)) / (2.0 * h);
        }
    }
    out
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm
}

#[test]
fn criterion_1_gradient_correctness() {
    let t = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng);
        let src: PointCloud = (0..150)
            .map(|_| Point3::from(rvec(&mut rng, 0.01)))
            .collect();
        let anchors = AnchorTable::build(&g.nodes, &SpatialIndex::new(&g.nodes), &src, 4, 0.008);

        let (_, arap) = arap_loss_and_gradient(&g);
        let e = relative_error(&flatten(&arap), &numeric_gradient(&g, &loss_arap));
        worst[0] = worst[0].max(e);

        let warped = warp(&g, &anchors, &src);
        let target: PointCloud = warped
            .points
            .iter()
            .map(|p| p + rvec(&mut rng, 0.003))
            .collect();
        let corr = Correspondences::compute(&warped, &SpatialIndex::new(&target.points), 0.02);
        let (_, pg) = chamfer_loss_and_gradient(&warped, &target, &corr);
        let cd = |gg: &DeformationGraph| {
            chamfer_loss_and_gradient(&warp(gg, &anchors, &src), &target, &corr).0
        };
        let e = relative_error(
            &flatten(&pull_back(&g, &anchors, &src, &pg)),
            &numeric_gradient(&g, &cd),
        );
        worst[1] = worst[1].max(e);

        let term = LaplacianTerm::new(&src, 60, 6);
        let (_, pg) = term.loss_and_gradient(&warped);
        let lap = |gg: &DeformationGraph| term.loss(&warp(gg, &anchors, &src));
        let e = relative_error(
            &flatten(&pull_back(&g, &anchors, &src, &pg)),
            &numeric_gradient(&g, &lap),
        );
        worst[2] = worst[2].max(e);
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient correctness",
        worst.iter().all(|&e| e < 1e-4) && secs < 10.0,
        format!(
            "max relative error arap {:.2e}, chamfer {:.2e}, laplacian {:.2e} over 20 graphs; {secs:.2} s",
            worst[0], worst[1], worst[2]
        ),
    );
}

// Criterion 2

fn tube(
    rng: &mut ChaCha8Rng,
    base: Point3,
    axis: Vector3<f64>,
    length: f64,
    radius: f64,
    n: usize,
) -> Vec<Point3> {
    let u = axis
        .cross(&Vector3::z())
        .try_normalize(1e-9)
        .unwrap_or(Vector3::x());
    let v = axis.cross(&u);
    (0..n)
        .map(|_| {
            let s = rng.random::<f64>() * length;
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            base + axis * s + (u * a.cos() + v * a.sin()) * radius
        })
        .collect()
}

/// 2 000-point stem with a side branch, the branch's index range and its base.
fn stem_with_branch(seed: u64) -> (PointCloud, std::ops::Range<usize>, Point3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = tube(&mut rng, Point3::origin(), Vector3::z(), 0.1, 0.004, 1300);
    let base = Point3::new(0.0, 0.0, 0.05);
    let start = pts.len();
    pts.extend(tube(
        &mut rng,
        base,
        Vector3::new(1.0, 0.0, 1.0).normalize(),
        0.06,
        0.003,
        700,
    ));
    let end = pts.len();
    (PointCloud::new(pts), start..end, base)
}

#[test]
fn criterion_2_registration_sanity() {
    let params = RegistrationParams::default();
    assert_eq!(params.iterations, 300);
    let t = Instant::now();

    let (p, _, _) = stem_with_branch(10);
    let same = register(&p, &p, &params).unwrap();
    let cd_same = chamfer_distance(&same.aligned, &p).unwrap();
    let rot = same.graph.max_rotation_angle();

    let (p, _, _) = stem_with_branch(11);
    let q = p.map(|x| x + Vector3::new(0.005, 0.0, 0.0));
    let cd_shift = chamfer_distance(&register(&p, &q, &params).unwrap().aligned, &q).unwrap();

    let (p, branch, base) = stem_with_branch(12);
    let bend = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::y()), 15f64.to_radians());
    let mut q = p.clone();
    for i in branch {
        q.points[i] = base + bend * (p.points[i] - base);
    }
    let before = chamfer_distance(&p, &q).unwrap();
    let after = chamfer_distance(&register(&p, &q, &params).unwrap().aligned, &q).unwrap();
    let secs = t.elapsed().as_secs_f64();

    verdict(
        2,
        "registration sanity",
        cd_same < 1e-8 && rot < 1e-3 && cd_shift < 0.0005 && after * 3.0 <= before && secs < 60.0,
        format!(
            "Q=P chamfer {cd_same:.2e}, max rotation {rot:.2e} rad; shifted chamfer {cd_shift:.2e}; \
             bend {before:.2e} -> {after:.2e} ({:.1}x); {secs:.1} s",
            before / after
        ),
    );
}

// Criterion 3

#[test]
fn criterion_3_nbv_benefit() {
    let mut wins = 0;
    let (mut with, mut without) = (0.0, 0.0);
    for seed in 0..20u64 {
        let species = if seed % 2 == 0 {
            SpeciesProfile::MaizeLike
        } else {
            SpeciesProfile::TomatoLike
        };
        let base = ExperimentConfig {
            seed,
            species,
            initial_view: InitialView::Random,
            ..Default::default()
        };
        let a = run_experiment(&ExperimentConfig {
            use_nbv: true,
            ..base.clone()
        })
        .unwrap()
        .metrics
        .chamfer_after_registration;
        let b = run_experiment(&ExperimentConfig {
            use_nbv: false,
            ..base
        })
        .unwrap()
        .metrics
        .chamfer_after_registration;
        with += a / 20.0;
        without += b / 20.0;
        wins += usize::from(a < b);
    }
    verdict(
        3,
        "NBV benefit",
        wins >= 16 && with < without,
        format!(
            "initial+NBV better in {wins}/20 cases; mean chamfer {with:.3e} vs {without:.3e} m"
        ),
    );
}

// Criterion 4

fn instance(rng: &mut ChaCha8Rng) -> (usize, Vec<u64>) {
    let views = rng.random_range(2..=12);
    let rows = rng.random_range(1..=60);
    let density = rng.random_range(0.1..0.4);
    let mut sets = vec![0u64; views];
    for r in 0..rows {
        for s in sets.iter_mut() {
            if rng.random::<f64>() < density {
                *s |= 1 << r;
            }
        }
        if sets.iter().all(|s| s & (1 << r) == 0) {
            let v = rng.random_range(0..views);
            sets[v] |= 1 << r;
        }
    }
    (rows, sets)
}

/// Smallest number of sets whose union is every row, by enumeration.
fn brute_force_cover(rows: usize, sets: &[u64]) -> usize {
    let all = if rows == 64 {
        u64::MAX
    } else {
        (1u64 << rows) - 1
    };
    (0u32..1 << sets.len())
        .filter(|mask| {
            let union = (0..sets.len())
                .filter(|i| mask & (1 << i) != 0)
                .fold(0, |u, i| u | sets[i]);
            union == all
        })
        .map(|mask| mask.count_ones() as usize)
        .min()
        .expect("instance is feasible")
}

fn to_matrix(rows: usize, sets: &[u64]) -> VisibilityMatrix {
    VisibilityMatrix::from_sets(
        rows,
        sets.iter()
            .enumerate()
            .map(|(id, s)| (id, (0..rows).filter(|r| s & (1 << r) != 0).collect())),
    )
    .unwrap()
}

#[test]
fn criterion_4_set_cover_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut equal, mut greedy_ok) = (0, 0);
    for _ in 0..100 {
        let (rows, sets) = instance(&mut rng);
        let m = to_matrix(rows, &sets);
        let exact = solve_cover(&m, &[], CoverMode::Exact, SolveBudget::default()).unwrap();
        let greedy = solve_cover(&m, &[], CoverMode::Greedy, SolveBudget::default()).unwrap();
        equal += usize::from(exact.objective == brute_force_cover(rows, &sets));
        greedy_ok += usize::from(greedy.objective >= exact.objective);
    }
    let crafted = to_matrix(6, &[0b001111, 0b010101, 0b101010]);
    let g = solve_cover(&crafted, &[], CoverMode::Greedy, SolveBudget::default()).unwrap();
    let e = solve_cover(&crafted, &[], CoverMode::Exact, SolveBudget::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        4,
        "set cover exactness",
        equal == 100 && greedy_ok == 100 && g.objective == 3 && e.objective == 2 && secs < 30.0,
        format!(
            "exact = enumeration on {equal}/100, greedy >= exact on {greedy_ok}/100, crafted greedy {} vs exact {}; {secs:.2} s",
            g.objective, e.objective
        ),
    );
}

// Criterion 5

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[test]
fn criterion_5_path_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut equal = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=9);
        let views: Vec<View> = (0..n)
            .map(|id| View::look_at(id, Point3::from(rvec(&mut rng, 0.4)), &Point3::origin()))
            .collect();
        let dist = |a: usize, b: usize| (views[a].position - views[b].position).norm();
        let mut best = f64::INFINITY;
        permutations(&mut (1..n).collect(), 0, &mut |order| {
            let mut cost = 0.0;
            let mut at = 0;
            for &v in order {
                cost += dist(at, v);
                at = v;
            }
            best = best.min(cost);
        });
        let path = shortest_hamiltonian_path(&views[0], &views[1..]).unwrap();
        equal += usize::from((path.total_cost - best).abs() <= 1e-9 * best.max(1.0));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        5,
        "path exactness",
        equal == 50 && secs < 10.0,
        format!("Held-Karp = permutation brute force on {equal}/50; {secs:.2} s"),
    );
}

// Criterion 6

#[test]
fn criterion_6_tammes_quality() {
    let four = solve_tammes(4, ViewSpaceKind::Sphere, 0)
        .unwrap()
        .min_angle
        .to_degrees();
    let target = (-1f64 / 3.0).acos().to_degrees();
    let space = build_view_space(ViewSpaceKind::Sphere, Point3::origin(), 0.4, 0).unwrap();
    let dirs: Vec<Vector3<f64>> = space
        .views
        .iter()
        .map(|v| v.position.coords.normalize())
        .collect();
    let ours = min_pairwise_angle(&dirs);
    let best = (0..50)
        .map(|seed| {
            solve_tammes(63, ViewSpaceKind::Sphere, 1000 + seed)
                .unwrap()
                .min_angle
        })
        .fold(0.0, f64::max);
    verdict(
        6,
        "Tammes quality",
        (four - target).abs() <= 0.5 && ours >= 0.95 * best,
        format!(
            "n=4 {four:.3} deg (target {target:.3}); n=63 view space {:.3} deg vs best of 50 restarts {:.3} deg ({:.3}x)",
            ours.to_degrees(),
            best.to_degrees(),
            ours / best
        ),
    );
}

// Criterion 7

#[test]
fn criterion_7_end_to_end_coverage() {
    let config = ExperimentConfig {
        species: SpeciesProfile::MaizeLike,
        view_space: ViewSpaceKind::Sphere,
        ..Default::default()
    };
    let t = Instant::now();
    let out = run_experiment(&config).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let m = &out.metrics;
    let views = &out.view_space.views;
    let start = &views[*out.visited.last().unwrap()];
    let others: Vec<View> = views.iter().filter(|v| v.id != start.id).cloned().collect();
    let full_tour = heuristic_path(start, &others).unwrap().total_cost;
    verdict(
        7,
        "end-to-end coverage",
        m.surface_coverage >= 95.0
            && m.number_of_views <= 32
            && m.number_of_views < views.len()
            && m.movement_cost < full_tour
            && secs < 300.0,
        format!(
            "coverage {:.2}% with {} views of {}; movement {:.3} m vs full tour {full_tour:.3} m; {secs:.1} s",
            m.surface_coverage,
            m.number_of_views,
            views.len(),
            m.movement_cost
        ),
    );
}

// Criterion 8

#[test]
fn criterion_8_inflation_direction() {
    let (mut wins, mut worst_drop) = (0, f64::NEG_INFINITY);
    for seed in 0..20u64 {
        let species = if seed % 2 == 0 {
            SpeciesProfile::MaizeLike
        } else {
            SpeciesProfile::TomatoLike
        };
        let base = ExperimentConfig {
            seed,
            species,
            growth: GrowthLevel::Heavy,
            ..Default::default()
        };
        let on = run_experiment(&ExperimentConfig {
            use_inflation: true,
            ..base.clone()
        })
        .unwrap();
        let off = run_experiment(&ExperimentConfig {
            use_inflation: false,
            ..base
        })
        .unwrap();
        let (a, b) = (on.metrics.surface_coverage, off.metrics.surface_coverage);
        wins += usize::from(a >= b);
        worst_drop = worst_drop.max(b - a);
    }
    verdict(
        8,
        "inflation direction",
        wins >= 14 && worst_drop <= 0.5,
        format!(
            "inflation-on >= off in {wins}/20 trials; largest drop {:.3} points",
            worst_drop.max(0.0)
        ),
    );
}

// Criterion 9

#[test]
fn criterion_9_complexity_adaptation() {
    let mean = |species| {
        (0..10u64)
            .map(|seed| {
                let c = ExperimentConfig {
                    seed,
                    species,
                    view_space: ViewSpaceKind::Hemisphere,
                    ..Default::default()
                };
                run_experiment(&c).unwrap().metrics.planned_views as f64
            })
            .sum::<f64>()
            / 10.0
    };
    let maize = mean(SpeciesProfile::MaizeLike);
    let tomato = mean(SpeciesProfile::TomatoLike);
    verdict(
        9,
        "complexity adaptation",
        tomato > maize,
        format!("mean planned views tomato_like {tomato:.1} vs maize_like {maize:.1} (hemisphere, 10 seeds)"),
    );
}

// Criterion 10

#[test]
fn criterion_10_determinism() {
    let cases = MatrixConfig::standard().cases();
    assert_eq!(cases.len(), 36);
    let table = || {
        let rows: Vec<CaseRow> = cases
            .iter()
            .zip(run_matrix(&cases))
            .map(|(c, o)| CaseRow::new(c, &o.expect("every case completes")))
            .collect();
        metrics_table(&rows)
    };
    let (a, b) = (table(), table());
    verdict(
        10,
        "determinism",
        a == b,
        format!(
            "36-case metrics tables, {} bytes, identical: {}",
            a.len(),
            a == b
        ),
    );
}
