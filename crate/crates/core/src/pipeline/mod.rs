//! End-to-end simulated acquisition cycle and experiment harness.
//!
//! A cycle scans the current plant from an initial view and one next-best
//! view, registers the previous-cycle model to that partial scan, inflates it
//! toward growth, plans a minimum covering set of further views, orders them
//! into a shortest path and executes the plan on the virtual scanner.

mod config;
mod metrics;
mod results;
mod synthetic;

use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, InitialView, MatrixAxes, MatrixConfig};
pub use metrics::{surface_coverage, CoverageReference, MetricsReport, StageTimings};
pub use results::{
    metrics_table, parse_metrics_table, report, write_case, CaseRow, PathFile, PathHop, PlanFile,
    PlannedView, ViewSpaceParams, METRICS_HEADER,
};
pub use synthetic::{
    generate_synthetic_plant, generate_synthetic_plant_with, GrowthLevel, SpeciesProfile,
    SyntheticPlant, PLANT_DIAGONAL,
};

use crate::coverage::{build_visibility, next_best_view, solve_cover, CoverSolution};
use crate::error::{Result, StageContext};
use crate::geometry::{chamfer_distance, PointCloud};
use crate::inflation::{assemble_approximation, inflate};
use crate::occupancy::OccupancyGrid;
use crate::path::{shortest_hamiltonian_path, ViewPath};
use crate::registration::{register, LossRecord};
use crate::view_space::{build_view_space, View, ViewSpace, VirtualScanner};

/// Everything a cycle produced, for inspection and output.
#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub metrics: MetricsReport,
    pub timings: StageTimings,
    pub view_space: ViewSpace,
    /// Views taken before planning: the initial view and, if enabled, the
    /// next-best view.
    pub visited: Vec<usize>,
    /// Fused pre-planning scan.
    pub scan: PointCloud,
    pub aligned: PointCloud,
    pub inflation: PointCloud,
    pub approximation: PointCloud,
    pub plan: CoverSolution,
    pub path: ViewPath,
    pub reconstruction: PointCloud,
    pub registration_trace: Vec<LossRecord>,
}

struct Clock {
    timings: StageTimings,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            timings: StageTimings::default(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.0.push((stage, now - self.last));
        self.last = now;
    }
}

/// Runs one acquisition cycle for the plant `ground_truth_now`, guided by the
/// previous cycle's model `prior`. Both clouds must share a frame.
pub fn run_cycle(
    config: &ExperimentConfig,
    prior: &PointCloud,
    ground_truth_now: &PointCloud,
) -> Result<CycleOutcome> {
    config.validate()?;
    let mut clock = Clock::new();
    let center = prior
        .bounding_box()
        .ok_or(crate::error::Error::EmptyCloud)
        .stage("prior")?
        .center();
    let view_space = build_view_space(config.view_space, center, config.view_radius, config.seed)
        .stage("view space")?;
    let views = &view_space.views;
    let scanner = VirtualScanner::new(ground_truth_now, config.map_resolution, config.camera)
        .stage("scanner")?;
    clock.lap("setup");

    let first = config
        .initial_view
        .select(views, &center, config.seed)
        .stage("initial view")?;
    let mut map = OccupancyGrid::new(config.map_resolution)?;
    let mut scans = vec![scanner.scan(first)];
    map.insert_scan(&first.position, &scans[0]);
    let mut visited = vec![first.id];
    if config.use_nbv {
        let nbv = next_best_view(&map, views, &visited).stage("next best view")?;
        let view = &views[nbv.view_id];
        let scan = scanner.scan(view);
        map.insert_scan(&view.position, &scan);
        scans.push(scan);
        visited.push(view.id);
    }
    let scan = PointCloud::concat(&scans);
    clock.lap("initial scans");
    if scan.is_empty() {
        return Err(crate::error::Error::Degenerate(
            "pre-planning views saw nothing".into(),
        ))
        .stage("initial scans");
    }

    let registration = register(prior, &scan, &config.registration).stage("registration")?;
    let aligned = registration.aligned;
    clock.lap("registration");

    let inflation = if config.use_inflation {
        inflate(&aligned, &scan, &config.inflation).stage("inflation")?
    } else {
        PointCloud::default()
    };
    let approximation = assemble_approximation(&aligned, &scan, &inflation).stage("inflation")?;
    clock.lap("inflation");

    let grid =
        OccupancyGrid::from_cloud(&approximation, config.map_resolution).stage("planning map")?;
    let surface = grid.extract_surface().stage("planning map")?;
    let matrix = build_visibility(&surface, views, &grid).stage("visibility")?;
    clock.lap("visibility");
    let plan =
        solve_cover(&matrix, &visited, config.cover_mode, config.budget()).stage("set cover")?;
    clock.lap("set cover");

    let start = &views[*visited.last().expect("at least one view")];
    let stops: Vec<View> = plan.selected.iter().map(|&id| views[id].clone()).collect();
    let path = shortest_hamiltonian_path(start, &stops).stage("path")?;
    clock.lap("path");

    let planned: Vec<&View> = path.order[1..].iter().map(|&id| &views[id]).collect();
    scans.extend(scanner.scan_many(&planned));
    let reconstruction = PointCloud::concat(&scans);
    clock.lap("execution");

    let reference = CoverageReference::new(&scanner, views).stage("metrics")?;
    let pre_moves: f64 = visited
        .windows(2)
        .map(|w| (views[w[1]].position - views[w[0]].position).norm())
        .sum();
    let metrics = MetricsReport {
        number_of_views: visited.len() + plan.selected.len(),
        surface_coverage: reference.percent(&reconstruction),
        movement_cost: path.total_cost,
        movement_cost_inclusive: path.total_cost + pre_moves,
        chamfer_after_registration: chamfer_distance(&aligned, ground_truth_now)
            .stage("metrics")?,
        chamfer_before_registration: chamfer_distance(prior, ground_truth_now).stage("metrics")?,
        planned_views: plan.selected.len(),
    };
    clock.lap("metrics");
    log::info!(
        "{}: {} views, coverage {:.2}%, movement {:.3} m",
        config.label(),
        metrics.number_of_views,
        metrics.surface_coverage,
        metrics.movement_cost
    );

    Ok(CycleOutcome {
        metrics,
        timings: clock.timings,
        view_space,
        visited,
        scan,
        aligned,
        inflation,
        approximation,
        plan,
        path,
        reconstruction,
        registration_trace: registration.trace,
    })
}

/// The synthetic plant pair described by `config`: generated, scaled to the
/// configured diagonal and rotated.
pub fn experiment_plant(config: &ExperimentConfig) -> SyntheticPlant {
    let plant = generate_synthetic_plant_with(config.seed, config.species, config.growth);
    let s = config.plant_diagonal / PLANT_DIAGONAL;
    let scaled = SyntheticPlant {
        previous: plant
            .previous
            .map(|p| crate::geometry::Point3::from(p.coords * s)),
        current: plant
            .current
            .map(|p| crate::geometry::Point3::from(p.coords * s)),
        ..plant
    };
    scaled.rotated(config.rotation_deg)
}

/// Generates the configured plant and runs one cycle on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CycleOutcome> {
    let plant = experiment_plant(config);
    run_cycle(config, &plant.previous, &plant.current)
}

/// Runs every case, in parallel, returning results in case order.
pub fn run_matrix(cases: &[ExperimentConfig]) -> Vec<Result<CycleOutcome>> {
    cases.par_iter().map(run_experiment).collect()
}
