//! Result files: per-case artifacts, the metrics table and its summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coverage::{CoverSolution, VisibilityMatrix};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::io::save_cloud;
use crate::path::ViewPath;
use crate::view_space::{ViewSpace, ViewSpaceKind};

use super::{CycleOutcome, ExperimentConfig};

/// Candidate view set parameters, enough to rebuild it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpaceParams {
    pub kind: ViewSpaceKind,
    pub center: [f64; 3],
    pub radius: f64,
    pub seed: u64,
}

impl ViewSpaceParams {
    pub fn of(vs: &ViewSpace) -> Self {
        Self {
            kind: vs.kind,
            center: vs.center.coords.into(),
            radius: vs.radius,
            seed: vs.seed,
        }
    }

    pub fn build(&self) -> Result<ViewSpace> {
        crate::view_space::build_view_space(
            self.kind,
            Point3::from(self.center),
            self.radius,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub view_space: ViewSpaceParams,
    pub visited: Vec<usize>,
    pub objective: usize,
    pub optimality: String,
    pub lower_bound: usize,
    pub surface_points: usize,
    pub precovered: usize,
    pub uncoverable: usize,
    pub views: Vec<PlannedView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedView {
    pub id: usize,
    pub covered_points: usize,
}

impl PlanFile {
    pub fn new(
        view_space: &ViewSpace,
        visited: &[usize],
        solution: &CoverSolution,
        matrix: Option<&VisibilityMatrix>,
    ) -> Result<Self> {
        let counts = match matrix {
            Some(m) => solution.covered_counts(m)?,
            None => solution.selected.iter().map(|&v| (v, 0)).collect(),
        };
        Ok(Self {
            view_space: ViewSpaceParams::of(view_space),
            visited: visited.to_vec(),
            objective: solution.objective,
            optimality: solution.optimality.to_string(),
            lower_bound: solution.lower_bound,
            surface_points: solution.constrained_rows.len()
                + solution.precovered
                + solution.uncoverable.len(),
            precovered: solution.precovered,
            uncoverable: solution.uncoverable.len(),
            views: counts
                .into_iter()
                .map(|(id, covered_points)| PlannedView { id, covered_points })
                .collect(),
        })
    }

    pub fn view_ids(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFile {
    pub method: String,
    pub total_cost: f64,
    pub hops: Vec<PathHop>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathHop {
    pub view: usize,
    pub position: [f64; 3],
    pub cumulative_cost: f64,
}

impl PathFile {
    pub fn new(path: &ViewPath, view_space: &ViewSpace) -> Result<Self> {
        let hops = path
            .order
            .iter()
            .zip(path.cumulative())
            .map(|(&id, cumulative_cost)| {
                Ok(PathHop {
                    view: id,
                    position: view_space.get(id)?.position.coords.into(),
                    cumulative_cost,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            method: path.method.to_string(),
            total_cost: path.total_cost,
            hops,
        })
    }
}

pub(crate) fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes a case's configuration, clouds, plan, path and loss trace under
/// `dir`.
pub fn write_case(dir: &Path, config: &ExperimentConfig, outcome: &CycleOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_toml(config, &dir.join("config.toml"))?;
    for (name, cloud) in [
        ("scan.ply", &outcome.scan),
        ("aligned.ply", &outcome.aligned),
        ("inflation.ply", &outcome.inflation),
        ("approximation.ply", &outcome.approximation),
        ("reconstruction.ply", &outcome.reconstruction),
    ] {
        save_cloud(cloud, dir.join(name))?;
    }
    write_toml(
        &PlanFile::new(&outcome.view_space, &outcome.visited, &outcome.plan, None)?,
        &dir.join("plan.toml"),
    )?;
    write_toml(
        &PathFile::new(&outcome.path, &outcome.view_space)?,
        &dir.join("path.toml"),
    )?;
    let mut trace = String::from("iteration,loss_total,loss_arap,loss_cd,loss_lap\n");
    for r in &outcome.registration_trace {
        writeln!(
            trace,
            "{},{},{},{},{}",
            r.iteration, r.total, r.arap, r.cd, r.lap
        )
        .expect("string write");
    }
    fs::write(dir.join("loss_trace.csv"), trace)?;
    let mut timings = String::from("stage,seconds\n");
    for (stage, d) in &outcome.timings.0 {
        writeln!(timings, "{stage},{}", d.as_secs_f64()).expect("string write");
    }
    fs::write(dir.join("timings.csv"), timings)?;
    Ok(())
}

pub const METRICS_HEADER: &str =
    "case,species,growth,seed,rotation_deg,initial_view,view_space,use_nbv,use_inflation,\
number_of_views,planned_views,surface_coverage,movement_cost,movement_cost_inclusive,\
chamfer_before_registration,chamfer_after_registration,cover_optimality,path_method";

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub case: String,
    pub species: String,
    pub growth: String,
    pub seed: u64,
    pub rotation_deg: f64,
    pub initial_view: String,
    pub view_space: String,
    pub use_nbv: bool,
    pub use_inflation: bool,
    pub number_of_views: usize,
    pub planned_views: usize,
    pub surface_coverage: f64,
    pub movement_cost: f64,
    pub movement_cost_inclusive: f64,
    pub chamfer_before_registration: f64,
    pub chamfer_after_registration: f64,
    pub cover_optimality: String,
    pub path_method: String,
}

impl CaseRow {
    pub fn new(config: &ExperimentConfig, outcome: &CycleOutcome) -> Self {
        let m = &outcome.metrics;
        Self {
            case: config.label(),
            species: config.species.to_string(),
            growth: config.growth.to_string(),
            seed: config.seed,
            rotation_deg: config.rotation_deg,
            initial_view: config.initial_view.to_string(),
            view_space: config.view_space.to_string(),
            use_nbv: config.use_nbv,
            use_inflation: config.use_inflation,
            number_of_views: m.number_of_views,
            planned_views: m.planned_views,
            surface_coverage: m.surface_coverage,
            movement_cost: m.movement_cost,
            movement_cost_inclusive: m.movement_cost_inclusive,
            chamfer_before_registration: m.chamfer_before_registration,
            chamfer_after_registration: m.chamfer_after_registration,
            cover_optimality: outcome.plan.optimality.to_string(),
            path_method: outcome.path.method.to_string(),
        }
    }
}

/// Comma-separated metrics, one line per case, floats printed in their
/// shortest round-trip form.
pub fn metrics_table(rows: &[CaseRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case,
            r.species,
            r.growth,
            r.seed,
            r.rotation_deg,
            r.initial_view,
            r.view_space,
            r.use_nbv,
            r.use_inflation,
            r.number_of_views,
            r.planned_views,
            r.surface_coverage,
            r.movement_cost,
            r.movement_cost_inclusive,
            r.chamfer_before_registration,
            r.chamfer_after_registration,
            r.cover_optimality,
            r.path_method
        )
        .expect("string write");
    }
    out
}

pub fn parse_metrics_table(text: &str) -> Result<Vec<CaseRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::Config(
                "metrics table has an unexpected header".into(),
            ))
        }
    }
    let bad = |line: usize, what: &str| {
        Error::Config(format!("metrics table line {}: bad {what}", line + 1))
    };
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 18 {
                return Err(bad(n, "field count"));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|_| bad(n, METRICS_HEADER.split(',').nth(i).unwrap_or("")))
            };
            let int = |i: usize| {
                f[i].parse::<usize>()
                    .map_err(|_| bad(n, METRICS_HEADER.split(',').nth(i).unwrap_or("")))
            };
            let flag = |i: usize| {
                f[i].parse::<bool>()
                    .map_err(|_| bad(n, METRICS_HEADER.split(',').nth(i).unwrap_or("")))
            };
            Ok(CaseRow {
                case: f[0].into(),
                species: f[1].into(),
                growth: f[2].into(),
                seed: f[3].parse().map_err(|_| bad(n, "seed"))?,
                rotation_deg: num(4)?,
                initial_view: f[5].into(),
                view_space: f[6].into(),
                use_nbv: flag(7)?,
                use_inflation: flag(8)?,
                number_of_views: int(9)?,
                planned_views: int(10)?,
                surface_coverage: num(11)?,
                movement_cost: num(12)?,
                movement_cost_inclusive: num(13)?,
                chamfer_before_registration: num(14)?,
                chamfer_after_registration: num(15)?,
                cover_optimality: f[16].into(),
                path_method: f[17].into(),
            })
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Mean ± sample standard deviation per species, view space and method,
/// as a Markdown table.
pub fn report(rows: &[CaseRow]) -> String {
    let mut groups: BTreeMap<(String, String, String), Vec<&CaseRow>> = BTreeMap::new();
    for r in rows {
        let method = match (r.use_nbv, r.use_inflation) {
            (true, true) => "full",
            (true, false) => "no inflation",
            (false, true) => "no nbv",
            (false, false) => "no nbv, no inflation",
        };
        groups
            .entry((r.species.clone(), r.view_space.clone(), method.to_string()))
            .or_default()
            .push(r);
    }
    let mut out = String::from(
        "| species | view space | method | cases | views | coverage (%) | movement cost (m) | chamfer after registration (m) |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for ((species, vs, method), g) in groups {
        let col = |f: fn(&CaseRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (v, vsd) = col(|r| r.number_of_views as f64);
        let (c, csd) = col(|r| r.surface_coverage);
        let (m, msd) = col(|r| r.movement_cost);
        let (d, dsd) = col(|r| r.chamfer_after_registration);
        writeln!(
            out,
            "| {species} | {vs} | {method} | {} | {v:.2} ± {vsd:.2} | {c:.2} ± {csd:.2} | {m:.3} ± {msd:.3} | {d:.5} ± {dsd:.5} |",
            g.len()
        )
        .expect("string write");
    }
    out
}
