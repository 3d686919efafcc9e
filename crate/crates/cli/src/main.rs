use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use regrow::coverage::{build_visibility, solve_cover, CoverMode, SolveBudget};
use regrow::inflation::{assemble_approximation, inflate, InflationParams};
use regrow::path::shortest_hamiltonian_path;
use regrow::pipeline::{
    self, generate_synthetic_plant_with, metrics_table, parse_metrics_table, report, write_case,
    CaseRow, GrowthLevel, MatrixConfig, PathFile, PlanFile, SpeciesProfile,
};
use regrow::registration::{register, RegistrationParams};
use regrow::view_space::{
    build_view_space, CameraIntrinsics, View, ViewSpace, ViewSpaceKind, VirtualScanner,
};
use regrow::{load_cloud, save_cloud, OccupancyGrid, Point3, PointCloud};

#[derive(Parser)]
#[command(
    name = "regrow",
    version,
    about = "View planning for periodic plant reconstruction"
)]
struct Cli {
    /// Log filter, e.g. `debug` or `regrow=trace`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a candidate view set as TOML.
    Viewspace {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a two-cycle synthetic plant (previous.ply, current.ply).
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "maize_like")]
        species: SpeciesProfile,
        #[arg(long, default_value = "normal")]
        growth: GrowthLevel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Virtually scan a ground-truth cloud from one candidate view.
    Scan {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        view: usize,
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 0.004)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Non-rigidly register a source cloud to a target cloud.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration loss trace (CSV).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        iterations: usize,
    },
    /// Add likely growth to a registered prior.
    Inflate {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write only the inflated points instead of the full approximation.
        #[arg(long)]
        only_growth: bool,
        #[arg(long, default_value_t = 0.003)]
        gamma_near: f64,
        #[arg(long, default_value_t = 0.005)]
        gamma_far: f64,
    },
    /// Choose a minimum set of views covering a model's surface.
    Plan {
        #[arg(long)]
        inflated: PathBuf,
        #[arg(long, default_value = "sphere")]
        viewspace: ViewSpaceKind,
        /// View-space center; defaults to the model's bounding-box center.
        #[arg(long, value_parser = parse_point)]
        center: Option<Point3>,
        #[arg(long, default_value_t = regrow::view_space::DEFAULT_VIEW_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Views already taken, comma separated.
        #[arg(long, value_delimiter = ',')]
        visited: Vec<usize>,
        #[arg(long, default_value = "exact")]
        mode: CoverMode,
        #[arg(long, default_value_t = SolveBudget::default().max_nodes)]
        max_nodes: u64,
        #[arg(long, default_value_t = 0.004)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Order planned views into a shortest open path.
    Path {
        #[arg(long)]
        start: usize,
        /// Plan file written by `plan`.
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiments described by a config file.
    Simulate {
        /// TOML experiment configuration, or a matrix file with
        /// `[experiment]` and `[matrix]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run the standard 36-case matrix instead of a config file.
        #[arg(long, conflicts_with = "config")]
        standard: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a results directory as mean ± std tables.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, default_value = "sphere")]
    kind: ViewSpaceKind,
    /// View-space center x,y,z; defaults to the input cloud's bounding-box
    /// center, or the origin without one.
    #[arg(long, value_parser = parse_point)]
    center: Option<Point3>,
    #[arg(long, default_value_t = regrow::view_space::DEFAULT_VIEW_RADIUS)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SpaceArgs {
    fn build(&self, cloud: Option<&PointCloud>) -> Result<ViewSpace> {
        let center = match (self.center, cloud) {
            (Some(c), _) => c,
            (None, Some(cloud)) => cloud
                .bounding_box()
                .context("input cloud is empty")?
                .center(),
            (None, None) => Point3::origin(),
        };
        Ok(build_view_space(self.kind, center, self.radius, self.seed)?)
    }
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got {s:?}")),
    }
}

#[derive(Serialize)]
struct ViewsFile {
    kind: ViewSpaceKind,
    center: [f64; 3],
    radius: f64,
    seed: u64,
    min_angle_deg: f64,
    views: Vec<ViewRecord>,
}

#[derive(Serialize)]
struct ViewRecord {
    id: usize,
    position: [f64; 3],
    elevation_deg: f64,
    /// Camera axes in world coordinates.
    forward: [f64; 3],
    right: [f64; 3],
    down: [f64; 3],
}

fn view_record(v: &View, center: &Point3) -> ViewRecord {
    let m = v.orientation.matrix();
    let col = |i: usize| [m[(0, i)], m[(1, i)], m[(2, i)]];
    ViewRecord {
        id: v.id,
        position: v.position.coords.into(),
        elevation_deg: v.elevation(center).to_degrees(),
        forward: col(2),
        right: col(0),
        down: col(1),
    }
}

fn write_toml<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = toml::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    load_cloud(path).with_context(|| format!("reading {}", path.display()))
}

fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    save_cloud(cloud, path).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Viewspace { space, out } => {
            let vs = space.build(None)?;
            let file = ViewsFile {
                kind: vs.kind,
                center: vs.center.coords.into(),
                radius: vs.radius,
                seed: vs.seed,
                min_angle_deg: vs.min_angle.to_degrees(),
                views: vs
                    .views
                    .iter()
                    .map(|v| view_record(v, &vs.center))
                    .collect(),
            };
            write_toml(&file, out.as_deref())
        }
        Command::Generate {
            seed,
            species,
            growth,
            out,
        } => {
            fs::create_dir_all(&out)?;
            let plant = generate_synthetic_plant_with(seed, species, growth);
            write_cloud(&plant.previous, &out.join("previous.ply"))?;
            write_cloud(&plant.current, &out.join("current.ply"))
        }
        Command::Scan {
            cloud,
            view,
            space,
            resolution,
            out,
        } => {
            let gt = read_cloud(&cloud)?;
            let vs = space.build(Some(&gt))?;
            let scanner = VirtualScanner::new(&gt, resolution, CameraIntrinsics::default())?;
            let scan = scanner.scan(vs.get(view)?);
            log::info!("view {view}: {} points", scan.len());
            write_cloud(&scan, &out)
        }
        Command::Register {
            source,
            target,
            out,
            trace,
            iterations,
        } => {
            let params = RegistrationParams {
                iterations,
                ..Default::default()
            };
            let reg = register(&read_cloud(&source)?, &read_cloud(&target)?, &params)?;
            log::info!(
                "loss {:.6} -> {:.6} (best at iteration {})",
                reg.initial_loss(),
                reg.final_loss(),
                reg.best_iteration
            );
            write_cloud(&reg.aligned, &out)?;
            if let Some(trace) = trace {
                let mut text = String::from("iteration,loss_total,loss_arap,loss_cd,loss_lap\n");
                for r in &reg.trace {
                    text += &format!(
                        "{},{},{},{},{}\n",
                        r.iteration, r.total, r.arap, r.cd, r.lap
                    );
                }
                fs::write(&trace, text).with_context(|| format!("writing {}", trace.display()))?;
            }
            Ok(())
        }
        Command::Inflate {
            prior,
            scan,
            out,
            only_growth,
            gamma_near,
            gamma_far,
        } => {
            let params = InflationParams {
                gamma_near,
                gamma_far,
                ..Default::default()
            };
            let (prior, scan) = (read_cloud(&prior)?, read_cloud(&scan)?);
            let inflated = inflate(&prior, &scan, &params)?;
            log::info!("{} inflated points", inflated.len());
            if only_growth {
                write_cloud(&inflated, &out)
            } else {
                write_cloud(&assemble_approximation(&prior, &scan, &inflated)?, &out)
            }
        }
        Command::Plan {
            inflated,
            viewspace,
            center,
            radius,
            seed,
            visited,
            mode,
            max_nodes,
            resolution,
            out,
        } => {
            let model = read_cloud(&inflated)?;
            let space = SpaceArgs {
                kind: viewspace,
                center,
                radius,
                seed,
            };
            let vs = space.build(Some(&model))?;
            for &v in &visited {
                vs.get(v)?;
            }
            let grid = OccupancyGrid::from_cloud(&model, resolution)?;
            let surface = grid.extract_surface()?;
            let matrix = build_visibility(&surface, &vs.views, &grid)?;
            let solution = solve_cover(&matrix, &visited, mode, SolveBudget { max_nodes })?;
            log::info!(
                "{} views ({}), lower bound {}",
                solution.objective,
                solution.optimality,
                solution.lower_bound
            );
            write_toml(
                &PlanFile::new(&vs, &visited, &solution, Some(&matrix))?,
                Some(&out),
            )
        }
        Command::Path { start, views, out } => {
            let text = fs::read_to_string(&views)
                .with_context(|| format!("reading {}", views.display()))?;
            let plan: PlanFile =
                toml::from_str(&text).with_context(|| format!("parsing {}", views.display()))?;
            let vs = plan.view_space.build()?;
            let stops: Vec<View> = plan
                .view_ids()
                .into_iter()
                .filter(|&id| id != start)
                .map(|id| vs.get(id).cloned())
                .collect::<regrow::Result<_>>()?;
            let path = shortest_hamiltonian_path(vs.get(start)?, &stops)?;
            log::info!(
                "{} hops, {:.4} m ({})",
                path.hops.len(),
                path.total_cost,
                path.method
            );
            write_toml(&PathFile::new(&path, &vs)?, Some(&out))
        }
        Command::Simulate {
            config,
            standard,
            out,
        } => {
            let matrix = match (config, standard) {
                (Some(path), _) => MatrixConfig::load(&path)
                    .with_context(|| format!("loading {}", path.display()))?,
                (None, true) => MatrixConfig::standard(),
                (None, false) => bail!("pass --config FILE or --standard"),
            };
            simulate(&matrix, &out)
        }
        Command::Report { results, out } => {
            let table = results.join("metrics.csv");
            let text = fs::read_to_string(&table)
                .with_context(|| format!("reading {}", table.display()))?;
            let summary = report(&parse_metrics_table(&text)?);
            match out {
                Some(path) => {
                    fs::write(&path, summary).with_context(|| format!("writing {}", path.display()))
                }
                None => {
                    print!("{summary}");
                    Ok(())
                }
            }
        }
    }
}

fn simulate(matrix: &MatrixConfig, out: &Path) -> Result<()> {
    let cases = matrix.cases();
    log::info!("running {} cases", cases.len());
    fs::create_dir_all(out)?;
    fs::write(out.join("matrix.toml"), matrix.to_toml()?)?;
    let outcomes = pipeline::run_matrix(&cases);
    let mut rows = Vec::new();
    let mut failures = 0;
    for (config, outcome) in cases.iter().zip(outcomes) {
        match outcome {
            Ok(outcome) => {
                write_case(&out.join(config.label()), config, &outcome)?;
                rows.push(CaseRow::new(config, &outcome));
            }
            Err(e) => {
                log::error!("{}: {e}", config.label());
                failures += 1;
            }
        }
    }
    fs::write(out.join("metrics.csv"), metrics_table(&rows))?;
    fs::write(out.join("report.md"), report(&rows))?;
    if failures > 0 {
        bail!("{failures} of {} cases failed", cases.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    run(cli.command)
}
