use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::{CoverMode, SolveBudget};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::inflation::InflationParams;
use crate::registration::RegistrationParams;
use crate::view_space::{CameraIntrinsics, View, ViewSpaceKind, DEFAULT_VIEW_RADIUS};

use super::synthetic::{GrowthLevel, SpeciesProfile, PLANT_DIAGONAL};

/// How the first view of a cycle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialView {
    /// Elevation closest to 0°.
    NearHorizontal,
    /// Elevation closest to 45°.
    Oblique,
    /// Highest view.
    NearTop,
    /// Uniformly drawn from the experiment seed.
    Random,
}

impl InitialView {
    pub const NAMED: [InitialView; 3] = [
        InitialView::NearHorizontal,
        InitialView::Oblique,
        InitialView::NearTop,
    ];

    /// Picks a view; ties go to the lowest id.
    pub fn select<'a>(self, views: &'a [View], center: &Point3, seed: u64) -> Result<&'a View> {
        if views.is_empty() {
            return Err(Error::NoCandidateView);
        }
        let target = match self {
            InitialView::NearHorizontal => 0.0,
            InitialView::Oblique => 45f64.to_radians(),
            InitialView::NearTop => std::f64::consts::FRAC_PI_2,
            InitialView::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1f1e_55ed);
                return Ok(&views[rng.random_range(0..views.len())]);
            }
        };
        Ok(views
            .iter()
            .min_by(|a, b| {
                let da = (a.elevation(center) - target).abs();
                let db = (b.elevation(center) - target).abs();
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .expect("non-empty"))
    }
}

impl std::fmt::Display for InitialView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitialView::NearHorizontal => "near_horizontal",
            InitialView::Oblique => "oblique",
            InitialView::NearTop => "near_top",
            InitialView::Random => "random",
        })
    }
}

/// One simulated acquisition cycle. Defaults follow the standard setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub species: SpeciesProfile,
    pub growth: GrowthLevel,
    /// Bounding-box diagonal of the current-cycle plant, meters.
    pub plant_diagonal: f64,
    /// Rotation of the plant about the vertical axis, degrees.
    pub rotation_deg: f64,
    pub view_space: ViewSpaceKind,
    pub view_radius: f64,
    pub initial_view: InitialView,
    /// Take one next-best view before registering.
    pub use_nbv: bool,
    pub use_inflation: bool,
    /// Occupancy resolution for planning, scanning and scoring, meters.
    pub map_resolution: f64,
    pub cover_mode: CoverMode,
    pub cover_max_nodes: u64,
    pub registration: RegistrationParams,
    pub inflation: InflationParams,
    pub camera: CameraIntrinsics,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            species: SpeciesProfile::MaizeLike,
            growth: GrowthLevel::Normal,
            plant_diagonal: PLANT_DIAGONAL,
            rotation_deg: 0.0,
            view_space: ViewSpaceKind::Sphere,
            view_radius: DEFAULT_VIEW_RADIUS,
            initial_view: InitialView::NearHorizontal,
            use_nbv: true,
            use_inflation: true,
            map_resolution: 0.004,
            cover_mode: CoverMode::Exact,
            cover_max_nodes: SolveBudget::default().max_nodes,
            registration: RegistrationParams::default(),
            inflation: InflationParams::default(),
            camera: CameraIntrinsics::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.plant_diagonal, self.view_radius, self.map_resolution];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "plant_diagonal, view_radius and map_resolution must be positive".into(),
            ));
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::Config("rotation_deg must be finite".into()));
        }
        self.registration.validate()?;
        self.inflation.validate()?;
        Ok(())
    }

    pub fn budget(&self) -> SolveBudget {
        SolveBudget {
            max_nodes: self.cover_max_nodes,
        }
    }

    /// Short identifier used for result directories and table rows.
    pub fn label(&self) -> String {
        format!(
            "{}-s{}-r{}-{}-{}",
            self.species, self.seed, self.rotation_deg, self.initial_view, self.view_space
        )
    }
}

/// A grid of experiments: every combination of the listed values applied to
/// a base configuration. Empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub experiment: ExperimentConfig,
    pub matrix: MatrixAxes,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixAxes {
    pub species: Vec<SpeciesProfile>,
    pub seeds: Vec<u64>,
    pub rotations_deg: Vec<f64>,
    pub initial_views: Vec<InitialView>,
}

impl MatrixConfig {
    /// Species × seeds × rotations × initial views over the standard
    /// settings: 36 cases.
    pub fn standard() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            matrix: MatrixAxes {
                species: vec![SpeciesProfile::MaizeLike, SpeciesProfile::TomatoLike],
                seeds: vec![0, 1, 2],
                rotations_deg: vec![0.0, 45.0],
                initial_views: InitialView::NAMED.to_vec(),
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    /// Parses either a matrix file (`[experiment]` and `[matrix]` tables) or
    /// a bare experiment configuration, which becomes a single case.
    pub fn from_toml(text: &str) -> Result<Self> {
        let err = |e: toml::de::Error| Error::Config(e.to_string());
        let table: toml::Table = toml::from_str(text).map_err(err)?;
        let cfg: Self = if table.contains_key("experiment") || table.contains_key("matrix") {
            toml::from_str(text).map_err(err)?
        } else {
            Self {
                experiment: toml::from_str(text).map_err(err)?,
                matrix: MatrixAxes::default(),
            }
        };
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Expanded cases in a fixed order (species, seed, rotation, initial
    /// view; the last varies fastest).
    pub fn cases(&self) -> Vec<ExperimentConfig> {
        let base = &self.experiment;
        fn or<T: Clone>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for species in or(&self.matrix.species, base.species) {
            for seed in or(&self.matrix.seeds, base.seed) {
                for rotation_deg in or(&self.matrix.rotations_deg, base.rotation_deg) {
                    for initial_view in or(&self.matrix.initial_views, base.initial_view) {
                        out.push(ExperimentConfig {
                            species,
                            seed,
                            rotation_deg,
                            initial_view,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}
