use std::path::{Path, PathBuf};

use koopstitch::discovery::DiscoveryConfig;
use koopstitch::dynamics::{BoundingBox, InitialConditionGrid, SystemSpec};
use koopstitch::edmd::DEFAULT_REL_TOL;
use koopstitch::lifting::DictionaryConfig;
use koopstitch::spectral::{DEFAULT_LEVEL, DEFAULT_RANK_TOL, DEFAULT_RESOLUTION, DEFAULT_UNIT_TOL};
use koopstitch::stitching::ClassifierMethod;
use koopstitch::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which snapshots seed the dictionary centers of a subset fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryScope {
    /// Every trajectory in the data file.
    #[default]
    All,
    /// Only the selected trajectories.
    Subset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdmdSection {
    pub rel_tol: f64,
    pub dictionary_scope: DictionaryScope,
}

impl Default for EdmdSection {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            dictionary_scope: DictionaryScope::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub unit_tol: f64,
    pub rank_tol: f64,
    pub resolution: usize,
    pub level: f64,
    /// Inflation of the data bounding box for field grids.
    pub grid_margin: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            unit_tol: DEFAULT_UNIT_TOL,
            rank_tol: DEFAULT_RANK_TOL,
            resolution: DEFAULT_RESOLUTION,
            level: DEFAULT_LEVEL,
            grid_margin: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchingSection {
    pub method: ClassifierMethod,
    pub horizon: usize,
}

impl Default for StitchingSection {
    fn default() -> Self {
        Self {
            method: ClassifierMethod::NearestSnapshot,
            horizon: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: PathBuf::from("out/trajectories.csv"),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every setting of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub dt: f64,
    pub steps: usize,
    /// Defaults per system when absent.
    pub ic_grid: Option<InitialConditionGrid>,
    /// Simulation aborts once a sample leaves the initial-condition box
    /// scaled by this factor.
    pub domain_factor: f64,
    /// Capture radius around a stable equilibrium used to label basins.
    pub basin_radius: f64,
    pub dictionary: DictionaryConfig,
    pub edmd: EdmdSection,
    pub spectral: SpectralSection,
    pub discovery: DiscoveryConfig,
    pub stitching: StitchingSection,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::default(),
            dt: 1.5,
            steps: 1000,
            ic_grid: None,
            domain_factor: 10.0,
            basin_radius: 0.5,
            dictionary: DictionaryConfig::default(),
            edmd: EdmdSection::default(),
            spectral: SpectralSection::default(),
            discovery: DiscoveryConfig::default(),
            stitching: StitchingSection::default(),
            paths: Paths::default(),
        }
    }
}

pub fn default_grid(system: &SystemSpec) -> InitialConditionGrid {
    match system {
        SystemSpec::ToggleSwitch(_) => InitialConditionGrid {
            lower: vec![0.0, 0.0],
            upper: vec![3.0, 3.0],
            counts: vec![9, 9],
        },
        SystemSpec::SecondOrder => InitialConditionGrid {
            lower: vec![-2.0, -1.0],
            upper: vec![2.0, 3.0],
            counts: vec![9, 9],
        },
    }
}

impl RunConfig {
    pub fn for_system(system: SystemSpec) -> Self {
        Self {
            system,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> InitialConditionGrid {
        self.ic_grid.clone().unwrap_or_else(|| default_grid(&self.system))
    }

    pub fn domain(&self) -> Result<BoundingBox> {
        Ok(self.grid().bounds()?.scaled(self.domain_factor))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("domain_factor", self.domain_factor)?;
        positive("basin_radius", self.basin_radius)?;
        positive("edmd.rel_tol", self.edmd.rel_tol)?;
        positive("spectral.unit_tol", self.spectral.unit_tol)?;
        positive("spectral.rank_tol", self.spectral.rank_tol)?;
        positive("spectral.grid_margin", self.spectral.grid_margin)?;
        positive("dictionary.sigma", self.dictionary.sigma)?;
        if self.steps < 1 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.spectral.resolution < 2 {
            return Err(Error::InvalidGrid("resolution must be at least 2".into()));
        }
        if !(self.spectral.level > 0.0 && self.spectral.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "spectral.level must lie in (0, 1), got {}",
                self.spectral.level
            )));
        }
        if self.discovery.n < 1 {
            return Err(Error::InvalidArgument("discovery.n must be at least 1".into()));
        }
        if !(self.discovery.safety >= 1.0) {
            return Err(Error::InvalidArgument("discovery.safety must be at least 1".into()));
        }
        let grid = self.grid();
        if grid.lower.len() != self.system.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.system.dim(),
                got: grid.lower.len(),
            });
        }
        grid.bounds()?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `(key, value)` pairs written as comment headers of every CSV output.
    pub fn provenance(&self) -> Vec<(String, String)> {
        vec![
            ("system".into(), self.system.name().into()),
            ("dt".into(), self.dt.to_string()),
            ("dictionary_seed".into(), self.dictionary.seed.to_string()),
            ("order_seed".into(), self.discovery.order_seed.to_string()),
        ]
    }
}
