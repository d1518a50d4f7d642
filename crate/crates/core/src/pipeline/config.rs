use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fem::{Geometry, SolverOptions};
use crate::inversion::{log_spaced, PsoConfig};
use crate::kle::{DEFAULT_ALPHA, DEFAULT_GRID_SIZE, DEFAULT_TRUNCATION};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Ensemble manifest; when absent the synthetic generator is used.
    pub manifest: Option<PathBuf>,
    /// Mesh file to reuse instead of generating one.
    pub mesh: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            mesh: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub grid_size: usize,
    pub truncation: usize,
    pub alpha: f64,
    /// Upper end `B_L` of the curve interval in tesla.
    pub b_max: f64,
    pub synthetic_specimens: usize,
    pub synthetic_samples: usize,
    pub synthetic_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            truncation: DEFAULT_TRUNCATION,
            alpha: DEFAULT_ALPHA,
            b_max: 2.0,
            synthetic_specimens: 26,
            synthetic_samples: 28,
            synthetic_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub refinement: u32,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { refinement: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub pso: PsoConfig,
    pub regularization: f64,
    pub anchor_at_mean: bool,
    pub current_min: f64,
    pub current_max: f64,
    pub current_count: usize,
    /// Held-out currents added to the training levels for validation.
    pub validation_extra_currents: Vec<f64>,
    pub probe_count: usize,
    pub validation_probe_count: usize,
    /// Current of the nominal state for sensitivities; median training current when absent.
    pub nominal_current: Option<f64>,
    /// Seed of the ground-truth parameter vector.
    pub y0_seed: u64,
    pub max_e_rel: f64,
    pub max_e_abs: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            regularization: 0.0,
            anchor_at_mean: true,
            current_min: 20.0,
            current_max: 450.0,
            current_count: 8,
            validation_extra_currents: vec![500.0, 550.0],
            probe_count: 5,
            validation_probe_count: 9,
            nominal_current: None,
            y0_seed: 11,
            max_e_rel: 0.02,
            max_e_abs: 5e-4,
        }
    }
}

impl InversionConfig {
    pub fn training_currents(&self) -> Vec<f64> {
        log_spaced(self.current_min, self.current_max, self.current_count)
    }

    pub fn validation_currents(&self) -> Vec<f64> {
        let mut c = self.training_currents();
        c.extend(&self.validation_extra_currents);
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }

    pub fn nominal(&self) -> f64 {
        self.nominal_current.unwrap_or_else(|| {
            let c = self.training_currents();
            let n = c.len();
            if n % 2 == 1 {
                c[n / 2]
            } else {
                0.5 * (c[n / 2 - 1] + c[n / 2])
            }
        })
    }
}

/// Complete run configuration read from a TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub geometry: Geometry,
    pub mesh: MeshConfig,
    pub solver: SolverOptions,
    pub inversion: InversionConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        self.validate()?;
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        cfg.paths.output = resolve(&cfg.paths.output);
        cfg.paths.manifest = cfg.paths.manifest.as_ref().map(resolve);
        cfg.paths.mesh = cfg.paths.mesh.as_ref().map(resolve);
        for p in cfg.paths.manifest.iter().chain(&cfg.paths.mesh) {
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.truncation == 0 {
            return Err(Error::Config("model.truncation must be at least 1".into()));
        }
        if m.truncation > m.grid_size {
            return Err(Error::Config("model.truncation exceeds the grid size".into()));
        }
        if !(m.alpha > 0.0) || !(m.b_max > 0.0) {
            return Err(Error::Config("model.alpha and model.b_max must be positive".into()));
        }
        self.geometry
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate()?;
        let inv = &self.inversion;
        inv.pso.validate()?;
        if !(inv.current_min > 0.0 && inv.current_max > inv.current_min) || inv.current_count < 2 {
            return Err(Error::Config(
                "inversion currents need 0 < current_min < current_max and current_count >= 2".into(),
            ));
        }
        if inv.probe_count == 0 || inv.validation_probe_count == 0 {
            return Err(Error::Config("probe counts must be positive".into()));
        }
        if !(inv.regularization >= 0.0) {
            return Err(Error::Config("inversion.regularization must be nonnegative".into()));
        }
        if !(inv.max_e_rel > 0.0 && inv.max_e_abs > 0.0) {
            return Err(Error::Config("acceptance thresholds must be positive".into()));
        }
        if inv.validation_extra_currents.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("validation currents must be positive".into()));
        }
        // TOML integers are signed
        let seeds = [m.synthetic_seed, inv.y0_seed, inv.pso.seed];
        if seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::Config(format!("seeds must not exceed {}", i64::MAX)));
        }
        Ok(())
    }
}
