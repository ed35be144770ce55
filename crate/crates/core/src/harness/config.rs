//! TOML experiment description.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::{InitialCondition, KappaSpec};
use crate::assembly::VelocityField;
use crate::error::{Error, Result};
use crate::grid::{CoarseDecomposition, Rect, StructuredGrid2D};
use crate::integrate::{step_count, ReactionModel, VelocityUpdate};

fn one() -> usize {
    1
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// `[x0, x1, y0, y1]`
    pub bounds: [f64; 4],
}

/// Mesh sizes as powers of two relative to the domain side: `h = 2^-p`, `H = 2^-q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub fine_exponent: u32,
    pub coarse_exponents: Vec<u32>,
    pub levels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub velocity_update: VelocityUpdate,
    /// Backward-Euler substeps of the reference per `dt`.
    #[serde(default = "one")]
    pub reference_substeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub kappa: KappaSpec,
    #[serde(default = "VelocityField::zero")]
    pub velocity: VelocityField,
    pub initial: InitialCondition,
    /// Constant Dirichlet value on `∂D`.
    #[serde(default)]
    pub boundary_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Keep every k-th step for snapshots and traces; 0 keeps only the ends.
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub vtk: bool,
    /// Reference cache location, defaults to `<dir>/reference-cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), snapshot_stride: 0, vtk: false, cache_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub reaction: ReactionModel,
    pub species: Vec<SpeciesConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.output.cache_dir {
            Some(d) => self.resolve(d),
            None => self.output_dir().join("reference-cache"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let [x0, x1, y0, y1] = self.domain.bounds;
        Rect::new(x0, x1, y0, y1)?;
        let p = self.mesh.fine_exponent;
        if !(1..=12).contains(&p) {
            return bad(format!("fine_exponent {p} outside 1..=12"));
        }
        if self.mesh.coarse_exponents.is_empty() || self.mesh.levels.is_empty() {
            return bad("coarse_exponents and levels must be non-empty".into());
        }
        for &q in &self.mesh.coarse_exponents {
            if q == 0 || q >= p {
                return bad(format!("coarse exponent {q} must satisfy 1 <= q < fine_exponent = {p}"));
            }
            if let Some(&l) = self.mesh.levels.iter().find(|&&l| l > p - q) {
                return bad(format!("level {l} exceeds log2(H/h) = {} at coarse exponent {q}", p - q));
            }
        }
        step_count(self.time.t_final, self.time.dt).map_err(|e| Error::Config(e.to_string()))?;
        if self.time.reference_substeps == 0 {
            return bad("reference_substeps must be positive".into());
        }
        self.reaction.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.species.len() != self.reaction.num_species() {
            return bad(format!(
                "reaction needs {} species, config lists {}",
                self.reaction.num_species(),
                self.species.len()
            ));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Rect {
        let [x0, x1, y0, y1] = self.domain.bounds;
        Rect::new(x0, x1, y0, y1).expect("validated bounds")
    }

    pub fn fine_grid(&self) -> Result<StructuredGrid2D> {
        let n = 1usize << self.mesh.fine_exponent;
        StructuredGrid2D::new(self.bounds(), n, n)
    }

    pub fn decomposition(&self, coarse_exponent: u32) -> Result<CoarseDecomposition> {
        let n = 1usize << coarse_exponent;
        let ratio = 1usize << (self.mesh.fine_exponent - coarse_exponent);
        CoarseDecomposition::new(StructuredGrid2D::new(self.bounds(), n, n)?, ratio)
    }

    pub fn steps(&self) -> usize {
        step_count(self.time.t_final, self.time.dt).expect("validated time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
name = "sample"
seed = 3

[domain]
bounds = [-1.0, 1.0, -1.0, 1.0]

[mesh]
fine_exponent = 4
coarse_exponents = [2, 3]
levels = [0, 1]

[time]
dt = 0.0625
t_final = 0.25
velocity_update = "split"

[reaction]
model = "allen_cahn"
eps = 0.1

[[species]]
kappa = { preset = "constant", value = 1.0 }
velocity = { preset = "exp_rot", modulation = "exp_decay" }
initial = { preset = "trig", amplitude = 1.0, kx = 2.0, ky = 2.0 }
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.steps(), 4);
        assert_eq!(cfg.time.velocity_update, VelocityUpdate::Split);
        assert_eq!(cfg.time.reference_substeps, 1);
        assert_eq!(cfg.decomposition(2).unwrap().ratio, 4);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_levels_and_times() {
        let too_deep = SAMPLE.replace("levels = [0, 1]", "levels = [0, 2]");
        assert!(ExperimentConfig::from_toml_str(&too_deep).is_err());
        let odd_time = SAMPLE.replace("t_final = 0.25", "t_final = 0.3");
        assert!(ExperimentConfig::from_toml_str(&odd_time).is_err());
        let typo = SAMPLE.replace("seed = 3", "sead = 3");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
    }
}
