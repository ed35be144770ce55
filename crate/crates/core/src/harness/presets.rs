//! Coefficient and initial-condition presets.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{load_permeability, raster_to_field};
use crate::assembly::{interpolate, CoefficientField};
use crate::error::{invalid, Result};
use crate::grid::StructuredGrid2D;

fn default_cells() -> usize {
    64
}

fn default_channels() -> usize {
    6
}

fn default_inclusions() -> usize {
    16
}

/// Source of a permeability field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum KappaSpec {
    Constant { value: f64 },
    /// `EMSK` text raster, relative to the config file.
    Raster { path: String },
    /// `log κ` uniform on a `cells × cells` raster, rescaled to span `[1, contrast]` exactly.
    RandomLogUniform {
        contrast: f64,
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Background 1 with long thin channels and small inclusions of value `contrast`.
    Channels {
        contrast: f64,
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_inclusions")]
        inclusions: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Builds the per-element κ on `grid`. `seed` is the config seed, used unless the preset overrides it.
pub fn build_kappa(spec: &KappaSpec, grid: &StructuredGrid2D, seed: u64, base_dir: &Path) -> Result<CoefficientField> {
    match spec {
        KappaSpec::Constant { value } => CoefficientField::constant(grid, *value),
        KappaSpec::Raster { path } => {
            let p = Path::new(path);
            let full = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
            load_permeability(&full, grid)
        }
        KappaSpec::RandomLogUniform { contrast, cells, seed: s } => {
            check_contrast(*contrast)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.unwrap_or(seed));
            let raw: Vec<f64> = (0..cells * cells).map(|_| rng.gen::<f64>()).collect();
            let (lo, hi) = raw.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            let span = if hi > lo { hi - lo } else { 1.0 };
            let lc = contrast.log10();
            let values = raw.iter().map(|v| 10f64.powf((v - lo) / span * lc)).collect();
            raster_to_field(*cells, *cells, values, grid, 1)
        }
        KappaSpec::Channels { contrast, cells, channels, inclusions, seed: s } => {
            check_contrast(*contrast)?;
            let values = channel_raster(*contrast, *cells, *channels, *inclusions, s.unwrap_or(seed));
            raster_to_field(*cells, *cells, values, grid, 1)
        }
    }
}

fn check_contrast(c: f64) -> Result<()> {
    if c >= 1.0 && c.is_finite() {
        Ok(())
    } else {
        invalid(format!("contrast must be >= 1, got {c}"))
    }
}

/// Row-major `cells × cells` channel field.
pub fn channel_raster(contrast: f64, cells: usize, channels: usize, inclusions: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![1.0; cells * cells];
    let width = (cells / 64).max(1);
    for c in 0..channels {
        let horizontal = c % 2 == 0;
        let pos = rng.gen_range(1..cells.saturating_sub(width + 1).max(2));
        let start = rng.gen_range(0..=cells / 5);
        let end = cells - rng.gen_range(0..=cells / 5);
        for a in start..end {
            for w in 0..width {
                let b = (pos + w).min(cells - 1);
                let (i, j) = if horizontal { (a, b) } else { (b, a) };
                v[j * cells + i] = contrast;
            }
        }
    }
    let size = (cells / 32).max(1);
    for _ in 0..inclusions {
        let i0 = rng.gen_range(0..cells - size + 1);
        let j0 = rng.gen_range(0..cells - size + 1);
        for j in j0..j0 + size {
            for i in i0..i0 + size {
                v[j * cells + i] = contrast;
            }
        }
    }
    v
}

fn zero() -> f64 {
    0.0
}

/// Closed-form initial data, interpolated at the fine nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `amplitude · f(kx π x) · f(ky π y)` with `f` = sin, or cos when flagged.
    Trig {
        amplitude: f64,
        kx: f64,
        ky: f64,
        #[serde(default)]
        cos_x: bool,
        #[serde(default)]
        cos_y: bool,
    },
    Constant { value: f64 },
    /// `base − amplitude · exp(−width·((x−cx)² + (y−cy)²))`
    Gaussian {
        #[serde(default = "zero")]
        base: f64,
        amplitude: f64,
        cx: f64,
        cy: f64,
        width: f64,
    },
}

impl InitialCondition {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            InitialCondition::Trig { amplitude, kx, ky, cos_x, cos_y } => {
                let fx = if cos_x { (kx * PI * x).cos() } else { (kx * PI * x).sin() };
                let fy = if cos_y { (ky * PI * y).cos() } else { (ky * PI * y).sin() };
                amplitude * fx * fy
            }
            InitialCondition::Constant { value } => value,
            InitialCondition::Gaussian { base, amplitude, cx, cy, width } => {
                base - amplitude * (-width * ((x - cx).powi(2) + (y - cy).powi(2))).exp()
            }
        }
    }

    /// Nodal interpolant on all fine nodes.
    pub fn interpolate(&self, grid: &StructuredGrid2D) -> Vec<f64> {
        interpolate(grid, |x, y| self.eval(x, y))
    }
}
