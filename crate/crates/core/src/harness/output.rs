//! File outputs: legacy VTK fields, JSON manifests, atomic writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::StructuredGrid2D;

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Legacy ASCII `STRUCTURED_POINTS` file with nodal and per-element scalars.
pub fn vtk_string(
    grid: &StructuredGrid2D,
    title: &str,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<String> {
    for (name, v) in point_data {
        if v.len() != grid.num_nodes() {
            return invalid(format!("point field {name} has {} values, grid has {} nodes", v.len(), grid.num_nodes()));
        }
    }
    for (name, v) in cell_data {
        if v.len() != grid.num_elements() {
            return invalid(format!("cell field {name} has {} values", v.len()));
        }
    }
    let b = grid.bounds();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.nx() + 1, grid.ny() + 1);
    let _ = writeln!(s, "ORIGIN {} {} 0", b.x0, b.y0);
    let _ = writeln!(s, "SPACING {} {} 1", grid.hx(), grid.hy());
    let scalars = |s: &mut String, name: &str, v: &[f64]| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for chunk in v.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
    };
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", grid.num_nodes());
        for (name, v) in point_data {
            scalars(&mut s, name, v);
        }
    }
    if !cell_data.is_empty() {
        let _ = writeln!(s, "CELL_DATA {}", grid.num_elements());
        for (name, v) in cell_data {
            scalars(&mut s, name, v);
        }
    }
    Ok(s)
}

pub fn write_vtk(
    path: &Path,
    grid: &StructuredGrid2D,
    title: &str,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    write_atomic(path, vtk_string(grid, title, point_data, cell_data)?.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub coarse_exponent: u32,
    pub level: u32,
    pub wall_seconds: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub reference_key: Option<String>,
    pub reference_cached: Option<bool>,
    pub reference_wall_seconds: Option<f64>,
    pub cells: Vec<CellTiming>,
    pub total_wall_seconds: f64,
    pub emsfem_version: String,
    pub parallel_feature: bool,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(name: &str, command: &str, config_hash: String) -> Self {
        Self {
            name: name.to_string(),
            command: command.to_string(),
            config_hash,
            reference_key: None,
            reference_cached: None,
            reference_wall_seconds: None,
            cells: Vec::new(),
            total_wall_seconds: 0.0,
            emsfem_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel_feature: cfg!(feature = "parallel"),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(path, &json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    #[test]
    fn vtk_header_and_sizes() {
        let grid = StructuredGrid2D::new(Rect::unit(), 2, 3).unwrap();
        let u = vec![1.5; 12];
        let k = vec![1.0; 6];
        let s = vtk_string(&grid, "t", &[("u", &u)], &[("kappa", &k)]).unwrap();
        assert!(s.contains("DIMENSIONS 3 4 1"));
        assert!(s.contains("POINT_DATA 12"));
        assert!(s.contains("CELL_DATA 6"));
        assert!(vtk_string(&grid, "t", &[("u", &k)], &[]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("x", "converge", "abc".into());
        m.cells.push(CellTiming { coarse_exponent: 2, level: 1, wall_seconds: 0.5, ok: true });
        let p = dir.path().join("m.json");
        m.write(&p).unwrap();
        let back: RunManifest = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
