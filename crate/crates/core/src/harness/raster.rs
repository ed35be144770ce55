//! `EMSK` permeability rasters.
//!
//! Line 1 is `EMSK 1 <nx> <ny>`, followed by `ny` rows of `nx` positive
//! values; the first row is the bottom of the domain. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::StructuredGrid2D;

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `y` increasing.
    pub values: Vec<f64>,
}

fn load_err<T>(line: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Load { line, reason: reason.into() })
}

pub fn parse_raster(text: &str) -> Result<Raster> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((hline, header)) = lines.next() else {
        return load_err(1, "empty raster");
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "EMSK" || fields[1] != "1" {
        return load_err(hline, format!("expected header `EMSK 1 <nx> <ny>`, found `{header}`"));
    }
    let dim = |s: &str| match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => load_err(hline, format!("invalid raster dimension `{s}`")),
    };
    let (nx, ny) = (dim(fields[2])?, dim(fields[3])?);
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (ln, line) in lines {
        if rows == ny {
            return load_err(ln, format!("more than {ny} rows"));
        }
        let row: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if row.len() != nx {
            return load_err(ln, format!("expected {nx} values, found {}", row.len()));
        }
        for tok in row {
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => values.push(v),
                Ok(v) => return load_err(ln, format!("non-positive permeability {v}")),
                Err(_) => return load_err(ln, format!("cannot parse `{tok}`")),
            }
        }
        rows += 1;
    }
    if rows != ny {
        return load_err(text.lines().count().max(1), format!("expected {ny} rows, found {rows}"));
    }
    Ok(Raster { nx, ny, values })
}

/// Replicates raster cells onto the fine elements of `grid`.
pub fn raster_to_field(
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    grid: &StructuredGrid2D,
    header_line: usize,
) -> Result<CoefficientField> {
    if nx == 0 || ny == 0 || grid.nx() % nx != 0 || grid.ny() % ny != 0 {
        return load_err(
            header_line,
            format!("raster {nx}x{ny} does not divide the {}x{} element grid", grid.nx(), grid.ny()),
        );
    }
    let (rx, ry) = (grid.nx() / nx, grid.ny() / ny);
    let fine = (0..grid.num_elements())
        .map(|e| {
            let (i, j) = grid.element_ij(e);
            values[(j / ry) * nx + i / rx]
        })
        .collect();
    CoefficientField::from_values(grid, fine).map_err(|e| Error::Load { line: header_line, reason: e.to_string() })
}

pub fn load_permeability(path: &Path, grid: &StructuredGrid2D) -> Result<CoefficientField> {
    let text = std::fs::read_to_string(path)?;
    let r = parse_raster(&text)?;
    raster_to_field(r.nx, r.ny, r.values, grid, 1)
}

pub fn format_raster(r: &Raster) -> String {
    let mut s = format!("EMSK 1 {} {}\n", r.nx, r.ny);
    for row in r.values.chunks(r.nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    #[test]
    fn replicates_coarse_raster() {
        let grid = StructuredGrid2D::new(Rect::unit(), 4, 4).unwrap();
        let r = parse_raster("EMSK 1 2 2\n1 1\n1 1e4\n").unwrap();
        let k = raster_to_field(r.nx, r.ny, r.values, &grid, 1).unwrap();
        for e in 0..16 {
            let (i, j) = grid.element_ij(e);
            let expect = if i >= 2 && j >= 2 { 1e4 } else { 1.0 };
            assert_eq!(k.get(e), expect);
        }
    }

    #[test]
    fn all_ones_has_unit_contrast() {
        let grid = StructuredGrid2D::new(Rect::unit(), 2, 2).unwrap();
        let r = parse_raster("EMSK 1 2 2\n1 1\n1 1\n").unwrap();
        assert_eq!(raster_to_field(2, 2, r.values, &grid, 1).unwrap().contrast(), 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line = |t: &str| match parse_raster(t) {
            Err(Error::Load { line, .. }) => line,
            other => panic!("expected load error, got {other:?}"),
        };
        assert_eq!(line("EMSK 1 2 2\n1 1\n1 0\n"), 3);
        assert_eq!(line("EMSX 1 2 2\n"), 1);
        assert_eq!(line("EMSK 1 2 2\n1 1 1\n"), 2);
        assert_eq!(line("EMSK 1 2 2\n1 1\n1 abc\n"), 3);
        let grid = StructuredGrid2D::new(Rect::unit(), 4, 4).unwrap();
        assert!(matches!(raster_to_field(3, 3, vec![1.0; 9], &grid, 1), Err(Error::Load { line: 1, .. })));
    }

    #[test]
    fn format_round_trips() {
        let r = Raster { nx: 3, ny: 2, values: vec![1.0, 2.5, 1e4, 3.0, 0.125, 7.0] };
        assert_eq!(parse_raster(&format_raster(&r)).unwrap(), r);
    }
}
