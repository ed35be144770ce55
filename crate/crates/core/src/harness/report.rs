//! Error tables: a paper-style summary and a lossless per-cell CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::convergence_rate;
use crate::error::{Error, Result};

/// Result of one `(H, ℓ, species)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub coarse_exponent: u32,
    pub level: u32,
    pub species: usize,
    pub dim: usize,
    pub pruned: usize,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// `1.0638E+00` style.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.4E}");
    match s.split_once('E') {
        Some((mant, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            format!("{mant}E{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        None => s,
    }
}

impl ErrorReport {
    pub fn coarse_exponents(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.rows.iter().map(|r| r.coarse_exponent).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn levels(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.rows.iter().map(|r| r.level).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn num_species(&self) -> usize {
        self.rows.iter().map(|r| r.species + 1).max().unwrap_or(0)
    }

    pub fn get(&self, coarse_exponent: u32, level: u32, species: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.coarse_exponent == coarse_exponent && r.level == level && r.species == species)
    }

    /// `ε₀` down the H column at fixed `ℓ`.
    pub fn column(&self, level: u32, species: usize, energy_norm: bool) -> Vec<Option<f64>> {
        self.coarse_exponents()
            .into_iter()
            .map(|q| self.get(q, level, species).and_then(|r| if energy_norm { r.eps1 } else { r.eps0 }))
            .collect()
    }

    /// Convergence rates between consecutive `H`, `None` where a cell is missing.
    pub fn rates(&self, level: u32, species: usize, energy_norm: bool) -> Vec<Option<f64>> {
        let col = self.column(level, species, energy_norm);
        col.windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => convergence_rate(&[a, b])[0],
                _ => None,
            })
            .collect()
    }

    /// Lossless CSV, one line per row.
    pub fn write_cells_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_cells_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>().map_err(csv_err)?;
        Ok(Self { rows })
    }

    /// Table with one line per `H` and `ε₀, CR, ε₁, CR` per level (and species).
    pub fn table_csv(&self) -> String {
        let levels = self.levels();
        let ns = self.num_species();
        let suffix = |s: usize| if ns > 1 { format!("_u{}", s + 1) } else { String::new() };
        let mut header = vec!["H".to_string()];
        for &l in &levels {
            for s in 0..ns {
                let sf = suffix(s);
                header.extend([
                    format!("eps0_l{l}{sf}"),
                    format!("CR0_l{l}{sf}"),
                    format!("eps1_l{l}{sf}"),
                    format!("CR1_l{l}{sf}"),
                ]);
            }
        }
        let mut out = header.join(",") + "\n";
        let qs = self.coarse_exponents();
        for (k, &q) in qs.iter().enumerate() {
            let mut line = vec![format!("2^-{q}")];
            for &l in &levels {
                for s in 0..ns {
                    for energy in [false, true] {
                        let col = self.column(l, s, energy);
                        line.push(col[k].map(format_sci).unwrap_or_default());
                        let cr = if k == 0 { None } else { self.rates(l, s, energy)[k - 1] };
                        line.push(cr.map(|c| format!("{c:.4}")).unwrap_or_default());
                    }
                }
            }
            out += &(line.join(",") + "\n");
        }
        out
    }
}

/// Parses [`ErrorReport::table_csv`] output into header and rows of optional numbers.
pub fn parse_table_csv(text: &str) -> Result<(Vec<String>, Vec<(String, Vec<Option<f64>>)>)> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let h = rec.get(0).unwrap_or_default().to_string();
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| if f.is_empty() { Ok(None) } else { f.parse::<f64>().map(Some) })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("table value: {e}")))?;
        rows.push((h, vals));
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(q: u32, l: u32, e: f64) -> ReportRow {
        ReportRow {
            coarse_exponent: q,
            level: l,
            species: 0,
            dim: 10,
            pruned: 0,
            eps0: Some(e),
            eps1: Some(3.0 * e),
            wall_seconds: 0.25,
            error: None,
        }
    }

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(1.0638), "1.0638E+00");
        assert_eq!(format_sci(4.4884e-2), "4.4884E-02");
        assert_eq!(format_sci(2.7358e-5), "2.7358E-05");
    }

    #[test]
    fn cells_round_trip_exactly() {
        let mut r = ErrorReport { rows: vec![row(1, 0, 1.0 / 3.0), row(2, 0, 0.1 + 0.2)] };
        r.rows[1].error = Some("local solve failed, node 3".into());
        r.rows[1].eps1 = None;
        let mut buf = Vec::new();
        r.write_cells_csv(&mut buf).unwrap();
        assert_eq!(ErrorReport::read_cells_csv(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn table_layout() {
        let r = ErrorReport { rows: vec![row(1, 0, 1.0638), row(2, 0, 4.4884e-2)] };
        let t = r.table_csv();
        let (header, rows) = parse_table_csv(&t).unwrap();
        assert_eq!(header, ["H", "eps0_l0", "CR0_l0", "eps1_l0", "CR1_l0"]);
        assert_eq!(rows[0].0, "2^-1");
        assert_eq!(rows[0].1[1], None);
        assert!((rows[1].1[1].unwrap() - 4.5669).abs() < 1e-12);
        assert!(t.contains("4.4884E-02"));
    }
}
