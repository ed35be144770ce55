//! On-disk cache of reference solutions, keyed by a SHA-256 of the fine setup.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SpeciesConfig};
use crate::assembly::CoefficientField;
use crate::error::{Error, Result};
use crate::integrate::ReactionModel;

const MAGIC: &[u8; 8] = b"EMSREF01";

/// Everything the reference solution depends on.
#[derive(Serialize)]
struct FineSetup<'a> {
    format: u32,
    bounds: [f64; 4],
    fine_exponent: u32,
    dt: f64,
    t_final: f64,
    substeps: usize,
    reaction: &'a ReactionModel,
    species: &'a [SpeciesConfig],
    /// Digests of the realized κ fields (covers raster files and seeds).
    kappa: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn kappa_digest(k: &CoefficientField) -> String {
    let mut h = Sha256::new();
    for v in k.values() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Content hash of the fine sub-configuration.
pub fn fine_key(cfg: &ExperimentConfig, kappas: &[CoefficientField]) -> String {
    let setup = FineSetup {
        format: 1,
        bounds: cfg.domain.bounds,
        fine_exponent: cfg.mesh.fine_exponent,
        dt: cfg.time.dt,
        t_final: cfg.time.t_final,
        substeps: cfg.time.reference_substeps,
        reaction: &cfg.reaction,
        species: &cfg.species,
        kappa: kappas.iter().map(kappa_digest).collect(),
    };
    let json = serde_json::to_vec(&setup).expect("fine setup serializes");
    hex(&Sha256::digest(&json))
}

/// Hash of the whole config, for the run manifest.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex(&Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

/// Final-time reference fields.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedReference {
    pub t: f64,
    pub wall_seconds: f64,
    pub fields: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn load(&self, key: &str) -> Result<Option<CachedReference>> {
        let p = self.path(key);
        if !p.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&p)?;
        decode(&bytes).map(Some).ok_or_else(|| Error::Config(format!("corrupt reference cache {}", p.display())))
    }

    /// Writes through a temporary file and renames, so readers never see partial data.
    pub fn store(&self, key: &str, r: &CachedReference) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let target = self.path(key);
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&encode(r))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(target)
    }
}

fn encode(r: &CachedReference) -> Vec<u8> {
    let n = r.fields.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(40 + 8 * n * r.fields.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(r.fields.len() as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&r.t.to_le_bytes());
    out.extend_from_slice(&r.wall_seconds.to_le_bytes());
    for f in &r.fields {
        for v in f {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(b: &[u8]) -> Option<CachedReference> {
    let word = |k: usize| -> Option<[u8; 8]> { b.get(8 * k..8 * k + 8)?.try_into().ok() };
    if b.get(..8)? != MAGIC {
        return None;
    }
    let ns = u64::from_le_bytes(word(1)?) as usize;
    let n = u64::from_le_bytes(word(2)?) as usize;
    let t = f64::from_le_bytes(word(3)?);
    let wall_seconds = f64::from_le_bytes(word(4)?);
    if b.len() != 40 + 8 * ns * n {
        return None;
    }
    let fields = (0..ns)
        .map(|s| (0..n).map(|i| f64::from_le_bytes(word(5 + s * n + i).expect("length checked"))).collect())
        .collect();
    Some(CachedReference { t, wall_seconds, fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReferenceCache::new(dir.path().join("c"));
        let r = CachedReference { t: 0.25, wall_seconds: 1.5, fields: vec![vec![1.0, -2.5, f64::MIN_POSITIVE], vec![0.1; 3]] };
        assert!(cache.load("k").unwrap().is_none());
        cache.store("k", &r).unwrap();
        assert_eq!(cache.load("k").unwrap().unwrap(), r);
        fs::write(cache.path("bad"), b"EMSREF01short").unwrap();
        assert!(cache.load("bad").is_err());
    }
}
