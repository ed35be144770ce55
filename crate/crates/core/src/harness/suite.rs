//! Experiment drivers: reference runs, multiscale runs, convergence sweeps.

use std::path::PathBuf;
use std::time::Instant;

use super::cache::{config_hash, fine_key, CachedReference, ReferenceCache};
use super::config::ExperimentConfig;
use super::metrics::{compute_errors, AllenCahnEnergy};
use super::output::{write_atomic, write_vtk, CellTiming, RunManifest};
use super::presets::build_kappa;
use super::report::{ErrorReport, ReportRow};
use crate::assembly::{CoefficientField, FineOperators};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Threading};
use crate::grid::{CoarseDecomposition, StructuredGrid2D};
use crate::integrate::{
    backward_euler_reference, run_exponential, ExpEulerIntegrator, ReactionModel, ReferenceOptions, ReferenceSpecies,
    Species, StepperState,
};
use crate::msspace::{build_multiscale_space, MultiscaleSpace, SpaceOptions};
use crate::pou::{assemble_pou, PartitionOfUnity};

/// Fine-grid data shared by every cell of a sweep.
#[derive(Clone, Debug)]
pub struct FineSetup {
    pub grid: StructuredGrid2D,
    pub kappas: Vec<CoefficientField>,
    pub ops: Vec<FineOperators>,
    /// Interpolated initial data on all fine nodes, per species.
    pub initial: Vec<Vec<f64>>,
}

impl FineSetup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.fine_grid()?;
        let mut kappas = Vec::new();
        let mut ops = Vec::new();
        let mut initial = Vec::new();
        for sp in &cfg.species {
            let k = build_kappa(&sp.kappa, &grid, cfg.seed, &cfg.base_dir)?;
            ops.push(FineOperators::assemble(&grid, &k, &sp.velocity)?);
            kappas.push(k);
            let mut u0 = sp.initial.interpolate(&grid);
            for n in grid.boundary_nodes() {
                u0[n] = sp.boundary_value;
            }
            initial.push(u0);
        }
        Ok(Self { grid, kappas, ops, initial })
    }
}

fn reference_species<'a>(cfg: &ExperimentConfig, setup: &'a FineSetup) -> Vec<ReferenceSpecies<'a>> {
    cfg.species
        .iter()
        .zip(&setup.ops)
        .map(|(sp, ops)| ReferenceSpecies {
            fine: ops,
            modulation: sp.velocity.modulation,
            lift: sp.boundary_value,
            convective: !sp.velocity.is_zero(),
        })
        .collect()
}

/// Backward-Euler reference at the final time.
pub fn compute_reference(cfg: &ExperimentConfig, setup: &FineSetup) -> Result<CachedReference> {
    let start = Instant::now();
    let mut opts = ReferenceOptions::new(cfg.time.dt, cfg.time.t_final);
    opts.substeps = cfg.time.reference_substeps;
    opts.stride = cfg.steps().max(1);
    let (traj, stats) =
        backward_euler_reference(&reference_species(cfg, setup), &cfg.reaction.clone().into(), setup.initial.clone(), &opts)?;
    log::info!(
        "reference: {} Newton solves, {} factorizations, at most {} iterations per step",
        stats.solves,
        stats.factorizations,
        stats.max_iterations
    );
    let last = traj.into_iter().last().expect("trajectory holds the initial state");
    Ok(CachedReference { t: last.t, wall_seconds: start.elapsed().as_secs_f64(), fields: last.fields })
}

/// Reference from the cache, computing and storing it on a miss. Returns `(reference, hit, key)`.
pub fn cached_reference(cfg: &ExperimentConfig, setup: &FineSetup) -> Result<(CachedReference, bool, String)> {
    let key = fine_key(cfg, &setup.kappas);
    let cache = ReferenceCache::new(cfg.cache_dir());
    if let Some(r) = cache.load(&key)? {
        log::info!("reference cache hit {key}");
        return Ok((r, true, key));
    }
    let r = compute_reference(cfg, setup)?;
    cache.store(&key, &r)?;
    Ok((r, false, key))
}

/// Per-species PU and multiscale space of one `(H, ℓ)` cell.
pub struct CellSpaces {
    pub decomp: CoarseDecomposition,
    pub pous: Vec<PartitionOfUnity>,
    pub spaces: Vec<MultiscaleSpace>,
}

pub fn build_cell_spaces(
    cfg: &ExperimentConfig,
    setup: &FineSetup,
    coarse_exponent: u32,
    level: u32,
    threading: Threading,
) -> Result<CellSpaces> {
    let decomp = cfg.decomposition(coarse_exponent)?;
    let mut pous = Vec::new();
    let mut spaces = Vec::new();
    for (s, sp) in cfg.species.iter().enumerate() {
        let pou = assemble_pou(&decomp, &setup.kappas[s], threading)?;
        let opts = SpaceOptions { g0: sp.velocity.g(0.0), threading, ..SpaceOptions::new(level) };
        let space = build_multiscale_space(&decomp, &setup.ops[s], &setup.kappas[s], &sp.velocity, &pou, &opts)?;
        log::info!(
            "H = 2^-{coarse_exponent}, level {level}, species {s}: dim {} ({} pruned)",
            space.dim(),
            space.pruned.len()
        );
        pous.push(pou);
        spaces.push(space);
    }
    Ok(CellSpaces { decomp, pous, spaces })
}

/// Per-step diagnostics of a multiscale run.
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub max_norm: Vec<f64>,
    /// Allen-Cahn energy, when the reaction is Allen-Cahn.
    pub energy: Option<f64>,
}

pub struct MultiscaleRun {
    pub dims: Vec<usize>,
    pub pruned: Vec<usize>,
    /// Strided coefficient states, first and last included.
    pub states: Vec<StepperState>,
    pub final_fields: Vec<Vec<f64>>,
    pub trace: Vec<TracePoint>,
    pub propagator_builds: usize,
    pub wall_seconds: f64,
}

/// Builds the spaces of `(H, ℓ)` and integrates to the final time.
pub fn run_multiscale(
    cfg: &ExperimentConfig,
    setup: &FineSetup,
    coarse_exponent: u32,
    level: u32,
    with_trace: bool,
    threading: Threading,
) -> Result<MultiscaleRun> {
    let start = Instant::now();
    let cell = build_cell_spaces(cfg, setup, coarse_exponent, level, threading)?;
    let species: Vec<Species<'_>> = cfg
        .species
        .iter()
        .enumerate()
        .map(|(s, sp)| Species {
            space: &cell.spaces[s],
            fine: &setup.ops[s],
            modulation: sp.velocity.modulation,
            lift: sp.boundary_value,
            convective: !sp.velocity.is_zero(),
        })
        .collect();
    let initial: Vec<Vec<f64>> = species.iter().zip(&setup.initial).map(|(s, u0)| s.project_initial(u0)).collect();
    let mut integrator =
        ExpEulerIntegrator::new(species, cfg.reaction.clone().into(), cfg.time.dt, cfg.time.velocity_update)?
            .with_threading(threading);
    let energy = match (&cfg.reaction, with_trace) {
        (ReactionModel::AllenCahn { eps }, true) => Some(AllenCahnEnergy::new(&setup.grid, *eps)?),
        _ => None,
    };
    let mut trace = Vec::new();
    let steps = cfg.steps();
    let stride = if cfg.output.snapshot_stride == 0 { steps.max(1) } else { cfg.output.snapshot_stride };
    let states = run_exponential(&mut integrator, initial, cfg.time.t_final, stride, |st, integ| {
        if with_trace {
            let fields = integ.fine_fields(&st.coeffs);
            let max_norm = fields.iter().map(|u| u.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
            trace.push(TracePoint { t: st.t, max_norm, energy: energy.as_ref().map(|e| e.eval(&fields[0])) });
        }
        Ok(())
    })?;
    let last = states.last().expect("at least the initial state");
    let final_fields = integrator.fine_fields(&last.coeffs);
    Ok(MultiscaleRun {
        dims: cell.spaces.iter().map(MultiscaleSpace::dim).collect(),
        pruned: cell.spaces.iter().map(|s| s.pruned.len()).collect(),
        propagator_builds: integrator.propagator_builds(),
        states,
        final_fields,
        trace,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Relative errors of every species against the reference fields.
pub fn cell_errors(setup: &FineSetup, reference: &[Vec<f64>], ms: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    setup
        .ops
        .iter()
        .enumerate()
        .map(|(s, ops)| {
            let r = ops.free.restrict(&reference[s]);
            let m = ops.free.restrict(&ms[s]);
            compute_errors(&r, &m, &ops.mass_ff, &ops.stiffness_ff)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    /// How `(H, ℓ)` cells are scheduled.
    pub cell_threading: Threading,
    /// Threading inside a cell.
    pub inner_threading: Threading,
    pub write_outputs: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { cell_threading: Threading::Parallel, inner_threading: Threading::Parallel, write_outputs: true }
    }
}

pub struct SuiteOutcome {
    pub report: ErrorReport,
    pub reference_cached: bool,
    pub reference_key: String,
    pub manifest: RunManifest,
    pub artifacts: Vec<PathBuf>,
}

/// Runs every `(H, ℓ)` cell against one (cached) reference and writes the tables.
pub fn run_suite(cfg: &ExperimentConfig, opts: &SuiteOptions) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let setup = FineSetup::build(cfg)?;
    let (reference, hit, key) = cached_reference(cfg, &setup)?;
    let cells: Vec<(u32, u32)> = cfg
        .mesh
        .coarse_exponents
        .iter()
        .flat_map(|&q| cfg.mesh.levels.iter().map(move |&l| (q, l)))
        .collect();
    let out_dir = cfg.output_dir();
    let results = map_slice(opts.cell_threading, &cells, |&(q, l)| {
        let t0 = Instant::now();
        let res = run_multiscale(cfg, &setup, q, l, false, opts.inner_threading).and_then(|run| {
            let errs = cell_errors(&setup, &reference.fields, &run.final_fields)?;
            let mut vtk = None;
            if opts.write_outputs && cfg.output.vtk {
                let p = out_dir.join(format!("cell_q{q}_l{l}.vtk"));
                let names: Vec<String> = (0..run.final_fields.len()).map(|s| format!("u{}", s + 1)).collect();
                let pd: Vec<(&str, &[f64])> =
                    names.iter().map(String::as_str).zip(run.final_fields.iter().map(Vec::as_slice)).collect();
                write_vtk(&p, &setup.grid, &format!("{} H=2^-{q} level {l}", cfg.name), &pd, &[])?;
                vtk = Some(p);
            }
            Ok((run.dims, run.pruned, errs, vtk))
        });
        (q, l, res, t0.elapsed().as_secs_f64())
    });

    let mut report = ErrorReport::default();
    let mut manifest = RunManifest::new(&cfg.name, "converge", config_hash(cfg));
    manifest.reference_key = Some(key.clone());
    manifest.reference_cached = Some(hit);
    manifest.reference_wall_seconds = Some(reference.wall_seconds);
    let mut artifacts = Vec::new();
    for (q, l, res, wall) in results {
        manifest.cells.push(CellTiming { coarse_exponent: q, level: l, wall_seconds: wall, ok: res.is_ok() });
        match res {
            Ok((dims, pruned, errs, vtk)) => {
                artifacts.extend(vtk);
                for (s, (e0, e1)) in errs.into_iter().enumerate() {
                    report.rows.push(ReportRow {
                        coarse_exponent: q,
                        level: l,
                        species: s,
                        dim: dims[s],
                        pruned: pruned[s],
                        eps0: Some(e0),
                        eps1: Some(e1),
                        wall_seconds: wall,
                        error: None,
                    });
                }
            }
            Err(e) => {
                log::error!("cell H = 2^-{q}, level {l} failed: {e}");
                for s in 0..cfg.species.len() {
                    report.rows.push(ReportRow {
                        coarse_exponent: q,
                        level: l,
                        species: s,
                        dim: 0,
                        pruned: 0,
                        eps0: None,
                        eps1: None,
                        wall_seconds: wall,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    if opts.write_outputs {
        let table = out_dir.join("table.csv");
        write_atomic(&table, report.table_csv().as_bytes())?;
        let mut buf = Vec::new();
        report.write_cells_csv(&mut buf)?;
        let cells_path = out_dir.join("cells.csv");
        write_atomic(&cells_path, &buf)?;
        artifacts.push(table);
        artifacts.push(cells_path);
        if cfg.output.vtk {
            let p = out_dir.join("reference.vtk");
            let names: Vec<String> = (0..reference.fields.len()).map(|s| format!("u{}", s + 1)).collect();
            let pd: Vec<(&str, &[f64])> =
                names.iter().map(String::as_str).zip(reference.fields.iter().map(Vec::as_slice)).collect();
            write_vtk(&p, &setup.grid, &format!("{} reference", cfg.name), &pd, &[("kappa", setup.kappas[0].values())])?;
            artifacts.push(p);
        }
    }
    manifest.total_wall_seconds = start.elapsed().as_secs_f64();
    manifest.outputs = artifacts.clone();
    if opts.write_outputs {
        let p = out_dir.join("manifest.json");
        manifest.write(&p)?;
        artifacts.push(p);
    }
    Ok(SuiteOutcome { report, reference_cached: hit, reference_key: key, manifest, artifacts })
}

/// Single multiscale run with diagnostics traces (`run` subcommand).
pub fn run_single(
    cfg: &ExperimentConfig,
    coarse_exponent: u32,
    level: u32,
    threading: Threading,
) -> Result<(MultiscaleRun, Vec<PathBuf>)> {
    let start = Instant::now();
    let setup = FineSetup::build(cfg)?;
    let run = run_multiscale(cfg, &setup, coarse_exponent, level, true, threading)?;
    let dir = cfg.output_dir();
    let mut artifacts = Vec::new();
    let ns = cfg.species.len();
    let mut csv = String::from("step,t");
    for s in 0..ns {
        csv += &format!(",max_u{}", s + 1);
    }
    csv += ",energy\n";
    for (n, p) in run.trace.iter().enumerate() {
        csv += &format!("{n},{}", p.t);
        for m in &p.max_norm {
            csv += &format!(",{m}");
        }
        csv += &format!(",{}\n", p.energy.map(|e| e.to_string()).unwrap_or_default());
    }
    let trace_path = dir.join(format!("trace_q{coarse_exponent}_l{level}.csv"));
    write_atomic(&trace_path, csv.as_bytes())?;
    artifacts.push(trace_path);
    if cfg.output.vtk {
        let cell = build_cell_spaces(cfg, &setup, coarse_exponent, level, threading)?;
        for st in &run.states {
            let fields: Vec<Vec<f64>> = cell
                .spaces
                .iter()
                .enumerate()
                .map(|(s, space)| {
                    let sp = Species {
                        space,
                        fine: &setup.ops[s],
                        modulation: cfg.species[s].velocity.modulation,
                        lift: cfg.species[s].boundary_value,
                        convective: !cfg.species[s].velocity.is_zero(),
                    };
                    sp.fine_field(&st.coeffs[s])
                })
                .collect();
            let names: Vec<String> = (0..ns).map(|s| format!("u{}", s + 1)).collect();
            let pd: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(fields.iter().map(Vec::as_slice)).collect();
            let p = dir.join(format!("snapshot_q{coarse_exponent}_l{level}_{:06}.vtk", st.step));
            write_vtk(&p, &setup.grid, &format!("{} t={}", cfg.name, st.t), &pd, &[("kappa", setup.kappas[0].values())])?;
            artifacts.push(p);
        }
    }
    let mut manifest = RunManifest::new(&cfg.name, "run", config_hash(cfg));
    manifest.cells.push(CellTiming { coarse_exponent, level, wall_seconds: run.wall_seconds, ok: true });
    manifest.total_wall_seconds = start.elapsed().as_secs_f64();
    manifest.outputs = artifacts.clone();
    let mp = dir.join(format!("manifest_run_q{coarse_exponent}_l{level}.json"));
    manifest.write(&mp)?;
    artifacts.push(mp);
    Ok((run, artifacts))
}

/// Computes (or loads) the reference and writes it as VTK (`reference` subcommand).
pub fn run_reference(cfg: &ExperimentConfig) -> Result<(CachedReference, bool, PathBuf)> {
    let setup = FineSetup::build(cfg)?;
    let (r, hit, key) = cached_reference(cfg, &setup)?;
    let p = cfg.output_dir().join("reference.vtk");
    let names: Vec<String> = (0..r.fields.len()).map(|s| format!("u{}", s + 1)).collect();
    let pd: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(r.fields.iter().map(Vec::as_slice)).collect();
    write_vtk(&p, &setup.grid, &format!("{} reference {key}", cfg.name), &pd, &[("kappa", setup.kappas[0].values())])?;
    Ok((r, hit, p))
}

/// Writes `χ_i` and every basis column of coarse node `node` (species 1) to VTK.
pub fn export_basis(cfg: &ExperimentConfig, coarse_exponent: u32, level: u32, node: usize) -> Result<(usize, PathBuf)> {
    let setup = FineSetup::build(cfg)?;
    let decomp = cfg.decomposition(coarse_exponent)?;
    if node >= decomp.neighborhoods.len() {
        return Err(Error::InvalidArgument(format!(
            "node {node} out of range, the coarse grid has {} nodes",
            decomp.neighborhoods.len()
        )));
    }
    let cell = build_cell_spaces(cfg, &setup, coarse_exponent, level, Threading::default())?;
    let space = &cell.spaces[0];
    let ops = &setup.ops[0];
    let chi = cell.pous[0].chi[node].to_full(&setup.grid);
    let mut names = vec!["chi".to_string()];
    let mut fields = vec![chi];
    for (k, p) in space.provenance.iter().enumerate() {
        if p.node == node {
            names.push(format!("psi_{}", p.dof_index));
            fields.push(ops.free.extend(&space.column(k), 0.0));
        }
    }
    let count = fields.len() - 1;
    let pd: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(fields.iter().map(Vec::as_slice)).collect();
    let path = cfg.output_dir().join(format!("basis_q{coarse_exponent}_l{level}_node{node}.vtk"));
    write_vtk(&path, &setup.grid, &format!("{} basis of node {node}", cfg.name), &pd, &[("kappa", setup.kappas[0].values())])?;
    Ok((count, path))
}
