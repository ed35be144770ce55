//! Exponential Euler on the coarse multiscale pencil.
//!
//! Per species the linear part is `L = M⁻¹(A + g(t)C)` and one step reads
//! `c ← c + Δt·φ₁(−Δt L)·M⁻¹(Bᵀ M R(u) − (A + gC)c)`.

use std::sync::Arc;

use faer::linalg::solvers::Llt;
use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use super::phi::phi1_dense;
use super::reaction::Reaction;
use crate::assembly::{FineOperators, Modulation};
use crate::error::{invalid, Error, Result};
use crate::exec::Threading;
use crate::msspace::{CoarseOperators, MultiscaleSpace};

/// How a time-dependent velocity scale `g(t)` enters the scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityUpdate {
    /// `g(tⁿ)` in both the propagator and the residual; φ₁ is recomputed per step.
    #[default]
    Refresh,
    /// `g(0)` everywhere.
    Frozen,
    /// Propagator at `g(0)`, residual at `g(tⁿ)`: exponential Euler for the
    /// splitting `L⁰ + (g(t) − g(0))C`, one φ₁ per run.
    Split,
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Dense coarse operators plus the factorization of their mass matrix.
#[derive(Clone, Copy)]
pub struct CoarsePencil<'a> {
    pub ops: &'a CoarseOperators,
    pub mass_llt: &'a Llt<f64>,
}

impl<'a> CoarsePencil<'a> {
    pub fn new(ops: &'a CoarseOperators, mass_llt: &'a Llt<f64>) -> Self {
        Self { ops, mass_llt }
    }

    pub fn of_space(space: &'a MultiscaleSpace) -> Self {
        Self { ops: &space.ops, mass_llt: space.mass_llt() }
    }

    pub fn dim(&self) -> usize {
        self.ops.mass.nrows()
    }

    /// `(A + gC)c`
    pub fn apply_operator(&self, c: &[f64], g: f64) -> Vec<f64> {
        let cm = col(c);
        let mut out = &self.ops.stiffness * &cm;
        if g != 0.0 {
            let conv = &self.ops.convection * &cm;
            out += faer::Scale(g) * &conv;
        }
        to_vec(&out)
    }

    /// `P = Δt·φ₁(−Δt·M⁻¹(A + gC))`
    pub fn build_propagator(&self, dt: f64, g: f64) -> Result<Mat<f64>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let m = self.dim();
        let (a, c) = (&self.ops.stiffness, &self.ops.convection);
        let mut x = Mat::from_fn(m, m, |i, j| a[(i, j)] + g * c[(i, j)]);
        self.mass_llt.solve_in_place(x.as_mut());
        scale_in_place(&mut x, -dt);
        let mut p = phi1_dense(x.as_ref())?;
        scale_in_place(&mut p, dt);
        Ok(p)
    }

    /// One exponential Euler step given the projected load `l = Bᵀ M R`.
    pub fn step_with_load(&self, propagator: &Mat<f64>, c: &[f64], load: &[f64], g: f64) -> Vec<f64> {
        let kc = self.apply_operator(c, g);
        let mut w = Mat::from_fn(c.len(), 1, |i, _| load[i] - kc[i]);
        self.mass_llt.solve_in_place(w.as_mut());
        let dc = propagator * &w;
        c.iter().enumerate().map(|(i, ci)| ci + dc[(i, 0)]).collect()
    }
}

fn scale_in_place(x: &mut Mat<f64>, s: f64) {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            x[(i, j)] *= s;
        }
    }
}

/// One species: its space, fine operators, velocity modulation and constant
/// Dirichlet lift.
#[derive(Clone, Copy)]
pub struct Species<'a> {
    pub space: &'a MultiscaleSpace,
    pub fine: &'a FineOperators,
    pub modulation: Modulation,
    /// Constant boundary value `c_b`; the field is `c_b + Bc`.
    pub lift: f64,
    /// Whether the species has a nonzero convection term.
    pub convective: bool,
}

impl<'a> Species<'a> {
    /// Full fine-node field `c_b + Bc`.
    pub fn fine_field(&self, c: &[f64]) -> Vec<f64> {
        let mut u = self.fine.free.extend(&self.space.prolongate(c), 0.0);
        if self.lift != 0.0 {
            u.iter_mut().for_each(|v| *v += self.lift);
        }
        u
    }

    /// Coarse coefficients of a full-node initial field.
    pub fn project_initial(&self, u0_full: &[f64]) -> Vec<f64> {
        let free: Vec<f64> = self.fine.free.restrict(u0_full).iter().map(|v| v - self.lift).collect();
        self.space.project_initial(&free)
    }

    fn g(&self, t: f64) -> f64 {
        if self.convective {
            self.modulation.eval(t)
        } else {
            0.0
        }
    }
}

/// Time, step counter and per-species coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StepperState {
    pub t: f64,
    pub step: usize,
    pub coeffs: Vec<Vec<f64>>,
}

struct CachedPropagator {
    g_bits: u64,
    matrix: Arc<Mat<f64>>,
}

/// Exponential Euler for one or two species.
pub struct ExpEulerIntegrator<'a> {
    species: Vec<Species<'a>>,
    reaction: Reaction,
    dt: f64,
    update: VelocityUpdate,
    threading: Threading,
    cache: Vec<Option<CachedPropagator>>,
    builds: usize,
}

impl<'a> ExpEulerIntegrator<'a> {
    pub fn new(species: Vec<Species<'a>>, reaction: Reaction, dt: f64, update: VelocityUpdate) -> Result<Self> {
        if species.len() != reaction.num_species() {
            return invalid(format!(
                "reaction has {} species but {} spaces were given",
                reaction.num_species(),
                species.len()
            ));
        }
        reaction.model.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        if let Some(s) = species.iter().skip(1).find(|s| s.fine.grid != species[0].fine.grid) {
            return invalid(format!("species live on different fine grids ({} nodes)", s.fine.grid.num_nodes()));
        }
        let cache = species.iter().map(|_| None).collect();
        Ok(Self { species, reaction, dt, update, threading: Threading::default(), cache, builds: 0 })
    }

    pub fn with_threading(mut self, threading: Threading) -> Self {
        self.threading = threading;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn species(&self) -> &[Species<'a>] {
        &self.species
    }

    /// Number of φ₁ evaluations so far.
    pub fn propagator_builds(&self) -> usize {
        self.builds
    }

    fn g_pair(&self, s: usize, t: f64) -> (f64, f64) {
        let sp = &self.species[s];
        match self.update {
            VelocityUpdate::Refresh => (sp.g(t), sp.g(t)),
            VelocityUpdate::Frozen => (sp.g(0.0), sp.g(0.0)),
            VelocityUpdate::Split => (sp.g(0.0), sp.g(t)),
        }
    }

    /// Propagator of species `s` at velocity scale `g`, cached while `g` is unchanged.
    pub fn propagator(&mut self, s: usize, g: f64) -> Result<Arc<Mat<f64>>> {
        if let Some(c) = &self.cache[s] {
            if c.g_bits == g.to_bits() {
                return Ok(Arc::clone(&c.matrix));
            }
        }
        // drop the stale matrix before allocating the new one
        self.cache[s] = None;
        let p = Arc::new(CoarsePencil::of_space(self.species[s].space).build_propagator(self.dt, g)?);
        self.builds += 1;
        self.cache[s] = Some(CachedPropagator { g_bits: g.to_bits(), matrix: Arc::clone(&p) });
        Ok(p)
    }

    /// Full fine-node fields of all species.
    pub fn fine_fields(&self, coeffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.species.iter().zip(coeffs).map(|(s, c)| s.fine_field(c)).collect()
    }

    /// Advances `state` by one step.
    pub fn step(&mut self, state: &StepperState) -> Result<StepperState> {
        let next_step = state.step + 1;
        if state.coeffs.len() != self.species.len() {
            return invalid("state and integrator disagree on the number of species");
        }
        let fields = self.fine_fields(&state.coeffs);
        let grid = &self.species[0].fine.grid;
        let r = self.reaction.eval_nodes(grid, state.t, &fields, self.threading);
        let mut coeffs = Vec::with_capacity(self.species.len());
        for s in 0..self.species.len() {
            let (g_phi, g_res) = self.g_pair(s, state.t);
            let p = self.propagator(s, g_phi)?;
            let sp = self.species[s];
            let load = sp.space.restrict_load(&sp.fine.mass_fa.mul_vec(&r[s]));
            let c = CoarsePencil::of_space(sp.space).step_with_load(&p, &state.coeffs[s], &load, g_res);
            if !all_finite(&c) {
                return Err(Error::Integration { step: next_step, reason: format!("non-finite coefficients in species {s}") });
            }
            coeffs.push(c);
        }
        Ok(StepperState { t: next_step as f64 * self.dt, step: next_step, coeffs })
    }
}

/// Number of steps `T/Δt`, which must be an integer.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0) || !(dt > 0.0) {
        return invalid(format!("need T >= 0 and dt > 0, got T = {t_final}, dt = {dt}"));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return invalid(format!("T = {t_final} is not a multiple of dt = {dt}"));
    }
    Ok(n as usize)
}

/// Integrates to `t_final`, keeping every `stride`-th state plus the first and last.
/// `hook` sees every state, strided or not.
pub fn run_exponential(
    integrator: &mut ExpEulerIntegrator<'_>,
    initial: Vec<Vec<f64>>,
    t_final: f64,
    stride: usize,
    mut hook: impl FnMut(&StepperState, &ExpEulerIntegrator<'_>) -> Result<()>,
) -> Result<Vec<StepperState>> {
    let steps = step_count(t_final, integrator.dt())?;
    let stride = stride.max(1);
    for (s, c) in initial.iter().enumerate() {
        if s >= integrator.species.len() || c.len() != integrator.species[s].space.dim() {
            return invalid(format!("initial coefficients of species {s} do not match the space"));
        }
        if !all_finite(c) {
            return Err(Error::Integration { step: 0, reason: "non-finite initial state".into() });
        }
    }
    let mut state = StepperState { t: 0.0, step: 0, coeffs: initial };
    hook(&state, integrator)?;
    let mut out = vec![state.clone()];
    for n in 1..=steps {
        state = integrator.step(&state)?;
        hook(&state, integrator)?;
        if n % stride == 0 || n == steps {
            out.push(state.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Side;

    fn scalar_ops(m: f64, a: f64) -> CoarseOperators {
        CoarseOperators {
            mass: Mat::from_fn(1, 1, |_, _| m),
            stiffness: Mat::from_fn(1, 1, |_, _| a),
            convection: Mat::zeros(1, 1),
        }
    }

    #[test]
    fn scalar_decay_is_exact() {
        let ops = scalar_ops(1.0, 3.0);
        let llt = ops.mass.llt(Side::Lower).unwrap();
        let pencil = CoarsePencil::new(&ops, &llt);
        let dt = 0.1;
        let p = pencil.build_propagator(dt, 0.0).unwrap();
        let c = pencil.step_with_load(&p, &[2.0], &[0.0], 0.0);
        assert!((c[0] - 2.0 * (-0.3f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn constant_source_is_exact() {
        let (lam, r, u0) = (2.5, 0.7, 1.3);
        let ops = scalar_ops(1.0, lam);
        let llt = ops.mass.llt(Side::Lower).unwrap();
        let pencil = CoarsePencil::new(&ops, &llt);
        let dt = 0.05;
        let p = pencil.build_propagator(dt, 0.0).unwrap();
        let mut c = vec![u0];
        for _ in 0..100 {
            c = pencil.step_with_load(&p, &c, &[r], 0.0);
        }
        let t = 100.0 * dt;
        let exact = (u0 - r / lam) * (-lam * t).exp() + r / lam;
        assert!((c[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn small_step_limit() {
        let ops = CoarseOperators {
            mass: Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 }),
            stiffness: Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { -1.0 }),
            convection: Mat::from_fn(3, 3, |i, j| (i as f64) - (j as f64)),
        };
        let llt = ops.mass.llt(Side::Lower).unwrap();
        let dt = 1e-8;
        let p = CoarsePencil::new(&ops, &llt).build_propagator(dt, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((p[(i, j)] / dt - id).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn step_count_checks_integrality() {
        assert_eq!(step_count(0.25, 1.0 / 256.0).unwrap(), 64);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(0.25, 0.1).is_err());
    }
}
