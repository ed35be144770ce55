//! Backward-Euler fine-grid reference solver with nodewise Newton.

use super::exponential::step_count;
use super::reaction::Reaction;
use crate::assembly::{FineOperators, Modulation};
use crate::error::{invalid, Error, Result};
use crate::exec::Threading;
use crate::sparse::{norm2, BandedLu, CsrMatrix};

/// One species of the fine problem.
#[derive(Clone, Copy)]
pub struct ReferenceSpecies<'a> {
    pub fine: &'a FineOperators,
    pub modulation: Modulation,
    pub lift: f64,
    pub convective: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ReferenceOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Backward-Euler substeps per output step.
    pub substeps: usize,
    /// Keep every `stride`-th output step; the last step is always kept.
    pub stride: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub threading: Threading,
}

impl ReferenceOptions {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self { dt, t_final, substeps: 1, stride: 1, newton_tol: 1e-10, max_newton: 25, threading: Threading::default() }
    }
}

/// Full fine-node fields at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FineSnapshot {
    pub t: f64,
    pub step: usize,
    pub fields: Vec<Vec<f64>>,
}

#[derive(Default)]
struct SpeciesCache {
    /// `(g bits, M + τ(A + gC))`
    base: Option<(u64, CsrMatrix)>,
    /// Reaction derivative the current factor was built with.
    factor: Option<(Vec<f64>, BandedLu)>,
}

/// Newton statistics of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NewtonStats {
    pub solves: usize,
    pub factorizations: usize,
    pub max_iterations: usize,
}

/// Integrates `M u' + (A + g(t)C)u = M R(u)` with backward Euler.
///
/// `u0` holds full fine-node fields; boundary nodes stay at each species' lift.
pub fn backward_euler_reference(
    species: &[ReferenceSpecies<'_>],
    reaction: &Reaction,
    u0: Vec<Vec<f64>>,
    opts: &ReferenceOptions,
) -> Result<(Vec<FineSnapshot>, NewtonStats)> {
    let ns = species.len();
    if ns == 0 || ns != reaction.num_species() || u0.len() != ns {
        return invalid(format!(
            "reaction has {} species, got {ns} operators and {} initial fields",
            reaction.num_species(),
            u0.len()
        ));
    }
    reaction.model.validate()?;
    let grid = &species[0].fine.grid;
    if species.iter().any(|s| s.fine.grid != *grid) || u0.iter().any(|u| u.len() != grid.num_nodes()) {
        return invalid("species fields must live on one fine grid");
    }
    let steps = step_count(opts.t_final, opts.dt)?;
    let sub = opts.substeps.max(1);
    let tau = opts.dt / sub as f64;
    let stride = opts.stride.max(1);

    // free unknowns relative to the lift
    let mut w: Vec<Vec<f64>> = species
        .iter()
        .zip(&u0)
        .map(|(s, u)| s.fine.free.restrict(u).iter().map(|v| v - s.lift).collect())
        .collect();
    let fields = |w: &[Vec<f64>]| -> Vec<Vec<f64>> {
        species
            .iter()
            .zip(w)
            .map(|(s, wf)| s.fine.free.extend(wf, 0.0).into_iter().map(|v| v + s.lift).collect())
            .collect()
    };
    let mut stats = NewtonStats::default();
    let mut caches: Vec<SpeciesCache> = (0..ns).map(|_| SpeciesCache::default()).collect();
    let mut out = vec![FineSnapshot { t: 0.0, step: 0, fields: fields(&w) }];

    for n in 1..=steps {
        for k in 1..=sub {
            let t1 = (n - 1) as f64 * opts.dt + k as f64 * tau;
            let history: Vec<Vec<f64>> = species.iter().zip(&w).map(|(s, wf)| s.fine.mass_ff.mul_vec(wf)).collect();
            for (s, sp) in species.iter().enumerate() {
                let g = if sp.convective { sp.modulation.eval(t1) } else { 0.0 };
                let stale = caches[s].base.as_ref().map_or(true, |(bits, _)| *bits != g.to_bits());
                if stale {
                    let op = sp.fine.stiffness_ff.lin_comb(1.0, &sp.fine.convection_ff, g);
                    let base = sp.fine.mass_ff.lin_comb(1.0, &op, tau);
                    caches[s].base = Some((g.to_bits(), base));
                    caches[s].factor = None;
                }
            }
            let mut iters = 0;
            loop {
                let u = fields(&w);
                let r = reaction.eval_nodes(grid, t1, &u, opts.threading);
                let mut residuals = Vec::with_capacity(ns);
                let mut converged = true;
                let mut worst = 0.0f64;
                for (s, sp) in species.iter().enumerate() {
                    let base = &caches[s].base.as_ref().expect("base operator").1;
                    let bw = base.mul_vec(&w[s]);
                    let mr = sp.fine.mass_fa.mul_vec(&r[s]);
                    let f: Vec<f64> =
                        (0..w[s].len()).map(|i| bw[i] - history[s][i] - tau * mr[i]).collect();
                    let scale = norm2(&bw) + norm2(&history[s]) + tau * norm2(&mr);
                    let fnorm = norm2(&f);
                    if !fnorm.is_finite() {
                        return Err(Error::Integration { step: n, reason: "non-finite Newton residual".into() });
                    }
                    let rel = if scale > 0.0 { fnorm / scale } else { 0.0 };
                    worst = worst.max(rel);
                    converged &= rel <= opts.newton_tol;
                    residuals.push(f);
                }
                if converged {
                    break;
                }
                if iters == opts.max_newton {
                    return Err(Error::Integration {
                        step: n,
                        reason: format!("Newton did not converge in {iters} iterations (relative residual {worst:e})"),
                    });
                }
                let dr = reaction.diag_derivative_nodes(&u, opts.threading);
                for (s, sp) in species.iter().enumerate() {
                    let d: Vec<f64> = sp.fine.free.restrict(&dr[s]);
                    let cache = &mut caches[s];
                    let reuse = cache.factor.as_ref().map_or(false, |(d0, _)| *d0 == d);
                    if !reuse {
                        let base = &cache.base.as_ref().expect("base operator").1;
                        let jac = base.lin_comb(1.0, &sp.fine.mass_ff.scale_columns(&d), -tau);
                        let lu = BandedLu::factor(&jac)
                            .map_err(|e| Error::Integration { step: n, reason: e.to_string() })?;
                        stats.factorizations += 1;
                        cache.factor = Some((d, lu));
                    }
                    let lu = &cache.factor.as_ref().expect("factor").1;
                    let delta = lu.solve(&residuals[s]);
                    w[s].iter_mut().zip(&delta).for_each(|(x, dx)| *x -= dx);
                    stats.solves += 1;
                }
                iters += 1;
            }
            stats.max_iterations = stats.max_iterations.max(iters);
        }
        if n % stride == 0 || n == steps {
            out.push(FineSnapshot { t: n as f64 * opts.dt, step: n, fields: fields(&w) });
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{interpolate, CoefficientField, VelocityField};
    use crate::grid::{Rect, StructuredGrid2D};
    use crate::integrate::reaction::ReactionModel;

    #[test]
    fn pure_diffusion_decays() {
        let grid = StructuredGrid2D::new(Rect::unit(), 8, 8).unwrap();
        let k = CoefficientField::constant(&grid, 1.0).unwrap();
        let ops = FineOperators::assemble(&grid, &k, &VelocityField::zero()).unwrap();
        let u0 = interpolate(&grid, |x, y| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin());
        let sp = ReferenceSpecies { fine: &ops, modulation: Modulation::Constant, lift: 0.0, convective: false };
        let (traj, stats) =
            backward_euler_reference(&[sp], &ReactionModel::zero(1).into(), vec![u0], &ReferenceOptions::new(0.01, 0.1))
                .unwrap();
        assert_eq!(traj.len(), 11);
        let norms: Vec<f64> = traj.iter().map(|s| ops.mass.bilinear(&s.fields[0], &s.fields[0])).collect();
        assert!(norms.windows(2).all(|p| p[1] < p[0]));
        // linear problem: one factorization, one solve per step
        assert_eq!(stats.factorizations, 1);
        assert_eq!(stats.max_iterations, 1);
    }

    #[test]
    fn allen_cahn_keeps_lifted_constant() {
        let grid = StructuredGrid2D::new(Rect::unit(), 6, 6).unwrap();
        let k = CoefficientField::constant(&grid, 1.0).unwrap();
        let ops = FineOperators::assemble(&grid, &k, &VelocityField::zero()).unwrap();
        let sp = ReferenceSpecies { fine: &ops, modulation: Modulation::Constant, lift: 1.0, convective: false };
        let (traj, _) = backward_euler_reference(
            &[sp],
            &ReactionModel::AllenCahn { eps: 0.1 }.into(),
            vec![vec![1.0; grid.num_nodes()]],
            &ReferenceOptions::new(0.01, 0.05),
        )
        .unwrap();
        assert!(traj.last().unwrap().fields[0].iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
