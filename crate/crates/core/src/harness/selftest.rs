//! Quick property checks runnable from the CLI.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::presets::{build_kappa, KappaSpec};
use crate::edgebasis::EdgeSpace;
use crate::exec::Threading;
use crate::grid::{CoarseDecomposition, Rect, StructuredGrid2D};
use crate::integrate::{exp_phi1, CoarsePencil};
use crate::msspace::CoarseOperators;
use crate::pou::assemble_pou;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn frob(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

fn phi_identity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=30);
        let x = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * 4.0 / (n as f64).sqrt());
        let Ok(r) = exp_phi1(x.as_ref()) else {
            return check("phi1 identity", false, "evaluation failed".into());
        };
        let lhs = &x * &r.phi1;
        let rhs = Mat::from_fn(n, n, |i, j| r.exp[(i, j)] - if i == j { 1.0 } else { 0.0 });
        let diff = &lhs - &rhs;
        worst = worst.max(frob(&diff) / frob(&rhs).max(1e-300));
    }
    check("phi1 identity X·phi1(X) = e^X - I", worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

fn pou_partition(seed: u64) -> Check {
    let run = || -> crate::error::Result<f64> {
        let d = CoarseDecomposition::new(StructuredGrid2D::new(Rect::unit(), 4, 4)?, 8)?;
        let spec = KappaSpec::RandomLogUniform { contrast: 1e4, cells: 16, seed: None };
        let k = build_kappa(&spec, &d.fine, seed, std::path::Path::new("."))?;
        let pou = assemble_pou(&d, &k, Threading::default())?;
        Ok(pou.sum(&d.fine).iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs())))
    };
    match run() {
        Ok(dev) => check("partition of unity sums to one", dev <= 1e-10, format!("max deviation {dev:.2e}")),
        Err(e) => check("partition of unity sums to one", false, e.to_string()),
    }
}

fn edge_dimensions() -> Check {
    let run = || -> crate::error::Result<bool> {
        let d = CoarseDecomposition::new(StructuredGrid2D::new(Rect::unit(), 4, 4)?, 8)?;
        let i = d.coarse.node_index(2, 2);
        let mut ok = true;
        for l in 0..=3 {
            ok &= EdgeSpace::build(&d, i, l)?.dim() == 1 << (l + 2);
        }
        Ok(ok)
    };
    match run() {
        Ok(ok) => check("edge space dimension 2^(l+2)", ok, "levels 0..=3".into()),
        Err(e) => check("edge space dimension 2^(l+2)", false, e.to_string()),
    }
}

fn affine_exactness() -> Check {
    let (lam, r, u0, dt) = (2.0, 0.5, 1.0, 0.05);
    let ops = CoarseOperators {
        mass: Mat::from_fn(1, 1, |_, _| 1.0),
        stiffness: Mat::from_fn(1, 1, |_, _| lam),
        convection: Mat::zeros(1, 1),
    };
    let Ok(llt) = ops.mass.llt(Side::Lower) else {
        return check("exponential Euler affine exactness", false, "factorization".into());
    };
    let pencil = CoarsePencil::new(&ops, &llt);
    let Ok(p) = pencil.build_propagator(dt, 0.0) else {
        return check("exponential Euler affine exactness", false, "propagator".into());
    };
    let mut c = vec![u0];
    for _ in 0..100 {
        c = pencil.step_with_load(&p, &c, &[r], 0.0);
    }
    let exact = (u0 - r / lam) * (-lam * 100.0 * dt).exp() + r / lam;
    let err = (c[0] - exact).abs();
    check("exponential Euler affine exactness", err <= 1e-12, format!("error {err:.2e} after 100 steps"))
}

pub fn run_selftest(seed: u64) -> Vec<Check> {
    vec![phi_identity(seed), pou_partition(seed), edge_dimensions(), affine_exactness()]
}
