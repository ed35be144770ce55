//! Matrix exponential and `φ₁(X) = X⁻¹(e^X − I)` by degree-13 Padé with
//! scaling and squaring.
//!
//! The Padé approximant `r(Y) = q(Y)⁻¹p(Y)` is applied to the augmented matrix
//! `[[Y, I], [0, 0]]`. Writing the odd part of the numerator as `U = Y·U'`, the
//! top-right block of `r` is `q(Y)⁻¹·2U'`, so `X` is never inverted. Squaring
//! uses `φ₁(2Z) = ½(e^Z + I)·φ₁(Z)`.

use faer::prelude::*;
use faer::Mat;

use crate::error::{invalid, Result};

/// Padé-13 coefficients `b_0..b_13`.
const B: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// 1-norm bound for which the Padé-13 approximant is accurate to unit roundoff.
pub const THETA_13: f64 = 5.371_920_351_148_152;

/// Induced 1-norm (largest absolute column sum).
pub fn norm_1(x: MatRef<'_, f64>) -> f64 {
    (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Number of squarings so that `‖2^{-s}X‖₁ ≤ θ₁₃`.
pub fn squarings_for(norm: f64) -> u32 {
    if norm <= THETA_13 {
        0
    } else {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    }
}

/// `e^X` and `φ₁(X)` together.
#[derive(Clone, Debug)]
pub struct ExpPhi {
    pub exp: Mat<f64>,
    pub phi1: Mat<f64>,
    pub squarings: u32,
}

/// `a·X + b·Y + c·Z + d·I`
fn comb(a: f64, x: &Mat<f64>, b: f64, y: &Mat<f64>, c: f64, z: &Mat<f64>, d: f64) -> Mat<f64> {
    let n = x.nrows();
    Mat::from_fn(n, n, |i, j| {
        a * x[(i, j)] + b * y[(i, j)] + c * z[(i, j)] + if i == j { d } else { 0.0 }
    })
}

pub fn exp_phi1(x: MatRef<'_, f64>) -> Result<ExpPhi> {
    let n = x.nrows();
    if x.ncols() != n {
        return invalid("phi1 needs a square matrix");
    }
    for j in 0..n {
        for i in 0..n {
            if !x[(i, j)].is_finite() {
                return invalid(format!("non-finite entry at ({i}, {j})"));
            }
        }
    }
    if n == 0 {
        return Ok(ExpPhi { exp: Mat::zeros(0, 0), phi1: Mat::zeros(0, 0), squarings: 0 });
    }
    let s = squarings_for(norm_1(x));
    let scale = 0.5f64.powi(s as i32);
    let y = Mat::from_fn(n, n, |i, j| scale * x[(i, j)]);
    let y2 = &y * &y;
    let y4 = &y2 * &y2;
    let y6 = &y4 * &y2;

    let inner_u = comb(B[13], &y6, B[11], &y4, B[9], &y2, 0.0);
    let mut u_prime = &y6 * &inner_u;
    drop(inner_u);
    u_prime += comb(B[7], &y6, B[5], &y4, B[3], &y2, B[1]);

    let inner_v = comb(B[12], &y6, B[10], &y4, B[8], &y2, 0.0);
    let mut v = &y6 * &inner_v;
    drop(inner_v);
    v += comb(B[6], &y6, B[4], &y4, B[2], &y2, B[0]);
    drop((y2, y4, y6));

    let u = &y * &u_prime;
    drop(y);
    // q = V − U; solve q [E | F] = [V + U | 2U']
    let q = &v - &u;
    let mut rhs = Mat::<f64>::zeros(n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            rhs[(i, j)] = v[(i, j)] + u[(i, j)];
            rhs[(i, n + j)] = 2.0 * u_prime[(i, j)];
        }
    }
    drop((u, v, u_prime));
    let lu = q.partial_piv_lu();
    lu.solve_in_place(rhs.as_mut());
    let mut e = rhs.subcols(0, n).to_owned();
    let mut f = rhs.subcols(n, n).to_owned();
    drop(rhs);

    for _ in 0..s {
        let ef = &e * &f;
        f = Mat::from_fn(n, n, |i, j| 0.5 * (ef[(i, j)] + f[(i, j)]));
        e = &e * &e;
    }
    if !(0..n).all(|j| (0..n).all(|i| f[(i, j)].is_finite() && e[(i, j)].is_finite())) {
        return invalid("phi1 evaluation overflowed");
    }
    Ok(ExpPhi { exp: e, phi1: f, squarings: s })
}

/// `φ₁(X)` for a dense square matrix.
pub fn phi1_dense(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    exp_phi1(x).map(|r| r.phi1)
}

/// `e^X` for a dense square matrix.
pub fn expm(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    exp_phi1(x).map(|r| r.exp)
}
