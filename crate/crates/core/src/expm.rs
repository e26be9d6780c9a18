//! Matrix exponential by scaling and squaring with a diagonal [13/13] Padé
//! approximant, generic over the working precision.
//!
//! The generator matrices used here are non-normal and can have repeated
//! eigenvalues, so no eigendecomposition is attempted.

use crate::dd::Real;
use crate::error::Result;
use crate::linalg::{Lu, Matrix};

const DEGREE: usize = 13;

/// Coefficients c_k = (2m-k)! m! / ((2m)! k! (m-k)!) of the [m/m] Padé
/// numerator, computed by recurrence in the working precision.
fn pade_coefficients<T: Real>(m: usize) -> Vec<T> {
    let mut c = Vec::with_capacity(m + 1);
    c.push(T::one());
    for k in 1..=m {
        let prev = c[k - 1];
        let num = T::from_f64((m - k + 1) as f64);
        let den = T::from_f64(((2 * m - k + 1) * k) as f64);
        c.push(prev * num / den);
    }
    c
}

/// `exp(a)` for a square matrix.
pub fn expm<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(a.clone());
    }

    let norm = a.norm1();
    let squarings = if norm > T::PADE13_THETA {
        (norm / T::PADE13_THETA).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(T::from_f64(2f64.powi(-squarings)));

    let c = pade_coefficients::<T>(DEGREE);
    let ident = Matrix::identity(n);
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    // U = A [A6 (c13 A6 + c11 A4 + c9 A2) + c7 A6 + c5 A4 + c3 A2 + c1 I]
    let inner_u = a6.scale(c[13]).add_scaled(c[11], &a4).add_scaled(c[9], &a2);
    let u_poly = a6
        .matmul(&inner_u)
        .add_scaled(c[7], &a6)
        .add_scaled(c[5], &a4)
        .add_scaled(c[3], &a2)
        .add_scaled(c[1], &ident);
    let u = scaled.matmul(&u_poly);

    // V = A6 (c12 A6 + c10 A4 + c8 A2) + c6 A6 + c4 A4 + c2 A2 + c0 I
    let inner_v = a6.scale(c[12]).add_scaled(c[10], &a4).add_scaled(c[8], &a2);
    let v = a6
        .matmul(&inner_v)
        .add_scaled(c[6], &a6)
        .add_scaled(c[4], &a4)
        .add_scaled(c[2], &a2)
        .add_scaled(c[0], &ident);

    let p = v.add_scaled(T::one(), &u);
    let q = v.add_scaled(-T::one(), &u);
    let mut r = Lu::factor(&q)?.solve_matrix(&p)?;

    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}
