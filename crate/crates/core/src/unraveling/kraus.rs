//! Kraus pairs for one time step of collective decay and their unitary
//! remixing.
//!
//! Every operator involved is upper bidiagonal in the Dicke basis: it keeps
//! |m⟩ and moves weight to |m−1⟩, so it is stored as two coefficient vectors.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dicke::beta_sq_unchecked;
use crate::error::{domain, Result};

pub const MAX_DT_GAMMA: f64 = 1e-2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `(Xψ)_m = diag[m] ψ_m + sub[m] ψ_{m+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidiagonalOp {
    pub diag: Vec<Complex64>,
    /// Coefficient of |m+1⟩ → |m⟩, length N.
    pub sub: Vec<Complex64>,
}

impl BidiagonalOp {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let n = self.diag.len() - 1;
        for m in 0..n {
            out[m] = self.diag[m] * psi[m] + self.sub[m] * psi[m + 1];
        }
        out[n] = self.diag[n] * psi[n];
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(psi, &mut out);
        out
    }

    fn combine(a: Complex64, x: &Self, b: Complex64, y: &Self) -> Self {
        Self {
            diag: x
                .diag
                .iter()
                .zip(&y.diag)
                .map(|(p, q)| a * p + b * q)
                .collect(),
            sub: x
                .sub
                .iter()
                .zip(&y.sub)
                .map(|(p, q)| a * p + b * q)
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                self.diag[i]
            } else if j == i + 1 {
                self.sub[i]
            } else {
                ZERO
            }
        })
    }
}

/// Collective lowering-type jump operator L|m⟩ = √(β²_m/2) |m−1⟩.
pub fn jump_operator(n: usize) -> BidiagonalOp {
    BidiagonalOp {
        diag: vec![ZERO; n + 1],
        sub: (1..=n)
            .map(|m| Complex64::new((0.5 * beta_sq_unchecked::<f64>(m, n)).sqrt(), 0.0))
            .collect(),
    }
}

/// Collective spin lowering S⁻|m⟩ = √(m(N−m+1)) |m−1⟩.
pub fn spin_lowering(n: usize) -> BidiagonalOp {
    BidiagonalOp {
        diag: vec![ZERO; n + 1],
        sub: (1..=n)
            .map(|m| Complex64::new(((m * (n + 1 - m)) as f64).sqrt(), 0.0))
            .collect(),
    }
}

/// u(θ, φ) = [[cosθ e^{iφ}, sinθ e^{−iφ}], [−sinθ e^{iφ}, cosθ e^{−iφ}]].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingUnitary {
    pub theta_f: f64,
    pub phi_f: f64,
    pub entries: [[Complex64; 2]; 2],
}

impl MixingUnitary {
    pub fn new(theta_f: f64, phi_f: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta_f) || !phi_f.is_finite() {
            return domain(format!(
                "mixing angles out of range: theta_f={theta_f}, phi_f={phi_f}"
            ));
        }
        Ok(Self::from_angles(theta_f, phi_f))
    }

    pub(crate) fn from_angles(theta_f: f64, phi_f: f64) -> Self {
        let (s, c) = theta_f.sin_cos();
        let e = Complex64::from_polar(1.0, phi_f);
        let ec = e.conj();
        Self {
            theta_f,
            phi_f,
            entries: [[e * c, ec * s], [-e * s, ec * c]],
        }
    }

    pub fn identity() -> Self {
        Self::from_angles(0.0, 0.0)
    }

    /// max |(u†u − 1)_{ij}|
    pub fn unitarity_defect(&self) -> f64 {
        let u = &self.entries;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let s: Complex64 = (0..2).map(|k| u[k][i].conj() * u[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - want).norm());
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausPair {
    pub f0: BidiagonalOp,
    pub f1: BidiagonalOp,
    pub dt: f64,
    /// Angles of the last remixing; `None` for the bare pair.
    pub mixing: Option<(f64, f64)>,
}

impl KrausPair {
    pub fn n(&self) -> usize {
        self.f0.dim() - 1
    }

    /// Σ_k F_k ρ F_k†.
    pub fn channel(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let a = self.f0.to_dense();
        let b = self.f1.to_dense();
        &a * rho * a.adjoint() + &b * rho * b.adjoint()
    }

    /// Σ_k F_k† F_k.
    pub fn completeness(&self) -> DMatrix<Complex64> {
        let a = self.f0.to_dense();
        let b = self.f1.to_dense();
        a.adjoint() * &a + b.adjoint() * &b
    }
}

/// E₀ = 1 − dtΓ L†L, E₁ = √(2dtΓ) L.
pub fn kraus_naive(n: usize, gamma: f64, dt: f64) -> Result<KrausPair> {
    if n == 0 {
        return domain("kraus_naive needs n >= 1");
    }
    let x = dt * gamma;
    if !(x > 0.0 && x <= MAX_DT_GAMMA) {
        return domain(format!("dt*gamma must lie in (0, {MAX_DT_GAMMA}], got {x}"));
    }
    let rates: Vec<f64> = (0..=n)
        .map(|m| x * beta_sq_unchecked::<f64>(m, n))
        .collect();
    let f0 = BidiagonalOp {
        diag: rates
            .iter()
            .map(|r| Complex64::new(1.0 - 0.5 * r, 0.0))
            .collect(),
        sub: vec![ZERO; n],
    };
    let f1 = BidiagonalOp {
        diag: vec![ZERO; n + 1],
        sub: rates[1..]
            .iter()
            .map(|r| Complex64::new(r.sqrt(), 0.0))
            .collect(),
    };
    Ok(KrausPair {
        f0,
        f1,
        dt,
        mixing: None,
    })
}

/// F_n = Σ_k u_nk E_k.
pub fn remix(pair: &KrausPair, u: &MixingUnitary) -> Result<KrausPair> {
    let defect = u.unitarity_defect();
    if !(defect <= 1e-12) {
        return domain(format!(
            "mixing matrix is not unitary (defect {defect:.3e})"
        ));
    }
    Ok(remix_unchecked(pair, u))
}

pub(crate) fn remix_unchecked(pair: &KrausPair, u: &MixingUnitary) -> KrausPair {
    let e = &u.entries;
    KrausPair {
        f0: BidiagonalOp::combine(e[0][0], &pair.f0, e[0][1], &pair.f1),
        f1: BidiagonalOp::combine(e[1][0], &pair.f0, e[1][1], &pair.f1),
        dt: pair.dt,
        mixing: Some((u.theta_f, u.phi_f)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let g = DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let r = &g * g.adjoint();
        let tr = r.trace();
        r / tr
    }

    fn expect(op: &BidiagonalOp, psi: &[Complex64]) -> f64 {
        op.apply(psi).iter().map(|z| z.norm_sqr()).sum()
    }

    #[test]
    fn jump_probabilities() {
        let (n, gamma, dt) = (9, 1.3, 1e-3);
        let pair = kraus_naive(n, gamma, dt).unwrap();
        let mut top = vec![ZERO; n + 1];
        top[n] = Complex64::new(1.0, 0.0);
        assert!((expect(&pair.f1, &top) - dt * gamma).abs() < 1e-18);
        let mut bottom = vec![ZERO; n + 1];
        bottom[0] = Complex64::new(1.0, 0.0);
        assert_eq!(expect(&pair.f1, &bottom), 0.0);
    }

    #[test]
    fn completeness_is_second_order() {
        let (n, gamma, dt) = (8, 1.0, 1e-3);
        let pair = kraus_naive(n, gamma, dt).unwrap();
        let c = pair.completeness();
        let l = jump_operator(n).to_dense();
        let ltl = l.adjoint() * &l;
        // Σ E†E − 1 = (dtΓ)² (L†L)² exactly
        let want = &ltl * &ltl * Complex64::new((dt * gamma).powi(2), 0.0);
        let defect = c - DMatrix::identity(n + 1, n + 1);
        assert!((&defect - &want).norm() < 1e-15);
        assert!(defect.norm() < 10.0 * (dt * gamma).powi(2));
    }

    #[test]
    fn naive_pair_matches_jump_operator() {
        let (n, gamma, dt) = (6, 0.7, 5e-3);
        let pair = kraus_naive(n, gamma, dt).unwrap();
        let l = jump_operator(n).to_dense();
        let e0 =
            DMatrix::identity(n + 1, n + 1) - l.adjoint() * &l * Complex64::new(dt * gamma, 0.0);
        let e1 = &l * Complex64::new((2.0 * dt * gamma).sqrt(), 0.0);
        assert!((pair.f0.to_dense() - e0).norm() < 1e-15);
        assert!((pair.f1.to_dense() - e1).norm() < 1e-15);
        // S⁻ = √(2N) L
        let s = spin_lowering(n).to_dense();
        assert!((s - l * Complex64::new((2.0 * n as f64).sqrt(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn dt_range_enforced() {
        assert!(kraus_naive(4, 1.0, 0.0).is_err());
        assert!(kraus_naive(4, 1.0, 0.02).is_err());
        assert!(kraus_naive(4, 2.0, 0.01).is_err());
        assert!(kraus_naive(4, 1.0, 0.01).is_ok());
        assert!(kraus_naive(0, 1.0, 0.001).is_err());
    }

    #[test]
    fn identity_mixing_leaves_pair_unchanged() {
        let pair = kraus_naive(5, 1.0, 1e-3).unwrap();
        let r = remix(&pair, &MixingUnitary::identity()).unwrap();
        assert_eq!(r.f0, pair.f0);
        assert_eq!(r.f1, pair.f1);
    }

    #[test]
    fn non_unitary_mixing_rejected() {
        let pair = kraus_naive(5, 1.0, 1e-3).unwrap();
        let mut u = MixingUnitary::identity();
        u.entries[0][1] = Complex64::new(0.1, 0.0);
        assert!(remix(&pair, &u).is_err());
        assert!(MixingUnitary::new(2.0, 0.0).is_err());
    }

    #[test]
    fn remixed_phase_shift_by_pi_flips_sign() {
        let pair = kraus_naive(5, 1.0, 1e-3).unwrap();
        let a = remix(&pair, &MixingUnitary::new(0.6, 0.4).unwrap()).unwrap();
        let b = remix(&pair, &MixingUnitary::new(0.6, 0.4 + PI).unwrap()).unwrap();
        assert!((a.f0.to_dense() + b.f0.to_dense()).norm() < 1e-14);
        assert!((a.f1.to_dense() + b.f1.to_dense()).norm() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn mixing_is_unitary(theta in 0.0..=FRAC_PI_2, phi in 0.0..2.0 * PI) {
            prop_assert!(MixingUnitary::new(theta, phi).unwrap().unitarity_defect() < 1e-14);
        }

        #[test]
        fn remix_preserves_channel(n in 1usize..=10, theta in 0.0..=FRAC_PI_2, phi in 0.0..2.0 * PI, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(n + 1, &mut rng);
            let pair = kraus_naive(n, 1.0, 1e-2).unwrap();
            let mixed = remix(&pair, &MixingUnitary::new(theta, phi).unwrap()).unwrap();
            prop_assert!((pair.channel(&rho) - mixed.channel(&rho)).camax() < 1e-12);
            prop_assert!((pair.completeness() - mixed.completeness()).camax() < 1e-12);
        }
    }
}
