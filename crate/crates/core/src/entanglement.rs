//! Bipartite von Neumann entropy of permutation-symmetric states.
//!
//! Splitting N emitters into blocks of n_b and n_a = N − n_b, each Dicke
//! state factorizes as
//! |m⟩ = Σ_l √(C(n_b,l) C(n_a,m−l) / C(N,m)) |l⟩_B |m−l⟩_A,
//! so a symmetric state Σ c_m |m⟩ has coefficient matrix
//! C_{l,k} = c_{l+k} √(C(n_b,l) C(n_a,k) / C(N,l+k)) between the two
//! blocks' own Dicke bases. Its singular values give the entropy.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_eigenvalues_with, EigenWork};

/// Eigenvalues at or below this are dropped from −Σ λ log₂ λ.
pub const EIGEN_FLOOR: f64 = 1e-15;
const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricState {
    pub n: usize,
    /// Amplitudes over |m⟩, m = 0..=N excitations.
    pub amps: Vec<Complex64>,
}

impl SymmetricState {
    /// Checked constructor: the amplitudes must already be normalized.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return domain("state needs at least one amplitude");
        }
        let s = Self {
            n: amps.len() - 1,
            amps,
        };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return domain(format!("state is not normalized (norm² = {norm})"));
        }
        Ok(s)
    }

    /// Rescale arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || amps.is_empty() {
            return domain("cannot normalize a zero or non-finite state");
        }
        Ok(Self {
            n: amps.len() - 1,
            amps: amps.into_iter().map(|z| z / norm).collect(),
        })
    }

    pub fn dicke(n: usize, m: usize) -> Result<Self> {
        if m > n {
            return domain(format!("Dicke index m={m} exceeds n={n}"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n + 1];
        amps[m] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Coherent spin state ⊗(cos(θ/2)|e⟩ + e^{iφ} sin(θ/2)|g⟩); θ = 0 is the
    /// fully inverted state.
    pub fn coherent(n: usize, theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        let ln_binom = LnBinomial::new(n);
        let amps = (0..=n)
            .map(|m| {
                let mag =
                    (0.5 * ln_binom.get(n, m)).exp() * c.powi(m as i32) * s.powi((n - m) as i32);
                Complex64::from_polar(mag, phi * (n - m) as f64)
            })
            .collect();
        Self { n, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bipartition {
    pub n: usize,
    pub n_b: usize,
}

impl Bipartition {
    pub fn new(n: usize, n_b: usize) -> Result<Self> {
        if n < 2 || n_b == 0 || n_b >= n {
            return domain(format!(
                "bipartition needs 1 <= n_b <= n-1, got n={n}, n_b={n_b}"
            ));
        }
        Ok(Self { n, n_b })
    }

    /// n_b = ⌊N/2⌋.
    pub fn half(n: usize) -> Result<Self> {
        Self::new(n, n / 2)
    }

    pub fn n_a(&self) -> usize {
        self.n - self.n_b
    }
}

/// ln C(n, k) from a table of ln k!.
#[derive(Clone, Debug)]
pub(crate) struct LnBinomial {
    ln_fact: Vec<f64>,
}

impl LnBinomial {
    pub(crate) fn new(n: usize) -> Self {
        let mut ln_fact = Vec::with_capacity(n + 1);
        ln_fact.push(0.0);
        for k in 1..=n {
            ln_fact.push(ln_fact[k - 1] + (k as f64).ln());
        }
        Self { ln_fact }
    }

    pub(crate) fn get(&self, n: usize, k: usize) -> f64 {
        self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k]
    }
}

/// Schmidt spectrum of |m⟩: s_β = C(n_b,β) C(N−n_b,m−β) / C(N,m), β = 0..=n_b.
pub fn dicke_schmidt_probs(n: usize, m: usize, n_b: usize) -> Result<Vec<f64>> {
    let part = Bipartition::new(n, n_b)?;
    if m > n {
        return domain(format!("Dicke index m={m} exceeds n={n}"));
    }
    let lb = LnBinomial::new(n);
    let n_a = part.n_a();
    Ok((0..=n_b)
        .map(|beta| {
            if beta > m || m - beta > n_a {
                0.0
            } else {
                (lb.get(n_b, beta) + lb.get(n_a, m - beta) - lb.get(n, m)).exp()
            }
        })
        .collect())
}

/// −Σ p log₂ p over entries above the floor.
pub fn shannon_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > EIGEN_FLOOR)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

pub fn entropy_dicke(n: usize, m: usize, n_b: usize) -> Result<f64> {
    Ok(shannon_bits(&dicke_schmidt_probs(n, m, n_b)?))
}

/// Precomputed √(C(n_b,l) C(n_a,k) / C(N,l+k)) for one bipartition.
#[derive(Clone, Debug)]
pub struct SchmidtKernel {
    pub part: Bipartition,
    /// Row-major (n_b+1) × (n_a+1).
    weights: Vec<f64>,
}

impl SchmidtKernel {
    pub fn new(part: Bipartition) -> Self {
        let (n, n_b, n_a) = (part.n, part.n_b, part.n_a());
        let lb = LnBinomial::new(n);
        let mut weights = Vec::with_capacity((n_b + 1) * (n_a + 1));
        for l in 0..=n_b {
            for k in 0..=n_a {
                weights.push((0.5 * (lb.get(n_b, l) + lb.get(n_a, k) - lb.get(n, l + k))).exp());
            }
        }
        Self { part, weights }
    }

    pub fn dim_b(&self) -> usize {
        self.part.n_b + 1
    }

    fn dim_a(&self) -> usize {
        self.part.n_a() + 1
    }

    /// Coefficient matrix C_{l,k} (row-major, (n_b+1) × (n_a+1)).
    pub fn coefficients(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let da = self.dim_a();
        self.weights
            .iter()
            .enumerate()
            .map(|(idx, &w)| amps[idx / da + idx % da] * w)
            .collect()
    }

    /// Reduced density matrix of block B, ρ_B = C C† (row-major).
    pub fn reduced_b(&self, amps: &[Complex64]) -> Vec<Complex64> {
        gram(
            &self.coefficients(amps),
            &self.coefficients(amps),
            self.dim_b(),
            self.dim_a(),
        )
    }

    /// Entropy in bits of the (unnormalized) state `amps`, scaled by its norm.
    pub fn entropy_of(&self, amps: &[Complex64]) -> f64 {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if norm <= 0.0 {
            return 0.0;
        }
        let mut rho = self.reduced_b(amps);
        let inv = 1.0 / norm;
        rho.iter_mut().for_each(|z| *z *= inv);
        entropy_of_density(&mut rho, self.dim_b())
    }
}

/// X Y† for row-major X, Y of shape rows × cols.
pub(crate) fn gram(x: &[Complex64], y: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut g = vec![Complex64::new(0.0, 0.0); rows * rows];
    for i in 0..rows {
        let xi = &x[i * cols..(i + 1) * cols];
        for j in 0..rows {
            let yj = &y[j * cols..(j + 1) * cols];
            g[i * rows + j] = xi.iter().zip(yj).map(|(a, b)| a * b.conj()).sum();
        }
    }
    g
}

/// Entropy in bits of a unit-trace density matrix (overwritten).
pub(crate) fn entropy_of_density(rho: &mut [Complex64], dim: usize) -> f64 {
    shannon_bits(&hermitian_eigenvalues(rho, dim))
}

pub(crate) fn entropy_of_density_with(
    rho: &mut [Complex64],
    dim: usize,
    work: &mut EigenWork,
) -> f64 {
    shannon_bits(hermitian_eigenvalues_with(rho, dim, work))
}

pub fn entropy_symmetric(state: &SymmetricState, part: &Bipartition) -> Result<f64> {
    check_state(state, part)?;
    Ok(SchmidtKernel::new(*part).entropy_of(&state.amps))
}

fn check_state(state: &SymmetricState, part: &Bipartition) -> Result<()> {
    if state.amps.len() != state.n + 1 || state.n != part.n {
        return domain(format!(
            "state of {} emitters does not match bipartition of {}",
            state.n, part.n
        ));
    }
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return domain(format!("state is not normalized (norm² = {norm})"));
    }
    Ok(())
}

pub const BRUTE_FORCE_MAX_N: usize = 12;

/// Entropy by expanding into the full 2^N product basis and tracing out
/// block A literally. Exponential cost; a test oracle.
pub fn brute_force_entropy(state: &SymmetricState, part: &Bipartition) -> Result<f64> {
    if state.n > BRUTE_FORCE_MAX_N {
        return Err(Error::Capacity(format!(
            "brute-force entropy needs n <= {BRUTE_FORCE_MAX_N}, got {}",
            state.n
        )));
    }
    check_state(state, part)?;
    let n = state.n;
    let lb = LnBinomial::new(n);
    // Block B = lowest n_b bits, block A = the rest.
    let dim_b = 1usize << part.n_b;
    let dim_a = 1usize << part.n_a();
    let mut psi = DMatrix::<Complex64>::zeros(dim_b, dim_a);
    for bits in 0..(1usize << n) {
        let m = bits.count_ones() as usize;
        let amp = state.amps[m] * (-0.5 * lb.get(n, m)).exp();
        psi[(bits & (dim_b - 1), bits >> part.n_b)] = amp;
    }
    let rho_b = &psi * psi.adjoint();
    let ev = rho_b.symmetric_eigenvalues();
    Ok(shannon_bits(ev.as_slice()))
}
