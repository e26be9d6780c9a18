//! Population dynamics of collective decay restricted to the symmetric
//! Dicke states |m⟩, m = number of excited emitters.
//!
//! The master equation reduces to a birth-death chain that only moves
//! downwards: dρ_m/dt = Γ(β²_{m+1} ρ_{m+1} − β²_m ρ_m), β²_m = m(N−m+1)/N.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::Real;
use crate::error::{domain, Result};
use crate::expm::expm;
use crate::linalg::Matrix;
use crate::ode::{self, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_emitters: usize,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(n_emitters: usize, gamma: f64) -> Result<Self> {
        let p = Self { n_emitters, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_emitters == 0 {
            return domain("n_emitters must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return domain(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            ));
        }
        Ok(())
    }

    /// Burst time ln(N)/Γ.
    pub fn burst_time(&self) -> f64 {
        (self.n_emitters as f64).ln() / self.gamma
    }
}

/// β²_m = m(N−m+1)/N.
pub fn beta_sq(m: usize, n: usize) -> Result<f64> {
    if n == 0 || m > n {
        return domain(format!(
            "beta_sq needs 0 <= m <= n and n >= 1, got m={m}, n={n}"
        ));
    }
    Ok(beta_sq_unchecked::<f64>(m, n))
}

pub(crate) fn beta_sq_unchecked<T: Real>(m: usize, n: usize) -> T {
    // numerator is an exact integer well inside the f64 mantissa for any sane N
    T::from_f64((m * (n + 1 - m)) as f64) / T::from_f64(n as f64)
}

/// Bidiagonal generator: `diag[m]` is the loss rate out of |m⟩ (negative)
/// and `subflow[m]` the rate from |m+1⟩ into |m⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub n: usize,
    pub diag: Vec<f64>,
    pub subflow: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn to_matrix<T: Real>(&self) -> Matrix<T> {
        let mut d = Matrix::zeros(self.dim(), self.dim());
        for m in 0..=self.n {
            d[(m, m)] = T::from_f64(self.diag[m]);
        }
        for (m, &g) in self.subflow.iter().enumerate() {
            d[(m, m + 1)] = T::from_f64(g);
        }
        d
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..=self.n)
            .map(|m| self.diag[m] + if m > 0 { self.subflow[m - 1] } else { 0.0 })
            .collect()
    }

    /// y = D x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for m in 0..=self.n {
            let gain = if m < self.n {
                self.subflow[m] * x[m + 1]
            } else {
                0.0
            };
            y[m] = self.diag[m] * x[m] + gain;
        }
    }
}

pub fn build_generator(params: &ModelParams) -> Result<Generator> {
    params.validate()?;
    let n = params.n_emitters;
    let rates: Vec<f64> = (0..=n)
        .map(|m| params.gamma * beta_sq_unchecked::<f64>(m, n))
        .collect();
    Ok(Generator {
        n,
        diag: rates.iter().map(|r| -r).collect(),
        subflow: rates[1..].to_vec(),
    })
}

/// A_t = exp(D t), column-stochastic.
#[derive(Clone, Debug)]
pub struct EvolutionMatrix {
    pub entries: Matrix<f64>,
    pub time: f64,
}

pub fn evolution_matrix(gen: &Generator, t: f64) -> Result<EvolutionMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!(
            "evolution time must be finite and nonnegative, got {t}"
        ));
    }
    let entries = expm(&gen.to_matrix::<f64>().scale(t))?;
    Ok(EvolutionMatrix { entries, time: t })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickePopulations {
    /// Indexed by excitation number m = 0..=N.
    pub probs: Vec<f64>,
    pub time: f64,
}

impl DickePopulations {
    pub fn fully_inverted(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self { probs, time: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean_excitation(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| m as f64 * p)
            .sum()
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return domain("time grid is empty");
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return domain("time grid must contain finite nonnegative values");
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return domain("time grid must be sorted");
    }
    Ok(())
}

/// Exact populations from the fully inverted state.
///
/// Uses [`evolve_uniformized`]: every term of the series is nonnegative, so
/// the tiny populations of weakly occupied states keep full relative
/// accuracy, which the CSS solves depend on at early times.
pub fn evolve_exact(params: &ModelParams, t_grid: &[f64]) -> Result<Vec<DickePopulations>> {
    let probs = evolve_uniformized::<f64>(params, t_grid)?;
    Ok(probs
        .into_iter()
        .zip(t_grid)
        .map(|(probs, &time)| DickePopulations { probs, time })
        .collect())
}

/// Populations from the last column of the Padé exponential, one matrix
/// exponential per grid point.
pub fn evolve_exact_pade(params: &ModelParams, t_grid: &[f64]) -> Result<Vec<DickePopulations>> {
    check_grid(t_grid)?;
    let gen = build_generator(params)?;
    let n = params.n_emitters;
    t_grid
        .par_iter()
        .map(|&t| {
            let a = evolution_matrix(&gen, t)?;
            Ok(DickePopulations {
                probs: a.entries.column(n),
                time: t,
            })
        })
        .collect()
}

/// Populations by adaptive Dormand–Prince integration (independent check).
pub fn evolve_exact_rk(params: &ModelParams, t_grid: &[f64]) -> Result<Vec<DickePopulations>> {
    check_grid(t_grid)?;
    let gen = build_generator(params)?;
    let y0 = DickePopulations::fully_inverted(params.n_emitters).probs;
    let tol = Tolerances {
        rtol: 1e-12,
        atol: 1e-15,
    };
    let ys = ode::integrate(|_, x, y| gen.apply(x, y), 0.0, &y0, t_grid, tol)?;
    Ok(ys
        .into_iter()
        .zip(t_grid)
        .map(|(probs, &time)| DickePopulations { probs, time })
        .collect())
}

/// Largest Poisson mean used per uniformization sub-step.
const MAX_POISSON_MEAN: f64 = 40.0;

/// Entries below this are treated as underflowed when deciding where to
/// truncate the uniformization series.
const RESOLVED_FLOOR: f64 = 1e-280;

/// exp(D t) e_N by uniformization, ρ(t) = Σ_k Pois(k; ct) (I + D/c)^k e_N
/// with c = max_m Γβ²_m, stepped along the grid in working precision `T`.
pub fn evolve_uniformized<T: Real>(params: &ModelParams, t_grid: &[f64]) -> Result<Vec<Vec<T>>> {
    check_grid(t_grid)?;
    params.validate()?;
    let n = params.n_emitters;
    let gamma = T::from_f64(params.gamma);
    let rates: Vec<T> = (0..=n)
        .map(|m| gamma * beta_sq_unchecked::<T>(m, n))
        .collect();
    let c_f64 = rates.iter().map(|r| r.to_f64()).fold(0.0, f64::max);

    let mut rho = vec![T::zero(); n + 1];
    rho[n] = T::one();
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let span = t - t_now;
        if span > 0.0 {
            let pieces = ((c_f64 * span) / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
            // sub-steps in working precision so the pieces add up to `span`
            let h = T::from_f64(span) / T::from_f64(pieces as f64);
            for _ in 0..pieces {
                rho = uniformization_step(&rates, c_f64, h, &rho);
            }
            t_now = t;
        }
        out.push(rho.clone());
    }
    Ok(out)
}

fn uniformization_step<T: Real>(rates: &[T], c_f64: f64, h: T, rho: &[T]) -> Vec<T> {
    let n = rates.len() - 1;
    if c_f64 == 0.0 {
        return rho.to_vec();
    }
    let c = T::from_f64(c_f64);
    let stay: Vec<T> = rates.iter().map(|&r| T::one() - r / c).collect();
    let hop: Vec<T> = rates.iter().map(|&r| r / c).collect();
    let lambda = c * h;
    let lam = lambda.to_f64();

    let mut weight = (-lambda).exp();
    let mut term = rho.to_vec();
    let mut acc: Vec<T> = term.iter().map(|&x| x * weight).collect();
    let mut next = vec![T::zero(); n + 1];
    let mut k = 0usize;
    loop {
        k += 1;
        for m in 0..=n {
            let gain = if m < n {
                hop[m + 1] * term[m + 1]
            } else {
                T::zero()
            };
            next[m] = stay[m] * term[m] + gain;
        }
        std::mem::swap(&mut term, &mut next);
        weight = weight * lambda / T::from_f64(k as f64);
        for m in 0..=n {
            acc[m] += weight * term[m];
        }
        // every term[m] ≤ 1, so past the Poisson mode the rest of the series
        // is bounded by a geometric tail of `weight`; stop once that bound is
        // below the relative precision of the smallest resolved entry
        let wk = weight.to_f64();
        if (k as f64) > lam && k > n {
            let tail = wk / (1.0 - lam / (k as f64 + 1.0));
            let smallest = acc
                .iter()
                .map(|x| x.to_f64())
                .filter(|&x| x > RESOLVED_FLOOR)
                .fold(1.0, f64::min);
            if tail < T::EPSILON * smallest {
                break;
            }
        }
        if wk == 0.0 {
            break;
        }
    }
    acc
}

/// Instantaneous photon emission rate Γ Σ_m β²_m ρ_m.
pub fn emission_rate(pops: &DickePopulations, params: &ModelParams) -> f64 {
    let n = params.n_emitters;
    pops.probs
        .iter()
        .enumerate()
        .take(n + 1)
        .map(|(m, p)| params.gamma * beta_sq_unchecked::<f64>(m, n) * p)
        .sum()
}

/// Uniform grid of `points` times on [0, t_max].
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| t_max * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DoubleDouble;
    use proptest::prelude::*;

    fn n2_closed_form(u: f64) -> [f64; 3] {
        let e = (-u).exp();
        [1.0 - e - u * e, u * e, e]
    }

    #[test]
    fn beta_sq_examples() {
        assert_eq!(beta_sq(0, 5).unwrap(), 0.0);
        assert_eq!(beta_sq(2, 2).unwrap(), 1.0);
        assert_eq!(beta_sq(1, 2).unwrap(), 1.0);
        assert!(beta_sq(3, 2).is_err());
        assert!(beta_sq(0, 0).is_err());
    }

    #[test]
    fn generator_examples() {
        let g = build_generator(&ModelParams::new(2, 1.5).unwrap()).unwrap();
        assert_eq!(g.diag, vec![0.0, -1.5, -1.5]);
        assert_eq!(g.subflow, vec![1.5, 1.5]);
        let g1 = build_generator(&ModelParams::new(1, 1.0).unwrap()).unwrap();
        assert_eq!(g1.diag, vec![0.0, -1.0]);
        assert_eq!(g1.subflow, vec![1.0]);
        for n in 1..40 {
            let g = build_generator(&ModelParams::new(n, 0.7).unwrap()).unwrap();
            assert!(g.column_sums().iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn invalid_params() {
        assert!(ModelParams::new(0, 1.0).is_err());
        assert!(ModelParams::new(3, 0.0).is_err());
        assert!(ModelParams::new(3, f64::NAN).is_err());
    }

    #[test]
    fn evolution_matrix_at_zero_is_identity() {
        let g = build_generator(&ModelParams::new(7, 1.0).unwrap()).unwrap();
        let a = evolution_matrix(&g, 0.0).unwrap();
        assert_eq!(a.entries.max_abs_diff(&Matrix::identity(8)), 0.0);
        assert!(evolution_matrix(&g, -1e-3).is_err());
    }

    #[test]
    fn n2_closed_form_all_methods() {
        let p = ModelParams::new(2, 1.0).unwrap();
        let want = n2_closed_form(1.0);
        let g = build_generator(&p).unwrap();
        let col = evolution_matrix(&g, 1.0).unwrap().entries.column(2);
        let uni = evolve_exact(&p, &[1.0]).unwrap();
        let rk = evolve_exact_rk(&p, &[1.0]).unwrap();
        for m in 0..3 {
            assert!((col[m] - want[m]).abs() < 1e-14);
            assert!((uni[0].probs[m] - want[m]).abs() < 1e-15);
            assert!((rk[0].probs[m] - want[m]).abs() < 1e-11);
        }
        assert!((want[0] - 0.26424).abs() < 1e-5 && (want[1] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn initial_and_late_states() {
        let p = ModelParams::new(10, 1.0).unwrap();
        let out = evolve_exact(&p, &[0.0, 50.0]).unwrap();
        assert_eq!(out[0].probs[10], 1.0);
        assert!(out[0].probs[..10].iter().all(|&x| x == 0.0));
        assert!((out[1].probs[0] - 1.0).abs() < 1e-8);
        assert!(evolve_exact(&p, &[]).is_err());
        assert!(evolve_exact(&p, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn methods_agree() {
        let grid = uniform_grid(12.0, 61);
        for n in [1, 3, 10, 30, 50] {
            let p = ModelParams::new(n, 1.0).unwrap();
            let a = evolve_exact(&p, &grid).unwrap();
            let b = evolve_exact_pade(&p, &grid).unwrap();
            let c = evolve_exact_rk(&p, &grid).unwrap();
            for ((x, y), z) in a.iter().zip(&b).zip(&c) {
                for m in 0..=n {
                    assert!(
                        (x.probs[m] - y.probs[m]).abs() < 1e-12,
                        "n={n} t={} m={m}",
                        x.time
                    );
                    assert!((x.probs[m] - z.probs[m]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniformized_tiny_entries_are_relatively_accurate() {
        // At small times ρ_0 is the product of all N transition probabilities;
        // to leading order ρ_0(t) ≈ Π_m (Γβ²_m) t^N / N!.
        let n = 30;
        let t = 1e-3;
        let p = ModelParams::new(n, 1.0).unwrap();
        let r = evolve_uniformized::<DoubleDouble>(&p, &[t]).unwrap();
        let mut lead = 1.0f64;
        for m in 1..=n {
            lead *= beta_sq_unchecked::<f64>(m, n) * t / m as f64;
        }
        let rel = (r[0][0].to_f64() - lead) / lead;
        // next order correction is O(t·N) relative
        assert!(rel.abs() < 0.05 && r[0][0].to_f64() > 0.0, "rel = {rel}");
    }

    #[test]
    fn double_double_matches_double() {
        let p = ModelParams::new(20, 0.8).unwrap();
        let grid = uniform_grid(15.0, 31);
        let a = evolve_uniformized::<f64>(&p, &grid).unwrap();
        let b = evolve_uniformized::<DoubleDouble>(&p, &grid).unwrap();
        let mut worst: f64 = 0.0;
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                let v = v.to_f64();
                if v > 0.0 {
                    worst = worst.max((u - v).abs() / v);
                }
            }
        }
        // relative, entry by entry, even for populations far below 1e-100
        assert!(worst < 1e-12, "worst relative deviation {worst:e}");
    }

    #[test]
    fn emission_rate_examples() {
        for n in [1, 4, 17] {
            let p = ModelParams::new(n, 2.0).unwrap();
            let inv = DickePopulations::fully_inverted(n);
            assert!((emission_rate(&inv, &p) - 2.0).abs() < 1e-15);
            let mut ground = vec![0.0; n + 1];
            ground[0] = 1.0;
            assert_eq!(
                emission_rate(
                    &DickePopulations {
                        probs: ground,
                        time: 0.0
                    },
                    &p
                ),
                0.0
            );
        }
    }

    #[test]
    fn burst_peak_near_log_n() {
        let p = ModelParams::new(30, 1.0).unwrap();
        let grid = uniform_grid(12.0, 2401);
        let pops = evolve_exact(&p, &grid).unwrap();
        let (i_max, _) = pops.iter().map(|x| emission_rate(x, &p)).enumerate().fold(
            (0, f64::MIN),
            |best, (i, r)| if r > best.1 { (i, r) } else { best },
        );
        let tb = p.burst_time();
        assert!(
            (grid[i_max] - tb).abs() <= 0.25 * tb,
            "peak at {}",
            grid[i_max]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stochastic_columns(n in 1usize..=50, t in 0.0f64..20.0) {
            let g = build_generator(&ModelParams::new(n, 1.0).unwrap()).unwrap();
            let a = evolution_matrix(&g, t).unwrap().entries;
            for j in 0..=n {
                let col = a.column(j);
                let s: f64 = col.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                prop_assert!(col.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            }
        }

        #[test]
        fn semigroup(n in 1usize..=20, t1 in 0.0f64..5.0, t2 in 0.0f64..5.0) {
            let g = build_generator(&ModelParams::new(n, 1.0).unwrap()).unwrap();
            let a1 = evolution_matrix(&g, t1).unwrap().entries;
            let a2 = evolution_matrix(&g, t2).unwrap().entries;
            let a12 = evolution_matrix(&g, t1 + t2).unwrap().entries;
            prop_assert!(a12.max_abs_diff(&a1.matmul(&a2)) < 1e-9);
        }

        #[test]
        fn normalized_and_absorbing(n in 1usize..=40, gamma in 0.1f64..3.0) {
            let p = ModelParams::new(n, gamma).unwrap();
            let pops = evolve_exact(&p, &uniform_grid(10.0, 41)).unwrap();
            let mut prev = -1.0;
            for x in &pops {
                let s: f64 = x.probs.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(x.probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
                prop_assert!(x.probs[0] >= prev);
                prev = x.probs[0];
            }
        }
    }
}
