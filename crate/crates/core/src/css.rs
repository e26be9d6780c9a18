//! Decomposition of the exact Dicke populations into mixtures of coherent
//! spin states (CSS) with equally spaced polar angles θ_a = η a π / N.
//!
//! Averaging a CSS uniformly over its azimuth leaves a binomial mixture of
//! Dicke states, so the populations satisfy ρ = M P with the Bernstein-type
//! matrix M_{d,a} = C(N,d) z_a^{N−d} (1−z_a)^d, where d = N − m counts
//! emitters in the ground state and z_a = cos²(θ_a/2). A nonnegative P
//! certifies that the state is separable.
//!
//! M is exponentially ill-conditioned in N. The solves stay accurate as long
//! as the small populations carry full relative precision, which is why the
//! extended path evolves ρ in double-double as well.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::{DoubleDouble, Real};
use crate::dicke::{evolve_uniformized, DickePopulations, ModelParams};
use crate::error::{domain, Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::optimize::golden_section;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Double,
    #[default]
    Extended,
}

impl Precision {
    /// Extended precision above 20 emitters.
    pub fn default_for(n: usize) -> Self {
        if n > 20 {
            Precision::Extended
        } else {
            Precision::Double
        }
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(Precision::Double),
            "extended" => Ok(Precision::Extended),
            other => domain(format!(
                "unknown precision '{other}' (expected double or extended)"
            )),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Double => "double",
            Precision::Extended => "extended",
        })
    }
}

#[derive(Clone, Debug)]
pub struct MappingMatrix {
    pub n: usize,
    pub eta: f64,
    pub thetas: Vec<f64>,
    pub z: Vec<f64>,
    /// Rows indexed by ground-state count d, columns by angle index a.
    pub entries: Matrix<f64>,
}

/// Mapping matrix in working precision `T`.
pub(crate) fn mapping_entries<T: Real>(n: usize, eta: f64) -> Result<(Matrix<T>, Vec<T>)> {
    if n == 0 {
        return domain("mapping matrix needs n >= 1");
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return domain(format!("eta must be positive and finite, got {eta}"));
    }
    let nf = T::from_f64(n as f64);
    let step = T::pi() * T::from_f64(eta) / nf;
    let half = T::from_f64(0.5);

    let mut binom = Vec::with_capacity(n + 1);
    binom.push(T::one());
    for d in 1..=n {
        let prev: T = binom[d - 1];
        binom.push(prev * T::from_f64((n + 1 - d) as f64) / T::from_f64(d as f64));
    }

    let mut m = Matrix::zeros(n + 1, n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut zp = vec![T::one(); n + 1];
    let mut yp = vec![T::one(); n + 1];
    for a in 0..=n {
        let (s, c) = (step * T::from_f64(a as f64) * half).sin_cos();
        let (za, ya) = (c * c, s * s);
        z.push(za);
        for k in 1..=n {
            zp[k] = zp[k - 1] * za;
            yp[k] = yp[k - 1] * ya;
        }
        for d in 0..=n {
            m[(d, a)] = binom[d] * zp[n - d] * yp[d];
        }
    }
    Ok((m, z))
}

pub fn build_mapping(n: usize, eta: f64, precision: Precision) -> Result<MappingMatrix> {
    let (entries, z) = match precision {
        Precision::Double => {
            let (m, z) = mapping_entries::<f64>(n, eta)?;
            (m, z)
        }
        Precision::Extended => {
            let (m, z) = mapping_entries::<DoubleDouble>(n, eta)?;
            (
                m.map(|x| x.to_f64()),
                z.iter().map(|x| x.to_f64()).collect(),
            )
        }
    };
    Ok(MappingMatrix {
        n,
        eta,
        thetas: thetas(n, eta),
        z,
        entries,
    })
}

fn thetas(n: usize, eta: f64) -> Vec<f64> {
    (0..=n)
        .map(|a| eta * a as f64 * std::f64::consts::PI / n as f64)
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CssDecomposition {
    pub n: usize,
    pub weights: Vec<f64>,
    pub eta: f64,
    pub time: f64,
    pub negativity: f64,
    pub residual: f64,
    pub precision: Precision,
    /// Full-precision weights when solved in double-double.
    #[serde(skip)]
    pub weights_ext: Option<Vec<DoubleDouble>>,
}

impl CssDecomposition {
    pub fn thetas(&self) -> Vec<f64> {
        thetas(self.n, self.eta)
    }

    /// Index of the heaviest CSS weight.
    pub fn peak_index(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (a, &p)| {
                if p > best.1 {
                    (a, p)
                } else {
                    best
                }
            })
            .0
    }

    /// Trivial decomposition of the fully inverted state: all weight on θ = 0.
    fn pole(n: usize, eta: f64, time: f64, precision: Precision) -> Self {
        let mut weights = vec![0.0; n + 1];
        weights[0] = 1.0;
        let weights_ext = (precision == Precision::Extended).then(|| {
            let mut w = vec![DoubleDouble::ZERO; n + 1];
            w[0] = DoubleDouble::ONE;
            w
        });
        Self {
            n,
            weights,
            eta,
            time,
            negativity: 0.0,
            residual: 0.0,
            precision,
            weights_ext,
        }
    }
}

/// −Σ min(P_a, 0).
pub fn negativity(p: &[f64]) -> f64 {
    -p.iter().map(|&x| x.min(0.0)).sum::<f64>()
}

fn negativity_t<T: Real>(p: &[T]) -> T {
    let mut s = T::zero();
    for &x in p {
        if x < T::zero() {
            s -= x;
        }
    }
    s
}

/// Populations re-indexed by ground-state count d = N − m.
fn rhs_from_rho<T: Real>(rho: &[T]) -> Vec<T> {
    rho.iter().rev().copied().collect()
}

struct Solved<T> {
    weights: Vec<T>,
    negativity: T,
    residual: T,
}

/// Smallest separation, in units of π, between two angles θ_a, θ_b that
/// would give the same z (θ_a ≡ ±θ_b mod 2π). M is singular exactly when it
/// vanishes, which can only happen for η > 1.
fn angle_gap(n: usize, eta: f64) -> f64 {
    let mut gap = f64::INFINITY;
    // a ≠ b, so a − b ranges over 1..=N and a + b over 1..=2N−1
    for k in 1..2 * n {
        let x = (eta * k as f64 / n as f64).rem_euclid(2.0);
        gap = gap.min(x.min(2.0 - x));
    }
    gap
}

fn solve_generic<T: Real>(rhs: &[T], eta: f64) -> Result<Solved<T>> {
    let n = rhs.len() - 1;
    let gap = angle_gap(n, eta);
    if gap < 1e3 * T::EPSILON {
        return Err(Error::IllConditioned {
            condition_estimate: 1.0 / gap,
        });
    }
    let (m, _) = mapping_entries::<T>(n, eta)?;
    let lu = Lu::factor(&m)?;
    let weights = lu.solve(rhs)?;
    let back = m.matvec(&weights);
    let mut residual = T::zero();
    for (x, y) in back.iter().zip(rhs) {
        let r = (*x - *y).abs();
        if r > residual {
            residual = r;
        }
    }
    let negativity = negativity_t(&weights);
    Ok(Solved {
        weights,
        negativity,
        residual,
    })
}

trait IntoDecomposition: Real {
    fn decomposition(s: Solved<Self>, n: usize, eta: f64, time: f64) -> CssDecomposition;
}

impl IntoDecomposition for f64 {
    fn decomposition(s: Solved<f64>, n: usize, eta: f64, time: f64) -> CssDecomposition {
        CssDecomposition {
            n,
            weights: s.weights,
            eta,
            time,
            negativity: s.negativity,
            residual: s.residual,
            precision: Precision::Double,
            weights_ext: None,
        }
    }
}

impl IntoDecomposition for DoubleDouble {
    fn decomposition(s: Solved<DoubleDouble>, n: usize, eta: f64, time: f64) -> CssDecomposition {
        CssDecomposition {
            n,
            weights: s.weights.iter().map(|x| x.to_f64()).collect(),
            eta,
            time,
            negativity: s.negativity.to_f64(),
            residual: s.residual.to_f64(),
            precision: Precision::Extended,
            weights_ext: Some(s.weights),
        }
    }
}

/// Solve M P = ρ for the CSS weights.
pub fn solve_css(
    rho: &DickePopulations,
    eta: f64,
    precision: Precision,
) -> Result<CssDecomposition> {
    match precision {
        Precision::Double => solve_css_in::<f64>(&rho.probs, rho.time, eta),
        Precision::Extended => {
            let r: Vec<DoubleDouble> = rho
                .probs
                .iter()
                .map(|&x| DoubleDouble::from_f64(x))
                .collect();
            solve_css_in::<DoubleDouble>(&r, rho.time, eta)
        }
    }
}

/// [`solve_css`] on populations already held in double-double.
pub fn solve_css_extended(rho: &[DoubleDouble], time: f64, eta: f64) -> Result<CssDecomposition> {
    solve_css_in::<DoubleDouble>(rho, time, eta)
}

fn solve_css_in<T: IntoDecomposition>(rho: &[T], time: f64, eta: f64) -> Result<CssDecomposition> {
    if rho.len() < 2 {
        return domain("populations need at least two entries (N >= 1)");
    }
    let n = rho.len() - 1;
    let s = solve_generic(&rhs_from_rho(rho), eta)?;
    Ok(T::decomposition(s, n, eta, time))
}

/// ρ = M P, re-indexed to excitation count.
pub fn reconstruct_rho(decomp: &CssDecomposition) -> DickePopulations {
    let probs = match &decomp.weights_ext {
        Some(_) => reconstruct_rho_extended(decomp)
            .iter()
            .map(|x| x.to_f64())
            .collect(),
        None => reconstruct_in::<f64>(decomp.n, decomp.eta, &decomp.weights),
    };
    DickePopulations {
        probs,
        time: decomp.time,
    }
}

/// Double-double reconstruction; uses the full-precision weights if present.
pub fn reconstruct_rho_extended(decomp: &CssDecomposition) -> Vec<DoubleDouble> {
    let w: Vec<DoubleDouble> = match &decomp.weights_ext {
        Some(w) => w.clone(),
        None => decomp
            .weights
            .iter()
            .map(|&x| DoubleDouble::from_f64(x))
            .collect(),
    };
    reconstruct_in(decomp.n, decomp.eta, &w)
}

fn reconstruct_in<T: Real>(n: usize, eta: f64, w: &[T]) -> Vec<T> {
    if eta <= 0.0 {
        // η = 0 collapses every angle onto the pole
        let mut rho = vec![T::zero(); n + 1];
        rho[n] = w.iter().copied().sum();
        return rho;
    }
    let (m, _) = mapping_entries::<T>(n, eta).expect("eta validated above");
    let mut rho = m.matvec(w);
    rho.reverse();
    rho
}

/// Closed-form lower passage for two emitters.
///
/// Evaluated as (2/π) atan √(2 f(u) eᵘ / u) with f(u) = 1 − (1+u)e^{−u},
/// u = Γt, which is algebraically the arccos form but has no cancellation
/// at small u.
pub fn eta_analytic_n2(t: f64, gamma: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("eta_analytic_n2 needs t > 0, got {t}"));
    }
    if !(gamma > 0.0) {
        return domain(format!("gamma must be positive, got {gamma}"));
    }
    let u = t * gamma;
    let f = if u < 0.1 {
        // Σ_{k≥2} (−1)^k (k−1) u^k / k!
        let mut term = -u; // (−u)^k / k! at k = 1
        let mut sum = 0.0;
        for k in 2..30 {
            term *= -u / k as f64;
            sum += (k - 1) as f64 * term;
        }
        sum
    } else {
        1.0 - (1.0 + u) * (-u).exp()
    };
    let ratio = 2.0 * f * u.exp() / u;
    Ok(std::f64::consts::FRAC_2_PI * ratio.sqrt().atan())
}

/// [`eta_analytic_n2`] extended to t = 0 by its limit 0.
pub fn eta_analytic_n2_from_origin(t: f64, gamma: f64) -> Result<f64> {
    if t == 0.0 {
        Ok(0.0)
    } else {
        eta_analytic_n2(t, gamma)
    }
}

pub const LOG10_FLOOR: f64 = -10.0;

#[derive(Clone, Debug)]
pub struct NegativityField {
    pub t_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// `values[i][j]` at (t_grid[i], eta_grid[j]), log10 clamped to [−10, 0].
    pub values: Vec<Vec<f64>>,
    /// Cells whose solve failed; they hold the ceiling value 0.
    pub failures: usize,
}

fn clamp_log10(neg: f64) -> f64 {
    if neg > 0.0 {
        neg.log10().clamp(LOG10_FLOOR, 0.0)
    } else {
        LOG10_FLOOR
    }
}

fn check_sorted(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return domain(format!("{name} is empty"));
    }
    if g.iter().any(|x| !x.is_finite()) || g.windows(2).any(|w| w[1] < w[0]) {
        return domain(format!("{name} must be finite and sorted"));
    }
    Ok(())
}

/// log10 negativity over a (t, η) grid.
pub fn scan_landscape(
    params: &ModelParams,
    t_grid: &[f64],
    eta_grid: &[f64],
    precision: Precision,
) -> Result<NegativityField> {
    check_sorted("t_grid", t_grid)?;
    check_sorted("eta_grid", eta_grid)?;
    match precision {
        Precision::Double => scan_in::<f64>(params, t_grid, eta_grid),
        Precision::Extended => scan_in::<DoubleDouble>(params, t_grid, eta_grid),
    }
}

fn scan_in<T: Real>(
    params: &ModelParams,
    t_grid: &[f64],
    eta_grid: &[f64],
) -> Result<NegativityField> {
    let rhos = evolve_uniformized::<T>(params, t_grid)?;
    let cells: Vec<Option<f64>> = rhos
        .par_iter()
        .flat_map_iter(|rho| {
            let rhs = rhs_from_rho(rho);
            eta_grid.iter().map(move |&eta| {
                solve_generic(&rhs, eta)
                    .ok()
                    .map(|s| s.negativity.to_f64())
                    .filter(|x| x.is_finite())
            })
        })
        .collect();
    let failures = cells.iter().filter(|c| c.is_none()).count();
    let values = cells
        .chunks(eta_grid.len())
        .map(|row| row.iter().map(|c| c.map_or(0.0, clamp_log10)).collect())
        .collect();
    Ok(NegativityField {
        t_grid: t_grid.to_vec(),
        eta_grid: eta_grid.to_vec(),
        values,
        failures,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

impl FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Branch::Lower),
            "upper" => Ok(Branch::Upper),
            other => domain(format!(
                "unknown branch '{other}' (expected lower or upper)"
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaCurve {
    pub t_grid: Vec<f64>,
    pub eta: Vec<f64>,
    pub negativity: Vec<f64>,
    pub branch: Branch,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceOptions {
    pub branch: Branch,
    pub tol: f64,
    pub precision: Precision,
    /// Half-width of the η search window around the predicted value.
    pub window: f64,
    pub grid_points: usize,
    /// Upper limit of the search domain (1 for the lower branch).
    pub eta_max: f64,
    /// Window doublings before a time is declared a gap.
    pub max_expansions: usize,
}

impl TraceOptions {
    pub fn new(branch: Branch, precision: Precision) -> Self {
        Self {
            branch,
            tol: 1e-6,
            precision,
            window: 0.05,
            grid_points: 200,
            eta_max: match branch {
                Branch::Lower => 1.0,
                Branch::Upper => 1.2,
            },
            max_expansions: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return domain(format!("tol must be positive, got {}", self.tol));
        }
        if self.grid_points < 3 {
            return domain("grid_points must be at least 3");
        }
        if !(self.window > 0.0) || !(self.eta_max > ETA_MIN) {
            return domain("window and eta_max must be positive");
        }
        if self.branch == Branch::Lower && self.eta_max > 1.0 {
            return domain("the lower branch is constrained to eta <= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TraceResult {
    pub curve: EtaCurve,
    pub decompositions: Vec<CssDecomposition>,
    /// Times at which the tolerance could not be met; the curve holds the
    /// least-negative point found there.
    pub gaps: Vec<f64>,
    /// Times where the accepted η left the predicted neighbourhood.
    pub jumps: Vec<f64>,
}

impl TraceResult {
    pub fn is_complete(&self) -> bool {
        self.gaps.is_empty()
    }
}

const ETA_MIN: f64 = 1e-9;
const JUMP_THRESHOLD: f64 = 0.01;
const MAX_VALLEYS: usize = 12;
const EDGE_WIDTH: f64 = 1e-13;

/// Follow a positive passage through the (t, η) plane by continuation.
///
/// At each time the η window around a predictor (previous η shifted by the
/// two-emitter closed form) is scanned on a grid. The extreme passing grid
/// point is taken unless a narrower valley lies beyond it, in which case
/// golden-section search finds that valley's floor. The accepted η is then
/// pushed onto the edge of the positive set by bisection.
pub fn trace_passage(
    params: &ModelParams,
    t_grid: &[f64],
    opts: &TraceOptions,
) -> Result<TraceResult> {
    check_sorted("t_grid", t_grid)?;
    if t_grid[0] < 0.0 {
        return domain("t_grid must be nonnegative");
    }
    opts.validate()?;
    match opts.precision {
        Precision::Double => trace_in::<f64>(params, t_grid, opts),
        Precision::Extended => trace_in::<DoubleDouble>(params, t_grid, opts),
    }
}

struct Objective<'a, T> {
    rhs: &'a [T],
}

impl<T: Real> Objective<'_, T> {
    fn eval(&self, eta: f64) -> f64 {
        match solve_generic(self.rhs, eta) {
            Ok(s) => {
                let v = s.negativity.to_f64();
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

fn trace_in<T: Real + IntoDecomposition>(
    params: &ModelParams,
    t_grid: &[f64],
    opts: &TraceOptions,
) -> Result<TraceResult> {
    let n = params.n_emitters;
    let rhos = evolve_uniformized::<T>(params, t_grid)?;
    // a tolerance below the rounding floor must still be honoured
    let floor = (1e4 * T::EPSILON).min(opts.tol);

    let mut etas = Vec::with_capacity(t_grid.len());
    let mut negs = Vec::with_capacity(t_grid.len());
    let mut decomps = Vec::with_capacity(t_grid.len());
    let mut gaps = Vec::new();
    let mut jumps = Vec::new();
    let mut prev: Option<(f64, f64)> = None; // (t, η) of the last nonzero time

    for (&t, rho) in t_grid.iter().zip(&rhos) {
        if t == 0.0 {
            etas.push(0.0);
            negs.push(0.0);
            decomps.push(CssDecomposition::pole(n, 0.0, 0.0, opts.precision));
            continue;
        }
        let rhs = rhs_from_rho(rho);
        let obj = Objective { rhs: &rhs };

        let (lo0, hi0, center) = match prev {
            Some((tp, ep)) => {
                let shift = eta_analytic_n2_from_origin(t, params.gamma)?
                    - eta_analytic_n2_from_origin(tp, params.gamma)?;
                let c = ep + shift;
                (c - opts.window, c + opts.window, Some(c))
            }
            // first nonzero time: scan the whole domain
            None => (ETA_MIN, opts.eta_max, None),
        };

        let mut found = None;
        let mut best = (f64::INFINITY, f64::NAN);
        let mut half = 0.5 * (hi0 - lo0);
        let mid = 0.5 * (hi0 + lo0);
        for _ in 0..=opts.max_expansions {
            let lo = (mid - half).clamp(ETA_MIN, opts.eta_max);
            let hi = (mid + half).clamp(ETA_MIN, opts.eta_max);
            if hi - lo < 1e-12 {
                half *= 2.0;
                continue;
            }
            let outcome = search_window(&obj, lo, hi, opts, floor);
            if outcome.best.0 < best.0 {
                best = outcome.best;
            }
            if let Some(eta) = outcome.accepted {
                found = Some(eta);
                break;
            }
            if lo <= ETA_MIN && hi >= opts.eta_max {
                break;
            }
            half *= 2.0;
        }

        let eta = match found {
            Some(e) => e,
            None => {
                gaps.push(t);
                if best.1.is_finite() {
                    best.1
                } else {
                    return Err(Error::Breakdown(format!("no solvable eta near t = {t}")));
                }
            }
        };
        if let Some(c) = center {
            if (eta - c).abs() > JUMP_THRESHOLD {
                jumps.push(t);
            }
        }
        let d = T::decomposition(solve_generic(&rhs, eta)?, n, eta, t);
        etas.push(eta);
        negs.push(d.negativity);
        decomps.push(d);
        prev = Some((t, eta));
    }

    Ok(TraceResult {
        curve: EtaCurve {
            t_grid: t_grid.to_vec(),
            eta: etas,
            negativity: negs,
            branch: opts.branch,
        },
        decompositions: decomps,
        gaps,
        jumps,
    })
}

struct WindowOutcome {
    accepted: Option<f64>,
    /// (negativity, η) of the least negative point examined.
    best: (f64, f64),
}

fn search_window<T: Real>(
    obj: &Objective<'_, T>,
    lo: f64,
    hi: f64,
    opts: &TraceOptions,
    floor: f64,
) -> WindowOutcome {
    let g = opts.grid_points;
    let grid: Vec<f64> = (0..g)
        .map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.par_iter().map(|&e| obj.eval(e)).collect();

    let mut best =
        vals.iter().zip(&grid).fold(
            (f64::INFINITY, f64::NAN),
            |b, (&v, &e)| if v < b.0 { (v, e) } else { b },
        );

    // Walk the grid from the preferred end: ascending for the lower branch.
    let order: Vec<usize> = match opts.branch {
        Branch::Lower => (0..g).collect(),
        Branch::Upper => (0..g).rev().collect(),
    };
    let first_pass = order.iter().position(|&i| vals[i] < opts.tol);

    // Interior local minima that come before the first passing grid point.
    let limit = first_pass.unwrap_or(g);
    let valleys: Vec<usize> = order[..limit]
        .iter()
        .copied()
        .filter(|&i| {
            i > 0
                && i + 1 < g
                && vals[i].is_finite()
                && vals[i] <= vals[i - 1]
                && vals[i] <= vals[i + 1]
        })
        .take(MAX_VALLEYS)
        .collect();

    for j in valleys {
        let (e, v) = golden_section(|x| obj.eval(x), grid[j - 1], grid[j + 1], 1e-12);
        if v < best.0 {
            best = (v, e);
        }
        if v < opts.tol {
            let outside = match opts.branch {
                Branch::Lower => grid[j - 1],
                Branch::Upper => grid[j + 1],
            };
            return WindowOutcome {
                accepted: Some(refine_edge(obj, outside, e, v, opts.tol, floor)),
                best,
            };
        }
    }

    match first_pass {
        Some(k) => {
            // prefer a point inside the contiguous passing run that is
            // exactly positive, so the edge found is that of the positive set
            let run_end = order[k..]
                .iter()
                .position(|&i| vals[i] >= opts.tol)
                .map_or(g, |r| k + r);
            let step = grid[1] - grid[0];
            let (j, pass, pass_val) = match (k..run_end).find(|&j| vals[order[j]] <= floor) {
                Some(j) => (j, grid[order[j]], vals[order[j]]),
                None => {
                    // nothing exactly positive on the grid: look for the least
                    // negative point of the run instead of its tolerance edge
                    let a = grid[order[k]].min(grid[order[run_end - 1]]);
                    let b = grid[order[k]].max(grid[order[run_end - 1]]);
                    let (e, v) = golden_section(
                        |x| obj.eval(x),
                        (a - step).max(lo),
                        (b + step).min(hi),
                        1e-12,
                    );
                    if v > floor {
                        let accepted = if v < vals[order[k]] {
                            e
                        } else {
                            grid[order[k]]
                        };
                        return WindowOutcome {
                            accepted: Some(accepted),
                            best,
                        };
                    }
                    (k, e, v)
                }
            };
            let outside = if j == 0 {
                // the passing region runs past the window edge
                outward_failure(obj, pass, step, opts, floor)
            } else {
                Some(grid[order[j - 1]])
            };
            let accepted = match outside {
                Some(out) => refine_edge(obj, out, pass, pass_val, opts.tol, floor),
                None => pass,
            };
            WindowOutcome {
                accepted: Some(accepted),
                best,
            }
        }
        None => WindowOutcome {
            accepted: None,
            best,
        },
    }
}

/// Step outward from a passing window edge in growing strides until a point
/// fails, or the domain boundary is reached (`None`).
fn outward_failure<T: Real>(
    obj: &Objective<'_, T>,
    edge: f64,
    step: f64,
    opts: &TraceOptions,
    floor: f64,
) -> Option<f64> {
    let thr = if obj.eval(edge) <= floor {
        floor
    } else {
        opts.tol
    };
    let mut stride = step;
    for _ in 0..60 {
        let x = match opts.branch {
            Branch::Lower => (edge - stride).max(ETA_MIN),
            Branch::Upper => (edge + stride).min(opts.eta_max),
        };
        if obj.eval(x) > thr {
            return Some(x);
        }
        if x <= ETA_MIN || x >= opts.eta_max {
            return None;
        }
        stride *= 2.0;
    }
    None
}

/// Bisect between a failing and a passing η towards the failing side. The
/// acceptance threshold is the rounding floor when the passing point already
/// reaches it, so that the result lies on the edge of the exactly positive
/// set rather than anywhere inside the tolerance band.
fn refine_edge<T: Real>(
    obj: &Objective<'_, T>,
    fail: f64,
    pass: f64,
    pass_val: f64,
    tol: f64,
    floor: f64,
) -> f64 {
    let thr = if pass_val <= floor { floor } else { tol };
    let (mut f, mut p) = (fail, pass);
    for _ in 0..80 {
        if (p - f).abs() <= EDGE_WIDTH {
            break;
        }
        let m = 0.5 * (f + p);
        if obj.eval(m) < thr {
            p = m;
        } else {
            f = m;
        }
    }
    p
}
