use std::f64::consts::{FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kraus::{kraus_naive, KrausPair, MixingUnitary};
use super::{bloch_length_of, Strategy};
use crate::dicke::ModelParams;
use crate::entanglement::{
    entropy_of_density_with, gram, Bipartition, SchmidtKernel, SymmetricState,
};
use crate::error::{domain, Error, Result};
use crate::linalg::EigenWork;
use crate::optimize::brent_from;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const BREAKDOWN_PROB: f64 = 1e-30;
const PHI_TOL: f64 = 1e-8;

/// One step: sample k with probability p_k / (p_0 + p_1), apply F_k and
/// renormalize. `draw` must lie in [0, 1).
pub fn qt_step(
    state: &SymmetricState,
    pair: &KrausPair,
    draw: f64,
) -> Result<(SymmetricState, usize)> {
    if state.n != pair.n() {
        return domain(format!(
            "state has {} emitters, Kraus pair {}",
            state.n,
            pair.n()
        ));
    }
    if !(0.0..1.0).contains(&draw) {
        return domain(format!("draw must lie in [0, 1), got {draw}"));
    }
    let c0 = pair.f0.apply(&state.amps);
    let c1 = pair.f1.apply(&state.amps);
    let (k, amps) = select(c0, c1, draw)?;
    Ok((SymmetricState { n: state.n, amps }, k))
}

fn select(
    mut c0: Vec<Complex64>,
    mut c1: Vec<Complex64>,
    draw: f64,
) -> Result<(usize, Vec<Complex64>)> {
    let p0 = norm_sqr(&c0);
    let p1 = norm_sqr(&c1);
    if p0 < BREAKDOWN_PROB && p1 < BREAKDOWN_PROB {
        return Err(Error::Breakdown(format!(
            "both branch probabilities vanish (p0={p0:e}, p1={p1:e})"
        )));
    }
    let (k, v, p) = if draw < p0 / (p0 + p1) {
        (0, &mut c0, p0)
    } else {
        (1, &mut c1, p1)
    };
    let s = 1.0 / p.sqrt();
    v.iter_mut().for_each(|z| *z *= s);
    Ok((k, std::mem::take(v)))
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Expected post-step entropy as a function of the mixing phase for a fixed
/// pre-step state. With a = F₀ψ and b = F₁ψ of the input pair, the remixed
/// branches are u_n0 a + u_n1 b, so their reduced matrices are quadratic
/// forms in u over three precomputed Gram matrices.
struct PhiCost {
    dim: usize,
    gaa: Vec<Complex64>,
    gbb: Vec<Complex64>,
    gab: Vec<Complex64>,
    buf: Vec<Complex64>,
    work: EigenWork,
    theta_f: f64,
}

impl PhiCost {
    fn new(kernel: &SchmidtKernel, a: &[Complex64], b: &[Complex64], theta_f: f64) -> Self {
        let dim = kernel.dim_b();
        let cols = kernel.part.n_a() + 1;
        let ca = kernel.coefficients(a);
        let cb = kernel.coefficients(b);
        Self {
            dim,
            gaa: gram(&ca, &ca, dim, cols),
            gbb: gram(&cb, &cb, dim, cols),
            gab: gram(&ca, &cb, dim, cols),
            buf: vec![ZERO; dim * dim],
            work: EigenWork::default(),
            theta_f,
        }
    }

    fn eval(&mut self, phi: f64) -> f64 {
        let u = MixingUnitary::from_angles(self.theta_f, phi).entries;
        let d = self.dim;
        let mut total_p = 0.0;
        let mut acc = 0.0;
        for row in u {
            let (w0, w1) = (row[0].norm_sqr(), row[1].norm_sqr());
            let x = row[0] * row[1].conj();
            // only the lower triangle is read by the eigensolver
            let mut p = 0.0;
            for i in 0..d {
                for j in 0..=i {
                    let ij = i * d + j;
                    let ji = j * d + i;
                    let v = self.gaa[ij] * w0
                        + self.gbb[ij] * w1
                        + x * self.gab[ij]
                        + x.conj() * self.gab[ji].conj();
                    self.buf[ij] = v;
                }
                p += self.buf[i * d + i].re;
            }
            total_p += p;
            if p > BREAKDOWN_PROB {
                let s = 1.0 / p;
                for i in 0..d {
                    for j in 0..=i {
                        self.buf[i * d + j] *= s;
                    }
                }
                acc += p * entropy_of_density_with(&mut self.buf, d, &mut self.work);
            }
        }
        if total_p > 0.0 {
            acc / total_p
        } else {
            0.0
        }
    }

    fn minimize(&mut self, grid: usize) -> (f64, f64) {
        let h = PI / grid as f64;
        let (mut best_phi, mut best) = (0.0, f64::INFINITY);
        for j in 0..grid {
            let phi = j as f64 * h;
            let v = self.eval(phi);
            if v < best {
                (best_phi, best) = (phi, v);
            }
        }
        let (phi, v) = brent_from(
            |x| self.eval(x),
            best_phi - h,
            best_phi + h,
            (best_phi, best),
            PHI_TOL,
            100,
        );
        if v < best {
            (phi.rem_euclid(PI), v)
        } else {
            (best_phi, best)
        }
    }
}

/// Mixing phase in [0, π) minimizing the expected half-split entropy after
/// remixing `pair` at angle `theta_f`. Returns (φ, p̂₀S₀ + p̂₁S₁).
pub fn optimize_phi(
    state: &SymmetricState,
    theta_f: f64,
    pair: &KrausPair,
    grid: usize,
) -> Result<(f64, f64)> {
    if grid < 8 {
        return domain(format!("phi grid needs at least 8 points, got {grid}"));
    }
    if state.n != pair.n() {
        return domain(format!(
            "state has {} emitters, Kraus pair {}",
            state.n,
            pair.n()
        ));
    }
    MixingUnitary::new(theta_f, 0.0)?;
    if state.n < 2 {
        return Ok((0.0, 0.0));
    }
    let kernel = SchmidtKernel::new(Bipartition::half(state.n)?);
    let a = pair.f0.apply(&state.amps);
    let b = pair.f1.apply(&state.amps);
    Ok(PhiCost::new(&kernel, &a, &b, theta_f).minimize(grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QtConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub t_max: f64,
    pub strategy: Strategy,
    pub theta_f: f64,
    pub record_stride: usize,
    pub phi_grid: usize,
}

impl QtConfig {
    /// dt = 10⁻³/Γ, t_max = 12/Γ, θ_F = π/4, entropies every 10 steps.
    pub fn new(params: ModelParams, strategy: Strategy) -> Self {
        Self {
            params,
            dt: 1e-3 / params.gamma,
            t_max: 12.0 / params.gamma,
            strategy,
            theta_f: FRAC_PI_4,
            record_stride: 10,
            phi_grid: 8,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.steps())
            .step_by(self.record_stride)
            .map(|k| k as f64 * self.dt)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        kraus_naive(self.params.n_emitters, self.params.gamma, self.dt)?;
        MixingUnitary::new(self.theta_f, 0.0)?;
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return domain(format!(
                "t_max must be finite and nonnegative, got {}",
                self.t_max
            ));
        }
        if self.record_stride == 0 {
            return domain("record_stride must be at least 1");
        }
        if self.phi_grid < 8 {
            return domain("phi_grid must be at least 8");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub traj_index: u64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub entropy_bits: Vec<f64>,
    pub mean_excitation: Vec<f64>,
    /// |c_m|² at each recorded time.
    pub populations: Vec<Vec<f64>>,
    pub jump_count: u64,
}

impl TrajectoryRecord {
    pub fn max_entropy(&self) -> f64 {
        self.entropy_bits.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_xi(&self) -> f64 {
        self.xi.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Random stream for one trajectory: the root seed keys the generator and
/// the trajectory index selects an independent stream.
pub(crate) fn trajectory_rng(seed: u64, traj_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_index);
    rng
}

/// Simulate one trajectory from |m=N⟩.
///
/// Each step consumes the jump draw first, then (for phi-random) the phase
/// draw, so a trajectory depends only on (seed, traj_index).
pub fn run_trajectory(cfg: &QtConfig, seed: u64, traj_index: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    simulate(cfg, seed, traj_index).map_err(|e| Error::Trajectory {
        traj_index,
        source: Box::new(e),
    })
}

fn simulate(cfg: &QtConfig, seed: u64, traj_index: u64) -> Result<TrajectoryRecord> {
    let n = cfg.params.n_emitters;
    let pair = kraus_naive(n, cfg.params.gamma, cfg.dt)?;
    let kernel = Bipartition::half(n).ok().map(SchmidtKernel::new);
    let mut rng = trajectory_rng(seed, traj_index);

    let mut psi = vec![ZERO; n + 1];
    psi[n] = Complex64::new(1.0, 0.0);
    let mut a = vec![ZERO; n + 1];
    let mut b = vec![ZERO; n + 1];

    let steps = cfg.steps();
    let records = steps / cfg.record_stride + 1;
    let mut rec = TrajectoryRecord {
        traj_index,
        seed,
        times: Vec::with_capacity(records),
        xi: Vec::with_capacity(records),
        entropy_bits: Vec::with_capacity(records),
        mean_excitation: Vec::with_capacity(records),
        populations: Vec::with_capacity(records),
        jump_count: 0,
    };

    for k in 0..=steps {
        if k % cfg.record_stride == 0 {
            let pops: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            rec.times.push(k as f64 * cfg.dt);
            rec.xi.push(bloch_length_of(&psi));
            rec.entropy_bits
                .push(kernel.as_ref().map_or(0.0, |kn| kn.entropy_of(&psi)));
            rec.mean_excitation
                .push(pops.iter().enumerate().map(|(m, p)| m as f64 * p).sum());
            rec.populations.push(pops);
        }
        if k == steps {
            break;
        }

        let jump_draw: f64 = rng.gen();
        pair.f0.apply_into(&psi, &mut a);
        pair.f1.apply_into(&psi, &mut b);
        let phi = match cfg.strategy {
            Strategy::Naive => None,
            Strategy::PhiRandom => Some(TAU * rng.gen::<f64>()),
            Strategy::PhiOpt => Some(match &kernel {
                Some(kn) => {
                    PhiCost::new(kn, &a, &b, cfg.theta_f)
                        .minimize(cfg.phi_grid)
                        .0
                }
                None => 0.0,
            }),
        };
        let (c0, c1) = match phi {
            None => (a.clone(), b.clone()),
            Some(phi) => {
                let u = MixingUnitary::from_angles(cfg.theta_f, phi).entries;
                let mix = |r: [Complex64; 2]| {
                    a.iter()
                        .zip(&b)
                        .map(|(x, y)| r[0] * x + r[1] * y)
                        .collect::<Vec<_>>()
                };
                (mix(u[0]), mix(u[1]))
            }
        };
        let (which, next) = select(c0, c1, jump_draw).map_err(|e| match e {
            Error::Breakdown(msg) => {
                Error::Breakdown(format!("{msg} at t = {}", k as f64 * cfg.dt))
            }
            other => other,
        })?;
        psi = next;
        rec.jump_count += which as u64;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::entropy_dicke;
    use crate::unraveling::remix;
    use nalgebra::DMatrix;

    fn dicke(n: usize, m: usize) -> SymmetricState {
        SymmetricState::dicke(n, m).unwrap()
    }

    #[test]
    fn naive_jump_lowers_excitation() {
        let pair = kraus_naive(6, 1.0, 1e-3).unwrap();
        let (s, k) = qt_step(&dicke(6, 4), &pair, 0.999_999_9).unwrap();
        assert_eq!(k, 1);
        assert_eq!(s.amps, dicke(6, 3).amps);
        for draw in [0.0, 0.5, 0.999_999] {
            let (s, k) = qt_step(&dicke(6, 0), &pair, draw).unwrap();
            assert_eq!(k, 0);
            assert_eq!(s.amps, dicke(6, 0).amps);
        }
        assert!(qt_step(&dicke(6, 0), &pair, 1.0).is_err());
        assert!(qt_step(&dicke(5, 0), &pair, 0.5).is_err());
    }

    #[test]
    fn breakdown_when_both_branches_vanish() {
        let pair = kraus_naive(3, 1.0, 1e-3).unwrap();
        let s = SymmetricState {
            n: 3,
            amps: vec![ZERO; 4],
        };
        assert!(matches!(qt_step(&s, &pair, 0.3), Err(Error::Breakdown(_))));
    }

    #[test]
    fn sampled_states_average_to_channel() {
        let n = 4;
        let pair = kraus_naive(n, 1.0, 1e-2).unwrap();
        let mixed = remix(&pair, &MixingUnitary::new(FRAC_PI_4, 0.7).unwrap()).unwrap();
        let s = SymmetricState::normalized(vec![
            Complex64::new(0.1, 0.2),
            Complex64::new(0.3, -0.1),
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.2, 0.4),
            Complex64::new(0.6, 0.1),
        ])
        .unwrap();
        let psi = DMatrix::from_column_slice(n + 1, 1, &s.amps);
        let rho = &psi * psi.adjoint();
        let want = mixed.channel(&rho);
        let trace = want.trace().re;
        let samples = 10_000;
        let mut rng = trajectory_rng(3, 0);
        let mut avg = DMatrix::<Complex64>::zeros(n + 1, n + 1);
        for _ in 0..samples {
            let (out, _) = qt_step(&s, &mixed, rng.gen()).unwrap();
            let v = DMatrix::from_column_slice(n + 1, 1, &out.amps);
            avg += &v * v.adjoint();
        }
        avg /= Complex64::new(samples as f64, 0.0);
        // sampling error of each entry is at most ~ 1/√samples
        let diff = (avg - want / Complex64::new(trace, 0.0)).camax();
        assert!(diff < 5.0 / (samples as f64).sqrt(), "diff = {diff}");
    }

    #[test]
    fn pole_state_cost_is_phase_independent() {
        let n = 12;
        let pair = kraus_naive(n, 1.0, 1e-3).unwrap();
        let kernel = SchmidtKernel::new(Bipartition::half(n).unwrap());
        let s = dicke(n, n);
        let a = pair.f0.apply(&s.amps);
        let b = pair.f1.apply(&s.amps);
        let mut cost = PhiCost::new(&kernel, &a, &b, FRAC_PI_4);
        let c0 = cost.eval(0.0);
        for j in 1..16 {
            assert!((cost.eval(j as f64 * 0.37) - c0).abs() < 1e-12);
        }
        let (_, s_po) = optimize_phi(&s, FRAC_PI_4, &pair, 8).unwrap();
        // a branch α|N⟩ + β|N−1⟩ with |β|² ~ dtΓ/2 differs from a CSS only at O(dtΓ)
        assert!(s_po < 1e-4, "s_po = {s_po}");
    }

    #[test]
    fn optimized_phase_beats_probes() {
        use rand::SeedableRng;
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SymmetricState::normalized(
            (0..=n)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect(),
        )
        .unwrap();
        let pair = kraus_naive(n, 1.0, 1e-2).unwrap();
        let (phi, s_po) = optimize_phi(&s, FRAC_PI_4, &pair, 8).unwrap();
        assert!((0.0..PI).contains(&phi));
        let kernel = SchmidtKernel::new(Bipartition::half(n).unwrap());
        let a = pair.f0.apply(&s.amps);
        let b = pair.f1.apply(&s.amps);
        let mut cost = PhiCost::new(&kernel, &a, &b, FRAC_PI_4);
        for _ in 0..32 {
            let probe = rng.gen::<f64>() * TAU;
            assert!(s_po <= cost.eval(probe) + 1e-12);
        }
        // matches the explicit remixed pair
        let mixed = remix(&pair, &MixingUnitary::new(FRAC_PI_4, phi).unwrap()).unwrap();
        let c0 = mixed.f0.apply(&s.amps);
        let c1 = mixed.f1.apply(&s.amps);
        let (p0, p1) = (norm_sqr(&c0), norm_sqr(&c1));
        let direct = (p0 * kernel.entropy_of(&c0) + p1 * kernel.entropy_of(&c1)) / (p0 + p1);
        assert!((direct - s_po).abs() < 1e-12);
    }

    #[test]
    fn optimized_step_less_entangled_than_naive() {
        // a CSS tilted to the equator, as near the burst
        let n = 10;
        let pair = kraus_naive(n, 1.0, 1e-3).unwrap();
        let s = SymmetricState::coherent(n, 1.4, 0.3);
        let (_, s_po) = optimize_phi(&s, FRAC_PI_4, &pair, 8).unwrap();
        let kernel = SchmidtKernel::new(Bipartition::half(n).unwrap());
        let c0 = pair.f0.apply(&s.amps);
        let c1 = pair.f1.apply(&s.amps);
        let (p0, p1) = (norm_sqr(&c0), norm_sqr(&c1));
        let naive = (p0 * kernel.entropy_of(&c0) + p1 * kernel.entropy_of(&c1)) / (p0 + p1);
        assert!(s_po < naive, "{s_po} vs {naive}");
    }

    #[test]
    fn phi_grid_validated() {
        let pair = kraus_naive(4, 1.0, 1e-3).unwrap();
        assert!(optimize_phi(&dicke(4, 4), FRAC_PI_4, &pair, 4).is_err());
    }

    #[test]
    fn initial_record_is_product() {
        let p = ModelParams::new(8, 1.0).unwrap();
        for strategy in Strategy::ALL {
            let mut cfg = QtConfig::new(p, strategy);
            cfg.t_max = 0.5;
            let r = run_trajectory(&cfg, 5, 0).unwrap();
            assert_eq!(r.xi[0], 1.0);
            assert_eq!(r.entropy_bits[0], 0.0);
            assert_eq!(r.times.len(), 51);
        }
    }

    #[test]
    fn naive_trajectories_stay_on_dicke_states() {
        let p = ModelParams::new(10, 1.0).unwrap();
        let mut cfg = QtConfig::new(p, Strategy::Naive);
        cfg.record_stride = 1;
        cfg.dt = 1e-2;
        let r = run_trajectory(&cfg, 1, 2).unwrap();
        for (pops, (&s, &xi)) in r.populations.iter().zip(r.entropy_bits.iter().zip(&r.xi)) {
            let occupied: Vec<usize> = (0..=10).filter(|&m| pops[m] > 0.0).collect();
            assert_eq!(occupied.len(), 1);
            let m = occupied[0];
            assert!((s - entropy_dicke(10, m, 5).unwrap()).abs() < 1e-10);
            assert!((xi - (2.0 * m as f64 - 10.0).abs() / 10.0).abs() < 1e-12);
        }
        assert_eq!(*r.populations.last().unwrap(), {
            let mut g = vec![0.0; 11];
            g[0] = 1.0;
            g
        });
        assert_eq!(r.jump_count, 10);
    }

    #[test]
    fn trajectory_is_reproducible() {
        let p = ModelParams::new(6, 1.0).unwrap();
        let mut cfg = QtConfig::new(p, Strategy::PhiRandom);
        cfg.t_max = 3.0;
        let a = run_trajectory(&cfg, 9, 4).unwrap();
        let b = run_trajectory(&cfg, 9, 4).unwrap();
        let c = run_trajectory(&cfg, 9, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.populations, c.populations);
        for pops in &a.populations {
            assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(a.xi.iter().all(|&x| (0.0..=1.0 + 1e-9).contains(&x)));
    }

    #[test]
    fn small_systems_record_zero_entropy() {
        let p = ModelParams::new(1, 1.0).unwrap();
        let mut cfg = QtConfig::new(p, Strategy::PhiOpt);
        cfg.t_max = 1.0;
        let r = run_trajectory(&cfg, 0, 0).unwrap();
        assert!(r.entropy_bits.iter().all(|&s| s == 0.0));
    }
}
