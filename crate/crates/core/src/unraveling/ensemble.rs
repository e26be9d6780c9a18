use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{run_trajectory, QtConfig, TrajectoryRecord};
use super::Strategy;
use crate::error::{domain, Error, Result};

/// Trajectories held in memory at once before being folded.
const BATCH: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub strategy: Strategy,
    pub n_traj: u64,
    pub times: Vec<f64>,
    pub te_mean: Vec<f64>,
    pub te_stderr: Vec<f64>,
    pub xi_mean: Vec<f64>,
    pub xi_stderr: Vec<f64>,
    pub mean_excitation: Vec<f64>,
    /// Averaged |c_m|², one row per recorded time.
    pub pops_mean: Vec<Vec<f64>>,
    pub pops_stderr: Vec<Vec<f64>>,
    /// Mean over trajectories of the per-trajectory maximum entropy.
    pub s_max_mean: f64,
    pub s_max_stderr: f64,
    pub xi_min_mean: f64,
    pub xi_min_stderr: f64,
}

/// Running mean and sum of squared deviations, element-wise.
#[derive(Clone, Debug)]
struct Welford {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, xs: impl IntoIterator<Item = f64>) {
        self.count += 1;
        let c = self.count as f64;
        for ((x, mean), m2) in xs.into_iter().zip(&mut self.mean).zip(&mut self.m2) {
            let d = x - *mean;
            *mean += d / c;
            *m2 += d * (x - *mean);
        }
    }

    fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.m2.len()];
        }
        let c = self.count as f64;
        self.m2
            .iter()
            .map(|m2| (m2 / (c - 1.0) / c).sqrt())
            .collect()
    }
}

/// Run `n_traj` trajectories (indices 0..n_traj) on `workers` threads
/// (0 = all cores) and average them.
///
/// Results are folded strictly in trajectory-index order, so the output is
/// bit-identical for any worker count.
pub fn ensemble_run(
    cfg: &QtConfig,
    n_traj: u64,
    seed: u64,
    workers: usize,
) -> Result<EnsembleStats> {
    if n_traj == 0 {
        return domain("n_traj must be at least 1");
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Capacity(format!("cannot start worker pool: {e}")))?;

    let times = cfg.record_times();
    let len = times.len();
    let dim = cfg.params.n_emitters + 1;
    let mut te = Welford::new(len);
    let mut xi = Welford::new(len);
    let mut exc = Welford::new(len);
    let mut pops = Welford::new(len * dim);
    let mut extremes = Welford::new(2);

    let mut start = 0;
    while start < n_traj {
        let end = (start + BATCH).min(n_traj);
        let batch: Vec<Result<TrajectoryRecord>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| run_trajectory(cfg, seed, i))
                .collect()
        });
        for rec in batch {
            let rec = rec?;
            te.push(rec.entropy_bits.iter().copied());
            xi.push(rec.xi.iter().copied());
            exc.push(rec.mean_excitation.iter().copied());
            pops.push(rec.populations.iter().flatten().copied());
            extremes.push([rec.max_entropy(), rec.min_xi()]);
        }
        start = end;
    }

    let rows = |v: Vec<f64>| v.chunks(dim).map(|c| c.to_vec()).collect::<Vec<_>>();
    let ext_err = extremes.stderr();
    Ok(EnsembleStats {
        strategy: cfg.strategy,
        n_traj,
        times,
        te_stderr: te.stderr(),
        te_mean: te.mean,
        xi_stderr: xi.stderr(),
        xi_mean: xi.mean,
        mean_excitation: exc.mean,
        pops_stderr: rows(pops.stderr()),
        pops_mean: rows(pops.mean),
        s_max_mean: extremes.mean[0],
        s_max_stderr: ext_err[0],
        xi_min_mean: extremes.mean[1],
        xi_min_stderr: ext_err[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::ModelParams;

    fn cfg(n: usize, strategy: Strategy) -> QtConfig {
        let mut c = QtConfig::new(ModelParams::new(n, 1.0).unwrap(), strategy);
        c.dt = 1e-2;
        c.t_max = 4.0;
        c
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut w = Welford::new(1);
        for &x in &xs {
            w.push([x]);
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean[0] - mean).abs() < 1e-14);
        assert!((w.stderr()[0] - (var / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn single_trajectory_equals_record() {
        let c = cfg(6, Strategy::PhiRandom);
        let stats = ensemble_run(&c, 1, 17, 2).unwrap();
        let rec = run_trajectory(&c, 17, 0).unwrap();
        assert_eq!(stats.te_mean, rec.entropy_bits);
        assert_eq!(stats.xi_mean, rec.xi);
        assert_eq!(stats.mean_excitation, rec.mean_excitation);
        assert_eq!(stats.pops_mean, rec.populations);
        assert!(stats.te_stderr.iter().all(|&s| s == 0.0));
        assert_eq!(stats.s_max_mean, rec.max_entropy());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let c = cfg(8, Strategy::PhiOpt);
        let a = ensemble_run(&c, 70, 3, 1).unwrap();
        let b = ensemble_run(&c, 70, 3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_ensemble() {
        assert!(ensemble_run(&cfg(4, Strategy::Naive), 0, 0, 1).is_err());
    }
}
