//! Discrete-time quantum trajectories of collective decay.
//!
//! A step applies one of two Kraus operators with its Born probability. The
//! bare pair (no-jump, jump) keeps every trajectory on Dicke states, which
//! are highly entangled near the burst. Remixing the pair with a unitary
//! leaves the averaged dynamics unchanged but lets trajectories stay close
//! to coherent spin states.

mod ensemble;
mod kraus;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::entanglement::SymmetricState;
use crate::error::{domain, Error, Result};

pub use ensemble::{ensemble_run, EnsembleStats};
pub use kraus::{
    jump_operator, kraus_naive, remix, spin_lowering, BidiagonalOp, KrausPair, MixingUnitary,
    MAX_DT_GAMMA,
};
pub use trajectory::{optimize_phi, qt_step, run_trajectory, QtConfig, TrajectoryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Naive,
    PhiRandom,
    PhiOpt,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Naive, Strategy::PhiRandom, Strategy::PhiOpt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::PhiRandom => "phi-random",
            Strategy::PhiOpt => "phi-opt",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "phi-random" | "phi_random" => Ok(Strategy::PhiRandom),
            "phi-opt" | "phi_opt" => Ok(Strategy::PhiOpt),
            other => domain(format!(
                "unknown strategy '{other}' (expected naive, phi-random or phi-opt)"
            )),
        }
    }
}

/// ξ = (2/N) |⟨S⃗⟩|, the length of the mean collective spin.
///
/// ⟨S_z⟩ = Σ |c_m|² (m − N/2) and |⟨S_x⟩|² + |⟨S_y⟩|² = |⟨S⁻⟩|².
pub fn bloch_length(state: &SymmetricState) -> f64 {
    bloch_length_of(&state.amps)
}

pub(crate) fn bloch_length_of(amps: &[Complex64]) -> f64 {
    let n = amps.len() - 1;
    let half = 0.5 * n as f64;
    let mut sz = 0.0;
    let mut sm = Complex64::new(0.0, 0.0);
    for m in 0..=n {
        sz += amps[m].norm_sqr() * (m as f64 - half);
        if m > 0 {
            sm += amps[m - 1].conj() * amps[m] * ((m * (n + 1 - m)) as f64).sqrt();
        }
    }
    2.0 / n as f64 * (sz * sz + sm.norm_sqr()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn bloch_examples() {
        for n in [1, 2, 7, 30] {
            assert!((bloch_length(&SymmetricState::dicke(n, n).unwrap()) - 1.0).abs() < 1e-15);
            for m in 0..=n {
                let want = (2.0 * m as f64 - n as f64).abs() / n as f64;
                assert!((bloch_length(&SymmetricState::dicke(n, m).unwrap()) - want).abs() < 1e-14);
            }
        }
        assert_eq!(bloch_length(&SymmetricState::dicke(10, 5).unwrap()), 0.0);
    }

    #[test]
    fn strategy_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    proptest! {
        #[test]
        fn coherent_states_have_unit_length(n in 1usize..=60, theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..6.3) {
            let s = SymmetricState::coherent(n, theta, phi);
            prop_assert!((bloch_length(&s) - 1.0).abs() < 1e-12);
        }
    }
}
