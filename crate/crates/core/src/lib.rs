//! Collective (Dicke) superradiant decay in the permutation-symmetric sector.
//!
//! * [`dicke`]: exact population dynamics and emission diagnostics.
//! * [`css`]: positive coherent-spin-state decompositions of the exact state.
//! * [`entanglement`]: bipartite entropies of symmetric states.
//! * [`unraveling`]: Kraus-operator quantum trajectories and ensembles.
//! * [`io`]: CSV writers shared by the command-line front end.

pub mod css;
pub mod dd;
pub mod dicke;
pub mod entanglement;
pub mod error;
pub mod expm;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod optimize;
pub mod unraveling;

pub use css::{
    build_mapping, eta_analytic_n2, negativity, reconstruct_rho, scan_landscape, solve_css,
    solve_css_extended, trace_passage, Branch, CssDecomposition, EtaCurve, MappingMatrix,
    NegativityField, Precision, TraceOptions, TraceResult,
};
pub use dd::{DoubleDouble, Real};
pub use dicke::{
    beta_sq, build_generator, emission_rate, evolution_matrix, evolve_exact, DickePopulations,
    EvolutionMatrix, Generator, ModelParams,
};
pub use entanglement::{
    brute_force_entropy, dicke_schmidt_probs, entropy_dicke, entropy_symmetric, Bipartition,
    SymmetricState,
};
pub use error::{Error, Result};
pub use unraveling::{
    bloch_length, ensemble_run, kraus_naive, optimize_phi, qt_step, remix, run_trajectory,
    EnsembleStats, KrausPair, MixingUnitary, QtConfig, Strategy, TrajectoryRecord,
};
