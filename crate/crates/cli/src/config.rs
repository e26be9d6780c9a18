//! Run configuration: JSON file values overlaid by command-line flags, then
//! checked and completed with defaults.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dicke_css::{Branch, Precision, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const OUT_DIR_ENV: &str = "DICKE_CSS_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Exact,
    CssScan,
    CssTrace,
    Qt,
    QtScaling,
    Entropy,
}

impl Subcommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Exact => "exact",
            Subcommand::CssScan => "css-scan",
            Subcommand::CssTrace => "css-trace",
            Subcommand::Qt => "qt",
            Subcommand::QtScaling => "qt-scaling",
            Subcommand::Entropy => "entropy",
        }
    }

    /// Keys that mean something to this subcommand.
    fn keys(&self) -> &'static [&'static str] {
        const QT: &[&str] = &[
            "n",
            "gamma",
            "dt",
            "t_max",
            "strategy",
            "theta_f",
            "ntraj",
            "seed",
            "workers",
            "record_stride",
            "phi_grid",
        ];
        const QT_SCALING: &[&str] = &[
            "ns",
            "gamma",
            "dt",
            "t_max",
            "strategies",
            "theta_f",
            "ntraj",
            "seed",
            "workers",
            "record_stride",
            "phi_grid",
        ];
        match self {
            Subcommand::Exact => &["n", "gamma", "t_max", "t_points"],
            Subcommand::CssScan => &[
                "n",
                "gamma",
                "t_max",
                "t_points",
                "eta_max",
                "eta_points",
                "precision",
            ],
            Subcommand::CssTrace => &[
                "n",
                "gamma",
                "t_max",
                "t_points",
                "eta_max",
                "precision",
                "branch",
                "tol",
            ],
            Subcommand::Qt => QT,
            Subcommand::QtScaling => QT_SCALING,
            Subcommand::Entropy => &["n", "m", "n_b"],
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every key a config file or the flags may set. Unset keys are omitted
/// from the JSON form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,

    /// Number of emitters N
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Collective decay rate Γ
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Trajectory time step (default 1e-3/Γ)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// End of the time window (default 12/Γ)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Number of time points including t = 0
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    /// Upper end of the η range
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_max: Option<f64>,
    /// Number of η values in a landscape scan
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_points: Option<usize>,
    /// double or extended (default: extended above 20 emitters)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    /// lower or upper passage
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    /// Negativity tolerance for the passage tracer
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// naive, phi-random or phi-opt
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    /// Comma-separated strategies for qt-scaling
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<Strategy>>,
    /// Kraus mixing angle θ_F in [0, π/2]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_f: Option<f64>,
    /// Number of trajectories
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ntraj: Option<u64>,
    /// Root seed of the trajectory random streams
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Record diagnostics every this many steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    /// Coarse grid size of the φ search
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_grid: Option<usize>,
    /// Comma-separated emitter numbers for qt-scaling
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    /// Excitation number of the Dicke state
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Size of block B (default ⌊N/2⌋)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_b: Option<usize>,
    /// Output directory
    #[arg(long, env = OUT_DIR_ENV)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

fn to_map(cfg: &RunConfig) -> Map<String, Value> {
    match serde_json::to_value(cfg) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

pub fn load_file(path: &Path) -> Result<RunConfig, UsageError> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
}

/// Flags override file values key by key. The file may name a subcommand,
/// but it has to agree with the one invoked.
pub fn merge(
    sub: Subcommand,
    file: Option<RunConfig>,
    flags: RunConfig,
) -> Result<RunConfig, UsageError> {
    let mut map: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(file) = file {
        if let Some(s) = file.subcommand {
            if s != sub {
                return usage(format!(
                    "conflicting value for `subcommand`: config file says {s}, command line says {sub}"
                ));
            }
        }
        map.extend(to_map(&file));
    }
    map.extend(to_map(&flags));
    map.insert("subcommand".into(), Value::String(sub.as_str().into()));

    for key in map.keys() {
        if key != "subcommand" && key != "out_dir" && !sub.keys().contains(&key.as_str()) {
            return usage(format!("key `{key}` does not apply to `{sub}`"));
        }
    }
    let obj: Map<String, Value> = map.into_iter().collect();
    serde_json::from_value(Value::Object(obj)).map_err(|e| UsageError(e.to_string()))
}

fn positive(key: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        usage(format!(
            "invalid value for `{key}`: must be positive and finite, got {v}"
        ))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<usize, UsageError> {
    if v >= min {
        Ok(v)
    } else {
        usage(format!(
            "invalid value for `{key}`: must be at least {min}, got {v}"
        ))
    }
}

fn required<T>(key: &str, v: Option<T>) -> Result<T, UsageError> {
    v.ok_or_else(|| UsageError(format!("missing value for `{key}`")))
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Check every key and fill in the defaults relevant to the subcommand.
pub fn resolve(mut c: RunConfig) -> Result<RunConfig, UsageError> {
    let sub = required("subcommand", c.subcommand)?;
    c.out_dir.get_or_insert_with(|| PathBuf::from("out"));

    if sub != Subcommand::QtScaling {
        at_least("n", required("n", c.n)?, 1)?;
    }
    if sub == Subcommand::Entropy {
        let n = at_least("n", c.n.unwrap_or(0), 2)?;
        let m = *c.m.get_or_insert(n / 2);
        if m > n {
            return usage(format!(
                "invalid value for `m`: must not exceed n = {n}, got {m}"
            ));
        }
        let n_b = *c.n_b.get_or_insert(n / 2);
        if n_b == 0 || n_b >= n {
            return usage(format!(
                "invalid value for `n_b`: must be in 1..={}, got {n_b}",
                n - 1
            ));
        }
        return Ok(c);
    }

    let gamma = positive("gamma", *c.gamma.get_or_insert(1.0))?;
    positive("t_max", *c.t_max.get_or_insert(12.0 / gamma))?;

    match sub {
        Subcommand::Exact | Subcommand::CssScan | Subcommand::CssTrace => {
            at_least("t_points", *c.t_points.get_or_insert(241), 2)?;
        }
        _ => {}
    }
    match sub {
        Subcommand::CssScan => {
            positive("eta_max", *c.eta_max.get_or_insert(1.2))?;
            at_least("eta_points", *c.eta_points.get_or_insert(121), 2)?;
            c.precision
                .get_or_insert(Precision::default_for(c.n.unwrap_or(0)));
        }
        Subcommand::CssTrace => {
            let branch = *c.branch.get_or_insert(Branch::Lower);
            let eta_max = *c.eta_max.get_or_insert(match branch {
                Branch::Lower => 1.0,
                Branch::Upper => 1.2,
            });
            positive("eta_max", eta_max)?;
            if branch == Branch::Lower && eta_max > 1.0 {
                return usage(format!(
                    "invalid value for `eta_max`: the lower branch is limited to 1, got {eta_max}"
                ));
            }
            positive("tol", *c.tol.get_or_insert(1e-6))?;
            c.precision
                .get_or_insert(Precision::default_for(c.n.unwrap_or(0)));
        }
        Subcommand::Qt | Subcommand::QtScaling => {
            let dt = positive("dt", *c.dt.get_or_insert(1e-3 / gamma))?;
            if dt * gamma > 1e-2 {
                return usage(format!(
                    "invalid value for `dt`: dt*gamma must not exceed 1e-2, got {}",
                    dt * gamma
                ));
            }
            let theta = *c.theta_f.get_or_insert(FRAC_PI_4);
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
                return usage(format!(
                    "invalid value for `theta_f`: must lie in [0, pi/2], got {theta}"
                ));
            }
            at_least("ntraj", c.ntraj.get_or_insert(100).to_owned() as usize, 1)?;
            c.seed.get_or_insert(0);
            at_least("workers", *c.workers.get_or_insert_with(default_workers), 1)?;
            at_least("record_stride", *c.record_stride.get_or_insert(10), 1)?;
            at_least("phi_grid", *c.phi_grid.get_or_insert(8), 8)?;
            if sub == Subcommand::Qt {
                c.strategy.get_or_insert(Strategy::PhiOpt);
            } else {
                let ns = c.ns.get_or_insert_with(|| vec![8, 16, 32]);
                if ns.is_empty() || ns.iter().any(|&n| n == 0) {
                    return usage("invalid value for `ns`: needs one or more emitter numbers >= 1");
                }
                let s = c.strategies.get_or_insert_with(|| Strategy::ALL.to_vec());
                if s.is_empty() {
                    return usage("invalid value for `strategies`: needs at least one strategy");
                }
            }
        }
        _ => {}
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> RunConfig {
        RunConfig::default()
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            n: Some(4),
            gamma: Some(2.0),
            ..flags()
        };
        let cli = RunConfig {
            n: Some(7),
            ..flags()
        };
        let c = resolve(merge(Subcommand::Exact, Some(file), cli).unwrap()).unwrap();
        assert_eq!(c.n, Some(7));
        assert_eq!(c.gamma, Some(2.0));
        assert_eq!(c.t_max, Some(6.0));
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"n": 3, "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let cli = RunConfig {
            n: Some(3),
            dt: Some(1e-3),
            ..flags()
        };
        let err = merge(Subcommand::Exact, None, cli).unwrap_err();
        assert!(err.0.contains("`dt`"));
    }

    #[test]
    fn subcommand_conflict_names_the_key() {
        let file = RunConfig {
            subcommand: Some(Subcommand::Qt),
            n: Some(3),
            ..flags()
        };
        let err = merge(Subcommand::Exact, Some(file), flags()).unwrap_err();
        assert!(err.0.contains("`subcommand`"));
    }

    #[test]
    fn invalid_values_name_the_key() {
        for (cfg, key) in [
            (
                RunConfig {
                    n: Some(0),
                    ..flags()
                },
                "`n`",
            ),
            (
                RunConfig {
                    n: Some(3),
                    gamma: Some(-1.0),
                    ..flags()
                },
                "`gamma`",
            ),
            (
                RunConfig {
                    n: Some(3),
                    t_points: Some(1),
                    ..flags()
                },
                "`t_points`",
            ),
        ] {
            let err = resolve(merge(Subcommand::Exact, None, cfg).unwrap()).unwrap_err();
            assert!(err.0.contains(key), "{}", err.0);
        }
        let cfg = RunConfig {
            n: Some(3),
            dt: Some(0.5),
            ..flags()
        };
        assert!(resolve(merge(Subcommand::Qt, None, cfg).unwrap())
            .unwrap_err()
            .0
            .contains("`dt`"));
        let cfg = RunConfig {
            n: Some(3),
            eta_max: Some(1.1),
            ..flags()
        };
        assert!(resolve(merge(Subcommand::CssTrace, None, cfg).unwrap())
            .unwrap_err()
            .0
            .contains("`eta_max`"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cli = RunConfig {
            n: Some(50),
            strategy: Some(Strategy::PhiOpt),
            ntraj: Some(100),
            seed: Some(42),
            ..flags()
        };
        let c = resolve(merge(Subcommand::Qt, None, cli).unwrap()).unwrap();
        assert_eq!(c.dt, Some(1e-3));
        assert_eq!(c.theta_f, Some(FRAC_PI_4));
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            resolve(merge(Subcommand::Qt, Some(back), flags()).unwrap()).unwrap(),
            c
        );
    }

    #[test]
    fn scan_defaults() {
        let cli = RunConfig {
            n: Some(30),
            eta_max: Some(1.2),
            ..flags()
        };
        let c = resolve(merge(Subcommand::CssScan, None, cli).unwrap()).unwrap();
        assert_eq!(c.precision, Some(Precision::Extended));
        assert_eq!(c.eta_max, Some(1.2));
    }
}
