//! Executes a resolved configuration and writes its output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dicke_css::dicke::uniform_grid;
use dicke_css::io::{self as csv, ScalingRow};
use dicke_css::{
    ensemble_run, entropy_dicke, evolve_exact, scan_landscape, trace_passage, ModelParams,
    QtConfig, TraceOptions,
};
use serde::Serialize;

use crate::config::{RunConfig, Subcommand};

pub enum Status {
    Complete,
    /// Outputs were written but some results are missing (passage gaps).
    Partial(String),
}

#[derive(Serialize)]
struct EntropyReport {
    n: usize,
    m: usize,
    n_b: usize,
    entropy_bits: f64,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, String> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), String> {
    let mut w = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| format!("cannot write {}: {e}", dir.join(name).display()))
}

fn qt_config(c: &RunConfig, n: usize) -> Result<QtConfig, String> {
    let params = ModelParams::new(n, c.gamma.unwrap()).map_err(|e| e.to_string())?;
    Ok(QtConfig {
        params,
        dt: c.dt.unwrap(),
        t_max: c.t_max.unwrap(),
        strategy: c.strategy.unwrap_or(dicke_css::Strategy::PhiOpt),
        theta_f: c.theta_f.unwrap(),
        record_stride: c.record_stride.unwrap(),
        phi_grid: c.phi_grid.unwrap(),
    })
}

/// Runs `c`, which must come out of `config::resolve`.
pub fn run(c: &RunConfig) -> Result<Status, String> {
    let sub = c
        .subcommand
        .expect("resolved config carries its subcommand");
    let out: PathBuf = c.out_dir.clone().expect("resolved config has out_dir");

    if sub == Subcommand::Entropy {
        let (n, m, n_b) = (c.n.unwrap(), c.m.unwrap(), c.n_b.unwrap());
        let s = entropy_dicke(n, m, n_b).map_err(|e| e.to_string())?;
        let report = EntropyReport {
            n,
            m,
            n_b,
            entropy_bits: s,
        };
        println!(
            "{}",
            serde_json::to_string(&report).map_err(|e| e.to_string())?
        );
        return Ok(Status::Complete);
    }

    fs::create_dir_all(&out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let config_json = serde_json::to_string_pretty(c).map_err(|e| e.to_string())?;
    write_with(&out, "run_config.json", |w| writeln!(w, "{config_json}"))?;

    let err = |e: dicke_css::Error| e.to_string();
    match sub {
        Subcommand::Exact => {
            let p = ModelParams::new(c.n.unwrap(), c.gamma.unwrap()).map_err(err)?;
            let pops = evolve_exact(&p, &uniform_grid(c.t_max.unwrap(), c.t_points.unwrap()))
                .map_err(err)?;
            write_with(&out, "populations.csv", |w| {
                csv::write_populations(w, &pops)
            })?;
        }
        Subcommand::CssScan => {
            let p = ModelParams::new(c.n.unwrap(), c.gamma.unwrap()).map_err(err)?;
            let k = c.eta_points.unwrap();
            let eta_max = c.eta_max.unwrap();
            let etas: Vec<f64> = (1..=k).map(|i| eta_max * i as f64 / k as f64).collect();
            let ts = uniform_grid(c.t_max.unwrap(), c.t_points.unwrap());
            let field = scan_landscape(&p, &ts, &etas, c.precision.unwrap()).map_err(err)?;
            write_with(&out, "landscape.csv", |w| csv::write_landscape(w, &field))?;
            if field.failures > 0 {
                eprintln!(
                    "note: {} cells had a singular mapping and are stored at 0",
                    field.failures
                );
            }
        }
        Subcommand::CssTrace => {
            let p = ModelParams::new(c.n.unwrap(), c.gamma.unwrap()).map_err(err)?;
            let mut opts = TraceOptions::new(c.branch.unwrap(), c.precision.unwrap());
            opts.tol = c.tol.unwrap();
            opts.eta_max = c.eta_max.unwrap();
            let ts = uniform_grid(c.t_max.unwrap(), c.t_points.unwrap());
            let tr = trace_passage(&p, &ts, &opts).map_err(err)?;
            write_with(&out, "passage.csv", |w| csv::write_passage(w, &tr.curve))?;
            write_with(&out, "css_weights.csv", |w| {
                csv::write_css_weights(w, &tr.decompositions)
            })?;
            if !tr.jumps.is_empty() {
                eprintln!(
                    "note: eta left the predicted neighbourhood at {} times",
                    tr.jumps.len()
                );
            }
            if !tr.is_complete() {
                return Ok(Status::Partial(format!(
                    "no passing eta within tolerance at {} of {} times (first at t = {})",
                    tr.gaps.len(),
                    ts.len(),
                    tr.gaps[0]
                )));
            }
        }
        Subcommand::Qt => {
            let cfg = qt_config(c, c.n.unwrap())?;
            let stats = ensemble_run(&cfg, c.ntraj.unwrap(), c.seed.unwrap(), c.workers.unwrap())
                .map_err(err)?;
            write_with(&out, "qt_ensemble.csv", |w| {
                csv::write_qt_ensemble(w, &stats)
            })?;
        }
        Subcommand::QtScaling => {
            let mut rows = Vec::new();
            for &n in c.ns.as_ref().unwrap() {
                for &s in c.strategies.as_ref().unwrap() {
                    let mut cfg = qt_config(c, n)?;
                    cfg.strategy = s;
                    let stats =
                        ensemble_run(&cfg, c.ntraj.unwrap(), c.seed.unwrap(), c.workers.unwrap())
                            .map_err(|e| format!("n = {n}, {s}: {e}"))?;
                    rows.push(ScalingRow::from_stats(n, &stats));
                }
            }
            write_with(&out, "qt_scaling.csv", |w| csv::write_qt_scaling(w, &rows))?;
        }
        Subcommand::Entropy => unreachable!(),
    }
    Ok(Status::Complete)
}
