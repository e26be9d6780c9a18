//! CSV output. Floats are written with 17 significant digits so that values
//! round-trip exactly through any parser.

use std::io::{self, Write};

use crate::css::{CssDecomposition, EtaCurve, NegativityField};
use crate::dicke::DickePopulations;
use crate::unraveling::{EnsembleStats, Strategy};

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,m,prob`
pub fn write_populations<W: Write>(mut w: W, pops: &[DickePopulations]) -> io::Result<()> {
    writeln!(w, "t,m,prob")?;
    for p in pops {
        for (m, &x) in p.probs.iter().enumerate() {
            writeln!(w, "{},{m},{}", fmt_f64(p.time), fmt_f64(x))?;
        }
    }
    Ok(())
}

/// `t,eta,log10_negativity`
pub fn write_landscape<W: Write>(mut w: W, field: &NegativityField) -> io::Result<()> {
    writeln!(w, "t,eta,log10_negativity")?;
    for (&t, row) in field.t_grid.iter().zip(&field.values) {
        for (&eta, &v) in field.eta_grid.iter().zip(row) {
            writeln!(w, "{},{},{}", fmt_f64(t), fmt_f64(eta), fmt_f64(v))?;
        }
    }
    Ok(())
}

/// `t,eta,negativity`
pub fn write_passage<W: Write>(mut w: W, curve: &EtaCurve) -> io::Result<()> {
    writeln!(w, "t,eta,negativity")?;
    for ((&t, &eta), &neg) in curve.t_grid.iter().zip(&curve.eta).zip(&curve.negativity) {
        writeln!(w, "{},{},{}", fmt_f64(t), fmt_f64(eta), fmt_f64(neg))?;
    }
    Ok(())
}

/// `t,a,theta_a,P_a`
pub fn write_css_weights<W: Write>(mut w: W, decomps: &[CssDecomposition]) -> io::Result<()> {
    writeln!(w, "t,a,theta_a,P_a")?;
    for d in decomps {
        for (a, (theta, p)) in d.thetas().iter().zip(&d.weights).enumerate() {
            writeln!(
                w,
                "{},{a},{},{}",
                fmt_f64(d.time),
                fmt_f64(*theta),
                fmt_f64(*p)
            )?;
        }
    }
    Ok(())
}

/// `t,te_mean,te_stderr,xi_mean,xi_stderr,mean_excitation`
pub fn write_qt_ensemble<W: Write>(mut w: W, s: &EnsembleStats) -> io::Result<()> {
    writeln!(w, "t,te_mean,te_stderr,xi_mean,xi_stderr,mean_excitation")?;
    for i in 0..s.times.len() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(s.times[i]),
            fmt_f64(s.te_mean[i]),
            fmt_f64(s.te_stderr[i]),
            fmt_f64(s.xi_mean[i]),
            fmt_f64(s.xi_stderr[i]),
            fmt_f64(s.mean_excitation[i])
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub strategy: Strategy,
    pub s_max_mean: f64,
    pub s_max_stderr: f64,
    pub xi_min_mean: f64,
    pub xi_min_stderr: f64,
}

impl ScalingRow {
    pub fn from_stats(n: usize, s: &EnsembleStats) -> Self {
        Self {
            n,
            strategy: s.strategy,
            s_max_mean: s.s_max_mean,
            s_max_stderr: s.s_max_stderr,
            xi_min_mean: s.xi_min_mean,
            xi_min_stderr: s.xi_min_stderr,
        }
    }
}

/// `n,strategy,s_max_mean,s_max_stderr,xi_min_mean,xi_min_stderr`
pub fn write_qt_scaling<W: Write>(mut w: W, rows: &[ScalingRow]) -> io::Result<()> {
    writeln!(
        w,
        "n,strategy,s_max_mean,s_max_stderr,xi_min_mean,xi_min_stderr"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            r.strategy,
            fmt_f64(r.s_max_mean),
            fmt_f64(r.s_max_stderr),
            fmt_f64(r.xi_min_mean),
            fmt_f64(r.xi_min_stderr)
        )?;
    }
    Ok(())
}
