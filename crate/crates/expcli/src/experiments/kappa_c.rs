//! Critical coupling on `ℤ^d`, `κ_c = ¼ G_{ℤ^d,0}(0,0)`, with its refinement
//! history.
//!
//! Outputs:
//! - `kappa_c.csv`: `d, kappa_c, G00, last_difference, cells`
//! - `kappa_c_levels.csv`: `cells, raw, extrapolated`

use largen::green::{kappa_c_estimate, QuadratureEstimate};

use super::{begin, finish};
use crate::config::{self, at_least};
use crate::output::{float, write_csv};
use crate::{Check, Config, Report, RunError};

pub const NAME: &str = "kappa-c";
pub const STABILITY: f64 = 1e-4;
/// Acceptance bracket for `κ_c(3)`.
pub const BRACKET_D3: (f64, f64) = (0.3785, 0.3797);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaCParams {
    pub d: usize,
}

impl KappaCParams {
    pub fn from_config(cfg: &Config) -> Result<Self, config::ConfigError> {
        let d = at_least(cfg.lattice.d, 3, "lattice.d")?;
        Ok(Self { d })
    }
}

pub fn compute(p: &KappaCParams) -> Result<QuadratureEstimate, RunError> {
    Ok(kappa_c_estimate(p.d)?)
}

pub fn checks(p: &KappaCParams, est: &QuadratureEstimate) -> Vec<Check> {
    let kc = 0.25 * est.value;
    let mut out = vec![Check::new(
        "quadrature_stable",
        est.difference <= STABILITY,
        format!("last two refinement levels differ by {:.3e}", est.difference),
    )];
    if p.d == 3 {
        out.push(Check::new(
            "kappa_c_bracket",
            kc >= BRACKET_D3.0 && kc <= BRACKET_D3.1,
            format!("kappa_c(3) = {kc:.8}, bracket [{}, {}]", BRACKET_D3.0, BRACKET_D3.1),
        ));
    }
    out
}

pub fn run(cfg: &Config) -> Result<Report, RunError> {
    let p = KappaCParams::from_config(cfg)?;
    let mut w = begin(cfg, NAME)?;
    let est = compute(&p)?;
    write_csv(
        &w.output("kappa_c.csv"),
        &["d", "kappa_c", "G00", "last_difference", "cells"],
        &[vec![p.d.to_string(), float(0.25 * est.value), float(est.value), float(est.difference), est.cells.to_string()]],
    )?;
    let levels: Vec<Vec<String>> = est
        .levels
        .iter()
        .map(|&(c, raw, ext)| vec![c.to_string(), float(raw), float(ext)])
        .collect();
    write_csv(&w.output("kappa_c_levels.csv"), &["cells", "raw", "extrapolated"], &levels)?;
    let checks = checks(&p, &est);
    finish(w, NAME, checks)
}
