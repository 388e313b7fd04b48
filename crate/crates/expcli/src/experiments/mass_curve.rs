//! The self-consistent mass along a grid of couplings.
//!
//! Output `mass_curve.csv`: `kappa, m_star, G_diag, residual,
//! fixed_point_residual, status`. `residual` is `G_{m*}(0,0) − 4κ`; numeric
//! fields are empty on rows whose status is not `ok`. In `ℤ^d` mode with
//! `d ≥ 3`, couplings at or above `κ_c` carry the status `no positive mass`.

use largen::green::{green_zd, kappa_c, MassParameter, TorusSpectrum};
use largen::lattice::TorusLattice;
use largen::stationary::{self_consistency_residual, solve_mass_finite, solve_mass_zd, GreenDomain};

use super::{begin, finish};
use crate::config::{self, at_least, grid, LatticeMode};
use crate::output::{float, write_csv};
use crate::{Check, Config, Report, RunError};

pub const NAME: &str = "mass-curve";
pub const ROW_TOLERANCE: f64 = 1e-8;
pub const NO_MASS: &str = "no positive mass";

#[derive(Debug, Clone, PartialEq)]
pub struct MassCurveParams {
    pub mode: LatticeMode,
    pub d: usize,
    /// Torus side; unused in `ℤ^d` mode.
    pub side: Option<usize>,
    pub kappa_grid: Vec<f64>,
}

impl MassCurveParams {
    pub fn from_config(cfg: &Config) -> Result<Self, config::ConfigError> {
        let mode = cfg.lattice.mode.unwrap_or(LatticeMode::Torus);
        let d = at_least(cfg.lattice.d, 1, "lattice.d")?;
        let side = match mode {
            LatticeMode::Torus => Some(at_least(cfg.lattice.side, 3, "lattice.L")?),
            LatticeMode::Zd => None,
        };
        let kappa_grid = grid(&cfg.model.kappa_grid, "model.kappa_grid", |k: f64| k > 0.0 && k.is_finite(), "need kappa > 0")?;
        Ok(Self { mode, d, side, kappa_grid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassRow {
    pub kappa: f64,
    /// `(m*, G_diag, residual, fixed_point_residual)` when solved.
    pub values: Option<(f64, f64, f64, f64)>,
    pub status: String,
}

fn solve_row(p: &MassCurveParams, lat: Option<&TorusLattice>, kappa: f64) -> largen::Result<Option<(f64, f64, f64, f64)>> {
    match lat {
        Some(lat) => {
            let m = solve_mass_finite(lat, kappa)?;
            let g = TorusSpectrum::new(lat).green_diagonal(MassParameter::torus(m)?);
            let fp = self_consistency_residual(GreenDomain::Torus(lat), m, kappa)?;
            Ok(Some((m, g, g - 4.0 * kappa, fp)))
        }
        None => {
            let Some(m) = solve_mass_zd(p.d, kappa)? else {
                return Ok(None);
            };
            let g = green_zd(p.d, m, &vec![0; p.d])?;
            let fp = self_consistency_residual(GreenDomain::Zd(p.d), m, kappa)?;
            Ok(Some((m, g, g - 4.0 * kappa, fp)))
        }
    }
}

pub fn compute(p: &MassCurveParams) -> Result<Vec<MassRow>, RunError> {
    let lat = match p.side {
        Some(side) => Some(TorusLattice::new(p.d, side)?),
        None => None,
    };
    Ok(p.kappa_grid
        .iter()
        .map(|&kappa| match solve_row(p, lat.as_ref(), kappa) {
            Ok(Some(v)) => MassRow { kappa, values: Some(v), status: "ok".into() },
            Ok(None) => MassRow { kappa, values: None, status: NO_MASS.into() },
            Err(e) => MassRow { kappa, values: None, status: format!("error: {e}") },
        })
        .collect())
}

pub fn checks(p: &MassCurveParams, rows: &[MassRow]) -> Result<Vec<Check>, RunError> {
    let solved: Vec<(f64, (f64, f64, f64, f64))> = rows.iter().filter_map(|r| r.values.map(|v| (r.kappa, v))).collect();
    let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
    let mut out = vec![Check::new("rows_solved", failed == 0, format!("{failed} rows failed"))];
    let worst = solved.iter().map(|(_, v)| v.2.abs().max(v.3.abs())).fold(0.0, f64::max);
    out.push(Check::new(
        "row_residuals",
        worst <= ROW_TOLERANCE,
        format!("max residual {worst:.3e}, bound {ROW_TOLERANCE:e}"),
    ));
    if solved.len() >= 2 {
        let decreasing = solved.windows(2).all(|w| w[1].1 .0 < w[0].1 .0);
        out.push(Check::new("m_star_decreasing", decreasing, "m* strictly decreasing in kappa"));
    }
    if p.mode == LatticeMode::Zd && p.d >= 3 {
        let last_massive = rows.iter().rev().find(|r| r.values.is_some()).map(|r| r.kappa);
        let first_massless = rows.iter().find(|r| r.status == NO_MASS).map(|r| r.kappa);
        if let (Some(a), Some(b)) = (last_massive, first_massless) {
            let kc = kappa_c(p.d)?;
            out.push(Check::new(
                "transition_bracket",
                a < kc && kc <= b,
                format!("kappa_c = {kc:.8} against bracket ({a}, {b}]"),
            ));
        }
    }
    Ok(out)
}

pub fn run(cfg: &Config) -> Result<Report, RunError> {
    let p = MassCurveParams::from_config(cfg)?;
    let mut w = begin(cfg, NAME)?;
    let rows = compute(&p)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![float(r.kappa)];
            match r.values {
                Some((m, g, res, fp)) => v.extend([float(m), float(g), float(res), float(fp)]),
                None => v.extend(std::iter::repeat_n(String::new(), 4)),
            }
            v.push(r.status.clone());
            v
        })
        .collect();
    write_csv(
        &w.output("mass_curve.csv"),
        &["kappa", "m_star", "G_diag", "residual", "fixed_point_residual", "status"],
        &table,
    )?;
    let checks = checks(&p, &rows)?;
    finish(w, NAME, checks)
}
