//! The two limit orders of the nearest-neighbour correlation.
//!
//! Path A runs Gibbs sampling of the spin model on each `(𝔏, N)` and reads
//! off the largest torus as `N` grows. Path B takes the exact `μ^𝔏`
//! correlation `(1/(4κ)) G_{𝔏,m*}(0, e₁)` as `𝔏` grows. Both terminal values
//! are compared with the `ℤ^d` value `(1/(4κ)) G_{ℤ^d,m*}(0, e₁)`.
//!
//! Output `commuting_diagram.csv`: `path, L, N, estimate, stderr, ci_low,
//! ci_high`. Path B and target rows have zero standard error; `N` (and for
//! the target `L`) is empty where it does not apply.

use rayon::prelude::*;

use largen::green::{green_torus, green_zd, QUADRATURE_TOLERANCE};
use largen::lattice::TorusLattice;
use largen::metrics::MeanEstimate;
use largen::rng::{NoiseChannel, NoisePlan};
use largen::stationary::{solve_mass_finite, solve_mass_zd};

use super::{begin, finish, gibbs_chain, nn_correlation, EXP_DIAGRAM_GIBBS};
use crate::config::{self, at_least, grid, positive_f64};
use crate::output::{float, write_csv};
use crate::{Check, Config, Report, RunError};

pub const NAME: &str = "commuting-diagram";

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramParams {
    pub d: usize,
    pub side_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub kappa: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub count: usize,
    pub chains: usize,
    pub master_seed: u64,
}

impl DiagramParams {
    pub fn from_config(cfg: &Config) -> Result<Self, config::ConfigError> {
        let d = at_least(cfg.lattice.d, 1, "lattice.d")?;
        let kappa = positive_f64(cfg.model.kappa, "model.kappa")?;
        let bound = 1.0 / (32.0 * d as f64);
        if kappa >= bound {
            return Err(config::invalid("model.kappa", format!("must be < 1/(32d) = {bound}, got {kappa}")));
        }
        Ok(Self {
            d,
            side_grid: grid(&cfg.lattice.side_grid, "lattice.L_grid", |l| l >= 3, "need L >= 3")?,
            n_grid: grid(&cfg.model.n_grid, "model.N_grid", |n| n >= 2, "need N >= 2")?,
            kappa,
            burn_in: at_least(cfg.sampler.burn_in, 0, "sampler.burn_in")?,
            thin: at_least(cfg.sampler.thin, 1, "sampler.thin")?,
            count: at_least(cfg.sampler.count, 1, "sampler.count")?,
            chains: at_least(cfg.sampler.replications, 2, "sampler.replications")?,
            master_seed: cfg.master_seed()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramResult {
    /// `(L, N, estimate)` over the whole grid, `L` outer.
    pub gibbs: Vec<(usize, usize, MeanEstimate)>,
    /// `(L, exact μ^𝔏 correlation)`.
    pub gaussian: Vec<(usize, f64)>,
    pub target: f64,
    /// Numerical uncertainty of `target` from the quadrature tolerance.
    pub target_tolerance: f64,
}

impl DiagramResult {
    pub fn path_a(&self) -> MeanEstimate {
        self.gibbs.last().expect("non-empty grid").2
    }

    pub fn path_b(&self) -> f64 {
        self.gaussian.last().expect("non-empty grid").1
    }
}

fn chain_mean(lat: &TorusLattice, p: &DiagramParams, plan: NoisePlan, n: usize, chain: usize) -> Result<f64, RunError> {
    let word = EXP_DIAGRAM_GIBBS | ((lat.side() as u64) << 16) | n as u64;
    let channel = NoiseChannel::new(plan, word, chain as u64);
    let mut sum = 0.0;
    gibbs_chain(lat, n, p.kappa, &channel, p.burn_in, p.thin, p.count, |c| sum += nn_correlation(lat, c))?;
    Ok(sum / p.count as f64)
}

pub fn compute(p: &DiagramParams) -> Result<DiagramResult, RunError> {
    let plan = NoisePlan::new(p.master_seed, 1.0)?;
    let lattices = p
        .side_grid
        .iter()
        .map(|&l| TorusLattice::new(p.d, l))
        .collect::<Result<Vec<_>, _>>()?;
    let specs: Vec<(usize, usize, usize)> = (0..lattices.len())
        .flat_map(|li| p.n_grid.iter().flat_map(move |&n| (0..p.chains).map(move |c| (li, n, c))))
        .collect();
    let means = specs
        .par_iter()
        .map(|&(li, n, c)| chain_mean(&lattices[li], p, plan, n, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut gibbs = Vec::new();
    for (g, chunk) in means.chunks(p.chains).enumerate() {
        let (li, n, _) = specs[g * p.chains];
        gibbs.push((p.side_grid[li], n, MeanEstimate::from_samples(chunk)?));
    }
    let scale = 1.0 / (4.0 * p.kappa);
    let mut gaussian = Vec::new();
    for lat in &lattices {
        let m = solve_mass_finite(lat, p.kappa)?;
        gaussian.push((lat.side(), scale * green_torus(lat, m, 0, lat.unit_offset())?));
    }
    let m = solve_mass_zd(p.d, p.kappa)?.ok_or_else(|| {
        largen::Error::InvalidParameter {
            name: "kappa",
            reason: "no positive mass on Z^d".into(),
        }
    })?;
    let mut e1 = vec![0i64; p.d];
    e1[0] = 1;
    Ok(DiagramResult {
        gibbs,
        gaussian,
        target: scale * green_zd(p.d, m, &e1)?,
        target_tolerance: scale * QUADRATURE_TOLERANCE,
    })
}

pub fn checks(r: &DiagramResult) -> Vec<Check> {
    let a = r.path_a();
    let b = r.path_b();
    let (lo, hi) = a.ci95();
    let tol = r.target_tolerance;
    vec![
        Check::new(
            "gibbs_path_covers_target",
            lo - tol <= r.target && r.target <= hi + tol,
            format!("[{lo:.6}, {hi:.6}] against {:.6}", r.target),
        ),
        Check::new(
            "gaussian_path_covers_target",
            (b - r.target).abs() <= tol,
            format!("{b:.8} against {:.8} (± {tol:.1e})", r.target),
        ),
        Check::new(
            "paths_agree",
            (a.mean - b).abs() <= 3.0 * a.stderr + tol,
            format!("|{:.6} - {b:.6}| against 3 SE = {:.2e}", a.mean, 3.0 * a.stderr),
        ),
    ]
}

pub fn run(cfg: &Config) -> Result<Report, RunError> {
    let p = DiagramParams::from_config(cfg)?;
    let mut w = begin(cfg, NAME)?;
    let r = compute(&p)?;
    let mut rows = Vec::new();
    for &(l, n, e) in &r.gibbs {
        let (lo, hi) = e.ci95();
        rows.push(vec!["gibbs".into(), l.to_string(), n.to_string(), float(e.mean), float(e.stderr), float(lo), float(hi)]);
    }
    for &(l, v) in &r.gaussian {
        rows.push(vec!["gaussian".into(), l.to_string(), String::new(), float(v), float(0.0), float(v), float(v)]);
    }
    rows.push(vec![
        "zd_target".into(),
        String::new(),
        String::new(),
        float(r.target),
        float(0.0),
        float(r.target),
        float(r.target),
    ]);
    write_csv(
        &w.output("commuting_diagram.csv"),
        &["path", "L", "N", "estimate", "stderr", "ci_low", "ci_high"],
        &rows,
    )?;
    let checks = checks(&r);
    finish(w, NAME, checks)
}
