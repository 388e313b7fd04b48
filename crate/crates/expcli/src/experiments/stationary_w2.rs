//! Finite-volume stationary measure: Gibbs-equilibrated spins against the
//! Gaussian field `μ^𝔏`.
//!
//! Each retained Gibbs state gives the empirical single-component covariance
//! `h_xy = (1/N) Σ_i Φ^i_x Φ^i_y`, compared with the `μ^𝔏` covariance under
//! the Bures–Wasserstein distance. Chains are independent; standard errors
//! are taken over chain means.
//!
//! Outputs:
//! - `stationary_w2.csv`: `N, w2_mean, w2_stderr, w2_ci_low, w2_ci_high,
//!   w2_site0, fourth_moment_sum, fourth_moment_stderr, states`
//! - `stationary_w2_fit.json`: log-log fit of `w2_mean` against `N`
//!   (at least four grid points)

use rayon::prelude::*;
use serde::Serialize;

use largen::covariance::CovarianceMatrix;
use largen::lattice::TorusLattice;
use largen::metrics::{fit_rate, w2_empirical_1d, w2_gaussian, MeanEstimate, RateFit};
use largen::rng::{NoiseChannel, NoisePlan};
use largen::stationary::{sample_gff, StationaryField};

use super::{begin, finish, gibbs_chain, EXP_W2_GIBBS, EXP_W2_REFERENCE};
use crate::config::{self, at_least, grid, lattice_dims, nonneg_f64};
use crate::output::{float, write_csv, write_json};
use crate::{Check, Config, Report, RunError};

pub const NAME: &str = "stationary-w2";
pub const SLOPE_BAND: (f64, f64) = (-0.8, -0.2);

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryW2Params {
    pub d: usize,
    pub side: usize,
    pub kappa: f64,
    pub n_grid: Vec<usize>,
    pub burn_in: usize,
    pub thin: usize,
    pub count: usize,
    pub chains: usize,
    pub master_seed: u64,
}

impl StationaryW2Params {
    pub fn from_config(cfg: &Config) -> Result<Self, config::ConfigError> {
        let (d, side) = lattice_dims(cfg)?;
        let kappa = nonneg_f64(cfg.model.kappa, "model.kappa")?;
        let bound = 1.0 / (32.0 * d as f64);
        if kappa >= bound {
            return Err(config::invalid("model.kappa", format!("must be < 1/(32d) = {bound}, got {kappa}")));
        }
        Ok(Self {
            d,
            side,
            kappa,
            n_grid: grid(&cfg.model.n_grid, "model.N_grid", |n| n >= 2, "need N >= 2")?,
            burn_in: at_least(cfg.sampler.burn_in, 0, "sampler.burn_in")?,
            thin: at_least(cfg.sampler.thin, 1, "sampler.thin")?,
            count: at_least(cfg.sampler.count, 1, "sampler.count")?,
            chains: at_least(cfg.sampler.replications, 2, "sampler.replications")?,
            master_seed: cfg.master_seed()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Point {
    pub n: usize,
    pub w2: MeanEstimate,
    /// 1-D distance between pooled `Φ^1_0` draws and reference draws of equal size.
    pub w2_site0: f64,
    /// `Σ_x E[(Φ^1_x)⁴]`.
    pub fourth_moment: MeanEstimate,
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct W2Result {
    pub points: Vec<W2Point>,
    pub fit: Option<RateFit>,
}

struct ChainSummary {
    w2: f64,
    fourth: f64,
    site0: Vec<f64>,
}

fn run_chain(lat: &TorusLattice, p: &StationaryW2Params, target: &CovarianceMatrix, plan: NoisePlan, n: usize, chain: usize) -> Result<ChainSummary, RunError> {
    let channel = NoiseChannel::new(plan, EXP_W2_GIBBS | n as u64, chain as u64);
    let sites = lat.num_sites();
    let (mut w2_sum, mut fourth_sum) = (0.0, 0.0);
    let mut site0 = Vec::with_capacity(p.count);
    let mut failure = None;
    gibbs_chain(lat, n, p.kappa, &channel, p.burn_in, p.thin, p.count, |c| {
        let mut h = nalgebra::DMatrix::zeros(sites, sites);
        for x in 0..sites {
            for y in x..sites {
                let v = c.pair_correlation(x, y);
                h[(x, y)] = v;
                h[(y, x)] = v;
            }
        }
        match CovarianceMatrix::from_matrix(h).and_then(|h| w2_gaussian(&h, target)) {
            Ok(v) => w2_sum += v,
            Err(e) => failure = failure.take().or(Some(e)),
        }
        let fourth: f64 = c.field().values().iter().map(|v| v.powi(4)).sum();
        fourth_sum += fourth / n as f64;
        site0.push(c.get(0, 0));
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(ChainSummary {
        w2: w2_sum / p.count as f64,
        fourth: fourth_sum / p.count as f64,
        site0,
    })
}

/// `count` reference draws of the site-0 value: `μ^𝔏` for `κ > 0`, else `N(0, 1)`.
fn reference_site0(lat: &TorusLattice, field: Option<&StationaryField>, plan: NoisePlan, n: usize, count: usize) -> Result<Vec<f64>, RunError> {
    let channel = NoiseChannel::new(plan, EXP_W2_REFERENCE | n as u64, 0);
    Ok(match field {
        Some(field) => {
            let s = sample_gff(field, lat, &channel, count)?;
            (0..count).map(|j| s.sample(j)[0]).collect()
        }
        None => {
            let stream = channel.stream(0, 0);
            (0..count as u64).map(|j| stream.normal_at(j)).collect()
        }
    })
}

pub fn compute(p: &StationaryW2Params) -> Result<W2Result, RunError> {
    let lat = TorusLattice::new(p.d, p.side)?;
    let plan = NoisePlan::new(p.master_seed, 1.0)?;
    let field = if p.kappa > 0.0 {
        Some(StationaryField::finite(&lat, p.kappa)?)
    } else {
        None
    };
    let target = match &field {
        Some(f) => f.covariance(&lat)?,
        None => CovarianceMatrix::identity(lat.num_sites()),
    };
    let specs: Vec<(usize, usize)> = p
        .n_grid
        .iter()
        .flat_map(|&n| (0..p.chains).map(move |c| (n, c)))
        .collect();
    let chains = specs
        .par_iter()
        .map(|&(n, c)| run_chain(&lat, p, &target, plan, n, c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut points = Vec::new();
    for (k, &n) in p.n_grid.iter().enumerate() {
        let group = &chains[k * p.chains..(k + 1) * p.chains];
        let w2: Vec<f64> = group.iter().map(|c| c.w2).collect();
        let fourth: Vec<f64> = group.iter().map(|c| c.fourth).collect();
        let site0: Vec<f64> = group.iter().flat_map(|c| c.site0.iter().copied()).collect();
        let reference = reference_site0(&lat, field.as_ref(), plan, n, site0.len())?;
        points.push(W2Point {
            n,
            w2: MeanEstimate::from_samples(&w2)?,
            w2_site0: w2_empirical_1d(&site0, &reference)?,
            fourth_moment: MeanEstimate::from_samples(&fourth)?,
            states: site0.len(),
        });
    }
    let fit = if points.len() >= 4 {
        let xy: Vec<(f64, f64)> = points.iter().map(|g| (g.n as f64, g.w2.mean)).collect();
        Some(fit_rate(&xy, Some(-0.5))?)
    } else {
        None
    };
    Ok(W2Result { points, fit })
}

/// True when each value sits below its predecessor by more than both 95% half-widths.
pub fn strictly_decreasing_beyond_ci(points: &[W2Point]) -> bool {
    points.windows(2).all(|w| {
        let (a, b) = (&w[0].w2, &w[1].w2);
        a.mean - b.mean > 1.96 * (a.stderr + b.stderr)
    })
}

pub fn run(cfg: &Config) -> Result<Report, RunError> {
    let p = StationaryW2Params::from_config(cfg)?;
    let mut w = begin(cfg, NAME)?;
    let result = compute(&p)?;
    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|g| {
            let (lo, hi) = g.w2.ci95();
            vec![
                g.n.to_string(),
                float(g.w2.mean),
                float(g.w2.stderr),
                float(lo),
                float(hi),
                float(g.w2_site0),
                float(g.fourth_moment.mean),
                float(g.fourth_moment.stderr),
                g.states.to_string(),
            ]
        })
        .collect();
    write_csv(
        &w.output("stationary_w2.csv"),
        &[
            "N",
            "w2_mean",
            "w2_stderr",
            "w2_ci_low",
            "w2_ci_high",
            "w2_site0",
            "fourth_moment_sum",
            "fourth_moment_stderr",
            "states",
        ],
        &rows,
    )?;

    let mut checks = Vec::new();
    if result.points.len() >= 2 {
        checks.push(Check::new(
            "w2_decreasing",
            strictly_decreasing_beyond_ci(&result.points),
            "consecutive w2_mean gaps exceed the summed 95% half-widths",
        ));
    }
    if let Some(fit) = &result.fit {
        write_json(&w.output("stationary_w2_fit.json"), fit)?;
        checks.push(Check::new(
            "w2_slope",
            fit.slope >= SLOPE_BAND.0 && fit.slope <= SLOPE_BAND.1,
            format!("slope {:.4} ± {:.4}, band [{}, {}]", fit.slope, fit.stderr, SLOPE_BAND.0, SLOPE_BAND.1),
        ));
    }
    finish(w, NAME, checks)
}
