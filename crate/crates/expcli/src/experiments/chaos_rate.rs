//! Propagation of chaos: the interacting system and its mean-field companions
//! driven by the same Brownian motions, started from matched data.
//!
//! Outputs:
//! - `chaos_rate_jobs.csv`: `N, replication, sup_distance, final_distance`
//! - `chaos_rate.csv`: `N, mean_sup_distance, stderr, replications`
//! - `chaos_rate_fit.json`: log-log fit of the mean supremum against `N`
//!   (only when the grid has at least four points)

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use largen::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
use largen::covariance::CovarianceMatrix;
use largen::dynamics::{ComponentField, SdeParams, SpinConfiguration};
use largen::lattice::TorusLattice;
use largen::meanfield::{coupled_step, ClosureIntegrator, MAX_CLOSURE_DT};
use largen::metrics::{coupling_distance, fit_rate, MeanEstimate, RateFit};
use largen::rng::{NoiseChannel, NoisePlan};
use largen::stationary::{sample_gff, StationaryField};

use super::{begin, finish, EXP_CHAOS_INIT, EXP_CHAOS_NOISE};
use crate::config::{self, at_least, check_scheme, grid, lattice_dims, nonneg_f64, positive_f64, require, InitLaw};
use crate::output::{float, write_csv, write_json};
use crate::{Check, Config, Report, RunError};

pub const NAME: &str = "chaos-rate";
pub const SLOPE_BAND: (f64, f64) = (-1.3, -0.7);
const CHECKPOINT_KIND: &str = "chaos-coupled";

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRateParams {
    pub d: usize,
    pub side: usize,
    pub kappa: f64,
    pub dt: f64,
    pub num_steps: usize,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub init: InitLaw,
    pub checkpoint_every: Option<u64>,
    pub master_seed: u64,
}

impl ChaosRateParams {
    pub fn from_config(cfg: &Config) -> Result<Self, config::ConfigError> {
        let (d, side) = lattice_dims(cfg)?;
        let kappa = positive_f64(cfg.model.kappa, "model.kappa")?;
        let dt = positive_f64(cfg.integrator.dt, "integrator.dt")?;
        let t_end = nonneg_f64(cfg.integrator.t_end, "integrator.T")?;
        check_scheme(cfg)?;
        config::stability_guard(dt, kappa, d)?;
        let num_steps = steps_for(t_end, dt)?;
        let n_grid = grid(&cfg.model.n_grid, "model.N_grid", |n| n >= 2, "need N >= 2")?;
        let replications = at_least(cfg.sampler.replications, 2, "sampler.replications")?;
        let init = require(cfg.init, "init")?;
        let checkpoint_every = cfg.output.checkpoint_every;
        if checkpoint_every == Some(0) {
            return Err(config::invalid("output.checkpoint_every", "must be >= 1"));
        }
        Ok(Self {
            d,
            side,
            kappa,
            dt,
            num_steps,
            n_grid,
            replications,
            init,
            checkpoint_every,
            master_seed: cfg.master_seed()?,
        })
    }
}

/// `T / dt` as a step count; `T` must be a whole number of steps.
pub(crate) fn steps_for(t_end: f64, dt: f64) -> Result<usize, config::ConfigError> {
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(config::invalid(
            "integrator.T",
            format!("must be a whole multiple of dt = {dt}, got {t_end}"),
        ));
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JobResult {
    pub n: usize,
    pub replication: usize,
    pub sup_distance: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub estimate: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRateResult {
    pub jobs: Vec<JobResult>,
    pub points: Vec<GridPoint>,
    pub fit: Option<RateFit>,
}

/// Second moments `E[Ψ_x Ψ_y]` of the companion law at every step `0..=num_steps`.
fn law_trajectory(lat: &TorusLattice, c0: &CovarianceMatrix, p: &ChaosRateParams) -> Result<Vec<CovarianceMatrix>, RunError> {
    let sub = (p.dt / MAX_CLOSURE_DT).ceil().max(1.0) as usize;
    let mut integ = ClosureIntegrator::new(lat, c0, p.kappa, p.dt / sub as f64)?;
    let mut laws = Vec::with_capacity(p.num_steps + 1);
    laws.push(c0.clone());
    for _ in 0..p.num_steps {
        for _ in 0..sub {
            integ.step();
        }
        laws.push(integ.covariance());
    }
    Ok(laws)
}

fn initial_law(lat: &TorusLattice, p: &ChaosRateParams) -> Result<(CovarianceMatrix, Option<StationaryField>), RunError> {
    Ok(match p.init {
        InitLaw::Gff => {
            let field = StationaryField::finite(lat, p.kappa)?;
            (field.covariance(lat)?, Some(field))
        }
        InitLaw::Ones => {
            let s = lat.num_sites();
            (CovarianceMatrix::from_matrix(DMatrix::from_element(s, s, 1.0))?, None)
        }
    })
}

fn initial_data(
    lat: &TorusLattice,
    field: Option<&StationaryField>,
    plan: NoisePlan,
    n: usize,
    rep: usize,
) -> Result<(SpinConfiguration, ComponentField), RunError> {
    match field {
        Some(field) => {
            // Component i of Ψ is GFF sample i; Φ is its radial projection.
            let channel = NoiseChannel::new(plan, EXP_CHAOS_INIT | n as u64, rep as u64);
            let samples = sample_gff(field, lat, &channel, n)?;
            let psi = ComponentField::from_component_major(n, lat.num_sites(), samples.values())?;
            let phi = SpinConfiguration::project(psi.clone())?;
            Ok((phi, psi))
        }
        None => {
            let phi = SpinConfiguration::all_ones(lat, n)?;
            let psi = phi.field().clone();
            Ok((phi, psi))
        }
    }
}

fn checkpoint_path(dir: &Path, n: usize, rep: usize) -> PathBuf {
    dir.join(format!("chaos_N{n}_r{rep}.lnck"))
}

fn header(p: &ChaosRateParams, n: usize, rep: usize, step: u64, sup: f64, sites: usize) -> CheckpointHeader {
    CheckpointHeader {
        d: p.d,
        side: p.side,
        components: n,
        kappa: p.kappa,
        dt: p.dt,
        step,
        master_seed: p.master_seed,
        shape: vec![2, sites, n],
        kind: CHECKPOINT_KIND.into(),
        extra: serde_json::json!({ "replication": rep, "sup": sup, "init": p.init }),
    }
}

/// Restores `(step, sup, Φ, Ψ)` from a checkpoint written by an equal configuration.
fn resume(path: &Path, p: &ChaosRateParams, n: usize, rep: usize, sites: usize) -> Option<(usize, f64, SpinConfiguration, ComponentField)> {
    let (h, data) = read_checkpoint(path).ok()?;
    let sup = h.extra.get("sup")?.as_f64()?;
    let expect = header(p, n, rep, h.step, sup, sites);
    if h != expect || h.step as usize > p.num_steps {
        return None;
    }
    let (a, b) = data.split_at(sites * n);
    let phi = ComponentField::from_site_major(n, sites, a.to_vec()).ok()?;
    let psi = ComponentField::from_site_major(n, sites, b.to_vec()).ok()?;
    Some((h.step as usize, sup, SpinConfiguration::from_field(phi, 1e-12).ok()?, psi))
}

fn run_job(
    lat: &TorusLattice,
    p: &ChaosRateParams,
    laws: &[CovarianceMatrix],
    field: Option<&StationaryField>,
    plan: NoisePlan,
    n: usize,
    rep: usize,
    ckpt_dir: Option<&Path>,
    budget: Option<usize>,
) -> Result<Option<JobResult>, RunError> {
    let sites = lat.num_sites();
    let params = SdeParams::new(p.kappa, p.dt, p.num_steps);
    let channel = NoiseChannel::new(plan, EXP_CHAOS_NOISE | n as u64, rep as u64);
    let path = ckpt_dir.map(|d| checkpoint_path(d, n, rep));

    let restored = path.as_deref().and_then(|path| resume(path, p, n, rep, sites));
    let (start, mut sup, mut phi, mut psi) = match restored {
        Some(state) => state,
        None => {
            let (phi, psi) = initial_data(lat, field, plan, n, rep)?;
            let d0 = coupling_distance(phi.field(), &psi, None)?;
            (0, d0, phi, psi)
        }
    };
    let mut last = coupling_distance(phi.field(), &psi, None)?;
    let stop = budget.map_or(p.num_steps, |b| p.num_steps.min(start + b));
    for t in start..stop {
        let (next_phi, next_psi) = coupled_step(lat, &phi, &psi, &params, &laws[t], &channel, t as u64)?;
        phi = next_phi;
        psi = next_psi;
        last = coupling_distance(phi.field(), &psi, None)?;
        sup = sup.max(last);
        let done = t + 1;
        if let (Some(path), Some(every)) = (path.as_deref(), p.checkpoint_every) {
            if (done as u64 % every == 0 || done == stop) && done < p.num_steps {
                let mut data = phi.field().values().to_vec();
                data.extend_from_slice(psi.values());
                write_checkpoint(path, &header(p, n, rep, done as u64, sup, sites), &data)?;
            }
        }
    }
    if stop < p.num_steps {
        return Ok(None);
    }
    if let Some(path) = path.as_deref() {
        if path.exists() {
            fs::remove_file(path)?;
        }
    }
    Ok(Some(JobResult {
        n,
        replication: rep,
        sup_distance: sup,
        final_distance: last,
    }))
}

/// Runs every `(N, replication)` job; `ckpt_dir` enables checkpoint/resume.
pub fn compute(p: &ChaosRateParams, ckpt_dir: Option<&Path>) -> Result<ChaosRateResult, RunError> {
    Ok(compute_with_budget(p, ckpt_dir, None)?.expect("unbounded run completes"))
}

/// Like [`compute`], but each job advances at most `budget` steps in this
/// call. Unfinished jobs leave a checkpoint in `ckpt_dir` (when given) and the
/// result is `None`; calling again resumes them.
pub fn compute_with_budget(p: &ChaosRateParams, ckpt_dir: Option<&Path>, budget: Option<usize>) -> Result<Option<ChaosRateResult>, RunError> {
    let lat = TorusLattice::new(p.d, p.side)?;
    let plan = NoisePlan::new(p.master_seed, p.dt)?;
    let (c0, field) = initial_law(&lat, p)?;
    let laws = law_trajectory(&lat, &c0, p)?;
    if let Some(dir) = ckpt_dir {
        fs::create_dir_all(dir)?;
    }
    let specs: Vec<(usize, usize)> = p
        .n_grid
        .iter()
        .flat_map(|&n| (0..p.replications).map(move |r| (n, r)))
        .collect();
    let jobs = specs
        .par_iter()
        .map(|&(n, r)| run_job(&lat, p, &laws, field.as_ref(), plan, n, r, ckpt_dir, budget))
        .collect::<Result<Vec<_>, _>>()?;
    let Some(jobs) = jobs.into_iter().collect::<Option<Vec<_>>>() else {
        return Ok(None);
    };
    let mut points = Vec::new();
    for (k, &n) in p.n_grid.iter().enumerate() {
        let sups: Vec<f64> = jobs[k * p.replications..(k + 1) * p.replications]
            .iter()
            .map(|j| j.sup_distance)
            .collect();
        points.push(GridPoint {
            n,
            estimate: MeanEstimate::from_samples(&sups)?,
        });
    }
    let fit = if points.len() >= 4 {
        let xy: Vec<(f64, f64)> = points.iter().map(|g| (g.n as f64, g.estimate.mean)).collect();
        Some(fit_rate(&xy, Some(-1.0))?)
    } else {
        None
    };
    Ok(Some(ChaosRateResult { jobs, points, fit }))
}

pub fn run(cfg: &Config) -> Result<Report, RunError> {
    let p = ChaosRateParams::from_config(cfg)?;
    let mut w = begin(cfg, NAME)?;
    let ckpt = p.checkpoint_every.map(|_| w.dir().join("checkpoints"));
    let result = compute(&p, ckpt.as_deref())?;
    if let Some(dir) = &ckpt {
        let _ = fs::remove_dir(dir);
    }

    let rows: Vec<Vec<String>> = result
        .jobs
        .iter()
        .map(|j| vec![j.n.to_string(), j.replication.to_string(), float(j.sup_distance), float(j.final_distance)])
        .collect();
    write_csv(&w.output("chaos_rate_jobs.csv"), &["N", "replication", "sup_distance", "final_distance"], &rows)?;
    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|g| vec![g.n.to_string(), float(g.estimate.mean), float(g.estimate.stderr), g.estimate.count.to_string()])
        .collect();
    write_csv(&w.output("chaos_rate.csv"), &["N", "mean_sup_distance", "stderr", "replications"], &rows)?;

    let mut checks = Vec::new();
    if let Some(fit) = &result.fit {
        write_json(&w.output("chaos_rate_fit.json"), fit)?;
        checks.push(Check::new(
            "chaos_rate_slope",
            fit.slope >= SLOPE_BAND.0 && fit.slope <= SLOPE_BAND.1,
            format!("slope {:.4} ± {:.4}, band [{}, {}]", fit.slope, fit.stderr, SLOPE_BAND.0, SLOPE_BAND.1),
        ));
    }
    finish(w, NAME, checks)
}
