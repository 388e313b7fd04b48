//! One module per CLI subcommand. Each exposes typed parameters resolved from
//! a [`Config`] and a `run` function returning a [`Report`].

pub mod chaos_rate;
pub mod commuting_diagram;
pub mod kappa_c;
pub mod mass_curve;
pub mod sample_gff;
pub mod stationary_w2;

use std::path::PathBuf;

use largen::dynamics::{gibbs_sweep, SpinConfiguration};
use largen::lattice::TorusLattice;
use largen::rng::NoiseChannel;

use crate::manifest::ManifestWriter;
use crate::{Check, Config, Report, RunError};

// Experiment words of the noise key; the high half names the experiment, the
// low half carries a grid coordinate such as N.
pub(crate) const EXP_CHAOS_NOISE: u64 = 1 << 32;
pub(crate) const EXP_CHAOS_INIT: u64 = 2 << 32;
pub(crate) const EXP_W2_GIBBS: u64 = 3 << 32;
pub(crate) const EXP_W2_REFERENCE: u64 = 4 << 32;
pub(crate) const EXP_DIAGRAM_GIBBS: u64 = 5 << 32;
pub(crate) const EXP_SAMPLE_GFF: u64 = 6 << 32;

/// Output directory: `output.dir`, else `runs/<experiment>`.
pub(crate) fn out_dir(cfg: &Config, experiment: &str) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(experiment))
}

pub(crate) fn begin(cfg: &Config, experiment: &str) -> Result<ManifestWriter, RunError> {
    let seed = cfg.master_seed()?;
    Ok(ManifestWriter::begin(&out_dir(cfg, experiment), experiment, cfg.to_json(), seed)?)
}

pub(crate) fn finish(writer: ManifestWriter, experiment: &str, checks: Vec<Check>) -> Result<Report, RunError> {
    let dir = writer.dir().to_path_buf();
    let manifest = writer.finish("completed")?;
    Ok(Report {
        experiment: experiment.to_string(),
        outputs: manifest.outputs.iter().map(|o| dir.join(&o.path)).collect(),
        out_dir: dir,
        checks,
    })
}

/// Gibbs chain from a uniform start: `burn_in` sweeps, then `count` states
/// taken every `thin` sweeps, each handed to `visit`.
pub(crate) fn gibbs_chain(
    lattice: &TorusLattice,
    n: usize,
    kappa: f64,
    channel: &NoiseChannel,
    burn_in: usize,
    thin: usize,
    count: usize,
    mut visit: impl FnMut(&SpinConfiguration),
) -> Result<(), RunError> {
    // The start draws from step u64::MAX; sweeps use steps 0, 1, ...
    let mut config = SpinConfiguration::uniform(lattice, n, channel, u64::MAX)?;
    let mut sweep = 0u64;
    for _ in 0..burn_in {
        gibbs_sweep(lattice, &mut config, kappa, channel, sweep)?;
        sweep += 1;
    }
    for _ in 0..count {
        for _ in 0..thin {
            gibbs_sweep(lattice, &mut config, kappa, channel, sweep)?;
            sweep += 1;
        }
        visit(&config);
    }
    Ok(())
}

/// Mean nearest-neighbour correlation `(1/(|Λ| d N)) Σ_x Σ_j ⟨Φ_x, Φ_{x+e_j}⟩`.
pub(crate) fn nn_correlation(lattice: &TorusLattice, config: &SpinConfiguration) -> f64 {
    let d = lattice.dim();
    let mut total = 0.0;
    for x in 0..lattice.num_sites() {
        let c = lattice.coords(x);
        for j in 0..d {
            let mut e: Vec<i64> = c.iter().map(|&v| v as i64).collect();
            e[j] += 1;
            let y = lattice.site_of(&e).expect("in range after wrap");
            total += config.pair_correlation(x, y);
        }
    }
    total / (lattice.num_sites() * d) as f64
}
