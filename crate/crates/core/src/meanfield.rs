//! The mean-field SDE
//!
//! ```text
//! dΨ_x = [2κ Σ_{y∼x} (Ψ_y − E[Ψ_x Ψ_y] Ψ_x) − ½ Ψ_x] dt + dW_x
//! ```
//!
//! integrated three ways: a replica particle method estimating the law from
//! `M` exchangeable copies, the deterministic covariance ODE obeyed by the
//! second moments, and the pathwise coupling with the interacting spin system.
//!
//! Given the second-moment matrix `S = E[Ψ Ψᵀ]` the drift is linear, so `S`
//! solves `dS/dt = A(S) S + S A(S)ᵀ + I` with
//! `A(S)_{xy} = 2κ 1_{y∼x} − δ_{xy} (2κ Σ_{z∼x} S_{xz} + ½)` whatever the
//! initial law. For centred Gaussian data the law stays Gaussian and `S` is
//! its covariance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::CovarianceMatrix;
use crate::dynamics::{draw_increments, step_with_increments, ComponentField, SdeParams, SpinConfiguration};
use crate::error::{invalid, Error, Result};
use crate::lattice::TorusLattice;
use crate::rng::NoiseChannel;

/// Mean-field values above this magnitude abort the integration.
pub const BLOW_UP_GUARD: f64 = 1e3;

/// Largest closure time step accepted.
pub const MAX_CLOSURE_DT: f64 = 1e-2;

/// Time-step key reserved for initial-data draws.
pub const INIT_STEP: u64 = u64::MAX;

/// Replicas per partial sum in the law estimate; fixes the reduction order.
const REDUCTION_CHUNK: usize = 256;

const PARALLEL_THRESHOLD: usize = 1 << 15;

/// `M` replicas of the mean-field field, stored replica-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaEnsemble {
    replicas: usize,
    num_sites: usize,
    values: Vec<f64>,
}

impl ReplicaEnsemble {
    pub fn new(replicas: usize, num_sites: usize, values: Vec<f64>) -> Result<Self> {
        if replicas < 2 {
            return Err(invalid("M", format!("need at least 2 replicas, got {replicas}")));
        }
        if values.len() != replicas * num_sites {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", replicas * num_sites),
                got: format!("{}", values.len()),
            });
        }
        Ok(Self {
            replicas,
            num_sites,
            values,
        })
    }

    /// Independent draws `Ψ^{(r)} = L z^{(r)}` with `L Lᵀ = cov`.
    ///
    /// `z^{(r)}` comes from replica `r` of `channel` at [`INIT_STEP`], so two
    /// ensembles built from the same channel share their standard normals.
    pub fn from_covariance(cov: &CovarianceMatrix, replicas: usize, channel: &NoiseChannel) -> Result<Self> {
        let l = cov.cholesky_lower()?;
        let n = cov.dim();
        let mut values = vec![0.0; replicas * n];
        let fill = |r: usize, row: &mut [f64]| {
            let stream = channel.with_replica(r as u64).stream(0, INIT_STEP);
            let z: Vec<f64> = (0..n as u64).map(|i| stream.normal_at(i)).collect();
            for (x, v) in row.iter_mut().enumerate() {
                *v = (0..=x).map(|k| l[(x, k)] * z[k]).sum();
            }
        };
        if values.len() >= PARALLEL_THRESHOLD {
            values.par_chunks_mut(n).enumerate().for_each(|(r, row)| fill(r, row));
        } else {
            values.chunks_mut(n).enumerate().for_each(|(r, row)| fill(r, row));
        }
        Self::new(replicas, n, values)
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn replica(&self, r: usize) -> &[f64] {
        &self.values[r * self.num_sites..(r + 1) * self.num_sites]
    }

    /// `ĥ_{xy} = (1/M) Σ_r Ψ^{(r)}_x Ψ^{(r)}_y` for every `y` in `pairs[x]`,
    /// flattened in the order given.
    pub fn pair_averages(&self, pairs: &[&[usize]]) -> Vec<f64> {
        let width: usize = pairs.iter().map(|p| p.len()).sum();
        let partial = |chunk: &[f64]| {
            let mut acc = vec![0.0; width];
            for row in chunk.chunks(self.num_sites) {
                let mut j = 0;
                for (x, ys) in pairs.iter().enumerate() {
                    for &y in ys.iter() {
                        acc[j] += row[x] * row[y];
                        j += 1;
                    }
                }
            }
            acc
        };
        let chunk_len = REDUCTION_CHUNK * self.num_sites;
        let partials: Vec<Vec<f64>> = if self.values.len() >= PARALLEL_THRESHOLD {
            self.values.par_chunks(chunk_len).map(partial).collect()
        } else {
            self.values.chunks(chunk_len).map(partial).collect()
        };
        let mut total = vec![0.0; width];
        for p in &partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total.iter_mut().for_each(|t| *t /= self.replicas as f64);
        total
    }

    /// `ĥ_{xy}` for every site and neighbour slot, at `x * degree + j`.
    pub fn neighbor_correlations(&self, lattice: &TorusLattice) -> Vec<f64> {
        let pairs: Vec<&[usize]> = (0..self.num_sites).map(|x| lattice.neighbors(x)).collect();
        self.pair_averages(&pairs)
    }

    /// Full empirical second-moment matrix.
    pub fn second_moments(&self) -> CovarianceMatrix {
        let all: Vec<usize> = (0..self.num_sites).collect();
        let pairs: Vec<&[usize]> = (0..self.num_sites).map(|x| &all[x..]).collect();
        let upper = self.pair_averages(&pairs);
        let mut m = DMatrix::zeros(self.num_sites, self.num_sites);
        let mut j = 0;
        for x in 0..self.num_sites {
            for y in x..self.num_sites {
                m[(x, y)] = upper[j];
                m[(y, x)] = upper[j];
                j += 1;
            }
        }
        CovarianceMatrix::from_matrix(m).expect("square by construction")
    }
}

/// Advances every replica by one Euler–Maruyama step of length `channel.dt()`,
/// with the law coefficient replaced by the replica estimate `ĥ`.
///
/// Replica `r` draws its increments from replica `r` of `channel` at site slot
/// 0, one component per lattice site.
pub fn replica_step(
    lattice: &TorusLattice,
    ens: &ReplicaEnsemble,
    kappa: f64,
    channel: &NoiseChannel,
    t_index: u64,
) -> Result<ReplicaEnsemble> {
    if ens.num_sites != lattice.num_sites() {
        return Err(invalid("ensemble", "lattice size mismatch"));
    }
    let dt = channel.dt();
    let h = ens.neighbor_correlations(lattice);
    let degree = lattice.degree();
    let h_sum: Vec<f64> = h.chunks(degree).map(|c| c.iter().sum()).collect();

    let n = ens.num_sites;
    let advance = |r: usize, out: &mut [f64]| -> Result<()> {
        let psi = ens.replica(r);
        channel.with_replica(r as u64).increments(0, t_index, out);
        for x in 0..n {
            let nb: f64 = lattice.neighbors(x).iter().map(|&y| psi[y]).sum();
            let b = 2.0 * kappa * (nb - h_sum[x] * psi[x]) - 0.5 * psi[x];
            let v = psi[x] + b * dt + out[x];
            if !(v.abs() <= BLOW_UP_GUARD) {
                return Err(Error::BlowUp {
                    replica: r,
                    site: x,
                    value: v.abs(),
                });
            }
            out[x] = v;
        }
        Ok(())
    };
    let mut next = vec![0.0; ens.values.len()];
    if next.len() >= PARALLEL_THRESHOLD {
        next.par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(r, out)| advance(r, out))?;
    } else {
        for (r, out) in next.chunks_mut(n).enumerate() {
            advance(r, out)?;
        }
    }
    Ok(ReplicaEnsemble {
        replicas: ens.replicas,
        num_sites: n,
        values: next,
    })
}

/// Right-hand side `A(S) S + S A(S)ᵀ + I` of the second-moment ODE.
pub fn closure_rhs(lattice: &TorusLattice, kappa: f64, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lattice.num_sites();
    let mut a = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut row_sum = 0.0;
        for &y in lattice.neighbors(x) {
            a[(x, y)] += 2.0 * kappa;
            row_sum += s[(x, y)];
        }
        a[(x, x)] -= 2.0 * kappa * row_sum + 0.5;
    }
    let as_ = &a * s;
    let mut out = &as_ + as_.transpose();
    for x in 0..n {
        out[(x, x)] += 1.0;
    }
    out
}

/// Classical RK4 integrator for the second-moment ODE.
#[derive(Debug, Clone)]
pub struct ClosureIntegrator {
    lattice: TorusLattice,
    kappa: f64,
    dt: f64,
    state: DMatrix<f64>,
    steps: u64,
}

impl ClosureIntegrator {
    pub fn new(lattice: &TorusLattice, c0: &CovarianceMatrix, kappa: f64, dt: f64) -> Result<Self> {
        if c0.dim() != lattice.num_sites() {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} covariance", lattice.num_sites()),
                got: format!("{0}x{0}", c0.dim()),
            });
        }
        if !(dt > 0.0) || dt > MAX_CLOSURE_DT {
            return Err(invalid("dt", format!("closure step must lie in (0, {MAX_CLOSURE_DT}], got {dt}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(invalid("kappa", format!("must be finite and >= 0, got {kappa}")));
        }
        c0.cholesky_lower()?;
        Ok(Self {
            lattice: lattice.clone(),
            kappa,
            dt,
            state: c0.matrix().clone(),
            steps: 0,
        })
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix::from_matrix(self.state.clone()).expect("square")
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn step(&mut self) {
        self.step_by(self.dt);
        self.steps += 1;
    }

    fn step_by(&mut self, h: f64) {
        let f = |s: &DMatrix<f64>| closure_rhs(&self.lattice, self.kappa, s);
        let s = &self.state;
        let k1 = f(s);
        let k2 = f(&(s + &k1 * (h / 2.0)));
        let k3 = f(&(s + &k2 * (h / 2.0)));
        let k4 = f(&(s + &k3 * h));
        let next = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        self.state = (&next + next.transpose()) * 0.5;
    }
}

/// `C(t_end)` from `C0` by RK4 with step `dt` (the final step is shortened
/// when `t_end` is not a multiple of `dt`).
pub fn gaussian_closure_evolve(
    lattice: &TorusLattice,
    c0: &CovarianceMatrix,
    kappa: f64,
    dt: f64,
    t_end: f64,
) -> Result<CovarianceMatrix> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(invalid("t_end", format!("must be finite and >= 0, got {t_end}")));
    }
    let mut integ = ClosureIntegrator::new(lattice, c0, kappa, dt)?;
    let full = (t_end / dt + 1e-9).floor() as u64;
    for _ in 0..full {
        integ.step();
    }
    let rest = t_end - full as f64 * dt;
    if rest > 1e-12 * dt.max(t_end) {
        integ.step_by(rest);
    }
    Ok(integ.covariance())
}

/// One shared-noise step of the interacting system `Φ` and its mean-field
/// companions `Ψ^i`.
///
/// Each `Ψ^i` is driven by the same increment `dW^i_x` as component `i` of
/// `Φ`; the interacting system additionally feels the radial projection and
/// the sphere constraint. `law` supplies `E[Ψ_x Ψ_y]` at the start of the step.
pub fn coupled_step(
    lattice: &TorusLattice,
    config: &SpinConfiguration,
    companions: &ComponentField,
    params: &SdeParams,
    law: &CovarianceMatrix,
    channel: &NoiseChannel,
    t_index: u64,
) -> Result<(SpinConfiguration, ComponentField)> {
    let n = config.components();
    let sites = config.num_sites();
    config.field().same_shape(companions)?;
    if law.dim() != sites {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} law coefficient", sites),
            got: format!("{0}x{0}", law.dim()),
        });
    }
    let raw = draw_increments(channel, n, sites, t_index);
    let next_phi = step_with_increments(lattice, config, params, &raw)?;
    let next_psi = companion_step(lattice, companions, params, law, &raw)?;
    Ok((next_phi, next_psi))
}

/// Euler–Maruyama step of the companions alone, for given site-major increments.
pub fn companion_step(
    lattice: &TorusLattice,
    companions: &ComponentField,
    params: &SdeParams,
    law: &CovarianceMatrix,
    raw: &[f64],
) -> Result<ComponentField> {
    let n = companions.components();
    let sites = companions.num_sites();
    if raw.len() != n * sites {
        return Err(Error::ShapeMismatch {
            expected: format!("{} increments", n * sites),
            got: format!("{}", raw.len()),
        });
    }
    let kappa = params.kappa;
    let dt = params.dt;
    let update = |x: usize, out: &mut [f64]| -> Result<()> {
        let psi_x = companions.site(x);
        let c_sum: f64 = lattice.neighbors(x).iter().map(|&y| law.get(x, y)).sum();
        out.iter_mut().for_each(|v| *v = 0.0);
        for &y in lattice.neighbors(x) {
            for (o, &p) in out.iter_mut().zip(companions.site(y)) {
                *o += p;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            let b = 2.0 * kappa * (*o - c_sum * psi_x[i]) - 0.5 * psi_x[i];
            let v = psi_x[i] + b * dt + raw[x * n + i];
            if !(v.abs() <= BLOW_UP_GUARD) {
                return Err(Error::BlowUp {
                    replica: i,
                    site: x,
                    value: v.abs(),
                });
            }
            *o = v;
        }
        Ok(())
    };
    let mut next = vec![0.0; n * sites];
    if next.len() >= PARALLEL_THRESHOLD {
        next.par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(x, out)| update(x, out))?;
    } else {
        for (x, out) in next.chunks_mut(n).enumerate() {
            update(x, out)?;
        }
    }
    ComponentField::from_site_major(n, sites, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoisePlan;

    fn channel(seed: u64, dt: f64) -> NoiseChannel {
        NoiseChannel::new(NoisePlan::new(seed, dt).unwrap(), 7, 0)
    }

    fn unit_diag_cov(lat: &TorusLattice, rho: f64) -> CovarianceMatrix {
        let n = lat.num_sites();
        let mut m = DMatrix::identity(n, n);
        for x in 0..n {
            for &y in lat.neighbors(x) {
                m[(x, y)] = rho;
            }
        }
        CovarianceMatrix::checked(m).unwrap()
    }

    #[test]
    fn zero_coupling_ou_variance() {
        let lat = TorusLattice::new(1, 3).unwrap();
        let m = 10_000;
        let dt = 1e-2;
        let ch = channel(1, dt);
        let mut ens = ReplicaEnsemble::new(m, 3, vec![0.0; 3 * m]).unwrap();
        for t in 0..1000 {
            ens = replica_step(&lat, &ens, 0.0, &ch, t).unwrap();
        }
        let s = ens.second_moments();
        let samples = (m * 3) as f64;
        // Euler–Maruyama stationary variance is 1/(1 − dt/4).
        let target = 1.0 / (1.0 - dt / 4.0);
        let mean_var = s.trace() / 3.0;
        assert!((mean_var - target).abs() < 3.0 * (2.0 / samples).sqrt(), "{mean_var}");
    }

    #[test]
    fn estimate_is_symmetric() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let ens = ReplicaEnsemble::from_covariance(&unit_diag_cov(&lat, 0.2), 1000, &channel(2, 1e-3)).unwrap();
        let h = ens.neighbor_correlations(&lat);
        let deg = lat.degree();
        for x in 0..lat.num_sites() {
            for (j, &y) in lat.neighbors(x).iter().enumerate() {
                let back = lat.neighbors(y).iter().position(|&z| z == x).unwrap();
                assert_eq!(h[x * deg + j], h[y * deg + back]);
            }
        }
    }

    #[test]
    fn identical_noise_gives_identical_ensembles() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let ch = channel(3, 1e-3);
        let cov = unit_diag_cov(&lat, 0.1);
        let mut a = ReplicaEnsemble::from_covariance(&cov, 64, &ch).unwrap();
        let mut b = ReplicaEnsemble::from_covariance(&cov, 64, &ch).unwrap();
        for t in 0..100 {
            a = replica_step(&lat, &a, 0.05, &ch, t).unwrap();
            b = replica_step(&lat, &b, 0.05, &ch, t).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_replicas_rejected() {
        assert!(ReplicaEnsemble::new(1, 3, vec![0.0; 3]).is_err());
    }

    #[test]
    fn closure_keeps_unit_diagonal() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let c0 = unit_diag_cov(&lat, 0.2);
        let c = gaussian_closure_evolve(&lat, &c0, 0.1, 1e-3, 1.0).unwrap();
        assert!(c.max_diagonal_deviation(1.0) < 1e-8);
        assert!(c.is_psd());
        for x in 0..lat.num_sites() {
            for y in 0..lat.num_sites() {
                assert!(c.get(x, y).abs() <= 1.0 + 1e-8);
            }
        }
    }

    #[test]
    fn closure_zero_coupling_closed_form() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let diag = [0.3, 2.0, 1.0, 0.0];
        let c0 = CovarianceMatrix::checked(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag))).unwrap();
        let t: f64 = 0.7;
        let c = gaussian_closure_evolve(&lat, &c0, 0.0, 1e-3, t).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let c0xy = if x == y { diag[x] } else { 0.0 };
                let id = if x == y { 1.0 } else { 0.0 };
                let expected = (-t).exp() * c0xy + (1.0 - (-t).exp()) * id;
                assert!((c.get(x, y) - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn closure_rejects_large_step() {
        let lat = TorusLattice::new(1, 3).unwrap();
        let c0 = CovarianceMatrix::identity(3);
        assert!(gaussian_closure_evolve(&lat, &c0, 0.1, 0.02, 1.0).is_err());
    }

    #[test]
    fn replicas_follow_closure() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let m = 4000;
        let dt = 1e-3;
        let ch = channel(4, dt);
        let c0 = unit_diag_cov(&lat, 0.3);
        let mut ens = ReplicaEnsemble::from_covariance(&c0, m, &ch).unwrap();
        for t in 0..500 {
            ens = replica_step(&lat, &ens, 0.1, &ch, t).unwrap();
        }
        let c = gaussian_closure_evolve(&lat, &c0, 0.1, dt, 0.5).unwrap();
        let s = ens.second_moments();
        for x in 0..lat.num_sites() {
            for &y in lat.neighbors(x) {
                assert!((s.get(x, y) - c.get(x, y)).abs() < 5.0 / (m as f64).sqrt());
            }
        }
    }

    #[test]
    fn deterministic_coupled_step_with_matching_law() {
        // N large enough that the Itô mismatch ½/N is visible but small;
        // with zero noise and C = h(Φ) the only gap is that mismatch.
        let lat = TorusLattice::new(1, 3).unwrap();
        let n = 4;
        let config = SpinConfiguration::all_ones(&lat, n).unwrap();
        let comp = config.field().clone();
        let law = CovarianceMatrix::from_matrix(DMatrix::from_element(3, 3, 1.0)).unwrap();
        let params = SdeParams {
            renormalize: false,
            ..SdeParams::new(0.3, 1e-3, 1)
        };
        let zeros = vec![0.0; n * 3];
        let phi = step_with_increments(&lat, &config, &params, &zeros).unwrap();
        let psi = companion_step(&lat, &comp, &params, &law, &zeros).unwrap();
        for (a, b) in phi.field().values().iter().zip(psi.values()) {
            // Itô coefficients (N−1)/(2N) and ½ differ by 1/(2N).
            assert!((a - b - 1e-3 / (2.0 * n as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn one_step_gap_at_zero_coupling() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let n = 64;
        let dt = 1e-3;
        let params = SdeParams::new(0.0, dt, 1);
        let law = CovarianceMatrix::identity(lat.num_sites());
        let mut total = 0.0;
        let reps = 200;
        for rep in 0..reps {
            let ch = NoiseChannel::new(NoisePlan::new(5, dt).unwrap(), 3, rep);
            let phi = SpinConfiguration::uniform(&lat, n, &ch, INIT_STEP).unwrap();
            let psi = phi.field().clone();
            let (a, b) = coupled_step(&lat, &phi, &psi, &params, &law, &ch, 0).unwrap();
            let gap: f64 = a
                .field()
                .values()
                .iter()
                .zip(b.values())
                .map(|(u, v)| (u - v).powi(2))
                .sum();
            total += gap / (n * lat.num_sites()) as f64;
        }
        let mean = total / reps as f64;
        assert!(mean <= 2.0 * dt / n as f64, "{mean} vs {}", 2.0 * dt / n as f64);
        assert!(mean >= 0.5 * dt / n as f64);
    }
}
