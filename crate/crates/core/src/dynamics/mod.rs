//! Sphere-valued Langevin dynamics of the spin O(N) model and heat-bath sampling.
//!
//! The SDE for the `N`-component field is
//!
//! ```text
//! dΦ^i_x = 2κ Σ_{y∼x} (Φ^i_y − h_xy Φ^i_x) dt − (N−1)/(2N) Φ^i_x dt
//!          + dW^i_x − (Σ_k Φ^k_x dW^k_x / N) Φ^i_x,      h_xy = ⟨Φ_x, Φ_y⟩ / N,
//! ```
//!
//! integrated here by projected Euler–Maruyama followed by an exact rescaling
//! of every site vector back onto the sphere of radius `√N`.

mod gibbs;
mod vmf;

pub use gibbs::{energy, gibbs_sweep};
pub use vmf::{sample_uniform_sphere, sample_vmf};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lattice::TorusLattice;
use crate::rng::NoiseChannel;

/// Site-major storage below this many entries is updated serially.
const PARALLEL_THRESHOLD: usize = 1 << 15;

/// An `N`-component real field on the lattice, stored site-major:
/// component `i` at site `x` lives at `x * N + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentField {
    n: usize,
    num_sites: usize,
    values: Vec<f64>,
}

impl ComponentField {
    pub fn zeros(n: usize, num_sites: usize) -> Self {
        Self {
            n,
            num_sites,
            values: vec![0.0; n * num_sites],
        }
    }

    /// From site-major values (`values[x * n + i]`).
    pub fn from_site_major(n: usize, num_sites: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * num_sites {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", n * num_sites),
                got: format!("{}", values.len()),
            });
        }
        Ok(Self { n, num_sites, values })
    }

    /// From the logical `(N, num_sites)` layout (`values[i * num_sites + x]`).
    pub fn from_component_major(n: usize, num_sites: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * num_sites {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", n * num_sites),
                got: format!("{}", values.len()),
            });
        }
        let mut out = Self::zeros(n, num_sites);
        for i in 0..n {
            for x in 0..num_sites {
                out.values[x * n + i] = values[i * num_sites + x];
            }
        }
        Ok(out)
    }

    /// Values in the logical `(N, num_sites)` layout.
    pub fn to_component_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for x in 0..self.num_sites {
            for i in 0..self.n {
                out[i * self.num_sites + x] = self.values[x * self.n + i];
            }
        }
        out
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    #[inline]
    pub fn get(&self, component: usize, site: usize) -> f64 {
        self.values[site * self.n + component]
    }

    #[inline]
    pub fn set(&mut self, component: usize, site: usize, value: f64) {
        self.values[site * self.n + component] = value;
    }

    #[inline]
    pub fn site(&self, site: usize) -> &[f64] {
        &self.values[site * self.n..(site + 1) * self.n]
    }

    #[inline]
    pub fn site_mut(&mut self, site: usize) -> &mut [f64] {
        &mut self.values[site * self.n..(site + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Component `i` as a field on the lattice.
    pub fn component(&self, i: usize) -> Vec<f64> {
        (0..self.num_sites).map(|x| self.get(i, x)).collect()
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.num_sites != other.num_sites {
            return Err(Error::ShapeMismatch {
                expected: format!("({}, {})", self.n, self.num_sites),
                got: format!("({}, {})", other.n, other.num_sites),
            });
        }
        Ok(())
    }
}

/// A spin configuration with every site vector on the sphere of radius `√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfiguration {
    field: ComponentField,
}

impl SpinConfiguration {
    /// Projects each site vector of `field` radially onto the sphere.
    pub fn project(mut field: ComponentField) -> Result<Self> {
        check_components(field.n)?;
        let radius = (field.n as f64).sqrt();
        for x in 0..field.num_sites {
            let v = field.site_mut(x);
            let norm = norm(v);
            if norm == 0.0 {
                return Err(invalid("field", format!("site {x} has a zero vector")));
            }
            let s = radius / norm;
            v.iter_mut().for_each(|c| *c *= s);
        }
        Ok(Self { field })
    }

    /// Takes `field` unchanged after checking it lies on the sphere to `tolerance`
    /// (in the sense of [`max_sphere_error`](Self::max_sphere_error)).
    pub fn from_field(field: ComponentField, tolerance: f64) -> Result<Self> {
        check_components(field.n)?;
        let c = Self { field };
        let err = c.max_sphere_error();
        if !(err <= tolerance) {
            return Err(invalid("field", format!("sphere error {err:e} exceeds {tolerance:e}")));
        }
        Ok(c)
    }

    /// Every component equal to 1, so `|Φ_x|² = N` exactly.
    pub fn all_ones(lattice: &TorusLattice, n: usize) -> Result<Self> {
        check_components(n)?;
        Ok(Self {
            field: ComponentField {
                n,
                num_sites: lattice.num_sites(),
                values: vec![1.0; n * lattice.num_sites()],
            },
        })
    }

    /// Independent uniform site vectors, site `x` drawn from `channel.stream(x, step)`.
    pub fn uniform(lattice: &TorusLattice, n: usize, channel: &NoiseChannel, step: u64) -> Result<Self> {
        check_components(n)?;
        let mut field = ComponentField::zeros(n, lattice.num_sites());
        for x in 0..lattice.num_sites() {
            let mut stream = channel.stream(x, step);
            let v = sample_uniform_sphere(n, &mut stream);
            let radius = (n as f64).sqrt();
            for (dst, src) in field.site_mut(x).iter_mut().zip(v) {
                *dst = radius * src;
            }
        }
        Ok(Self { field })
    }

    pub fn components(&self) -> usize {
        self.field.n
    }

    pub fn num_sites(&self) -> usize {
        self.field.num_sites
    }

    pub fn field(&self) -> &ComponentField {
        &self.field
    }

    pub fn into_field(self) -> ComponentField {
        self.field
    }

    #[inline]
    pub fn get(&self, component: usize, site: usize) -> f64 {
        self.field.get(component, site)
    }

    #[inline]
    pub fn site(&self, site: usize) -> &[f64] {
        self.field.site(site)
    }

    /// `h_xy = (1/N) Σ_k Φ^k_x Φ^k_y`.
    pub fn pair_correlation(&self, x: usize, y: usize) -> f64 {
        dot(self.site(x), self.site(y)) / self.field.n as f64
    }

    /// `max_x |Σ_i (Φ^i_x)² − N| / N`.
    pub fn max_sphere_error(&self) -> f64 {
        let n = self.field.n as f64;
        (0..self.field.num_sites)
            .map(|x| (dot(self.site(x), self.site(x)) - n).abs() / n)
            .fold(0.0, f64::max)
    }

    pub(crate) fn site_mut(&mut self, site: usize) -> &mut [f64] {
        self.field.site_mut(site)
    }

    pub(crate) fn from_field_unchecked(field: ComponentField) -> Self {
        Self { field }
    }
}

fn check_components(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid("N", format!("need at least 2 components, got {n}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Parameters of the time-discretised Langevin system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeParams {
    pub kappa: f64,
    pub dt: f64,
    pub num_steps: usize,
    pub renormalize: bool,
}

impl SdeParams {
    pub fn new(kappa: f64, dt: f64, num_steps: usize) -> Self {
        Self {
            kappa,
            dt,
            num_steps,
            renormalize: true,
        }
    }

    /// Checks `κ ≥ 0`, `dt > 0` and the stability guard `dt·(1 + 8κd) < 0.5`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(invalid("kappa", format!("must be finite and >= 0, got {}", self.kappa)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        let guard = self.dt * (1.0 + 8.0 * self.kappa * dim as f64);
        if guard >= 0.5 {
            return Err(invalid(
                "dt",
                format!("stability guard dt*(1+8*kappa*d) = {guard} must be < 0.5"),
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.num_steps as f64
    }
}

/// Tangent interaction part `2κ Σ_{y∼x} (Φ^i_y − h_xy Φ^i_x)`, site-major.
pub fn interaction_drift(lattice: &TorusLattice, config: &SpinConfiguration, kappa: f64) -> Vec<f64> {
    let n = config.components();
    let mut out = vec![0.0; n * config.num_sites()];
    for (x, chunk) in out.chunks_mut(n).enumerate() {
        interaction_at(lattice, config, kappa, x, chunk);
    }
    out
}

#[inline]
fn interaction_at(lattice: &TorusLattice, config: &SpinConfiguration, kappa: f64, x: usize, out: &mut [f64]) {
    let n = config.components();
    let phi_x = config.site(x);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut h_sum = 0.0;
    for &y in lattice.neighbors(x) {
        let phi_y = config.site(y);
        h_sum += dot(phi_x, phi_y) / n as f64;
        for (o, &p) in out.iter_mut().zip(phi_y) {
            *o += p;
        }
    }
    for (o, &p) in out.iter_mut().zip(phi_x) {
        *o = 2.0 * kappa * (*o - h_sum * p);
    }
}

/// Full drift `b^i_x`: the interaction part minus the Itô term `(N−1)/(2N) Φ^i_x`.
pub fn drift(lattice: &TorusLattice, config: &SpinConfiguration, kappa: f64) -> Vec<f64> {
    let n = config.components();
    let ito = (n as f64 - 1.0) / (2.0 * n as f64);
    let mut out = interaction_drift(lattice, config, kappa);
    for (o, &p) in out.iter_mut().zip(config.field().values()) {
        *o -= ito * p;
    }
    out
}

/// Tangential projection `ξ^i_x = dW^i_x − (Σ_k Φ^k_x dW^k_x / N) Φ^i_x` of site-major increments.
pub fn project_noise(config: &SpinConfiguration, raw: &[f64]) -> Result<Vec<f64>> {
    let n = config.components();
    if raw.len() != n * config.num_sites() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} increments", n * config.num_sites()),
            got: format!("{}", raw.len()),
        });
    }
    let mut out = raw.to_vec();
    for (x, chunk) in out.chunks_mut(n).enumerate() {
        project_in_place(config.site(x), chunk);
    }
    Ok(out)
}

#[inline]
fn project_in_place(phi_x: &[f64], inc: &mut [f64]) {
    let radial = dot(phi_x, inc) / phi_x.len() as f64;
    for (v, &p) in inc.iter_mut().zip(phi_x) {
        *v -= radial * p;
    }
}

/// Site-major Gaussian increments of variance `dt` for one time step.
pub fn draw_increments(channel: &NoiseChannel, n: usize, num_sites: usize, t_index: u64) -> Vec<f64> {
    let mut raw = vec![0.0; n * num_sites];
    if raw.len() >= PARALLEL_THRESHOLD {
        raw.par_chunks_mut(n)
            .enumerate()
            .for_each(|(x, chunk)| channel.increments(x, t_index, chunk));
    } else {
        for (x, chunk) in raw.chunks_mut(n).enumerate() {
            channel.increments(x, t_index, chunk);
        }
    }
    raw
}

/// One projected Euler–Maruyama step driven by the given site-major increments.
pub fn step_with_increments(
    lattice: &TorusLattice,
    config: &SpinConfiguration,
    params: &SdeParams,
    raw: &[f64],
) -> Result<SpinConfiguration> {
    let n = config.components();
    let num_sites = config.num_sites();
    if raw.len() != n * num_sites {
        return Err(Error::ShapeMismatch {
            expected: format!("{} increments", n * num_sites),
            got: format!("{}", raw.len()),
        });
    }
    let ito = (n as f64 - 1.0) / (2.0 * n as f64);
    let radius = (n as f64).sqrt();
    let dt = params.dt;

    let update = |x: usize, out: &mut [f64]| -> Result<()> {
        interaction_at(lattice, config, params.kappa, x, out);
        let phi_x = config.site(x);
        let inc = &raw[x * n..(x + 1) * n];
        let radial = dot(phi_x, inc) / n as f64;
        for ((o, &p), &w) in out.iter_mut().zip(phi_x).zip(inc) {
            *o = p + (*o - ito * p) * dt + (w - radial * p);
        }
        if params.renormalize {
            let nrm = norm(out);
            if !(nrm >= 0.5 * radius) {
                return Err(Error::StepTooLarge { site: x, norm: nrm });
            }
            let s = radius / nrm;
            out.iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    };

    let mut next = vec![0.0; n * num_sites];
    if next.len() >= PARALLEL_THRESHOLD {
        next.par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(x, out)| update(x, out))?;
    } else {
        for (x, out) in next.chunks_mut(n).enumerate() {
            update(x, out)?;
        }
    }
    Ok(SpinConfiguration::from_field_unchecked(ComponentField {
        n,
        num_sites,
        values: next,
    }))
}

/// Advances `config` by one step using the increments keyed by `t_index`.
pub fn step(
    lattice: &TorusLattice,
    config: &SpinConfiguration,
    params: &SdeParams,
    noise: &NoiseChannel,
    t_index: u64,
) -> Result<SpinConfiguration> {
    let raw = draw_increments(noise, config.components(), config.num_sites(), t_index);
    step_with_increments(lattice, config, params, &raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoisePlan;

    fn channel(seed: u64, dt: f64) -> NoiseChannel {
        NoiseChannel::new(NoisePlan::new(seed, dt).unwrap(), 1, 0)
    }

    fn random_config(lat: &TorusLattice, n: usize, seed: u64) -> SpinConfiguration {
        SpinConfiguration::uniform(lat, n, &channel(seed, 1.0), 0).unwrap()
    }

    #[test]
    fn uniform_config_on_sphere() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let c = random_config(&lat, 8, 3);
        assert!(c.max_sphere_error() < 1e-14);
        for x in 0..lat.num_sites() {
            for &y in lat.neighbors(x) {
                assert!(c.pair_correlation(x, y).abs() <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn zero_coupling_drift_is_ito_term() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let c = random_config(&lat, 5, 1);
        let b = drift(&lat, &c, 0.0);
        for x in 0..lat.num_sites() {
            for i in 0..5 {
                let expected = -(4.0 / 10.0) * c.get(i, x);
                assert!((b[x * 5 + i] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn radial_drift_identity() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let n = 7;
        let c = random_config(&lat, n, 9);
        let b = drift(&lat, &c, 0.3);
        for x in 0..lat.num_sites() {
            let radial = dot(&b[x * n..(x + 1) * n], c.site(x));
            assert!((radial + (n as f64 - 1.0) / 2.0).abs() < 1e-12, "{radial}");
        }
    }

    #[test]
    fn drift_matches_scalar_loop() {
        // d=1, L=3, N=2 with explicit angles.
        let lat = TorusLattice::new(1, 3).unwrap();
        let r = 2f64.sqrt();
        let angles = [0.3f64, 1.7, -2.2];
        let mut vals = Vec::new();
        for a in angles {
            vals.push(r * a.cos());
            vals.push(r * a.sin());
        }
        let c = SpinConfiguration::from_field_unchecked(ComponentField::from_site_major(2, 3, vals).unwrap());
        let kappa = 0.4;
        let b = drift(&lat, &c, kappa);
        for x in 0..3usize {
            let left = (x + 2) % 3;
            let right = (x + 1) % 3;
            for i in 0..2 {
                let mut acc = 0.0;
                for y in [right, left] {
                    let mut h = 0.0;
                    for k in 0..2 {
                        h += c.get(k, x) * c.get(k, y);
                    }
                    h /= 2.0;
                    acc += c.get(i, y) - h * c.get(i, x);
                }
                let expected = 2.0 * kappa * acc - 0.25 * c.get(i, x);
                assert!((b[x * 2 + i] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn projection_kills_radial_and_keeps_tangent() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let n = 6;
        let c = random_config(&lat, n, 4);
        let radial: Vec<f64> = c.field().values().iter().map(|v| 0.37 * v).collect();
        let out = project_noise(&c, &radial).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-15));

        let raw = draw_increments(&channel(8, 0.1), n, lat.num_sites(), 0);
        let once = project_noise(&c, &raw).unwrap();
        let twice = project_noise(&c, &once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-13);
        }
        for x in 0..lat.num_sites() {
            let t = dot(&once[x * n..(x + 1) * n], c.site(x));
            assert!(t.abs() < 1e-12 * (n as f64).sqrt());
        }
        assert!(project_noise(&c, &raw[1..]).is_err());
    }

    #[test]
    fn noiseless_step_matches_hand_rolled_update() {
        let lat = TorusLattice::new(2, 3).unwrap();
        let n = 4;
        let c = random_config(&lat, n, 12);
        let params = SdeParams::new(0.2, 1e-3, 1);
        let zeros = vec![0.0; n * lat.num_sites()];
        let next = step_with_increments(&lat, &c, &params, &zeros).unwrap();
        let b = drift(&lat, &c, 0.2);
        for x in 0..lat.num_sites() {
            let mut v: Vec<f64> = (0..n).map(|i| c.get(i, x) + b[x * n + i] * 1e-3).collect();
            let s = (n as f64).sqrt() / norm(&v);
            v.iter_mut().for_each(|e| *e *= s);
            for i in 0..n {
                assert!((next.get(i, x) - v[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_keeps_sphere() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let mut c = random_config(&lat, 16, 5);
        let params = SdeParams::new(0.1, 1e-3, 50);
        let ch = channel(6, 1e-3);
        for t in 0..50 {
            c = step(&lat, &c, &params, &ch, t).unwrap();
            assert!(c.max_sphere_error() <= 1e-15 * 4.0);
        }
    }

    #[test]
    fn oversized_step_is_signalled() {
        let lat = TorusLattice::new(1, 3).unwrap();
        let c = SpinConfiguration::all_ones(&lat, 2).unwrap();
        // Drift alone shrinks the vector by 1 - dt/4; dt = 3 takes it below sqrt(N)/2.
        let params = SdeParams::new(0.0, 3.0, 1);
        let err = step_with_increments(&lat, &c, &params, &[0.0; 6]);
        assert!(matches!(err, Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn stability_guard() {
        assert!(SdeParams::new(0.1, 1e-3, 1).validate(2).is_ok());
        assert!(SdeParams::new(1.0, 0.1, 1).validate(2).is_err());
        assert!(SdeParams::new(-1.0, 1e-3, 1).validate(2).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let f = ComponentField::from_component_major(3, 4, &vals).unwrap();
        assert_eq!(f.get(2, 1), 9.0);
        assert_eq!(f.to_component_major(), vals);
    }
}
