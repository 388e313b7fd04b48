//! Self-consistent Gaussian stationary fields of the mean-field dynamics.
//!
//! On the torus the stationary law is the centred Gaussian with covariance
//! `(1/(4κ)) (−Δ + m*)^{-1}`, where `m*` is fixed by `G_{Λ,m*}(x,x) = 4κ`,
//! i.e. unit variance at every site. On `ℤ^d` the same equation has a
//! positive root only while `κ < κ_c`; beyond it the mass vanishes and the
//! missing variance is carried by a constant random drift `√((κ−κ_c)/κ)·Z`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::covariance::CovarianceMatrix;
use crate::error::{invalid, Error, Result};
use crate::fft::fft_nd;
use crate::green::{green_torus, green_zd, kappa_c, MassParameter, TorusSpectrum};
use crate::lattice::TorusLattice;
use crate::rng::NoiseChannel;

/// Residual target of the torus mass bisection.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Largest mass scanned when looking for a root on `ℤ^d`.
pub const ZD_MASS_CEILING: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    FiniteMassive,
    InfiniteMassive,
    InfiniteCritical,
    InfiniteSupercritical,
}

/// A stationary Gaussian field: kind, mass, coupling and constant-drift scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryField {
    kind: FieldKind,
    mass: f64,
    kappa: f64,
    drift_scale: f64,
}

impl StationaryField {
    pub fn new(kind: FieldKind, mass: f64, kappa: f64, drift_scale: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(invalid("kappa", format!("must be finite and > 0, got {kappa}")));
        }
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(invalid("m", format!("must be finite and >= 0, got {mass}")));
        }
        if !(drift_scale >= 0.0) || !drift_scale.is_finite() {
            return Err(invalid("drift_scale", format!("must be finite and >= 0, got {drift_scale}")));
        }
        match kind {
            FieldKind::FiniteMassive | FieldKind::InfiniteMassive => {
                if mass <= 0.0 {
                    return Err(invalid("m", "massive kinds need m* > 0"));
                }
                if drift_scale != 0.0 {
                    return Err(invalid("drift_scale", "massive kinds carry no drift"));
                }
            }
            FieldKind::InfiniteCritical => {
                if mass > 0.0 {
                    return Err(invalid("m", "critical kind is massless"));
                }
                if drift_scale != 0.0 {
                    return Err(invalid("drift_scale", "critical kind carries no drift"));
                }
            }
            FieldKind::InfiniteSupercritical => {
                if mass > 0.0 {
                    return Err(invalid("m", "supercritical kind is massless"));
                }
                if drift_scale <= 0.0 {
                    return Err(invalid("drift_scale", "supercritical kind needs a positive drift"));
                }
            }
        }
        Ok(Self {
            kind,
            mass,
            kappa,
            drift_scale,
        })
    }

    /// `μ^𝔏` on the given torus.
    pub fn finite(lattice: &TorusLattice, kappa: f64) -> Result<Self> {
        let m = solve_mass_finite(lattice, kappa)?;
        Self::new(FieldKind::FiniteMassive, m, kappa, 0.0)
    }

    /// The `ℤ^d` field in the phase selected by `κ` relative to `κ_c`.
    pub fn infinite(d: usize, kappa: f64) -> Result<Self> {
        if d >= 3 {
            let kc = kappa_c(d)?;
            if kappa > kc {
                return Self::new(
                    FieldKind::InfiniteSupercritical,
                    0.0,
                    kappa,
                    ((kappa - kc) / kappa).sqrt(),
                );
            }
            if kappa == kc {
                return Self::new(FieldKind::InfiniteCritical, 0.0, kappa, 0.0);
            }
        }
        match solve_mass_zd(d, kappa)? {
            Some(m) => Self::new(FieldKind::InfiniteMassive, m, kappa, 0.0),
            None => Self::new(FieldKind::InfiniteCritical, 0.0, kappa, 0.0),
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn drift_scale(&self) -> f64 {
        self.drift_scale
    }

    fn zero_mode_excluded(&self) -> bool {
        matches!(self.kind, FieldKind::InfiniteCritical | FieldKind::InfiniteSupercritical)
    }

    /// Spectral variances `c_k = 1/(4κ(−λ_k + m))` (zero mode dropped when massless).
    fn spectral_variances(&self, lattice: &TorusLattice) -> Vec<f64> {
        let skip_zero = self.zero_mode_excluded();
        lattice
            .eigenvalues()
            .into_iter()
            .enumerate()
            .map(|(k, lam)| {
                if k == 0 && skip_zero {
                    0.0
                } else {
                    1.0 / (4.0 * self.kappa * (-lam + self.mass))
                }
            })
            .collect()
    }

    /// `C(0, r)` for every offset `r` of the torus approximation.
    pub fn covariance_offsets(&self, lattice: &TorusLattice) -> Vec<f64> {
        let c = self.spectral_variances(lattice);
        let mut data: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(lattice, &mut data, true);
        let n = lattice.num_sites() as f64;
        let drift2 = self.drift_scale * self.drift_scale;
        data.iter().map(|z| z.re / n + drift2).collect()
    }

    /// Dense covariance on the torus approximation.
    pub fn covariance(&self, lattice: &TorusLattice) -> Result<CovarianceMatrix> {
        let offsets = self.covariance_offsets(lattice);
        let n = lattice.num_sites();
        let m = nalgebra::DMatrix::from_fn(n, n, |x, y| offsets[lattice.difference(x, y)]);
        CovarianceMatrix::from_matrix(m)
    }
}

/// The unique `m* > 0` with `G_{Λ,m*}(x,x) = 4κ`.
///
/// Geometric bisection run until the bracket can no longer shrink, so the
/// result is accurate to a few ulps in `m`; this keeps the off-diagonal
/// fixed-point residual at rounding level as well.
pub fn solve_mass_finite(lattice: &TorusLattice, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa", format!("must be finite and > 0, got {kappa}")));
    }
    let spectrum = TorusSpectrum::new(lattice);
    let g = |m: f64| spectrum.green_diagonal(MassParameter::torus(m).expect("positive bracket"));
    let target = 4.0 * kappa;
    let mut lo = 0.5 / (target * lattice.num_sites() as f64);
    let mut hi = (1.0 / (2.0 * kappa)).max(1.0);
    while g(hi) > target {
        hi *= 2.0;
    }
    while g(lo) < target {
        lo /= 2.0;
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = if (g(lo) - target).abs() <= (g(hi) - target).abs() { lo } else { hi };
    let residual = (g(m) - target).abs();
    if residual > MASS_TOLERANCE {
        return Err(Error::NotConverged {
            difference: residual,
            cells: lattice.num_sites(),
        });
    }
    Ok(m)
}

/// Positive root of `G_{ℤ^d,m}(0,0) = 4κ`, or `None` when there is none
/// (`κ ≥ κ_c`, `d ≥ 3`).
pub fn solve_mass_zd(d: usize, kappa: f64) -> Result<Option<f64>> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa", format!("must be finite and > 0, got {kappa}")));
    }
    if d >= 3 && kappa >= kappa_c(d)? {
        return Ok(None);
    }
    let zero = vec![0i64; d];
    let target = 4.0 * kappa;
    let g = |m: f64| green_zd(d, m, &zero);
    // G ≤ 1/m, so the root lies below 1/(4κ).
    let mut hi = 1.0 / target;
    let mut lo = hi;
    loop {
        lo /= 4.0;
        if g(lo)? > target {
            break;
        }
        if lo < 1e-12 {
            return Ok(None);
        }
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) || hi / lo - 1.0 < 1e-13 {
            break;
        }
        if g(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some((lo * hi).sqrt()))
}

/// Where Green values are evaluated.
#[derive(Debug, Clone, Copy)]
pub enum GreenDomain<'a> {
    Torus(&'a TorusLattice),
    Zd(usize),
}

/// `(1/(4κ)) G_m(0, e₁) − (m/(2d) + 1 − 1/(8κd))`; zero at the fixed point.
pub fn self_consistency_residual(domain: GreenDomain<'_>, m: f64, kappa: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(invalid("m", format!("must be > 0, got {m}")));
    }
    if !(kappa > 0.0) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    let (d, g01) = match domain {
        GreenDomain::Torus(lat) => (lat.dim(), green_torus(lat, m, 0, lat.unit_offset())?),
        GreenDomain::Zd(d) => {
            let mut e1 = vec![0i64; d];
            e1[0] = 1;
            (d, green_zd(d, m, &e1)?)
        }
    };
    let d = d as f64;
    Ok(g01 / (4.0 * kappa) - (m / (2.0 * d) + 1.0 - 1.0 / (8.0 * kappa * d)))
}

/// `count` independent fields, row-major `(count, num_sites)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    count: usize,
    num_sites: usize,
    values: Vec<f64>,
}

impl FieldSamples {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.values[j * self.num_sites..(j + 1) * self.num_sites]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Exact samples by spectral synthesis.
///
/// Sample `j` takes white noise from `channel.stream(0, j)`, transforms it,
/// scales frequency `k` by `√c_k` and transforms back. For the supercritical
/// kind the constant `drift_scale·Z` is added with `Z` from `channel.stream(1, j)`.
pub fn sample_gff(
    field: &StationaryField,
    lattice: &TorusLattice,
    channel: &NoiseChannel,
    count: usize,
) -> Result<FieldSamples> {
    let n = lattice.num_sites();
    let roots: Vec<f64> = field.spectral_variances(lattice).iter().map(|c| c.sqrt()).collect();
    let drift = field.drift_scale;
    let synth = |j: usize, out: &mut [f64]| {
        let stream = channel.stream(0, j as u64);
        let mut data: Vec<Complex64> = (0..n as u64)
            .map(|x| Complex64::new(stream.normal_at(x), 0.0))
            .collect();
        fft_nd(lattice, &mut data, false);
        for (z, r) in data.iter_mut().zip(&roots) {
            *z *= *r;
        }
        fft_nd(lattice, &mut data, true);
        let shift = if drift > 0.0 {
            drift * channel.stream(1, j as u64).normal_at(0)
        } else {
            0.0
        };
        for (o, z) in out.iter_mut().zip(&data) {
            *o = z.re / n as f64 + shift;
        }
    };
    let mut values = vec![0.0; count * n];
    values.par_chunks_mut(n).enumerate().for_each(|(j, out)| synth(j, out));
    Ok(FieldSamples {
        count,
        num_sites: n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::green_torus_dense;
    use crate::meanfield::gaussian_closure_evolve;
    use crate::rng::NoisePlan;

    #[test]
    fn root_meets_solver_contract() {
        let lat = TorusLattice::new(2, 8).unwrap();
        let spec = TorusSpectrum::new(&lat);
        for kappa in [0.01, 0.05, 0.3, 2.0] {
            let m = solve_mass_finite(&lat, kappa).unwrap();
            let g = spec.green_diagonal(MassParameter::torus(m).unwrap());
            assert!((g - 4.0 * kappa).abs() <= 1e-10);
            let r = self_consistency_residual(GreenDomain::Torus(&lat), m, kappa).unwrap();
            assert!(r.abs() <= 1e-8, "{r}");
        }
        assert!(solve_mass_finite(&lat, 0.0).is_err());
    }

    #[test]
    fn zero_mode_dominates_at_large_coupling() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let kappa = 250.0;
        let m = solve_mass_finite(&lat, kappa).unwrap();
        let scale = 1.0 / (4.0 * kappa * lat.num_sites() as f64);
        assert!(m >= 0.9 * scale && m <= 1.1 * scale, "{m} vs {scale}");
    }

    #[test]
    fn residual_changes_sign_once() {
        let lat = TorusLattice::new(2, 8).unwrap();
        let kappa = 0.05;
        let m_star = solve_mass_finite(&lat, kappa).unwrap();
        let grid: Vec<f64> = (0..60).map(|j| 1e-4 * 1.25f64.powi(j)).collect();
        let signs: Vec<bool> = grid
            .iter()
            .map(|&m| self_consistency_residual(GreenDomain::Torus(&lat), m, kappa).unwrap() > 0.0)
            .collect();
        let changes: Vec<usize> = (1..signs.len()).filter(|&j| signs[j] != signs[j - 1]).collect();
        assert_eq!(changes.len(), 1);
        let j = changes[0];
        assert!(grid[j - 1] < m_star && m_star <= grid[j]);
    }

    #[test]
    fn infinite_volume_phases() {
        let kc = kappa_c(3).unwrap();
        let below = 0.9 * kc;
        let m = solve_mass_zd(3, below).unwrap().expect("subcritical root");
        let r = self_consistency_residual(GreenDomain::Zd(3), m, below).unwrap();
        assert!(r.abs() <= 1e-6, "{r}");

        let above = 1.1 * kc;
        assert_eq!(solve_mass_zd(3, above).unwrap(), None);
        let grid: Vec<f64> = (0..50).map(|j| 1e-5 * 1.5f64.powi(j)).filter(|&m| m <= ZD_MASS_CEILING).collect();
        let first = self_consistency_residual(GreenDomain::Zd(3), grid[0], above).unwrap() > 0.0;
        for &m in &grid[1..] {
            let s = self_consistency_residual(GreenDomain::Zd(3), m, above).unwrap() > 0.0;
            assert_eq!(s, first, "sign change at m = {m}");
        }

        let f = StationaryField::infinite(3, above).unwrap();
        assert_eq!(f.kind(), FieldKind::InfiniteSupercritical);
        assert!((f.drift_scale().powi(2) - (above - kc) / above).abs() < 1e-15);
    }

    #[test]
    fn kind_validation() {
        assert!(StationaryField::new(FieldKind::InfiniteCritical, 0.1, 0.1, 0.0).is_err());
        assert!(StationaryField::new(FieldKind::InfiniteSupercritical, 0.1, 0.1, 0.3).is_err());
        assert!(StationaryField::new(FieldKind::FiniteMassive, 0.0, 0.1, 0.0).is_err());
        assert!(StationaryField::new(FieldKind::InfiniteSupercritical, 0.0, 0.1, 0.3).is_ok());
    }

    #[test]
    fn covariance_matches_dense_green() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let f = StationaryField::finite(&lat, 0.1).unwrap();
        let c = f.covariance(&lat).unwrap();
        let g = green_torus_dense(&lat, f.mass()).unwrap();
        for x in 0..lat.num_sites() {
            for y in 0..lat.num_sites() {
                assert!((c.get(x, y) - g.get(x, y) / 0.4).abs() < 1e-12);
            }
        }
        assert!(c.max_diagonal_deviation(1.0) < 1e-10);
    }

    #[test]
    fn sampler_moments() {
        let lat = TorusLattice::new(2, 8).unwrap();
        let kappa = 0.05;
        let f = StationaryField::finite(&lat, kappa).unwrap();
        let count = 100_000;
        let ch = NoiseChannel::new(NoisePlan::new(11, 1.0).unwrap(), 5, 0);
        let s = sample_gff(&f, &lat, &ch, count).unwrap();
        let n = lat.num_sites();
        let e1 = lat.unit_offset();
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        let (mut nn, mut nn2) = (0.0, 0.0);
        for j in 0..count {
            let v = s.sample(j);
            for x in 0..n {
                mean[x] += v[x];
                var[x] += v[x] * v[x];
            }
            let p = v[0] * v[e1];
            nn += p;
            nn2 += p * p;
        }
        let c = count as f64;
        for x in 0..n {
            assert!((mean[x] / c).abs() <= 4.0 * (1.0 / c).sqrt());
            assert!((var[x] / c - 1.0).abs() <= 3.0 * (2.0 / c).sqrt(), "{}", var[x] / c);
        }
        let target = green_torus(&lat, f.mass(), 0, e1).unwrap() / (4.0 * kappa);
        let m = nn / c;
        let se = ((nn2 / c - m * m) / c).sqrt();
        assert!((m - target).abs() <= 3.0 * se, "{m} vs {target}");
    }

    #[test]
    fn supercritical_samples_carry_drift() {
        let lat = TorusLattice::new(3, 4).unwrap();
        let f = StationaryField::new(FieldKind::InfiniteSupercritical, 0.0, 0.1, 0.5).unwrap();
        let ch = NoiseChannel::new(NoisePlan::new(12, 1.0).unwrap(), 5, 0);
        let s = sample_gff(&f, &lat, &ch, 20_000).unwrap();
        // The spatial mean of a zero-mode-free field is 0, so it equals the drift.
        let (mut acc, mut acc2) = (0.0, 0.0);
        for j in 0..s.count() {
            let avg: f64 = s.sample(j).iter().sum::<f64>() / lat.num_sites() as f64;
            acc += avg;
            acc2 += avg * avg;
        }
        let c = s.count() as f64;
        assert!((acc2 / c - 0.25).abs() < 4.0 * 0.25 * (2.0 / c).sqrt());
        assert!((acc / c).abs() < 4.0 * (0.25 / c).sqrt());
    }

    #[test]
    fn stationary_covariance_is_closure_fixed_point() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let kappa = 0.05;
        let c0 = StationaryField::finite(&lat, kappa).unwrap().covariance(&lat).unwrap();
        let c1 = gaussian_closure_evolve(&lat, &c0, kappa, 1e-3, 1.0).unwrap();
        assert!(c1.max_abs_diff(&c0) <= 1e-6);
    }
}
