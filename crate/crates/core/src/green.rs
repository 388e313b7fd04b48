//! Massive Green functions `(−Δ + m)^{-1}` on the torus and on `ℤ^d`, and the
//! critical coupling `κ_c = ¼ G_{ℤ^d,0}(0,0)`.
//!
//! On the torus the Green function is the finite Fourier sum
//! `G(x,y) = 𝔏^{-d} Σ_k cos(2π k·(x−y)/𝔏) / (−λ_k + m)`. On `ℤ^d` the sum
//! becomes an integral over `[0,1)^d`: one axis in closed form, the others by
//! the midpoint rule with dyadic refinement.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::CovarianceMatrix;
use crate::error::{invalid, Error, Result};
use crate::lattice::TorusLattice;

/// Largest lattice for which the dense inverse is formed.
pub const DENSE_SITE_LIMIT: usize = 4096;

/// Successive-refinement tolerance of the `ℤ^d` quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;

/// A mass `m` (the coefficient added to `−Δ`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MassParameter(f64);

impl MassParameter {
    /// Strictly positive mass, as required on the torus.
    pub fn torus(m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(invalid("m", format!("torus Green function needs a finite mass > 0, got {m}")));
        }
        Ok(Self(m))
    }

    /// Non-negative mass; zero is only admissible for `d ≥ 3`.
    pub fn zd(d: usize, m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(invalid("m", format!("must be finite and >= 0, got {m}")));
        }
        if m == 0.0 && d <= 2 {
            return Err(Error::Divergent(format!(
                "G_Z^{d},0 is infinite for d = {d}; the massless Green function exists only for d >= 3"
            )));
        }
        Ok(Self(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Spectral data of one torus, reusable across masses and offsets.
#[derive(Debug, Clone)]
pub struct TorusSpectrum {
    side: usize,
    num_sites: usize,
    /// `−λ_k` per frequency site index.
    neg_eigenvalues: Vec<f64>,
    freq_coords: Vec<Vec<usize>>,
    cos_table: Vec<f64>,
}

impl TorusSpectrum {
    pub fn new(lattice: &TorusLattice) -> Self {
        let side = lattice.side();
        let cos_table = (0..side)
            .map(|j| (std::f64::consts::TAU * j as f64 / side as f64).cos())
            .collect();
        Self {
            side,
            num_sites: lattice.num_sites(),
            neg_eigenvalues: lattice.eigenvalues().into_iter().map(|l| -l).collect(),
            freq_coords: (0..lattice.num_sites()).map(|k| lattice.coords(k)).collect(),
            cos_table,
        }
    }

    pub fn neg_eigenvalues(&self) -> &[f64] {
        &self.neg_eigenvalues
    }

    /// `G_m(0, r)` for the offset with coordinates `r`.
    pub fn green_offset(&self, m: MassParameter, r: &[usize]) -> f64 {
        let m = m.value();
        let sum: f64 = self
            .freq_coords
            .iter()
            .zip(&self.neg_eigenvalues)
            .map(|(k, &ev)| {
                let phase: usize = k.iter().zip(r).map(|(a, b)| a * b).sum::<usize>() % self.side;
                self.cos_table[phase] / (ev + m)
            })
            .sum();
        sum / self.num_sites as f64
    }

    /// `G_m(x, x)`.
    pub fn green_diagonal(&self, m: MassParameter) -> f64 {
        let m = m.value();
        self.neg_eigenvalues.iter().map(|&ev| 1.0 / (ev + m)).sum::<f64>() / self.num_sites as f64
    }
}

/// `G_{Λ,m}(x, y)` by the Fourier sum.
pub fn green_torus(lattice: &TorusLattice, m: f64, x: usize, y: usize) -> Result<f64> {
    let m = MassParameter::torus(m)?;
    lattice.check_site(x)?;
    lattice.check_site(y)?;
    let r = lattice.coords(lattice.difference(x, y));
    Ok(TorusSpectrum::new(lattice).green_offset(m, &r))
}

/// `G_m(0, r)` for every offset `r`, indexed by the offset's site index.
pub fn green_torus_offsets(lattice: &TorusLattice, m: f64) -> Result<Vec<f64>> {
    let m = MassParameter::torus(m)?;
    let spectrum = TorusSpectrum::new(lattice);
    Ok((0..lattice.num_sites())
        .map(|r| spectrum.green_offset(m, &lattice.coords(r)))
        .collect())
}

/// Full matrix `(−Δ_Λ + m)^{-1}` by Cholesky factorisation.
pub fn green_torus_dense(lattice: &TorusLattice, m: f64) -> Result<CovarianceMatrix> {
    MassParameter::torus(m)?;
    let n = lattice.num_sites();
    if n > DENSE_SITE_LIMIT {
        return Err(Error::DenseGuard {
            sites: n,
            limit: DENSE_SITE_LIMIT,
        });
    }
    let op = -lattice.laplacian_dense() + DMatrix::identity(n, n) * m;
    let chol = op
        .cholesky()
        .ok_or_else(|| invalid("m", "operator not positive definite"))?;
    CovarianceMatrix::from_matrix(chol.inverse())
}

/// Result of the `ℤ^d` quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureEstimate {
    /// Final (extrapolated) value.
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub difference: f64,
    /// Cells per axis at the finest level.
    pub cells: usize,
    /// `(cells per axis, raw midpoint value, extrapolated value)` per level.
    pub levels: Vec<(usize, f64, f64)>,
}

/// Quadrature of `∫_{[0,1)^d} cos(2π k·r) / (−λ_k + m) dk`.
///
/// The last axis is integrated in closed form,
/// `∫_0^1 cos(2π k r) / (a + 2 − 2cos 2πk) dk = ρ^{|r|} / √(a(a+4))` with
/// `ρ = (a + 2 − √(a(a+4)))/2`, leaving a `(d−1)`-dimensional periodic
/// integrand handled by the midpoint rule under dyadic refinement.
///
/// At `m = 0` the reduced integrand keeps a `|k|^{-1}` singularity and the
/// midpoint error expands in `h^{d−2}, h^d, h^{d+2}`, which Richardson
/// extrapolation removes. For `m > 0` the integrand is analytic and the raw
/// rule converges geometrically once `h ≪ √m`; extrapolating there would
/// converge to the massless value instead, so only the raw column is used.
#[derive(Debug, Clone, Copy)]
pub struct ZdQuadrature {
    pub start_cells: usize,
    pub max_cells: usize,
    pub tolerance: f64,
}

impl ZdQuadrature {
    pub fn for_dim(d: usize) -> Self {
        // Keep the finest reduced half-grid at or below 2^26 cells.
        let reduced = d.saturating_sub(1).max(1);
        let max_cells = 1usize << (26 / reduced + 1).min(22);
        Self {
            start_cells: 8,
            max_cells: max_cells.max(16),
            tolerance: QUADRATURE_TOLERANCE,
        }
    }

    pub fn integrate(&self, d: usize, m: f64, offset: &[i64]) -> Result<QuadratureEstimate> {
        if d == 0 || offset.len() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} offset components"),
                got: format!("{}", offset.len()),
            });
        }
        let m = MassParameter::zd(d, m)?.value();
        if d == 1 {
            return Ok(QuadratureEstimate {
                value: line_integral(m, offset[0]),
                difference: 0.0,
                cells: 0,
                levels: Vec::new(),
            });
        }
        let exponents: Vec<i32> = if d >= 3 {
            vec![d as i32 - 2, d as i32, d as i32 + 2]
        } else {
            Vec::new()
        };

        let mut table: Vec<Vec<f64>> = Vec::new();
        let mut levels = Vec::new();
        let mut cells = self.start_cells.max(2);
        let mut last_diff = f64::INFINITY;
        loop {
            let raw = midpoint(d, m, offset, cells);
            let mut row = vec![raw];
            if let Some(prev) = table.last() {
                for (j, &p) in exponents.iter().enumerate() {
                    if j >= prev.len() {
                        break;
                    }
                    let factor = 2f64.powi(p) - 1.0;
                    let next = row[j] + (row[j] - prev[j]) / factor;
                    row.push(next);
                }
            }
            let extrapolated = *row.last().unwrap();
            levels.push((cells, raw, extrapolated));
            if let Some(prev) = table.last() {
                let raw_diff = (raw - prev[0]).abs();
                let col = row.len().min(prev.len()) - 1;
                let ext_diff = (row[col] - prev[col]).abs();
                last_diff = if m == 0.0 { ext_diff } else { raw_diff };
                if table.len() >= 2 {
                    let pick = if m == 0.0 {
                        (col > 0 && ext_diff < self.tolerance).then_some((row[col], ext_diff))
                    } else if raw_diff < self.tolerance {
                        Some((raw, raw_diff))
                    } else {
                        None
                    };
                    if let Some((value, difference)) = pick {
                        return Ok(QuadratureEstimate {
                            value,
                            difference,
                            cells,
                            levels,
                        });
                    }
                }
            }
            table.push(row);
            if cells * 2 > self.max_cells {
                return Err(Error::NotConverged {
                    difference: last_diff,
                    cells,
                });
            }
            cells *= 2;
        }
    }
}

/// `∫_0^1 cos(2π k r) / (a + 2 − 2cos 2πk) dk` for `a ≥ 0` (infinite at `a = 0`).
#[inline]
fn line_integral(a: f64, r: i64) -> f64 {
    let root = (a * (a + 4.0)).sqrt();
    if r == 0 {
        return 1.0 / root;
    }
    let rho = 2.0 / (a + 2.0 + root);
    rho.powi(r.unsigned_abs() as i32) / root
}

/// Half-grid midpoint sum over the first `d − 1` axes. The midpoint grid is
/// symmetric under `k_j → 1 − k_j`, and summing the cosines over these
/// reflections factorises them into `Π_j cos(2π k_j r_j)`; each reflected cell
/// carries weight `(2/n)^{d−1}`.
fn midpoint(d: usize, m: f64, offset: &[i64], cells: usize) -> f64 {
    let half = cells / 2;
    let h = 1.0 / cells as f64;
    let nodes: Vec<f64> = (0..half).map(|i| (i as f64 + 0.5) * h).collect();
    let a: Vec<f64> = nodes
        .iter()
        .map(|&k| 2.0 * (1.0 - (std::f64::consts::TAU * k).cos()))
        .collect();
    let (outer, last) = offset.split_at(d - 1);
    let r_last = last[0];
    let phases: Vec<Vec<f64>> = outer
        .iter()
        .map(|&r| {
            nodes
                .iter()
                .map(|&k| (std::f64::consts::TAU * k * r as f64).cos())
                .collect()
        })
        .collect();

    let inner = |first: usize| -> f64 {
        fn rec(depth: usize, denom: f64, weight: f64, a: &[f64], phases: &[Vec<f64>], r: i64) -> f64 {
            if depth == phases.len() {
                return weight * line_integral(denom, r);
            }
            a.iter()
                .zip(&phases[depth])
                .map(|(&ai, &pi)| rec(depth + 1, denom + ai, weight * pi, a, phases, r))
                .sum()
        }
        rec(1, m + a[first], phases[0][first], &a, &phases, r_last)
    };

    let partials: Vec<f64> = (0..half).into_par_iter().map(inner).collect();
    let total: f64 = partials.iter().sum();
    total * (2.0 * h).powi(d as i32 - 1)
}

/// `G_{ℤ^d, m}(0, offset)`.
pub fn green_zd(d: usize, m: f64, offset: &[i64]) -> Result<f64> {
    Ok(ZdQuadrature::for_dim(d).integrate(d, m, offset)?.value)
}

/// Full quadrature record for `G_{ℤ^d,0}(0,0)`.
pub fn kappa_c_estimate(d: usize) -> Result<QuadratureEstimate> {
    if d <= 2 {
        return Err(Error::Divergent(format!(
            "kappa_c is infinite for d = {d}; every kappa is subcritical"
        )));
    }
    ZdQuadrature::for_dim(d).integrate(d, 0.0, &vec![0; d])
}

/// `κ_c = ¼ G_{ℤ^d,0}(0,0)`, cached per dimension.
pub fn kappa_c(d: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&d) {
        return Ok(v);
    }
    let value = 0.25 * kappa_c_estimate(d)?.value;
    cache.lock().unwrap().insert(d, value);
    Ok(value)
}
