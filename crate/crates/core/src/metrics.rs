//! Coupling distances, Wasserstein distances, two-sample tests and log-log
//! rate fits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{symmetric_sqrt, CovarianceMatrix};
use crate::dynamics::ComponentField;
use crate::error::{invalid, Error, Result};
use crate::lattice::ExponentialWeight;

/// `(1/N) Σ_i Σ_x w(x) (Φ^i_x − Ψ^i_x)²`, with `w ≡ 1` when no weight is given.
pub fn coupling_distance(phi: &ComponentField, psi: &ComponentField, weight: Option<&ExponentialWeight>) -> Result<f64> {
    phi.same_shape(psi)?;
    let n = phi.components();
    if let Some(w) = weight {
        if w.weights().len() != phi.num_sites() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", phi.num_sites()),
                got: format!("{}", w.weights().len()),
            });
        }
    }
    let mut total = 0.0;
    for x in 0..phi.num_sites() {
        let sq: f64 = phi
            .site(x)
            .iter()
            .zip(psi.site(x))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += weight.map_or(1.0, |w| w.weight(x)) * sq;
    }
    Ok(total / n as f64)
}

/// 2-Wasserstein distance between centred Gaussians (Bures formula).
pub fn w2_gaussian(c1: &CovarianceMatrix, c2: &CovarianceMatrix) -> Result<f64> {
    if c1.dim() != c2.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0}", c1.dim()),
            got: format!("{0}x{0}", c2.dim()),
        });
    }
    // The eigenvalue test inside `sqrt` is the PSD check; unlike pivoted
    // Cholesky it tolerates rank-deficient empirical matrices.
    c2.sqrt()?;
    let r1 = c1.sqrt()?;
    let inner = &r1 * c2.matrix() * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = symmetric_sqrt(&inner)?.trace();
    Ok((c1.trace() + c2.trace() - 2.0 * cross).max(0.0).sqrt())
}

/// Exact 1-D 2-Wasserstein distance between two equal-size empirical laws.
pub fn w2_empirical_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples", a.len()),
            got: format!("{}", b.len()),
        });
    }
    if a.is_empty() {
        return Err(invalid("samples", "need at least one sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// `(1/count) Σ_j v_j v_jᵀ` over the rows of a row-major `(count, dim)` array.
pub fn second_moment_matrix(rows: &[f64], dim: usize) -> Result<CovarianceMatrix> {
    if dim == 0 || rows.len() % dim != 0 || rows.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("a positive multiple of {dim} values"),
            got: format!("{}", rows.len()),
        });
    }
    let count = rows.len() / dim;
    let mut m = DMatrix::zeros(dim, dim);
    for row in rows.chunks(dim) {
        for x in 0..dim {
            for y in x..dim {
                m[(x, y)] += row[x] * row[y];
            }
        }
    }
    for x in 0..dim {
        for y in x..dim {
            let v = m[(x, y)] / count as f64;
            m[(x, y)] = v;
            m[(y, x)] = v;
        }
    }
    CovarianceMatrix::from_matrix(m)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("samples", "need at least two values for a standard error"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            stderr: (var / n).sqrt(),
            count: values.len(),
        })
    }

    /// Normal-approximation 95% interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("samples", "both samples must be non-empty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2 j² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Least-squares fit of `log(value)` against `log(N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub target_rate: Option<f64>,
}

pub fn fit_rate(points: &[(f64, f64)], target_rate: Option<f64>) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(invalid("grid", format!("need at least 4 points, got {}", points.len())));
    }
    if let Some(&(n, v)) = points.iter().find(|(n, v)| !(*n > 0.0) || !(*v > 0.0)) {
        return Err(invalid("grid", format!("N and values must be positive, got ({n}, {v})")));
    }
    let (min_n, max_n) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(n, _)| (lo.min(n), hi.max(n)));
    if max_n < 8.0 * min_n {
        return Err(invalid("grid", format!("N must span a factor of 8, got {min_n}..{max_n}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        stderr,
        intercept,
        target_rate,
    })
}
