//! Uniform and von Mises–Fisher sampling on the unit sphere `S^{p-1}`.

use rand_distr::{Beta, Distribution};

use super::{dot, norm};
use crate::rng::KeyedStream;

/// Uniform unit vector in `ℝ^p` (normalised Gaussian).
pub fn sample_uniform_sphere(p: usize, rng: &mut KeyedStream) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let r = norm(&v);
        if r > 1e-300 {
            v.iter_mut().for_each(|c| *c /= r);
            return v;
        }
    }
}

/// Draw from the von Mises–Fisher law with density `∝ exp(c ⟨μ, u⟩)` on `S^{p-1}`.
///
/// Wood's rejection scheme: the cosine `w = ⟨μ, u⟩` is sampled from its
/// marginal by a Beta proposal, and the tangent direction uniformly.
/// `mean` must be a unit vector; `concentration == 0` gives the uniform law.
pub fn sample_vmf(mean: &[f64], concentration: f64, rng: &mut KeyedStream) -> Vec<f64> {
    let p = mean.len();
    if concentration <= 0.0 {
        return sample_uniform_sphere(p, rng);
    }
    let w = sample_vmf_cosine(p, concentration, rng);

    // Uniform direction orthogonal to the mean; projected twice so that
    // near-parallel draws do not leave a residual component along the mean.
    let tangent = loop {
        let mut v: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let scale = norm(&v);
        for _ in 0..2 {
            let along = dot(&v, mean);
            for (c, &m) in v.iter_mut().zip(mean) {
                *c -= along * m;
            }
        }
        let r = norm(&v);
        if r > 1e-8 * scale {
            v.iter_mut().for_each(|c| *c /= r);
            break v;
        }
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    let mut u: Vec<f64> = mean.iter().zip(&tangent).map(|(&m, &t)| w * m + s * t).collect();
    let r = norm(&u);
    u.iter_mut().for_each(|c| *c /= r);
    u
}

fn sample_vmf_cosine(p: usize, kappa: f64, rng: &mut KeyedStream) -> f64 {
    let pm1 = (p - 1) as f64;
    // b = (−2κ + √(4κ² + (p−1)²))/(p−1), written without cancellation.
    let b = pm1 / (2.0 * kappa + (4.0 * kappa * kappa + pm1 * pm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + pm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(pm1 / 2.0, pm1 / 2.0).expect("positive shape parameters");
    loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u = rng.uniform();
        if kappa * w + pm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w;
        }
    }
}
