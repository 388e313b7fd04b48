//! Periodic lattice geometry.
//!
//! Sites of the torus `Λ = (ℤ/𝔏ℤ)^d` are numbered row-major: the coordinate
//! `(c_0, …, c_{d-1})` maps to `Σ_j c_j 𝔏^{d-1-j}`, so the last axis varies
//! fastest. The same numbering doubles as the indexing of Fourier frequencies.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// The discrete torus with side `side` in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    num_sites: usize,
    /// `strides[j] = side^(dim-1-j)`.
    strides: Vec<usize>,
    /// Flat neighbour table, `2 * dim` entries per site.
    neighbors: Vec<usize>,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if side < 3 {
            return Err(Error::SideTooSmall(side));
        }
        let num_sites = side
            .checked_pow(dim as u32)
            .ok_or_else(|| invalid("side", "lattice too large"))?;
        let strides: Vec<usize> = (0..dim).map(|j| side.pow((dim - 1 - j) as u32)).collect();

        let mut neighbors = Vec::with_capacity(num_sites * 2 * dim);
        for site in 0..num_sites {
            for &stride in &strides {
                let c = (site / stride) % side;
                let up = (c + 1) % side;
                let down = (c + side - 1) % side;
                neighbors.push(site - c * stride + up * stride);
                neighbors.push(site - c * stride + down * stride);
            }
        }

        Ok(Self {
            dim,
            side,
            num_sites,
            strides,
            neighbors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    /// Number of neighbours of every site, `2d`.
    pub fn degree(&self) -> usize {
        2 * self.dim
    }

    /// The `2d` neighbours of `site` in the order `+e_1, −e_1, …, +e_d, −e_d`.
    ///
    /// Panics if `site` is out of range; see [`TorusLattice::try_neighbors`].
    #[inline]
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let deg = self.degree();
        &self.neighbors[site * deg..(site + 1) * deg]
    }

    pub fn try_neighbors(&self, site: usize) -> Result<&[usize]> {
        self.check_site(site)?;
        Ok(self.neighbors(site))
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.num_sites {
            return Err(Error::OutOfRange {
                index: site,
                limit: self.num_sites,
            });
        }
        Ok(())
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&stride| (site / stride) % self.side)
            .collect()
    }

    /// Site index of an integer coordinate vector, reduced mod `side`.
    pub fn site_of(&self, coords: &[i64]) -> Result<usize> {
        if coords.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coordinates", self.dim),
                got: format!("{}", coords.len()),
            });
        }
        let side = self.side as i64;
        Ok(coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &stride)| c.rem_euclid(side) as usize * stride)
            .sum())
    }

    /// Site of `y − x` (mod `side`).
    pub fn difference(&self, x: usize, y: usize) -> usize {
        self.strides
            .iter()
            .map(|&stride| {
                let cx = (x / stride) % self.side;
                let cy = (y / stride) % self.side;
                ((cy + self.side - cx) % self.side) * stride
            })
            .sum()
    }

    /// The unit offset `e_1 = (1, 0, …, 0)` as a site index.
    pub fn unit_offset(&self) -> usize {
        self.strides[0]
    }

    /// Minimum-image graph distance from the origin.
    pub fn distance_to_origin(&self, site: usize) -> usize {
        self.coords(site)
            .into_iter()
            .map(|c| c.min(self.side - c))
            .sum()
    }

    /// Sum of coordinates mod 2. A proper two-colouring only when `side` is even.
    pub fn parity(&self, site: usize) -> usize {
        self.coords(site).into_iter().sum::<usize>() % 2
    }

    /// Eigenvalue `λ_k = 2 Σ_j (cos(2π k_j/𝔏) − 1)` of the lattice Laplacian.
    pub fn laplacian_eigenvalue(&self, k: &[usize]) -> Result<f64> {
        if k.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} frequency components", self.dim),
                got: format!("{}", k.len()),
            });
        }
        if let Some(&bad) = k.iter().find(|&&kj| kj >= self.side) {
            return Err(Error::OutOfRange {
                index: bad,
                limit: self.side,
            });
        }
        Ok(self.eigenvalue_from_components(k.iter().copied()))
    }

    fn eigenvalue_from_components(&self, k: impl Iterator<Item = usize>) -> f64 {
        let side = self.side as f64;
        k.map(|kj| {
            if kj == 0 {
                0.0
            } else {
                2.0 * ((2.0 * std::f64::consts::PI * kj as f64 / side).cos() - 1.0)
            }
        })
        .sum()
    }

    /// All eigenvalues, indexed by the frequency's site index.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.num_sites)
            .map(|k| self.eigenvalue_from_components(self.coords(k).into_iter()))
            .collect()
    }

    /// Dense lattice Laplacian `Δ_Λ` (diagonal `−2d`, `+1` per neighbour).
    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let n = self.num_sites;
        let mut lap = DMatrix::zeros(n, n);
        for x in 0..n {
            lap[(x, x)] -= self.degree() as f64;
            for &y in self.neighbors(x) {
                lap[(x, y)] += 1.0;
            }
        }
        lap
    }
}

/// Site weights `a^{-|x|}` defining the weighted `ℓ^p_a` norms.
#[derive(Debug, Clone)]
pub struct ExponentialWeight {
    base: f64,
    weights: Vec<f64>,
}

impl ExponentialWeight {
    pub fn new(lattice: &TorusLattice, base: f64) -> Result<Self> {
        if !(base > 1.0) || !base.is_finite() {
            return Err(invalid("base", format!("must be a finite real > 1, got {base}")));
        }
        let weights = (0..lattice.num_sites())
            .map(|x| base.powi(-(lattice.distance_to_origin(x) as i32)))
            .collect();
        Ok(Self { base, weights })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn weight(&self, site: usize) -> f64 {
        self.weights[site]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(Σ_x a^{-|x|} |v_x|^p)^{1/p}`.
    pub fn weighted_norm(&self, v: &[f64], p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid("p", format!("must be finite and >= 1, got {p}")));
        }
        if v.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} sites", self.weights.len()),
                got: format!("{}", v.len()),
            });
        }
        let sum: f64 = v
            .iter()
            .zip(&self.weights)
            .map(|(&vx, &w)| w * vx.abs().powf(p))
            .sum();
        Ok(sum.powf(1.0 / p))
    }
}
