//! Counter-based Gaussian noise.
//!
//! Every random number is a pure function of the master seed and a key, so
//! simulations produce identical trajectories no matter how work is split
//! across threads. A key is hashed into a 64-bit base state with the
//! SplitMix64 finaliser, and outputs are drawn by finalising
//! `base + counter * γ` (γ the golden-ratio increment), which is exactly
//! SplitMix64 run from an independent per-key starting point.
//!
//! Gaussians use the Box–Muller cosine branch on two counter slots.

use rand::RngCore;

use crate::error::{invalid, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ mix64(word.wrapping_add(GOLDEN_GAMMA)))
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(u1: f64, u2: f64) -> f64 {
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Full address of one Gaussian increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub experiment: u64,
    pub replica: u64,
    pub site: u64,
    pub component: u64,
    pub step: u64,
}

/// Master seed and time step for Brownian increments `dW ~ N(0, dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePlan {
    master_seed: u64,
    dt: f64,
}

impl NoisePlan {
    pub fn new(master_seed: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
        }
        Ok(Self { master_seed, dt })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Same seed, different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.master_seed, dt)
    }

    fn base(&self, experiment: u64, replica: u64, site: u64, step: u64) -> u64 {
        let mut h = mix64(self.master_seed ^ SEED_SALT);
        for word in [experiment, replica, site, step] {
            h = absorb(h, word);
        }
        h
    }

    /// The keyed stream for every component at one `(experiment, replica, site, step)`.
    pub fn stream(&self, experiment: u64, replica: u64, site: u64, step: u64) -> KeyedStream {
        KeyedStream {
            base: self.base(experiment, replica, site, step),
            counter: 0,
        }
    }

    /// A draw from `N(0, dt)` for `key`.
    pub fn gaussian_increment(&self, key: StreamKey) -> f64 {
        let stream = self.stream(key.experiment, key.replica, key.site, key.step);
        self.dt.sqrt() * stream.normal_at(key.component)
    }

    /// Fills `out[i]` with the increment for component `i` of the given address.
    /// Equivalent to calling [`NoisePlan::gaussian_increment`] per component.
    pub fn fill_increments(&self, experiment: u64, replica: u64, site: u64, step: u64, out: &mut [f64]) {
        let stream = self.stream(experiment, replica, site, step);
        let scale = self.dt.sqrt();
        for (i, v) in out.iter_mut().enumerate() {
            *v = scale * stream.normal_at(i as u64);
        }
    }
}

/// Noise source bound to one experiment and one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseChannel {
    pub plan: NoisePlan,
    pub experiment: u64,
    pub replica: u64,
}

impl NoiseChannel {
    pub fn new(plan: NoisePlan, experiment: u64, replica: u64) -> Self {
        Self {
            plan,
            experiment,
            replica,
        }
    }

    pub fn with_replica(&self, replica: u64) -> Self {
        Self { replica, ..*self }
    }

    pub fn dt(&self) -> f64 {
        self.plan.dt()
    }

    pub fn increments(&self, site: usize, step: u64, out: &mut [f64]) {
        self.plan
            .fill_increments(self.experiment, self.replica, site as u64, step, out);
    }

    pub fn stream(&self, site: usize, step: u64) -> KeyedStream {
        self.plan
            .stream(self.experiment, self.replica, site as u64, step)
    }
}

/// A deterministic stream addressed by its key.
///
/// Random access is available through [`KeyedStream::normal_at`] and
/// [`KeyedStream::bits_at`]; the [`RngCore`] implementation walks a separate
/// region of counter space so sequential and random-access use never overlap.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    base: u64,
    counter: u64,
}

const SEQUENTIAL_OFFSET: u64 = 1 << 62;

impl KeyedStream {
    #[inline]
    pub fn bits_at(&self, slot: u64) -> u64 {
        mix64(self.base.wrapping_add(slot.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Standard normal for component `index`, built from slots `2·index` and `2·index + 1`.
    #[inline]
    pub fn normal_at(&self, index: u64) -> f64 {
        let u1 = open_unit(self.bits_at(2 * index));
        let u2 = open_unit(self.bits_at(2 * index + 1));
        box_muller(u1, u2)
    }

    /// Next uniform on (0, 1) from the sequential region.
    pub fn uniform(&mut self) -> f64 {
        open_unit(self.next_u64())
    }

    /// Next standard normal from the sequential region.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        box_muller(u1, u2)
    }
}

impl RngCore for KeyedStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.bits_at(SEQUENTIAL_OFFSET.wrapping_add(self.counter));
        self.counter += 1;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
