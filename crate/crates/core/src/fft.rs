//! Multi-dimensional discrete Fourier transforms on the torus via per-axis 1-D FFTs.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::lattice::TorusLattice;

/// In-place unnormalised transform `f̂(k) = Σ_x f(x) e^{∓2πi k·x/𝔏}`
/// (minus sign forward, plus sign inverse).
pub(crate) fn fft_nd(lattice: &TorusLattice, data: &mut [Complex64], inverse: bool) {
    let side = lattice.side();
    let n = lattice.num_sites();
    assert_eq!(data.len(), n);
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(side)
    } else {
        planner.plan_fft_forward(side)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); side];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..lattice.dim() {
        let stride = side.pow((lattice.dim() - 1 - axis) as u32);
        for start in 0..n {
            // Visit each line once, from the site whose axis coordinate is 0.
            if (start / stride) % side != 0 {
                continue;
            }
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[start + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
    }
}
