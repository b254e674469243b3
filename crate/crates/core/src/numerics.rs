//! Small numerical helpers shared across modules.

use num_complex::Complex64;
use rustfft::Fft;

/// Fixed-shape pairwise summation. The reduction tree depends only on the
/// slice length, so results are reproducible regardless of threading.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Smallest `2^a 3^b >= n`.
pub fn fft_friendly(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// Transform along one axis of a row-major array with the given shape.
pub(crate) fn fft_axis(
    buf: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    fft: &dyn Fft<f64>,
    line: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
) {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    scratch.resize(fft.get_inplace_scratch_len(), Complex64::default());
    if stride == 1 {
        fft.process_with_scratch(buf, scratch);
        return;
    }
    let block = n * stride;
    line.resize(n, Complex64::default());
    for chunk in buf.chunks_exact_mut(block) {
        for s in 0..stride {
            for (k, l) in line.iter_mut().enumerate() {
                *l = chunk[k * stride + s];
            }
            fft.process_with_scratch(line, scratch);
            for (k, l) in line.iter().enumerate() {
                chunk[k * stride + s] = *l;
            }
        }
    }
}
