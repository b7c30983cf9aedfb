//! Shared transform kernels: 2D complex FFT for periodic grids and the
//! type-I discrete sine transform for the homogeneous Dirichlet box.
//!
//! Plans are cached process-wide; all entry points are deterministic.

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::{Arc, Mutex};

use crate::par::for_each_chunk_mut;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER.lock().expect("fft planner lock");
    match direction {
        FftDirection::Forward => planner.plan_fft_forward(len),
        FftDirection::Inverse => planner.plan_fft_inverse(len),
    }
}

fn transform_rows(data: &mut [Complex64], row_len: usize, direction: FftDirection) {
    let fft = plan(row_len, direction);
    let scratch_len = fft.get_inplace_scratch_len();
    for_each_chunk_mut(data, row_len, |_, row| {
        let mut scratch = vec![Complex64::default(); scratch_len];
        fft.process_with_scratch(row, &mut scratch);
    });
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], nx: usize, ny: usize) {
    // src is ny rows of length nx; dst becomes nx rows of length ny.
    for_each_chunk_mut(dst, ny, |i, out_row| {
        for (j, slot) in out_row.iter_mut().enumerate() {
            *slot = src[j * nx + i];
        }
    });
}

/// In-place 2D FFT of `ny` rows times `nx` columns. The inverse direction
/// includes the 1/(nx*ny) normalization.
pub fn fft2(data: &mut [Complex64], nx: usize, ny: usize, direction: FftDirection) {
    assert_eq!(data.len(), nx * ny);
    transform_rows(data, nx, direction);
    let mut tmp = vec![Complex64::default(); data.len()];
    transpose(data, &mut tmp, nx, ny);
    transform_rows(&mut tmp, ny, direction);
    transpose(&tmp, data, ny, nx);
    if direction == FftDirection::Inverse {
        let scale = 1.0 / (nx * ny) as f64;
        for_each_chunk_mut(data, nx, |_, row| {
            for z in row {
                *z *= scale;
            }
        });
    }
}

/// Unnormalized type-I DST of one row: out[j] = sum_k in[k] sin(pi (j+1)(k+1)/(n+1)).
/// Self-inverse up to the factor 2/(n+1).
fn dst1_row(row: &mut [f64], fft: &Arc<dyn Fft<f64>>, scratch: &mut [Complex64], buf: &mut [Complex64]) {
    let n = row.len();
    let m = 2 * (n + 1);
    debug_assert_eq!(buf.len(), m);
    buf[0] = Complex64::default();
    buf[n + 1] = Complex64::default();
    for k in 0..n {
        buf[k + 1] = Complex64::new(row[k], 0.0);
        buf[m - 1 - k] = Complex64::new(-row[k], 0.0);
    }
    fft.process_with_scratch(buf, scratch);
    for j in 0..n {
        row[j] = -0.5 * buf[j + 1].im;
    }
}

fn dst_rows(data: &mut [f64], row_len: usize) {
    let m = 2 * (row_len + 1);
    let fft = plan(m, FftDirection::Forward);
    let scratch_len = fft.get_inplace_scratch_len();
    for_each_chunk_mut(data, row_len, |_, row| {
        let mut scratch = vec![Complex64::default(); scratch_len];
        let mut buf = vec![Complex64::default(); m];
        dst1_row(row, &fft, &mut scratch, &mut buf);
    });
}

fn transpose_real(src: &[f64], dst: &mut [f64], nx: usize, ny: usize) {
    for_each_chunk_mut(dst, ny, |i, out_row| {
        for (j, slot) in out_row.iter_mut().enumerate() {
            *slot = src[j * nx + i];
        }
    });
}

/// In-place unnormalized 2D type-I DST. Applying it twice multiplies a field
/// by (nx+1)(ny+1)/4.
pub fn dst2(data: &mut [f64], nx: usize, ny: usize) {
    assert_eq!(data.len(), nx * ny);
    dst_rows(data, nx);
    let mut tmp = vec![0.0; data.len()];
    transpose_real(data, &mut tmp, nx, ny);
    dst_rows(&mut tmp, ny);
    transpose_real(&tmp, data, ny, nx);
}
