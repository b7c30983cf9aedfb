//! Uniform grids on the periodic cell and the Dirichlet box, sampled fields,
//! quadrature, and the two Laplacian discretizations.
//!
//! Periodic grids use spectral differentiation (exact on resolved modes) and
//! spectral Poisson inversion with the zero mode pinned to zero. The planar
//! box stores interior nodes only, with homogeneous Dirichlet ghosts, a
//! 5-point Laplacian, and conjugate-gradient Poisson solves preconditioned by
//! a fast sine-transform inverse.

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fft;
use crate::par::{for_each_chunk_mut, sum_rows};

/// Residual target for the Dirichlet conjugate-gradient Poisson solve.
pub const POISSON_CG_TOL: f64 = 1e-10;
/// A periodic Poisson right-hand side whose mean exceeds this (relative to
/// its L1 size) is rejected as unsolvable rather than silently projected.
pub const POISSON_MEAN_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid extents must be positive, got {0} x {1}")]
    NonPositiveExtent(f64, f64),
    #[error("grid needs at least 4 samples per direction, got {0} x {1}")]
    TooFewSamples(usize, usize),
    #[error("periodic Poisson right-hand side has nonzero mean (relative size {0:.3e}); no periodic solution exists")]
    NonzeroMean(f64),
    #[error("conjugate gradients stalled at relative residual {0:.3e} after {1} iterations")]
    CgStalled(f64, usize),
    #[error("field belongs to a different grid")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Doubly periodic cell [0,Lx) x [0,Ly).
    Periodic,
    /// Open box (-L,L)^2 with zero boundary data; only interior nodes are stored.
    Dirichlet,
}

/// Grid descriptor. Cheap to copy; every `Field` carries one so shape and
/// spacing mismatches fail loudly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub topology: Topology,
    pub nx: usize,
    pub ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub fn periodic(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        if !(lx > 0.0 && ly > 0.0) {
            return Err(GridError::NonPositiveExtent(lx, ly));
        }
        if nx < 4 || ny < 4 {
            return Err(GridError::TooFewSamples(nx, ny));
        }
        Ok(Grid { topology: Topology::Periodic, nx, ny, lx, ly })
    }

    /// Square box of half-width `l`; `nx` x `ny` interior samples.
    pub fn planar(l: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        if !(l > 0.0) {
            return Err(GridError::NonPositiveExtent(l, l));
        }
        if nx < 4 || ny < 4 {
            return Err(GridError::TooFewSamples(nx, ny));
        }
        Ok(Grid { topology: Topology::Dirichlet, nx, ny, lx: 2.0 * l, ly: 2.0 * l })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    /// Full extent along x (cell edge, or box width 2L).
    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Half-width of the Dirichlet box.
    pub fn half_width(&self) -> f64 {
        debug_assert_eq!(self.topology, Topology::Dirichlet);
        0.5 * self.lx
    }

    pub fn hx(&self) -> f64 {
        match self.topology {
            Topology::Periodic => self.lx / self.nx as f64,
            Topology::Dirichlet => self.lx / (self.nx + 1) as f64,
        }
    }

    pub fn hy(&self) -> f64 {
        match self.topology {
            Topology::Periodic => self.ly / self.ny as f64,
            Topology::Dirichlet => self.ly / (self.ny + 1) as f64,
        }
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn node_x(&self, i: usize) -> f64 {
        match self.topology {
            Topology::Periodic => i as f64 * self.hx(),
            Topology::Dirichlet => -0.5 * self.lx + (i + 1) as f64 * self.hx(),
        }
    }

    pub fn node_y(&self, j: usize) -> f64 {
        match self.topology {
            Topology::Periodic => j as f64 * self.hy(),
            Topology::Dirichlet => -0.5 * self.ly + (j + 1) as f64 * self.hy(),
        }
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

/// Scalar field sampled on a grid, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    samples: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, samples: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field { grid, samples: vec![value; grid.len()] }
    }

    pub fn from_samples(grid: Grid, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.len(), "sample count does not match grid");
        Field { grid, samples }
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let mut field = Field::zeros(grid);
        let nx = grid.nx;
        for_each_chunk_mut(&mut field.samples, nx, |j, row| {
            let y = grid.node_y(j);
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = f(grid.node_x(i), y);
            }
        });
        field
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.samples[self.grid.idx(i, j)]
    }

    /// self += a * other
    pub fn add_scaled(&mut self, a: f64, other: &Field) {
        assert_eq!(self.grid, other.grid);
        let nx = self.grid.nx;
        let src = other.samples.as_slice();
        for_each_chunk_mut(&mut self.samples, nx, |j, row| {
            let base = j * nx;
            for (i, slot) in row.iter_mut().enumerate() {
                *slot += a * src[base + i];
            }
        });
    }

    pub fn scale(&mut self, a: f64) {
        let nx = self.grid.nx;
        for_each_chunk_mut(&mut self.samples, nx, |_, row| {
            for slot in row {
                *slot *= a;
            }
        });
    }

    pub fn add_constant(&mut self, c: f64) {
        let nx = self.grid.nx;
        for_each_chunk_mut(&mut self.samples, nx, |_, row| {
            for slot in row {
                *slot += c;
            }
        });
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn linf_distance(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.area()
    }

    /// Bilinear interpolation at physical coordinates. Outside the node hull
    /// the field is extended by its boundary data (periodic wrap, or the zero
    /// Dirichlet ghosts).
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let g = self.grid;
        match g.topology {
            Topology::Periodic => {
                let fx = (x / g.hx()).rem_euclid(g.nx as f64);
                let fy = (y / g.hy()).rem_euclid(g.ny as f64);
                let i0 = fx.floor() as usize % g.nx;
                let j0 = fy.floor() as usize % g.ny;
                let tx = fx - fx.floor();
                let ty = fy - fy.floor();
                let i1 = (i0 + 1) % g.nx;
                let j1 = (j0 + 1) % g.ny;
                let v00 = self.samples[g.idx(i0, j0)];
                let v10 = self.samples[g.idx(i1, j0)];
                let v01 = self.samples[g.idx(i0, j1)];
                let v11 = self.samples[g.idx(i1, j1)];
                (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 + tx * ty * v11
            }
            Topology::Dirichlet => {
                // Node i sits at -L + (i+1) h; index space includes ghost ring 0.
                let fx = (x + 0.5 * g.lx()) / g.hx() - 1.0;
                let fy = (y + 0.5 * g.ly()) / g.hy() - 1.0;
                let sample = |i: i64, j: i64| -> f64 {
                    if i < 0 || j < 0 || i >= g.nx as i64 || j >= g.ny as i64 {
                        0.0
                    } else {
                        self.samples[g.idx(i as usize, j as usize)]
                    }
                };
                let i0 = fx.floor() as i64;
                let j0 = fy.floor() as i64;
                let tx = fx - fx.floor();
                let ty = fy - fy.floor();
                (1.0 - tx) * (1.0 - ty) * sample(i0, j0)
                    + tx * (1.0 - ty) * sample(i0 + 1, j0)
                    + (1.0 - tx) * ty * sample(i0, j0 + 1)
                    + tx * ty * sample(i0 + 1, j0 + 1)
            }
        }
    }
}

/// Quadrature: uniform node weights hx*hy. On the box this is the trapezoid
/// rule with the zero boundary ring implicit. Summation order is fixed (rows,
/// then a sequential sum of row totals), so the result is reproducible across
/// thread counts and feature sets.
pub fn integrate(f: &Field) -> f64 {
    let g = f.grid();
    let nx = g.nx;
    let s = f.samples();
    let total = sum_rows(g.ny, |j| s[j * nx..(j + 1) * nx].iter().sum());
    total * g.hx() * g.hy()
}

/// L2 inner product with the same fixed reduction order as [`integrate`].
pub fn dot(f: &Field, g_field: &Field) -> f64 {
    let g = f.grid();
    assert_eq!(g, g_field.grid());
    let nx = g.nx;
    let a = f.samples();
    let b = g_field.samples();
    let total = sum_rows(g.ny, |j| {
        let base = j * nx;
        let mut acc = 0.0;
        for i in 0..nx {
            acc += a[base + i] * b[base + i];
        }
        acc
    });
    total * g.hx() * g.hy()
}

fn to_complex(f: &Field) -> Vec<Complex64> {
    f.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn wavenumber(index: usize, n: usize, extent: f64) -> f64 {
    let k = if index <= n / 2 { index as f64 } else { index as f64 - n as f64 };
    2.0 * PI * k / extent
}

/// Multiplies the spectrum by `s(|k|^2)` and transforms back.
fn apply_symbol(f: &Field, s: impl Fn(f64) -> f64 + Sync) -> Field {
    let g = f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let mut data = to_complex(f);
    fft::fft2(&mut data, nx, ny, FftDirection::Forward);
    for_each_chunk_mut(&mut data, nx, |j, row| {
        let ky = wavenumber(j, ny, g.ly());
        for (i, z) in row.iter_mut().enumerate() {
            let kx = wavenumber(i, nx, g.lx());
            *z *= s(kx * kx + ky * ky);
        }
    });
    fft::fft2(&mut data, nx, ny, FftDirection::Inverse);
    let mut out = Field::zeros(g);
    for_each_chunk_mut(out.samples_mut(), nx, |j, row| {
        let base = j * nx;
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = data[base + i].re;
        }
    });
    out
}

fn laplacian_stencil(f: &Field) -> Field {
    let g = f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let s = f.samples();
    let mut out = Field::zeros(g);
    for_each_chunk_mut(out.samples_mut(), nx, |j, row| {
        let base = j * nx;
        for (i, slot) in row.iter_mut().enumerate() {
            let c = s[base + i];
            let w = if i > 0 { s[base + i - 1] } else { 0.0 };
            let e = if i + 1 < nx { s[base + i + 1] } else { 0.0 };
            let south = if j > 0 { s[base - nx + i] } else { 0.0 };
            let north = if j + 1 < ny { s[base + nx + i] } else { 0.0 };
            *slot = (w + e - 2.0 * c) * ihx2 + (north + south - 2.0 * c) * ihy2;
        }
    });
    out
}

/// Discrete Laplacian: spectral on the periodic cell (result has exactly zero
/// mean), 5-point with zero ghosts on the box.
pub fn apply_laplacian(f: &Field) -> Field {
    match f.grid().topology {
        Topology::Periodic => apply_symbol(f, |k2| -k2),
        Topology::Dirichlet => laplacian_stencil(f),
    }
}

/// Solves (kappa * (-Laplacian) + c) z = rhs exactly in transform space.
/// Requires c > 0 on the periodic cell (zero mode); c >= 0 on the box.
pub(crate) fn helmholtz_solve(rhs: &Field, kappa: f64, c: f64) -> Field {
    let g = rhs.grid();
    match g.topology {
        Topology::Periodic => apply_symbol(rhs, |k2| 1.0 / (kappa * k2 + c)),
        Topology::Dirichlet => {
            let (nx, ny) = (g.nx, g.ny);
            let (hx, hy) = (g.hx(), g.hy());
            let mut data = rhs.samples().to_vec();
            fft::dst2(&mut data, nx, ny);
            let norm = 4.0 / (((nx + 1) * (ny + 1)) as f64);
            for_each_chunk_mut(&mut data, nx, |j, row| {
                let sy = (PI * (j + 1) as f64 / (2.0 * (ny + 1) as f64)).sin();
                let ey = 4.0 / (hy * hy) * sy * sy;
                for (i, slot) in row.iter_mut().enumerate() {
                    let sx = (PI * (i + 1) as f64 / (2.0 * (nx + 1) as f64)).sin();
                    let ex = 4.0 / (hx * hx) * sx * sx;
                    *slot *= norm / (kappa * (ex + ey) + c);
                }
            });
            fft::dst2(&mut data, nx, ny);
            Field::from_samples(g, data)
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Returns (solution, iterations). `apply_m` must be an SPD
/// preconditioner application (approximate inverse).
pub(crate) fn pcg(
    apply_a: impl Fn(&Field) -> Field,
    apply_m: impl Fn(&Field) -> Field,
    b: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Field, usize), GridError> {
    let mut x = Field::zeros(b.grid());
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.clone();
    let mut z = apply_m(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for iter in 0..max_iter {
        let ap = apply_a(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(GridError::CgStalled(dot(&r, &r).sqrt() / b_norm, iter));
        }
        let alpha = rz / pap;
        x.add_scaled(alpha, &p);
        r.add_scaled(-alpha, &ap);
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            return Ok((x, iter + 1));
        }
        z = apply_m(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        let mut p_next = z.clone();
        p_next.add_scaled(beta, &p);
        p = p_next;
    }
    Err(GridError::CgStalled(dot(&r, &r).sqrt() / b_norm, max_iter))
}

/// Poisson solve for `Laplacian u = rhs`.
///
/// Periodic: spectral inversion; the right-hand side must have zero mean
/// (checked), and the returned field has zero mean. Box: conjugate gradients
/// with a sine-transform preconditioner, homogeneous Dirichlet data.
pub fn solve_poisson(rhs: &Field) -> Result<Field, GridError> {
    match rhs.grid().topology {
        Topology::Periodic => {
            let total = integrate(rhs);
            let mut abs = rhs.clone();
            for_each_chunk_mut(abs.samples_mut(), rhs.grid().nx, |_, row| {
                for slot in row {
                    *slot = slot.abs();
                }
            });
            let scale = integrate(&abs).max(f64::MIN_POSITIVE);
            let rel = (total / scale).abs();
            if rel > POISSON_MEAN_TOL {
                return Err(GridError::NonzeroMean(rel));
            }
            Ok(apply_symbol(rhs, |k2| if k2 == 0.0 { 0.0 } else { -1.0 / k2 }))
        }
        Topology::Dirichlet => {
            let mut neg = rhs.clone();
            neg.scale(-1.0);
            let (u, _iters) = pcg(
                |p| {
                    let mut ap = apply_laplacian(p);
                    ap.scale(-1.0);
                    ap
                },
                |r| helmholtz_solve(r, 1.0, 0.0),
                &neg,
                POISSON_CG_TOL,
                200,
            )?;
            Ok(u)
        }
    }
}
