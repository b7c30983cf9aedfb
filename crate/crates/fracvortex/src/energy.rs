//! The convex energy functionals whose minimizers solve the master equations,
//! with gradients and Hessian products for the Newton iteration.
//!
//! All four problem classes share one shape: quadratic kinetic parts, a sum
//! of exponential terms coeff * base * e^{w1 v1 + w2 v2}, and linear terms.
//! On periodic cells the exponentials enter bare and the linear coefficient
//! is the constant that balances the vortex flux. On the plane each
//! exponential bracket is renormalized to base*e^s - base - s (the collapsed
//! form of the split used to make every piece integrable over the whole
//! plane) and the linear term carries the background source. Either way the
//! integrand is convex in (v1, v2) because every exponential weight vector
//! enters through a rank-one square.

use crate::background::{BackgroundScalar, BackgroundSystem};
use crate::grid::{apply_laplacian, dot, Field, Grid};
use crate::model::{ScalarModel, SystemModel};
use crate::par;

/// Exponents are capped here before exponentiation. An iterate wandering far
/// uphill produces astronomically large but finite energies instead of inf,
/// and the line search walks back; the cap is far above anything a converged
/// solution attains, and hitting it is reported.
pub const EXPONENT_CAP: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemClass {
    ScalarPeriodic,
    SystemPeriodic,
    ScalarPlanar,
    SystemPlanar,
}

impl std::fmt::Display for ProblemClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemClass::ScalarPeriodic => "scalar_periodic",
            ProblemClass::SystemPeriodic => "system_periodic",
            ProblemClass::ScalarPlanar => "scalar_planar",
            ProblemClass::SystemPlanar => "system_planar",
        })
    }
}

/// One exponential block coeff * base(x) * e^{weights . v}.
#[derive(Debug, Clone)]
pub struct ExpTerm {
    pub coeff: f64,
    pub weights: [f64; 2],
    pub base: Field,
}

/// Exponential term values at a fixed state, shared between the gradient,
/// the Hessian product, and the diagnostics.
#[derive(Debug, Clone)]
pub struct ExpState {
    pub fields: Vec<Field>,
    /// Some exponent exceeded [`EXPONENT_CAP`] and was clamped.
    pub clamped: bool,
}

/// A fully assembled minimization problem over one or two periodic or
/// Dirichlet fields.
#[derive(Debug, Clone)]
pub struct Problem {
    pub class: ProblemClass,
    grid: Grid,
    ncomp: usize,
    /// Weights kappa_j on the quadratic forms (1/2) kappa_j |grad v_j|^2.
    kinetic: [f64; 2],
    /// Planar split form: brackets base*e^s - base - s and gradient factors
    /// (E - 1) instead of bare E.
    split: bool,
    terms: Vec<ExpTerm>,
    linear: Vec<Field>,
}

fn exp_field(grid: Grid, exponent: impl Iterator<Item = f64>) -> Field {
    Field::from_samples(grid, exponent.map(f64::exp).collect())
}

fn constant_field(grid: Grid, value: f64) -> Field {
    Field::constant(grid, value)
}

/// Periodic scalar functional: (1/2)|grad v|^2 plus lambda times the two
/// exponential densities, minus (lambda xi - 4 pi N / |cell|) v.
pub fn scalar_periodic(model: &ScalarModel, bg: &BackgroundScalar, n_total: u32) -> Problem {
    let grid = bg.u0.grid();
    let mut terms = Vec::new();
    for (coeff, w) in [(model.a2, model.m), (model.b2, model.n)] {
        if coeff > 0.0 {
            terms.push(ExpTerm {
                coeff: model.lambda * coeff,
                weights: [w, 0.0],
                base: exp_field(grid, bg.u0.samples().iter().map(|&u| w * u)),
            });
        }
    }
    let flux = model.lambda * model.xi
        - 4.0 * std::f64::consts::PI * f64::from(n_total) / grid.area();
    Problem {
        class: ProblemClass::ScalarPeriodic,
        grid,
        ncomp: 1,
        kinetic: [1.0, 1.0],
        split: false,
        terms,
        linear: vec![constant_field(grid, -flux)],
    }
}

/// Planar scalar functional in the split form; the linear term carries the
/// background source g.
pub fn scalar_planar(model: &ScalarModel, bg: &BackgroundScalar) -> Problem {
    let grid = bg.u0.grid();
    let mut terms = Vec::new();
    for (coeff, w) in [(model.a2, model.m), (model.b2, model.n)] {
        if coeff > 0.0 {
            terms.push(ExpTerm {
                coeff: model.lambda * coeff,
                weights: [w, 0.0],
                base: exp_field(grid, bg.u0.samples().iter().map(|&u| w * u)),
            });
        }
    }
    Problem {
        class: ProblemClass::ScalarPlanar,
        grid,
        ncomp: 1,
        kinetic: [1.0, 1.0],
        split: true,
        terms,
        linear: vec![bg.g.clone()],
    }
}

fn system_terms(
    model: &SystemModel,
    base_a: impl FnOnce() -> Field,
    base_b: impl FnOnce() -> Field,
    base_c: impl FnOnce() -> Field,
) -> Vec<ExpTerm> {
    let m = f64::from(model.m);
    let mut terms = Vec::new();
    if model.a2 > 0.0 {
        terms.push(ExpTerm {
            coeff: model.a2,
            weights: [m, 0.0],
            base: base_a(),
        });
    }
    if model.b2 > 0.0 {
        terms.push(ExpTerm {
            coeff: model.b2,
            weights: [1.0, 1.0],
            base: base_b(),
        });
    }
    if model.c2 > 0.0 {
        terms.push(ExpTerm {
            coeff: model.c2,
            weights: [1.0, -1.0],
            base: base_c(),
        });
    }
    terms
}

/// Periodic two-field functional: kinetic weights 1/lambda_j, bare
/// exponential blocks, and linear coefficients -(xi_j - 4 pi N_j/(|cell|
/// lambda_j)).
pub fn system_periodic(
    model: &SystemModel,
    bg1: &BackgroundScalar,
    bg2: &BackgroundScalar,
    n1: u32,
    n2: u32,
) -> Problem {
    let grid = bg1.u0.grid();
    let m = f64::from(model.m);
    let u1 = bg1.u0.samples();
    let u2 = bg2.u0.samples();
    let terms = system_terms(
        model,
        || exp_field(grid, u1.iter().map(|&u| m * u)),
        || exp_field(grid, u1.iter().zip(u2).map(|(&a, &b)| a + b)),
        || exp_field(grid, u1.iter().zip(u2).map(|(&a, &b)| a - b)),
    );
    let four_pi = 4.0 * std::f64::consts::PI;
    let flux1 = model.xi1 - four_pi * f64::from(n1) / (grid.area() * model.lambda1);
    let flux2 = model.xi2 - four_pi * f64::from(n2) / (grid.area() * model.lambda2);
    Problem {
        class: ProblemClass::SystemPeriodic,
        grid,
        ncomp: 2,
        kinetic: [1.0 / model.lambda1, 1.0 / model.lambda2],
        split: false,
        terms,
        linear: vec![
            constant_field(grid, -flux1),
            constant_field(grid, -flux2),
        ],
    }
}

/// Planar two-field functional in the split form, on the composite
/// coefficient fields; the linear terms carry g_j / lambda_j.
pub fn system_planar(model: &SystemModel, bg: &BackgroundSystem) -> Problem {
    let grid = bg.h1m.grid();
    let terms = system_terms(
        model,
        || bg.h1m.clone(),
        || bg.h_prod.clone(),
        || bg.h_ratio.clone(),
    );
    let mut lin1 = bg.first.g.clone();
    lin1.scale(1.0 / model.lambda1);
    let mut lin2 = bg.second.g.clone();
    lin2.scale(1.0 / model.lambda2);
    Problem {
        class: ProblemClass::SystemPlanar,
        grid,
        ncomp: 2,
        kinetic: [1.0 / model.lambda1, 1.0 / model.lambda2],
        split: true,
        terms,
        linear: vec![lin1, lin2],
    }
}

impl Problem {
    /// Direct assembly for solver tests that need a bare quadratic or an
    /// otherwise hand-built objective.
    #[cfg(test)]
    pub(crate) fn assemble(
        class: ProblemClass,
        grid: Grid,
        kinetic: [f64; 2],
        split: bool,
        terms: Vec<ExpTerm>,
        linear: Vec<Field>,
    ) -> Problem {
        let ncomp = linear.len();
        Problem {
            class,
            grid,
            ncomp,
            kinetic,
            split,
            terms,
            linear,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    pub fn linear(&self) -> &[Field] {
        &self.linear
    }

    pub fn kinetic(&self) -> [f64; 2] {
        self.kinetic
    }

    pub fn split(&self) -> bool {
        self.split
    }

    pub fn zero_state(&self) -> Vec<Field> {
        (0..self.ncomp).map(|_| Field::zeros(self.grid)).collect()
    }

    /// Exponent w . v at a node, components beyond ncomp absent.
    fn exponent_at(&self, v: &[Field], weights: [f64; 2], idx: usize) -> f64 {
        let mut s = weights[0] * v[0].samples()[idx];
        if self.ncomp > 1 {
            s += weights[1] * v[1].samples()[idx];
        }
        s
    }

    /// Evaluates every exponential block at the state, capping exponents.
    pub fn exponentials(&self, v: &[Field]) -> ExpState {
        debug_assert_eq!(v.len(), self.ncomp);
        let mut clamped = false;
        let fields = self
            .terms
            .iter()
            .map(|term| {
                let mut samples = vec![0.0f64; self.grid.len()];
                let nx = self.grid.nx;
                par::for_each_chunk_mut(&mut samples, nx, |row, chunk| {
                    let offset = row * nx;
                    for (i, out) in chunk.iter_mut().enumerate() {
                        let idx = offset + i;
                        let s = self.exponent_at(v, term.weights, idx);
                        *out = term.base.samples()[idx] * s.min(EXPONENT_CAP).exp();
                    }
                });
                let max_exponent = (0..self.grid.len())
                    .map(|idx| self.exponent_at(v, term.weights, idx))
                    .fold(f64::NEG_INFINITY, f64::max);
                clamped |= max_exponent > EXPONENT_CAP;
                Field::from_samples(self.grid, samples)
            })
            .collect();
        ExpState { fields, clamped }
    }

    /// Total energy at the state.
    pub fn energy(&self, v: &[Field]) -> f64 {
        debug_assert_eq!(v.len(), self.ncomp);
        let mut total = 0.0;
        for j in 0..self.ncomp {
            let lap = apply_laplacian(&v[j]);
            total += -0.5 * self.kinetic[j] * dot(&v[j], &lap);
        }
        let cell = self.grid.hx() * self.grid.hy();
        let nx = self.grid.nx;
        let density = par::sum_rows(self.grid.ny, |row| {
            let offset = row * nx;
            let mut acc = 0.0;
            for i in 0..nx {
                let idx = offset + i;
                for term in &self.terms {
                    let s = self.exponent_at(v, term.weights, idx);
                    let e = term.base.samples()[idx] * s.min(EXPONENT_CAP).exp();
                    acc += term.coeff
                        * if self.split {
                            e - term.base.samples()[idx] - s
                        } else {
                            e
                        };
                }
                for j in 0..self.ncomp {
                    acc += self.linear[j].samples()[idx] * v[j].samples()[idx];
                }
            }
            acc
        });
        total + cell * density
    }

    /// Gradient density: kappa_j (-laplace v_j) + sum_t coeff w_j (E_t - off)
    /// + linear_j, where off is 1 in the split form and 0 otherwise.
    pub fn gradient(&self, exps: &ExpState, v: &[Field]) -> Vec<Field> {
        let offset = if self.split { 1.0 } else { 0.0 };
        let nx = self.grid.nx;
        (0..self.ncomp)
            .map(|j| {
                let mut g = apply_laplacian(&v[j]);
                g.scale(-self.kinetic[j]);
                par::for_each_chunk_mut(g.samples_mut(), nx, |row, chunk| {
                    let base_idx = row * nx;
                    for (i, out) in chunk.iter_mut().enumerate() {
                        let idx = base_idx + i;
                        let mut acc = self.linear[j].samples()[idx];
                        for (term, e) in self.terms.iter().zip(&exps.fields) {
                            if term.weights[j] != 0.0 {
                                acc += term.coeff
                                    * term.weights[j]
                                    * (e.samples()[idx] - offset);
                            }
                        }
                        *out += acc;
                    }
                });
                g
            })
            .collect()
    }

    /// Hessian-vector product at the state represented by `exps`:
    /// H w |_j = kappa_j (-laplace w_j) + sum_t coeff w_{t,j} (w_t . w) E_t.
    pub fn hessian_apply(&self, exps: &ExpState, w: &[Field]) -> Vec<Field> {
        let nx = self.grid.nx;
        (0..self.ncomp)
            .map(|j| {
                let mut out = apply_laplacian(&w[j]);
                out.scale(-self.kinetic[j]);
                par::for_each_chunk_mut(out.samples_mut(), nx, |row, chunk| {
                    let base_idx = row * nx;
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        let idx = base_idx + i;
                        let mut acc = 0.0;
                        for (term, e) in self.terms.iter().zip(&exps.fields) {
                            if term.weights[j] != 0.0 {
                                let directional = self.exponent_at(w, term.weights, idx);
                                acc += term.coeff
                                    * term.weights[j]
                                    * directional
                                    * e.samples()[idx];
                            }
                        }
                        *slot += acc;
                    }
                });
                out
            })
            .collect()
    }

    /// Mean diagonal of the exponential part of the Hessian per component;
    /// feeds the constant-shift Helmholtz preconditioner.
    pub fn hessian_diag_mean(&self, exps: &ExpState) -> [f64; 2] {
        let mut means = [0.0f64; 2];
        let nx = self.grid.nx;
        for j in 0..self.ncomp {
            let total = par::sum_rows(self.grid.ny, |row| {
                let offset = row * nx;
                let mut acc = 0.0;
                for i in 0..nx {
                    let idx = offset + i;
                    for (term, e) in self.terms.iter().zip(&exps.fields) {
                        acc += term.coeff
                            * term.weights[j]
                            * term.weights[j]
                            * e.samples()[idx];
                    }
                }
                acc
            });
            means[j] = total / self.grid.len() as f64;
        }
        means
    }
}
