//! Damped Newton minimization of the convex functionals and the four solve
//! pipelines, including the degenerate-regime reductions and recoveries.

use crate::background::{
    composite_from, lifted_background, periodic_background, planar_background, BackgroundError,
    BackgroundScalar,
};
use crate::energy::{self, ExpState, Problem, ProblemClass};
use crate::grid::{dot, helmholtz_solve, Field, Grid, GridError, Topology};
use crate::model::{
    balance_holds, classify_regime, feasibility_scalar_periodic, feasibility_system_periodic,
    FeasibilityVerdict, ModelError, Regime, ScalarModel, SystemModel, VortexSet,
};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Starting state for the Newton iteration. Zero is the default; by strict
/// convexity the choice only affects iteration counts, which is what the
/// uniqueness probe exploits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Zero,
    Gaussian { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute max-norm threshold on the gradient density.
    pub grad_tol: f64,
    pub max_newton: u32,
    /// Relative tolerance of the inner conjugate-gradient solve.
    pub cg_tol: f64,
    pub cg_max: u32,
    pub armijo_c: f64,
    pub max_backtracks: u32,
    pub initial: InitialGuess,
    /// Mollifier width for periodic backgrounds; None picks 2 max(hx, hy).
    pub sigma: Option<f64>,
    /// Length scale of the planar background profiles.
    pub mu: f64,
    /// Renormalize the discrete mass of planar background sources.
    pub source_renormalize: bool,
    /// Relative tolerance for equality constraints and vacuum identities.
    pub equality_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grad_tol: 1e-10,
            max_newton: 50,
            cg_tol: 1e-4,
            cg_max: 400,
            armijo_c: 1e-4,
            max_backtracks: 40,
            initial: InitialGuess::Zero,
            sigma: None,
            mu: 1.0,
            source_renormalize: true,
            equality_tol: 1e-9,
        }
    }
}

/// What the Newton iteration did. Deliberately free of wall-clock data so
/// reports are byte-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub newton_iters: u32,
    pub cg_total: u32,
    /// Energy at the start and after each accepted step; strictly decreasing.
    pub energy_trace: Vec<f64>,
    pub final_grad_norm: f64,
    /// Some exponent hit the overflow cap during the iteration.
    pub clamped: bool,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("{}", render_infeasible(.0))]
    Infeasible(Box<FeasibilityVerdict>),
    #[error(
        "no convergence after {iters} Newton steps ({reason}); gradient max-norm {grad_norm:.3e}"
    )]
    NonConvergence {
        iters: u32,
        grad_norm: f64,
        reason: &'static str,
    },
    #[error("this solve needs a {expected} grid")]
    WrongTopology { expected: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn render_infeasible(verdict: &FeasibilityVerdict) -> String {
    let mut out = String::from("configuration infeasible:");
    for cond in verdict.conditions.iter().filter(|c| !c.satisfied) {
        out.push_str(&format!(
            " {} fails ({} = {:.6} vs {:.6});",
            cond.formula, cond.id, cond.lhs, cond.rhs
        ));
    }
    out.pop();
    out
}

/// A computed solution: total fields u_j = u0_j + v_j relative to the pinned
/// analytic backgrounds, plus the raw convergence record.
///
/// In degenerate system regimes that determine fewer fields than two, the
/// component vectors shrink accordingly and `notes` explains the policy.
#[derive(Debug, Clone)]
pub struct Solution {
    pub class: ProblemClass,
    pub regime: Option<Regime>,
    pub grid: Grid,
    /// Planar background scale, None on periodic cells.
    pub mu: Option<f64>,
    /// Periodic mollifier width, None on the plane.
    pub sigma: Option<f64>,
    pub u: Vec<Field>,
    pub v: Vec<Field>,
    pub u0: Vec<Field>,
    /// Grid indices where a background logarithm was clamped; sign checks
    /// skip them.
    pub clamped_nodes: Vec<usize>,
    /// Periodic solves carry the verdict they were gated on; planar solves
    /// have no area budget and carry None.
    pub feasibility: Option<FeasibilityVerdict>,
    pub report: SolveReport,
    pub notes: Vec<String>,
}

fn max_norm(fields: &[Field]) -> f64 {
    fields.iter().map(Field::max_abs).fold(0.0, f64::max)
}

fn pair_dot(a: &[Field], b: &[Field]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum()
}

/// Inner preconditioned conjugate-gradient solve of H x = rhs at the state
/// described by `exps`. The preconditioner inverts kappa_j (-laplace) + cbar_j
/// per component by exact transform. Returns the iterate at the tolerance or
/// at the iteration cap; either way it is a descent direction for -rhs.
fn newton_direction(
    problem: &Problem,
    exps: &ExpState,
    rhs: &[Field],
    cbar: [f64; 2],
    opts: &SolverOptions,
) -> (Vec<Field>, u32) {
    let kinetic = problem.kinetic();
    let precondition = |r: &[Field]| -> Vec<Field> {
        r.iter()
            .enumerate()
            .map(|(j, rj)| helmholtz_solve(rj, kinetic[j], cbar[j]))
            .collect()
    };
    let mut x: Vec<Field> = rhs.iter().map(|f| Field::zeros(f.grid())).collect();
    let mut r = rhs.to_vec();
    let mut z = precondition(&r);
    let mut rz = pair_dot(&r, &z);
    let rz0 = rz;
    if rz0 <= 0.0 {
        return (x, 0);
    }
    let mut p = z.clone();
    let mut iters = 0;
    while iters < opts.cg_max {
        let ap = problem.hessian_apply(exps, &p);
        let pap = pair_dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for j in 0..x.len() {
            x[j].add_scaled(alpha, &p[j]);
            r[j].add_scaled(-alpha, &ap[j]);
        }
        iters += 1;
        z = precondition(&r);
        let rz_next = pair_dot(&r, &z);
        if rz_next <= opts.cg_tol * opts.cg_tol * rz0 {
            break;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for j in 0..p.len() {
            p[j].scale(beta);
            p[j].add_scaled(1.0, &z[j]);
        }
    }
    (x, iters)
}

/// Damped Newton iteration on a convex problem. Every accepted step
/// decreases the energy; termination is at `grad_tol` on the max-norm of the
/// gradient density or by explicit non-convergence, never silently.
pub fn minimize(
    problem: &Problem,
    start: Vec<Field>,
    opts: &SolverOptions,
) -> Result<(Vec<Field>, SolveReport), SolveError> {
    let mut v = start;
    let mut clamped = false;
    let mut cg_total = 0;
    let mut energy_trace = vec![problem.energy(&v)];
    let mut iter = 0;
    loop {
        let exps = problem.exponentials(&v);
        clamped |= exps.clamped;
        let grad = problem.gradient(&exps, &v);
        let grad_norm = max_norm(&grad);
        if grad_norm <= opts.grad_tol {
            return Ok((
                v,
                SolveReport {
                    newton_iters: iter,
                    cg_total,
                    energy_trace,
                    final_grad_norm: grad_norm,
                    clamped,
                },
            ));
        }
        if iter == opts.max_newton {
            return Err(SolveError::NonConvergence {
                iters: iter,
                grad_norm,
                reason: "Newton budget exhausted",
            });
        }
        let cbar = problem.hessian_diag_mean(&exps);
        let (mut direction, cg_iters) = newton_direction(problem, &exps, &grad, cbar, opts);
        cg_total += cg_iters;
        for d in &mut direction {
            d.scale(-1.0);
        }
        let slope = pair_dot(&grad, &direction);
        if slope >= 0.0 {
            return Err(SolveError::NonConvergence {
                iters: iter,
                grad_norm,
                reason: "no descent direction",
            });
        }
        let current = *energy_trace.last().unwrap();
        // Near the optimum the true decrease of a Newton step sinks below
        // the rounding granularity of the energy; the slack keeps the line
        // search from rejecting those last steps and stalling above the
        // gradient tolerance.
        let slack = 8.0 * f64::EPSILON * current.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial = v.clone();
            for j in 0..trial.len() {
                trial[j].add_scaled(step, &direction[j]);
            }
            let trial_energy = problem.energy(&trial);
            if trial_energy <= current + opts.armijo_c * step * slope + slack {
                accepted = Some((trial, trial_energy));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_energy)) = accepted else {
            return Err(SolveError::NonConvergence {
                iters: iter,
                grad_norm,
                reason: "line search failed",
            });
        };
        v = next;
        energy_trace.push(next_energy);
        iter += 1;
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; the +1 keeps the logarithm's argument in (0, 1].
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn initial_state(problem: &Problem, initial: InitialGuess) -> Vec<Field> {
    match initial {
        InitialGuess::Zero => problem.zero_state(),
        InitialGuess::Gaussian { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = problem.grid();
            (0..problem.ncomp())
                .map(|_| {
                    let samples = (0..grid.len())
                        .map(|_| amplitude * standard_normal(&mut rng))
                        .collect();
                    Field::from_samples(grid, samples)
                })
                .collect()
        }
    }
}

fn require_topology(grid: Grid, want: Topology, name: &'static str) -> Result<(), SolveError> {
    if grid.topology == want {
        Ok(())
    } else {
        Err(SolveError::WrongTopology { expected: name })
    }
}

fn default_sigma(grid: Grid, opts: &SolverOptions) -> f64 {
    opts.sigma.unwrap_or(2.0 * grid.hx().max(grid.hy()))
}

fn merge_clamped(lists: &[&[usize]]) -> Vec<usize> {
    let mut all: Vec<usize> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

fn sum_fields(a: &Field, b: &Field) -> Field {
    let mut out = a.clone();
    out.add_scaled(1.0, b);
    out
}

fn diff_fields(a: &Field, b: &Field) -> Field {
    let mut out = a.clone();
    out.add_scaled(-1.0, b);
    out
}

struct ScalarRun {
    bg: BackgroundScalar,
    v: Field,
    report: SolveReport,
}

fn run_scalar_periodic(
    model: &ScalarModel,
    vortices: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<ScalarRun, SolveError> {
    model.validate()?;
    let bg = periodic_background(grid, vortices, default_sigma(grid, opts))?;
    let problem = energy::scalar_periodic(model, &bg, vortices.total());
    let start = initial_state(&problem, opts.initial);
    let (mut fields, report) = minimize(&problem, start, opts)?;
    Ok(ScalarRun {
        bg,
        v: fields.pop().unwrap(),
        report,
    })
}

fn run_scalar_planar(
    model: &ScalarModel,
    vortices: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<ScalarRun, SolveError> {
    model.validate()?;
    model.check_vacuum(opts.equality_tol)?;
    let bg = lifted_background(vortices, opts.mu, grid, opts.source_renormalize)?;
    let problem = energy::scalar_planar(model, &bg);
    let start = initial_state(&problem, opts.initial);
    let (mut fields, report) = minimize(&problem, start, opts)?;
    Ok(ScalarRun {
        bg,
        v: fields.pop().unwrap(),
        report,
    })
}

/// Periodic scalar pipeline: feasibility gate, mollified background, convex
/// minimization, then u = u0 + v.
pub fn solve_scalar_periodic(
    model: &ScalarModel,
    vortices: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    model.validate()?;
    require_topology(grid, Topology::Periodic, "periodic")?;
    let verdict = feasibility_scalar_periodic(model, vortices.total(), grid.area());
    if !verdict.feasible {
        return Err(SolveError::Infeasible(Box::new(verdict)));
    }
    let run = run_scalar_periodic(model, vortices, grid, opts)?;
    let u = sum_fields(&run.bg.u0, &run.v);
    Ok(Solution {
        class: ProblemClass::ScalarPeriodic,
        regime: None,
        grid,
        mu: None,
        sigma: Some(default_sigma(grid, opts)),
        u: vec![u],
        v: vec![run.v],
        u0: vec![run.bg.u0],
        clamped_nodes: run.bg.clamped,
        feasibility: Some(verdict),
        report: run.report,
        notes: Vec::new(),
    })
}

/// Planar scalar pipeline. The minimization runs against the compactly
/// lifted background, whose unknown decays exponentially; the reported v is
/// then re-based onto the full analytic background u0.
pub fn solve_scalar_planar(
    model: &ScalarModel,
    vortices: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    require_topology(grid, Topology::Dirichlet, "planar")?;
    let run = run_scalar_planar(model, vortices, grid, opts)?;
    let pin = planar_background(vortices, opts.mu, grid)?;
    let u = sum_fields(&run.bg.u0, &run.v);
    let v = diff_fields(&u, &pin.u0);
    let clamped = merge_clamped(&[&run.bg.clamped, &pin.clamped]);
    Ok(Solution {
        class: ProblemClass::ScalarPlanar,
        regime: None,
        grid,
        mu: Some(opts.mu),
        sigma: None,
        u: vec![u],
        v: vec![v],
        u0: vec![pin.u0],
        clamped_nodes: clamped,
        feasibility: None,
        report: run.report,
        notes: Vec::new(),
    })
}

fn active_couplings(regime: Regime) -> (bool, bool, bool) {
    match regime {
        Regime::Full => (true, true, true),
        Regime::AB => (true, true, false),
        Regime::AC => (true, false, true),
        Regime::AOnly => (true, false, false),
        Regime::BOnly => (false, true, false),
        Regime::COnly => (false, false, true),
        Regime::None => (false, false, false),
    }
}

/// Copy of the model with couplings below the classification threshold
/// zeroed, so the assembled functional matches the dispatched regime.
pub(crate) fn effective_model(
    model: &SystemModel,
    regime: Regime,
    notes: &mut Vec<String>,
) -> SystemModel {
    let (a, b, c) = active_couplings(regime);
    let mut eff = *model;
    for (keep, value, name) in [(a, &mut eff.a2, "a2"), (b, &mut eff.b2, "b2"), (c, &mut eff.c2, "c2")]
    {
        if !keep && *value != 0.0 {
            notes.push(format!(
                "{name} = {value:e} is below the relative zero threshold; treated as absent"
            ));
            *value = 0.0;
        }
    }
    eff
}

fn c_active(regime: Regime) -> bool {
    matches!(regime, Regime::Full | Regime::AC | Regime::COnly)
}

/// Periodic two-field pipeline with regime dispatch: FULL/AB/AC minimize the
/// coupled functional; A_ONLY solves the decoupled first equation and the
/// residual linear equation for the second field; B_ONLY/C_ONLY reduce to a
/// single equation for the sum or difference and recover the components.
pub fn solve_system_periodic(
    model: &SystemModel,
    vortices1: &VortexSet,
    vortices2: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    model.validate()?;
    require_topology(grid, Topology::Periodic, "periodic")?;
    let regime = classify_regime(model);
    let mut notes = Vec::new();
    let eff = effective_model(model, regime, &mut notes);
    if c_active(regime) {
        vortices2.difference_check(vortices1)?;
    }
    let verdict = feasibility_system_periodic(
        &eff,
        vortices1.total(),
        vortices2.total(),
        grid.area(),
        regime,
        opts.equality_tol,
    )?;
    if !verdict.feasible {
        return Err(SolveError::Infeasible(Box::new(verdict)));
    }
    let sigma = default_sigma(grid, opts);
    let lam = (eff.lambda1, eff.lambda2);
    let total = lam.0 + lam.1;
    let base = Solution {
        class: ProblemClass::SystemPeriodic,
        regime: Some(regime),
        grid,
        mu: None,
        sigma: Some(sigma),
        u: Vec::new(),
        v: Vec::new(),
        u0: Vec::new(),
        clamped_nodes: Vec::new(),
        feasibility: Some(verdict),
        report: SolveReport {
            newton_iters: 0,
            cg_total: 0,
            energy_trace: Vec::new(),
            final_grad_norm: 0.0,
            clamped: false,
        },
        notes,
    };
    match regime {
        Regime::None => Err(ModelError::AllCouplingsVanish.into()),
        Regime::Full | Regime::AB | Regime::AC => {
            let bg1 = periodic_background(grid, vortices1, sigma)?;
            let bg2 = periodic_background(grid, vortices2, sigma)?;
            let problem =
                energy::system_periodic(&eff, &bg1, &bg2, vortices1.total(), vortices2.total());
            let start = initial_state(&problem, opts.initial);
            let (v, report) = minimize(&problem, start, opts)?;
            let u = vec![sum_fields(&bg1.u0, &v[0]), sum_fields(&bg2.u0, &v[1])];
            Ok(Solution {
                u,
                v,
                u0: vec![bg1.u0, bg2.u0],
                report,
                ..base
            })
        }
        Regime::AOnly => {
            let reduced = ScalarModel {
                lambda: lam.0,
                xi: eff.xi1,
                m: f64::from(eff.m),
                n: 1.0,
                a2: eff.a2,
                b2: 0.0,
            };
            let run = run_scalar_periodic(&reduced, vortices1, grid, opts)?;
            let u1 = sum_fields(&run.bg.u0, &run.v);
            let mut out = Solution {
                u: vec![u1],
                v: vec![run.v],
                u0: vec![run.bg.u0],
                report: run.report,
                ..base
            };
            // With every coupling to the second field gone its equation is
            // linear: laplace v2 = 4 pi N2/|cell| - lambda2 xi2, solvable on
            // the cell only when the right side vanishes.
            let flux = 4.0 * PI * f64::from(vortices2.total()) / grid.area();
            let target = eff.lambda2 * eff.xi2;
            if balance_holds(flux, target, opts.equality_tol) {
                let bg2 = periodic_background(grid, vortices2, sigma)?;
                out.u.push(bg2.u0.clone());
                out.v.push(Field::zeros(grid));
                out.u0.push(bg2.u0);
                out.notes.push(
                    "second field: residual linear equation fixes v2 only up to a constant; \
                     reported with v2 = 0"
                        .to_string(),
                );
            } else {
                out.notes.push(format!(
                    "second field omitted: its residual linear equation needs 4piN2/|cell| = \
                     lambda2 xi2, got {flux:.6} vs {target:.6}"
                ));
            }
            Ok(out)
        }
        Regime::BOnly | Regime::COnly => {
            let b_case = regime == Regime::BOnly;
            let (coupling, merged, xi) = if b_case {
                (
                    eff.b2,
                    vortices1.union(vortices2),
                    (lam.0 * eff.xi1 + lam.1 * eff.xi2) / total,
                )
            } else {
                (
                    eff.c2,
                    vortices1.difference(vortices2)?,
                    (lam.0 * eff.xi1 - lam.1 * eff.xi2) / total,
                )
            };
            let reduced = ScalarModel {
                lambda: total,
                xi,
                m: 1.0,
                n: 1.0,
                a2: coupling,
                b2: 0.0,
            };
            let run = run_scalar_periodic(&reduced, &merged, grid, opts)?;
            // run.v is the sum (resp. difference) unknown; split it with the
            // free constant normalized to zero.
            let mut v1 = run.v.clone();
            v1.scale(lam.0 / total);
            let mut v2 = run.v;
            v2.scale(if b_case { lam.1 / total } else { -lam.1 / total });
            let bg1 = periodic_background(grid, vortices1, sigma)?;
            let bg2 = periodic_background(grid, vortices2, sigma)?;
            let u = vec![sum_fields(&bg1.u0, &v1), sum_fields(&bg2.u0, &v2)];
            let mut out = Solution {
                u,
                v: vec![v1, v2],
                u0: vec![bg1.u0, bg2.u0],
                report: run.report,
                ..base
            };
            out.notes.push(
                if b_case {
                    "components recovered from the sum equation; the free additive split \
                     lambda2 v1 - lambda1 v2 is normalized to zero"
                } else {
                    "components recovered from the difference equation; the free additive split \
                     lambda2 v1 + lambda1 v2 is normalized to zero"
                }
                .to_string(),
            );
            Ok(out)
        }
    }
}

/// Sum of mult * ln(mu + |x - p|^2) over a vortex set; the smooth closed-form
/// potentials entering the planar degenerate recoveries.
fn log_potential(grid: Grid, vortices: &VortexSet, mu: f64) -> Field {
    let points: Vec<(f64, f64, f64)> = vortices
        .points()
        .iter()
        .map(|p| (p.x, p.y, f64::from(p.mult)))
        .collect();
    Field::from_fn(grid, move |x, y| {
        points
            .iter()
            .map(|&(px, py, w)| {
                let dx = x - px;
                let dy = y - py;
                w * (mu + dx * dx + dy * dy).ln()
            })
            .sum()
    })
}

/// Planar two-field pipeline. Regimes with at least two couplings minimize
/// the coupled functional on compactly lifted backgrounds; A_ONLY pairs the
/// scalar solve with the closed-form second field; B_ONLY/C_ONLY solve the
/// scalar sum/difference equation and recover the components through the
/// explicit log potentials.
pub fn solve_system_planar(
    model: &SystemModel,
    vortices1: &VortexSet,
    vortices2: &VortexSet,
    grid: Grid,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    model.validate()?;
    model.check_vacuum(opts.equality_tol)?;
    require_topology(grid, Topology::Dirichlet, "planar")?;
    let regime = classify_regime(model);
    let mut notes = Vec::new();
    let eff = effective_model(model, regime, &mut notes);
    if c_active(regime) {
        vortices2.difference_check(vortices1)?;
    }
    let lam = (eff.lambda1, eff.lambda2);
    let total = lam.0 + lam.1;
    let mu = opts.mu;
    let base = Solution {
        class: ProblemClass::SystemPlanar,
        regime: Some(regime),
        grid,
        mu: Some(mu),
        sigma: None,
        u: Vec::new(),
        v: Vec::new(),
        u0: Vec::new(),
        clamped_nodes: Vec::new(),
        feasibility: None,
        report: SolveReport {
            newton_iters: 0,
            cg_total: 0,
            energy_trace: Vec::new(),
            final_grad_norm: 0.0,
            clamped: false,
        },
        notes,
    };
    match regime {
        Regime::None => Err(ModelError::AllCouplingsVanish.into()),
        Regime::Full | Regime::AB | Regime::AC => {
            let first = lifted_background(vortices1, mu, grid, opts.source_renormalize)?;
            let second = lifted_background(vortices2, mu, grid, opts.source_renormalize)?;
            let bg = composite_from(&eff, first, second, mu);
            let problem = energy::system_planar(&eff, &bg);
            let start = initial_state(&problem, opts.initial);
            let (vt, report) = minimize(&problem, start, opts)?;
            let pin1 = planar_background(vortices1, mu, grid)?;
            let pin2 = planar_background(vortices2, mu, grid)?;
            let u = vec![
                sum_fields(&bg.first.u0, &vt[0]),
                sum_fields(&bg.second.u0, &vt[1]),
            ];
            let v = vec![diff_fields(&u[0], &pin1.u0), diff_fields(&u[1], &pin2.u0)];
            let clamped = merge_clamped(&[&bg.clamped, &pin1.clamped, &pin2.clamped]);
            Ok(Solution {
                u,
                v,
                u0: vec![pin1.u0, pin2.u0],
                clamped_nodes: clamped,
                report,
                ..base
            })
        }
        Regime::AOnly => {
            let reduced = ScalarModel {
                lambda: lam.0,
                xi: f64::from(eff.m) * eff.a2,
                m: f64::from(eff.m),
                n: 1.0,
                a2: eff.a2,
                b2: 0.0,
            };
            let run = run_scalar_planar(&reduced, vortices1, grid, opts)?;
            let pin1 = planar_background(vortices1, mu, grid)?;
            let pin2 = planar_background(vortices2, mu, grid)?;
            let u1 = sum_fields(&run.bg.u0, &run.v);
            let v1 = diff_fields(&u1, &pin1.u0);
            // Second equation decouples to laplace u2 = 4 pi sum delta; its
            // solution is the plain log potential, growing at infinity.
            let v2 = log_potential(grid, vortices2, mu);
            let u2 = sum_fields(&pin2.u0, &v2);
            let clamped = merge_clamped(&[&run.bg.clamped, &pin1.clamped, &pin2.clamped]);
            let mut out = Solution {
                u: vec![u1, u2],
                v: vec![v1, v2],
                u0: vec![pin1.u0, pin2.u0],
                clamped_nodes: clamped,
                report: run.report,
                ..base
            };
            out.notes.push(
                "second field decouples: u2 = sum mult ln|x-p|^2 in closed form, logarithmically \
                 growing rather than decaying"
                    .to_string(),
            );
            Ok(out)
        }
        Regime::BOnly | Regime::COnly => {
            let b_case = regime == Regime::BOnly;
            let (coupling, merged) = if b_case {
                (eff.b2, vortices1.union(vortices2))
            } else {
                (eff.c2, vortices1.difference(vortices2)?)
            };
            let reduced = ScalarModel {
                lambda: total,
                xi: coupling,
                m: 1.0,
                n: 1.0,
                a2: coupling,
                b2: 0.0,
            };
            let run = run_scalar_planar(&reduced, &merged, grid, opts)?;
            let pin_merged = planar_background(&merged, mu, grid)?;
            let s_total = sum_fields(&run.bg.u0, &run.v);
            // Sum (resp. difference) of the component unknowns relative to
            // the plain backgrounds.
            let s_v = diff_fields(&s_total, &pin_merged.u0);
            let pot1 = log_potential(grid, vortices1, mu);
            let pot2 = log_potential(grid, vortices2, mu);
            // q solves laplace q = lambda2 g1 -+ lambda1 g2 in closed form;
            // the harmonic part is normalized to zero.
            let mut q = pot1;
            q.scale(lam.1);
            q.add_scaled(if b_case { -lam.0 } else { lam.0 }, &pot2);
            let mut v1 = s_v.clone();
            v1.scale(lam.0 / total);
            v1.add_scaled(1.0 / total, &q);
            let mut v2 = s_v;
            v2.scale(if b_case { lam.1 / total } else { -lam.1 / total });
            v2.add_scaled(if b_case { -1.0 / total } else { 1.0 / total }, &q);
            let pin1 = planar_background(vortices1, mu, grid)?;
            let pin2 = planar_background(vortices2, mu, grid)?;
            let u = vec![sum_fields(&pin1.u0, &v1), sum_fields(&pin2.u0, &v2)];
            let clamped = merge_clamped(&[
                &run.bg.clamped,
                &pin_merged.clamped,
                &pin1.clamped,
                &pin2.clamped,
            ]);
            let mut out = Solution {
                u,
                v: vec![v1, v2],
                u0: vec![pin1.u0, pin2.u0],
                clamped_nodes: clamped,
                report: run.report,
                ..base
            };
            out.notes.push(
                if b_case {
                    "components recovered from the sum equation through the closed-form log \
                     potential q; harmonic part normalized to zero"
                } else {
                    "components recovered from the difference equation through the closed-form \
                     log potential q; harmonic part normalized to zero"
                }
                .to_string(),
            );
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ExpTerm;
    use crate::grid::apply_laplacian;
    use crate::model::Vortex;

    fn set(points: &[(f64, f64, u32)]) -> VortexSet {
        VortexSet::new(points.iter().map(|&(x, y, m)| Vortex { x, y, mult: m })).unwrap()
    }

    #[test]
    fn pure_quadratic_needs_one_newton_step() {
        // No exponential terms: E = 1/2 ||grad v||^2 + <f, v> on a Dirichlet
        // box is exactly quadratic, so an accurate inner solve finishes the
        // job in a single step.
        let grid = Grid::planar(4.0, 31, 31).unwrap();
        let f = Field::from_fn(grid, |x, y| (0.7 * x).sin() * (0.4 * y).cos());
        let problem = Problem::assemble(
            ProblemClass::ScalarPlanar,
            grid,
            [1.0, 1.0],
            true,
            Vec::<ExpTerm>::new(),
            vec![f],
        );
        let opts = SolverOptions {
            cg_tol: 1e-13,
            cg_max: 5000,
            ..SolverOptions::default()
        };
        let (v, report) = minimize(&problem, problem.zero_state(), &opts).unwrap();
        assert_eq!(report.newton_iters, 1);
        assert!(report.final_grad_norm <= opts.grad_tol);
        assert!(v[0].max_abs() > 0.0);
    }

    #[test]
    fn vacuum_solve_returns_zero_in_zero_iterations() {
        let grid = Grid::periodic(2.0 * PI, 2.0 * PI, 32, 32).unwrap();
        let model = ScalarModel {
            lambda: 1.0,
            xi: 1.0,
            m: 1.0,
            n: 1.0,
            a2: 0.5,
            b2: 0.5,
        };
        let sol = solve_scalar_periodic(
            &model,
            &VortexSet::empty(),
            grid,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.report.newton_iters, 0);
        assert_eq!(sol.u[0].max_abs(), 0.0);
    }

    #[test]
    fn periodic_scalar_minimizer_ignores_the_starting_point() {
        let grid = Grid::periodic(2.0 * PI, 2.0 * PI, 32, 32).unwrap();
        let model = ScalarModel {
            lambda: 1.0,
            xi: 1.0,
            m: 1.0,
            n: 1.0,
            a2: 0.5,
            b2: 0.5,
        };
        let vortices = set(&[(3.0, 3.0, 1)]);
        let mut fields = Vec::new();
        for seed in [11, 12] {
            let opts = SolverOptions {
                initial: InitialGuess::Gaussian {
                    seed,
                    amplitude: 0.5,
                },
                ..SolverOptions::default()
            };
            let sol = solve_scalar_periodic(&model, &vortices, grid, &opts).unwrap();
            fields.push(sol.v[0].clone());
        }
        assert!(fields[0].linf_distance(&fields[1]) <= 1e-8);
    }

    #[test]
    fn infeasible_vortex_count_is_rejected_with_the_verdict() {
        let grid = Grid::periodic(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let model = ScalarModel {
            lambda: 1.0,
            xi: 1.0,
            m: 1.0,
            n: 1.0,
            a2: 0.5,
            b2: 0.5,
        };
        let vortices = set(&[(1.0, 1.0, 4)]);
        match solve_scalar_periodic(&model, &vortices, grid, &SolverOptions::default()) {
            Err(SolveError::Infeasible(verdict)) => {
                assert!(!verdict.feasible);
                assert!(verdict.violated.contains(&"vortex_budget"));
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn exhausted_newton_budget_reports_nonconvergence() {
        let grid = Grid::periodic(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let model = ScalarModel {
            lambda: 1.0,
            xi: 1.0,
            m: 1.0,
            n: 1.0,
            a2: 0.5,
            b2: 0.5,
        };
        let vortices = set(&[(1.0, 1.0, 1)]);
        let opts = SolverOptions {
            max_newton: 0,
            ..SolverOptions::default()
        };
        match solve_scalar_periodic(&model, &vortices, grid, &opts) {
            Err(SolveError::NonConvergence { iters: 0, .. }) => {}
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn b_only_periodic_reduction_solves_the_original_equations() {
        let grid = Grid::periodic(2.0 * PI, 2.0 * PI, 64, 64).unwrap();
        // Difference balance (xi1 - xi2)|cell| = 4 pi (N1/l1 - N2/l2) holds
        // exactly for these values.
        let area = grid.area();
        let xi2 = 1.0;
        let xi1 = xi2 + 4.0 * PI * (1.0 - 0.5) / area;
        let model = SystemModel {
            lambda1: 1.0,
            lambda2: 2.0,
            xi1,
            xi2,
            m: 1,
            a2: 0.0,
            b2: 1.0,
            c2: 0.0,
        };
        let v1 = set(&[(2.0, 2.0, 1)]);
        let v2 = set(&[(4.0, 3.0, 1)]);
        let opts = SolverOptions::default();
        let sol = solve_system_periodic(&model, &v1, &v2, grid, &opts).unwrap();
        assert_eq!(sol.regime, Some(Regime::BOnly));
        // Substitute back into the first equation with the mollified source:
        // laplace u1 = lambda1 (b2 e^{u1+u2} - xi1) + g1.
        let sigma = sol.sigma.unwrap();
        let bg1 = periodic_background(grid, &v1, sigma).unwrap();
        let mut residual = apply_laplacian(&sol.u[0]);
        let su = sum_fields(&sol.u[0], &sol.u[1]);
        for idx in 0..grid.len() {
            residual.samples_mut()[idx] -= model.lambda1
                * (model.b2 * su.samples()[idx].exp() - model.xi1)
                + bg1.g.samples()[idx];
        }
        assert!(
            residual.max_abs() <= 1e-6,
            "first-equation residual {}",
            residual.max_abs()
        );
        // The free split is pinned: lambda2 v1 - lambda1 v2 constant (zero).
        let mut diff = sol.v[0].clone();
        diff.scale(model.lambda2);
        diff.add_scaled(-model.lambda1, &sol.v[1]);
        assert!(diff.max() - diff.min() <= 1e-12);
    }

    #[test]
    fn a_only_planar_second_field_is_the_log_potential() {
        let grid = Grid::planar(8.0, 31, 31).unwrap();
        let model = SystemModel {
            lambda1: 1.0,
            lambda2: 1.0,
            xi1: 1.0,
            xi2: 0.0,
            m: 1,
            a2: 1.0,
            b2: 0.0,
            c2: 0.0,
        };
        let v1 = set(&[(0.5, 0.5, 1)]);
        let v2 = set(&[(0.0, 0.0, 1)]);
        let sol =
            solve_system_planar(&model, &v1, &v2, grid, &SolverOptions::default()).unwrap();
        assert_eq!(sol.regime, Some(Regime::AOnly));
        // At a node far from both vortices u2 = ln|x - p|^2 exactly.
        let (i, j) = (25, 25);
        let x = grid.node_x(i);
        let y = grid.node_y(j);
        let expect = (x * x + y * y).ln();
        assert!((sol.u[1].get(i, j) - expect).abs() <= 1e-10);
        assert!(!sol.notes.is_empty());
    }
}
