//! The fvx command line: feasibility checks, solves with artifact output,
//! parameter sweeps, and re-verification of dumped fields.
//!
//! Exit codes: 0 success, 1 infeasible or failed checks, 2 usage or config
//! errors, 3 solver non-convergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{
    BoxSection, ConfigError, GridSection, RunConfig, VortexEntry, DEFAULT_PERIODIC_EXTENT,
    DEFAULT_PERIODIC_NODES,
};
use crate::diagnostics::{diagnose_scalar, diagnose_system, uniqueness_probe, DiagnosticsReport};
use crate::grid::Grid;
use crate::io::{self, IoError, SweepRow};
use crate::model::{
    classify_regime, feasibility_scalar_periodic, feasibility_system_periodic,
    guaranteed_sign_properties, FeasibilityVerdict, ModelError, Regime, Relation, ScalarModel,
    SystemModel, VortexSet,
};
use crate::solver::{
    solve_scalar_periodic, solve_scalar_planar, solve_system_periodic, solve_system_planar,
    SolveError, Solution, SolveReport, SolverOptions,
};

const EXIT_OK: i32 = 0;
const EXIT_INFEASIBLE: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;

/// Artifact directory used when neither the config nor --out names one.
const DEFAULT_OUT_DIR: &str = "fvx_out";

#[derive(Parser)]
#[command(
    name = "fvx",
    version,
    about = "Construct and verify vortex solutions of the master equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override config keys for one invocation.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Node count per axis (square grid or box).
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Planar box half width.
    #[arg(long = "box", value_name = "L")]
    box_half_width: Option<f64>,
    /// Planar background length scale.
    #[arg(long, value_name = "MU")]
    mu: Option<f64>,
    /// Seed for probe starting points.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the feasibility verdict and sign guarantees without solving.
    Check {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Solve, print the report, and write dumps plus tables.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also run the uniqueness probe with this many starts.
        #[arg(long, value_name = "K", value_parser = clap::value_parser!(u32).range(2..))]
        probe: Option<u32>,
    },
    /// Solve once per value of one parameter and print a table.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Re-run diagnostics on dumped fields (pass the artifact directory or a
    /// file inside it).
    Verify { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    /// Total vortex multiplicity.
    N,
    /// Periodic cell area.
    Area,
    /// First (or only) coupling constant lambda.
    Lambda,
    /// Planar background scale.
    Mu,
    /// Nodes per axis.
    Grid,
}

impl SweepParam {
    fn token(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::Area => "area",
            SweepParam::Lambda => "lambda",
            SweepParam::Mu => "mu",
            SweepParam::Grid => "grid",
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match cli.command {
        Command::Check { config, overrides } => cmd_check(&config, &overrides),
        Command::Solve {
            config,
            overrides,
            probe,
        } => cmd_solve(&config, &overrides, probe),
        Command::Sweep {
            config,
            overrides,
            param,
            values,
        } => cmd_sweep(&config, &overrides, param, &values),
        Command::Verify { path } => cmd_verify(&path),
    }
}

/// The model/vortex halves of a config, built once per command.
enum Built {
    Scalar {
        model: ScalarModel,
        vortices: VortexSet,
    },
    System {
        model: SystemModel,
        vortices1: VortexSet,
        vortices2: VortexSet,
    },
}

fn build_problem(config: &RunConfig) -> Result<Built, ConfigError> {
    if config.class.is_scalar() {
        Ok(Built::Scalar {
            model: config.scalar_model()?,
            vortices: config.vortex_set()?,
        })
    } else {
        Ok(Built::System {
            model: config.system_model()?,
            vortices1: config.vortex_set()?,
            vortices2: config.second_vortex_set()?,
        })
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, i32> {
    let mut config = RunConfig::from_path(path).map_err(|err| {
        eprintln!("{err}");
        EXIT_USAGE
    })?;
    apply_overrides(&mut config, overrides).map_err(|msg| {
        eprintln!("{msg}");
        EXIT_USAGE
    })?;
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, ov: &Overrides) -> Result<(), String> {
    if let Some(l) = ov.box_half_width {
        if config.class.is_periodic() {
            return Err("--box applies to planar classes only".into());
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(format!("--box must be positive, got {l}"));
        }
        let section = config.box_;
        config.box_ = Some(BoxSection {
            l,
            ..section.unwrap_or(BoxSection {
                l,
                nx: crate::config::DEFAULT_PLANAR_NODES,
                ny: crate::config::DEFAULT_PLANAR_NODES,
            })
        });
    }
    if let Some(n) = ov.grid {
        set_square_nodes(config, n).map_err(|err| err.to_string())?;
    }
    if let Some(mu) = ov.mu {
        config.mu = Some(mu);
    }
    if let Some(seed) = ov.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &ov.out {
        config.out = Some(out.display().to_string());
    }
    Ok(())
}

fn set_square_nodes(config: &mut RunConfig, n: usize) -> Result<(), ConfigError> {
    if config.class.is_periodic() {
        let (lx, ly) = config
            .grid
            .map_or((DEFAULT_PERIODIC_EXTENT, DEFAULT_PERIODIC_EXTENT), |g| {
                (g.lx, g.ly)
            });
        config.grid = Some(GridSection { lx, ly, nx: n, ny: n });
    } else {
        let l = config.planar_half_width()?;
        config.box_ = Some(BoxSection { l, nx: n, ny: n });
    }
    Ok(())
}

/// Formats the failed conditions with the relation inverted, so an unmet
/// budget 4piN/lambda < xi|Omega| reads as the violation it is.
fn violation_summary(verdict: &FeasibilityVerdict) -> String {
    let mut out = String::from("infeasible:");
    for c in verdict.conditions.iter().filter(|c| !c.satisfied) {
        let (formula, op) = match c.relation {
            Relation::StrictLess => (c.formula.replace(" < ", " \u{2265} "), "\u{2265}"),
            Relation::Balance => (c.formula.replace(" = ", " \u{2260} "), "\u{2260}"),
        };
        out.push_str(&format!(" {} ({:.3} {} {:.3});", formula, c.lhs, op, c.rhs));
    }
    out.pop();
    out
}

fn usage_error(err: impl std::fmt::Display) -> i32 {
    eprintln!("{err}");
    EXIT_USAGE
}

fn cmd_check(path: &Path, overrides: &Overrides) -> i32 {
    let config = match load_config(path, overrides) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_problem(&config) {
        Ok(b) => b,
        Err(err) => return usage_error(err),
    };
    let grid = match config.build_grid() {
        Ok(g) => g,
        Err(err) => return usage_error(err),
    };
    let opts = match config.solver_options() {
        Ok(o) => o,
        Err(err) => return usage_error(err),
    };
    println!("class: {}", config.class);
    match built {
        Built::Scalar { model, vortices } => {
            if config.class.is_periodic() {
                let verdict = feasibility_scalar_periodic(&model, vortices.total(), grid.area());
                print_verdict(&verdict)
            } else {
                vacuum_check(model.check_vacuum(opts.equality_tol))
            }
        }
        Built::System {
            model,
            vortices1,
            vortices2,
        } => {
            let regime = classify_regime(&model);
            println!("regime: {regime}");
            let signs = guaranteed_sign_properties(&model);
            println!(
                "sign_guarantees: weighted={} pointwise={}",
                signs.weighted, signs.pointwise
            );
            if matches!(regime, Regime::Full | Regime::AC | Regime::COnly) {
                if let Err(err) = vortices1.difference(&vortices2) {
                    return usage_error(err);
                }
            }
            if config.class.is_periodic() {
                let verdict = match feasibility_system_periodic(
                    &model,
                    vortices1.total(),
                    vortices2.total(),
                    grid.area(),
                    regime,
                    opts.equality_tol,
                ) {
                    Ok(v) => v,
                    Err(err) => return usage_error(err),
                };
                print_verdict(&verdict)
            } else {
                vacuum_check(model.check_vacuum(opts.equality_tol))
            }
        }
    }
}

fn print_verdict(verdict: &FeasibilityVerdict) -> i32 {
    print!("{}", io::render_verdict(verdict));
    if verdict.feasible {
        EXIT_OK
    } else {
        println!("{}", violation_summary(verdict));
        EXIT_INFEASIBLE
    }
}

/// Planar classes have no area budget; the checkable gate is the vacuum
/// identity of the coefficients.
fn vacuum_check(result: Result<(), ModelError>) -> i32 {
    match result {
        Ok(()) => {
            println!("vacuum: holds");
            EXIT_OK
        }
        Err(err) => {
            println!("vacuum: violated");
            println!("{err}");
            EXIT_INFEASIBLE
        }
    }
}

fn solve_built(built: &Built, periodic: bool, grid: Grid, opts: &SolverOptions) -> Result<Solution, SolveError> {
    match built {
        Built::Scalar { model, vortices } => {
            if periodic {
                solve_scalar_periodic(model, vortices, grid, opts)
            } else {
                solve_scalar_planar(model, vortices, grid, opts)
            }
        }
        Built::System {
            model,
            vortices1,
            vortices2,
        } => {
            if periodic {
                solve_system_periodic(model, vortices1, vortices2, grid, opts)
            } else {
                solve_system_planar(model, vortices1, vortices2, grid, opts)
            }
        }
    }
}

fn diagnose_built(built: &Built, sol: &Solution) -> DiagnosticsReport {
    match built {
        Built::Scalar { model, vortices } => diagnose_scalar(sol, model, vortices.total()),
        Built::System {
            model,
            vortices1,
            vortices2,
        } => diagnose_system(sol, model, vortices1.total(), vortices2.total()),
    }
}

fn solve_failure(err: &SolveError) -> i32 {
    eprintln!("{err}");
    match err {
        SolveError::Infeasible(_) => EXIT_INFEASIBLE,
        SolveError::NonConvergence { .. } => EXIT_NO_CONVERGENCE,
        SolveError::Model(ModelError::VacuumViolation { .. }) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn cmd_solve(path: &Path, overrides: &Overrides, probe: Option<u32>) -> i32 {
    let config = match load_config(path, overrides) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_problem(&config) {
        Ok(b) => b,
        Err(err) => return usage_error(err),
    };
    let grid = match config.build_grid() {
        Ok(g) => g,
        Err(err) => return usage_error(err),
    };
    let opts = match config.solver_options() {
        Ok(o) => o,
        Err(err) => return usage_error(err),
    };
    let periodic = config.class.is_periodic();
    let seed = config.seed();
    let sol = match solve_built(&built, periodic, grid, &opts) {
        Ok(sol) => sol,
        Err(err) => return solve_failure(&err),
    };
    let mut diag = diagnose_built(&built, &sol);
    if let Some(k) = probe {
        let probe_result = uniqueness_probe(k, seed, |initial| {
            let mut opts = opts;
            opts.initial = initial;
            solve_built(&built, periodic, grid, &opts)
        });
        match probe_result {
            Ok(p) => diag.uniqueness = Some(p),
            Err(err) => return solve_failure(&err),
        }
    }
    let report = io::render_report(&sol, &diag, seed);
    print!("{report}");
    match write_artifacts(&config, &sol, &report) {
        Ok(dir) => println!("artifacts: {}", dir.display()),
        Err(err) => return usage_error(err),
    }
    if diag.all_pass() {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

fn write_artifacts(config: &RunConfig, sol: &Solution, report: &str) -> Result<PathBuf, IoError> {
    let dir = PathBuf::from(config.out.as_deref().unwrap_or(DEFAULT_OUT_DIR));
    let touch = |source| IoError::Io {
        path: dir.clone(),
        source,
    };
    std::fs::create_dir_all(&dir).map_err(touch)?;
    // the stored config describes the problem, not the destination, so the
    // artifact directory stays relocatable and reruns byte-identical
    let mut stored = config.clone();
    stored.out = None;
    std::fs::write(dir.join("config.json"), stored.canonical()).map_err(touch)?;
    for (k, field) in sol.u.iter().enumerate() {
        io::write_field(&dir.join(format!("u{}.vxf", k + 1)), field)?;
    }
    for (k, field) in sol.v.iter().enumerate() {
        io::write_field(&dir.join(format!("v{}.vxf", k + 1)), field)?;
    }
    std::fs::write(dir.join("report.txt"), report).map_err(touch)?;
    std::fs::write(dir.join("profile.dat"), io::render_profile(sol)).map_err(touch)?;
    Ok(dir)
}

fn cmd_sweep(path: &Path, overrides: &Overrides, param: SweepParam, values: &[f64]) -> i32 {
    let base = match load_config(path, overrides) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(err) = build_problem(&base) {
        return usage_error(err);
    }
    let rows: Vec<SweepRow> = values.iter().map(|&v| sweep_row(&base, param, v)).collect();
    let table = io::render_sweep(param.token(), &rows);
    print!("{table}");
    if let Some(out) = &base.out {
        let dir = PathBuf::from(out);
        if let Err(err) = std::fs::create_dir_all(&dir)
            .and_then(|()| std::fs::write(dir.join("sweep.dat"), &table))
        {
            return usage_error(format!("cannot write {}: {err}", dir.display()));
        }
    }
    EXIT_OK
}

fn sweep_row(base: &RunConfig, param: SweepParam, value: f64) -> SweepRow {
    let error_row = |value| SweepRow {
        value,
        verdict: "error",
        slack: None,
        iterations: None,
        residual: None,
    };
    let mut config = base.clone();
    if let Err(msg) = apply_sweep_value(&mut config, param, value) {
        eprintln!("{msg}");
        return error_row(value);
    }
    let pieces = build_problem(&config)
        .and_then(|built| Ok((built, config.build_grid()?, config.solver_options()?)));
    let (built, grid, opts) = match pieces {
        Ok(p) => p,
        Err(err) => {
            eprintln!("{err}");
            return error_row(value);
        }
    };
    match solve_built(&built, config.class.is_periodic(), grid, &opts) {
        Ok(sol) => {
            let diag = diagnose_built(&built, &sol);
            SweepRow {
                value,
                verdict: "converged",
                slack: min_slack(sol.feasibility.as_ref()),
                iterations: Some(sol.report.newton_iters),
                residual: diag.residual("flux_1").map(|r| r.rel_error),
            }
        }
        Err(SolveError::Infeasible(verdict)) => SweepRow {
            value,
            verdict: "infeasible",
            slack: min_slack(Some(&verdict)),
            iterations: None,
            residual: None,
        },
        Err(SolveError::NonConvergence { iters, .. }) => SweepRow {
            value,
            verdict: "non_convergence",
            slack: None,
            iterations: Some(iters),
            residual: None,
        },
        Err(err) => {
            eprintln!("{err}");
            error_row(value)
        }
    }
}

/// Tightest margin in the verdict; the sweep prints it so the sharp boundary
/// shows as a sign change down the rows.
fn min_slack(verdict: Option<&FeasibilityVerdict>) -> Option<f64> {
    let slacks = &verdict?.slacks;
    slacks
        .iter()
        .map(|&(_, s)| s)
        .min_by(|a, b| a.total_cmp(b))
}

fn apply_sweep_value(
    config: &mut RunConfig,
    param: SweepParam,
    value: f64,
) -> Result<(), String> {
    match param {
        SweepParam::N => {
            if !(value >= 0.0 && value.fract() == 0.0 && value <= f64::from(u32::MAX)) {
                return Err(format!("n sweep needs nonnegative integers, got {value}"));
            }
            let mult = value as u32;
            let (x, y) = config.vortices.first().map_or_else(
                || default_vortex_position(config),
                |v| (v.x, v.y),
            );
            config.vortices = if mult == 0 {
                vec![]
            } else {
                vec![VortexEntry { x, y, mult }]
            };
        }
        SweepParam::Area => {
            if !config.class.is_periodic() {
                return Err("area sweep applies to periodic cells".into());
            }
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("area sweep needs positive values, got {value}"));
            }
            let section = config.grid.unwrap_or(GridSection {
                lx: DEFAULT_PERIODIC_EXTENT,
                ly: DEFAULT_PERIODIC_EXTENT,
                nx: DEFAULT_PERIODIC_NODES,
                ny: DEFAULT_PERIODIC_NODES,
            });
            let factor = (value / (section.lx * section.ly)).sqrt();
            config.grid = Some(GridSection {
                lx: factor * section.lx,
                ly: factor * section.ly,
                ..section
            });
            for v in config.vortices.iter_mut().chain(config.vortices2.iter_mut()) {
                v.x *= factor;
                v.y *= factor;
            }
        }
        SweepParam::Lambda => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("lambda sweep needs positive values, got {value}"));
            }
            if let Some(s) = config.scalar.as_mut() {
                s.lambda = value;
            }
            if let Some(s) = config.system.as_mut() {
                s.lambda1 = value;
            }
        }
        SweepParam::Mu => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("mu sweep needs positive values, got {value}"));
            }
            config.mu = Some(value);
        }
        SweepParam::Grid => {
            if !(value >= 2.0 && value.fract() == 0.0 && value <= 1e6) {
                return Err(format!("grid sweep needs whole node counts, got {value}"));
            }
            set_square_nodes(config, value as usize).map_err(|err| err.to_string())?;
        }
    }
    Ok(())
}

fn default_vortex_position(config: &RunConfig) -> (f64, f64) {
    if config.class.is_periodic() {
        let (lx, ly) = config
            .grid
            .map_or((DEFAULT_PERIODIC_EXTENT, DEFAULT_PERIODIC_EXTENT), |g| {
                (g.lx, g.ly)
            });
        (0.5 * lx, 0.5 * ly)
    } else {
        (0.0, 0.0)
    }
}

fn cmd_verify(path: &Path) -> i32 {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    };
    let config = match RunConfig::from_path(&dir.join("config.json")) {
        Ok(c) => c,
        Err(err) => return usage_error(err),
    };
    let built = match build_problem(&config) {
        Ok(b) => b,
        Err(err) => return usage_error(err),
    };
    let grid = match config.build_grid() {
        Ok(g) => g,
        Err(err) => return usage_error(err),
    };
    let opts = match config.solver_options() {
        Ok(o) => o,
        Err(err) => return usage_error(err),
    };

    let read_component = |name: &str| -> Result<Option<crate::grid::Field>, i32> {
        let file = dir.join(name);
        if !file.exists() {
            return Ok(None);
        }
        let field = io::read_field(&file).map_err(|err| usage_error(err))?;
        if field.grid() != grid {
            return Err(usage_error(format!(
                "{} was dumped on a different grid than the config describes",
                file.display()
            )));
        }
        Ok(Some(field))
    };

    let u1 = match read_component("u1.vxf") {
        Ok(Some(f)) => f,
        Ok(None) => return usage_error(format!("{} has no u1.vxf", dir.display())),
        Err(code) => return code,
    };
    let mut u = vec![u1];
    if !config.class.is_scalar() {
        match read_component("u2.vxf") {
            Ok(Some(f)) => u.push(f),
            Ok(None) => {}
            Err(code) => return code,
        }
    }
    let mut v = Vec::new();
    for k in 0..u.len() {
        match read_component(&format!("v{}.vxf", k + 1)) {
            Ok(Some(f)) => v.push(f),
            Ok(None) => break,
            Err(code) => return code,
        }
    }
    if v.len() != u.len() {
        v.clear();
    }

    let (regime, feasibility) = match &built {
        Built::Scalar { model, vortices } => {
            let verdict = config
                .class
                .is_periodic()
                .then(|| feasibility_scalar_periodic(model, vortices.total(), grid.area()));
            (None, verdict)
        }
        Built::System {
            model,
            vortices1,
            vortices2,
        } => {
            let regime = classify_regime(model);
            let verdict = if config.class.is_periodic() {
                match feasibility_system_periodic(
                    model,
                    vortices1.total(),
                    vortices2.total(),
                    grid.area(),
                    regime,
                    opts.equality_tol,
                ) {
                    Ok(v) => Some(v),
                    Err(err) => return usage_error(err),
                }
            } else {
                None
            };
            (Some(regime), verdict)
        }
    };

    let sol = Solution {
        class: config.problem_class(),
        regime,
        grid,
        mu: (!config.class.is_periodic()).then(|| config.mu()),
        sigma: config.sigma,
        u,
        v,
        u0: vec![],
        clamped_nodes: vec![],
        feasibility,
        report: SolveReport {
            newton_iters: 0,
            cg_total: 0,
            energy_trace: vec![],
            final_grad_norm: 0.0,
            clamped: false,
        },
        notes: vec![],
    };
    let diag = diagnose_built(&built, &sol);
    println!("verify: {}", dir.display());
    println!("class: {}", config.class);
    if let Some(regime) = sol.regime {
        println!("regime: {regime}");
    }
    if let Some(verdict) = &sol.feasibility {
        print!("{}", io::render_verdict(verdict));
    }
    print!("{}", io::render_diagnostics(&diag));
    if diag.all_pass() {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

#[cfg(test)]
mod tests {
    use std::str::FromStr;

    use super::*;

    #[test]
    fn violation_summary_inverts_the_relation() {
        let model = ScalarModel {
            lambda: 1.0,
            xi: 1.0,
            m: 1.0,
            n: 1.0,
            a2: 0.5,
            b2: 0.5,
        };
        let area = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        let verdict = feasibility_scalar_periodic(&model, 4, area);
        assert!(!verdict.feasible);
        let text = violation_summary(&verdict);
        assert!(text.contains("4\u{3c0}N/\u{3bb} \u{2265} \u{3be}|\u{3a9}|"));
        assert!(text.contains("50.265 \u{2265} 39.478"));
    }

    fn planar_config() -> RunConfig {
        RunConfig::from_str(
            r#"{
                "class": "scalar_planar",
                "scalar": {"lambda": 1.0, "xi": 2.0, "a2": 1.0, "b2": 1.0},
                "vortices": [{"x": 0.0, "y": 0.0}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_override_keeps_the_half_width() {
        let mut config = planar_config();
        let overrides = Overrides {
            grid: Some(127),
            ..Overrides::default()
        };
        apply_overrides(&mut config, &overrides).unwrap();
        let section = config.box_.unwrap();
        assert_eq!(section.nx, 127);
        // model-derived default half width survives the node override
        assert_eq!(section.l, 16.0);

        let overrides = Overrides {
            box_half_width: Some(24.0),
            grid: Some(63),
            ..Overrides::default()
        };
        let mut config = planar_config();
        apply_overrides(&mut config, &overrides).unwrap();
        let section = config.box_.unwrap();
        assert_eq!((section.l, section.nx), (24.0, 63));
    }

    #[test]
    fn box_override_on_a_periodic_class_is_rejected() {
        let mut config = RunConfig::from_str(
            r#"{
                "class": "scalar_periodic",
                "scalar": {"lambda": 1.0, "xi": 1.0, "a2": 1.0}
            }"#,
        )
        .unwrap();
        let overrides = Overrides {
            box_half_width: Some(8.0),
            ..Overrides::default()
        };
        assert!(apply_overrides(&mut config, &overrides).is_err());
    }

    #[test]
    fn n_sweep_replaces_the_vortex_list_in_place() {
        let mut config = RunConfig::from_str(
            r#"{
                "class": "scalar_periodic",
                "scalar": {"lambda": 1.0, "xi": 1.0, "a2": 1.0},
                "vortices": [{"x": 1.0, "y": 2.0}, {"x": 3.0, "y": 4.0}]
            }"#,
        )
        .unwrap();
        apply_sweep_value(&mut config, SweepParam::N, 3.0).unwrap();
        assert_eq!(config.vortices, vec![VortexEntry { x: 1.0, y: 2.0, mult: 3 }]);
        apply_sweep_value(&mut config, SweepParam::N, 0.0).unwrap();
        assert!(config.vortices.is_empty());
        // once emptied, later rows fall back to the cell center
        apply_sweep_value(&mut config, SweepParam::N, 2.0).unwrap();
        assert_eq!(config.vortices[0].x, 0.5 * DEFAULT_PERIODIC_EXTENT);
        assert!(apply_sweep_value(&mut config, SweepParam::N, 2.5).is_err());
    }

    #[test]
    fn area_sweep_rescales_cell_and_vortices_together() {
        let mut config = RunConfig::from_str(
            r#"{
                "class": "scalar_periodic",
                "scalar": {"lambda": 1.0, "xi": 1.0, "a2": 1.0},
                "vortices": [{"x": 1.0, "y": 2.0}],
                "grid": {"lx": 4.0, "ly": 1.0, "nx": 32, "ny": 32}
            }"#,
        )
        .unwrap();
        apply_sweep_value(&mut config, SweepParam::Area, 16.0).unwrap();
        let grid = config.grid.unwrap();
        assert_eq!((grid.lx, grid.ly), (8.0, 2.0));
        assert_eq!(grid.lx * grid.ly, 16.0);
        assert_eq!(config.vortices[0].x, 2.0);
        assert_eq!(config.vortices[0].y, 4.0);
    }

    #[test]
    fn min_slack_picks_the_tightest_margin() {
        let model = SystemModel {
            lambda1: 1.0,
            lambda2: 1.0,
            xi1: 2.0,
            xi2: 1.0,
            m: 1,
            a2: 1.0,
            b2: 1.0,
            c2: 0.5,
        };
        let area = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        let verdict = feasibility_system_periodic(
            &model,
            2,
            1,
            area,
            classify_regime(&model),
            1e-9,
        )
        .unwrap();
        let slack = min_slack(Some(&verdict)).unwrap();
        let by_hand = verdict.slacks.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
        assert_eq!(slack, by_hand);
    }
}
