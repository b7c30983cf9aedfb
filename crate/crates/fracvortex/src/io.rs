//! Field dumps and text rendering: the VXF1 binary format, the solve report,
//! and the gnuplot tables.
//!
//! Everything rendered here is deterministic: floats print in the shortest
//! form that parses back to the same bits, and no timestamps or durations
//! appear, so reruns with one seed produce byte-identical artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::DiagnosticsReport;
use crate::grid::{Field, Grid, GridError, Topology};
use crate::model::{FeasibilityVerdict, Relation};
use crate::solver::Solution;

const MAGIC: &str = "VXF1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad field dump header: {reason}")]
    Header { reason: String },
    #[error("field dump payload holds {got} values, header promises {expected}")]
    Size { expected: usize, got: usize },
    #[error("field dump sample {index} is not finite")]
    NonFinite { index: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one field: a text header line
/// `VXF1 nx=<Nx> ny=<Ny> lx=<Lx> ly=<Ly> kind=<periodic|planar>`
/// followed by the row-major samples as little-endian 64-bit floats.
/// The header floats use the shortest representation that parses back
/// bit-exactly, so a dump round-trips the grid as well as the samples.
pub fn write_field(path: &Path, field: &Field) -> Result<(), IoError> {
    let grid = field.grid();
    let kind = match grid.topology {
        Topology::Periodic => "periodic",
        Topology::Dirichlet => "planar",
    };
    let header = format!(
        "{MAGIC} nx={} ny={} lx={} ly={} kind={}\n",
        grid.nx,
        grid.ny,
        grid.lx(),
        grid.ly(),
        kind
    );
    let mut bytes = Vec::with_capacity(header.len() + 8 * field.samples().len());
    bytes.extend_from_slice(header.as_bytes());
    for &s in field.samples() {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_field(path: &Path) -> Result<Field, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| IoError::Header {
            reason: "missing header line".into(),
        })?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| IoError::Header {
        reason: "header is not UTF-8".into(),
    })?;
    let grid = parse_header(header)?;
    let payload = &bytes[newline + 1..];
    if payload.len() != 8 * grid.len() {
        return Err(IoError::Size {
            expected: grid.len(),
            got: payload.len() / 8,
        });
    }
    let mut samples = Vec::with_capacity(grid.len());
    for chunk in payload.chunks_exact(8) {
        samples.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
        return Err(IoError::NonFinite { index });
    }
    Ok(Field::from_samples(grid, samples))
}

fn parse_header(header: &str) -> Result<Grid, IoError> {
    let bad = |reason: String| IoError::Header { reason };
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(bad(format!("expected magic {MAGIC}")));
    }
    let mut nx = None;
    let mut ny = None;
    let mut lx = None;
    let mut ly = None;
    let mut kind = None;
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("stray token `{token}`")))?;
        match key {
            "nx" => nx = Some(parse_count(key, value)?),
            "ny" => ny = Some(parse_count(key, value)?),
            "lx" => lx = Some(parse_extent(key, value)?),
            "ly" => ly = Some(parse_extent(key, value)?),
            "kind" => kind = Some(value.to_owned()),
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    let missing = |name| bad(format!("missing key `{name}`"));
    let nx = nx.ok_or_else(|| missing("nx"))?;
    let ny = ny.ok_or_else(|| missing("ny"))?;
    let lx = lx.ok_or_else(|| missing("lx"))?;
    let ly = ly.ok_or_else(|| missing("ly"))?;
    match kind.ok_or_else(|| missing("kind"))?.as_str() {
        "periodic" => Ok(Grid::periodic(lx, ly, nx, ny)?),
        "planar" => {
            if lx != ly {
                return Err(bad("planar dumps need lx = ly".into()));
            }
            Ok(Grid::planar(0.5 * lx, nx, ny)?)
        }
        other => Err(bad(format!("unknown kind `{other}`"))),
    }
}

fn parse_count(key: &str, value: &str) -> Result<usize, IoError> {
    value.parse().map_err(|_| IoError::Header {
        reason: format!("bad {key} `{value}`"),
    })
}

fn parse_extent(key: &str, value: &str) -> Result<f64, IoError> {
    let parsed: f64 = value.parse().map_err(|_| IoError::Header {
        reason: format!("bad {key} `{value}`"),
    })?;
    if parsed.is_finite() && parsed > 0.0 {
        Ok(parsed)
    } else {
        Err(IoError::Header {
            reason: format!("bad {key} `{value}`"),
        })
    }
}

/// Renders the verdict block: one line per condition with both sides, then
/// the named slacks.
pub fn render_verdict(verdict: &FeasibilityVerdict) -> String {
    let mut out = String::new();
    verdict_lines(&mut out, verdict);
    out
}

fn verdict_lines(out: &mut String, verdict: &FeasibilityVerdict) {
    let word = if verdict.feasible { "feasible" } else { "infeasible" };
    let _ = writeln!(out, "feasibility: {word}");
    for c in &verdict.conditions {
        let op = match c.relation {
            Relation::StrictLess => "<",
            Relation::Balance => "=",
        };
        let state = if c.satisfied { "holds" } else { "VIOLATED" };
        let _ = writeln!(
            out,
            "  {}: {} -> {} {} {} [{}]",
            c.id, c.formula, c.lhs, op, c.rhs, state
        );
    }
    for (name, value) in &verdict.slacks {
        let _ = writeln!(out, "  slack {name} = {value}");
    }
    if verdict.near_critical {
        let _ = writeln!(out, "  near_critical: true");
    }
}

/// Renders the solve report. One line per quantity; the `residuals` section
/// maps identity names to value/rhs/rel_error/tolerance/pass. Contains no
/// timing, so equal solves render equal bytes.
pub fn render_report(sol: &Solution, diag: &DiagnosticsReport, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "class: {}", sol.class);
    if let Some(regime) = sol.regime {
        let _ = writeln!(out, "regime: {regime}");
    }
    let grid = sol.grid;
    let _ = writeln!(out, "grid: {}x{}", grid.nx, grid.ny);
    match grid.topology {
        Topology::Periodic => {
            let _ = writeln!(out, "cell: {} x {}", grid.lx(), grid.ly());
        }
        Topology::Dirichlet => {
            let _ = writeln!(out, "box_half_width: {}", grid.half_width());
        }
    }
    if let Some(mu) = sol.mu {
        let _ = writeln!(out, "mu: {mu}");
    }
    if let Some(sigma) = sol.sigma {
        let _ = writeln!(out, "sigma: {sigma}");
    }
    let _ = writeln!(out, "seed: {seed}");
    if let Some(energy) = sol.report.energy_trace.last() {
        let _ = writeln!(out, "energy: {energy}");
    }
    let _ = writeln!(out, "newton_iters: {}", sol.report.newton_iters);
    let _ = writeln!(out, "cg_total: {}", sol.report.cg_total);
    let _ = writeln!(out, "final_grad_norm: {}", sol.report.final_grad_norm);
    let _ = writeln!(out, "clamped_nodes: {}", sol.clamped_nodes.len());
    if let Some(verdict) = &sol.feasibility {
        verdict_lines(&mut out, verdict);
    }
    diagnostics_lines(&mut out, diag, &sol.notes);
    out
}

/// Renders only the diagnostics sections; the verify command uses this when
/// there is no fresh solve to report on.
pub fn render_diagnostics(diag: &DiagnosticsReport) -> String {
    let mut out = String::new();
    diagnostics_lines(&mut out, diag, &[]);
    out
}

fn diagnostics_lines(out: &mut String, diag: &DiagnosticsReport, extra_notes: &[String]) {
    let _ = writeln!(out, "residuals:");
    for r in &diag.residuals {
        let _ = writeln!(
            out,
            "  {}: value={} rhs={} rel_error={} tolerance={} pass={}",
            r.name, r.value, r.rhs, r.rel_error, r.tolerance, r.pass
        );
        if let Some(note) = r.note {
            let _ = writeln!(out, "    note: {note}");
        }
    }
    if !diag.signs.is_empty() {
        let _ = writeln!(out, "signs:");
        for s in &diag.signs {
            let _ = writeln!(
                out,
                "  {}: max={} guaranteed={} pass={}",
                s.name, s.max_value, s.guaranteed, s.pass
            );
        }
    }
    if let Some(d) = &diag.decay {
        let _ = writeln!(out, "decay:");
        let _ = writeln!(
            out,
            "  {}: rate={} reference={} r_squared={} window=[{},{}] pass={}",
            d.field, d.rate, d.reference_rate, d.r_squared, d.window.0, d.window.1, d.pass
        );
    }
    if let Some(p) = &diag.uniqueness {
        let _ = writeln!(out, "uniqueness:");
        let _ = writeln!(
            out,
            "  spread={} k={} seed={} pass={}",
            p.spread, p.k, p.seed, p.pass
        );
    }
    let notes: Vec<&str> = extra_notes
        .iter()
        .map(String::as_str)
        .chain(diag.notes.iter().map(String::as_str))
        .collect();
    if !notes.is_empty() {
        let _ = writeln!(out, "notes:");
        for note in notes {
            let _ = writeln!(out, "  - {note}");
        }
    }
    let _ = writeln!(out, "all_pass: {}", diag.all_pass());
}

/// Gnuplot-ready line cut: one row per x node along the grid row nearest the
/// cell midline (periodic) or the x axis (planar), columns x then u/v per
/// component.
pub fn render_profile(sol: &Solution) -> String {
    let grid = sol.grid;
    let target = match grid.topology {
        Topology::Periodic => 0.5 * grid.ly(),
        Topology::Dirichlet => 0.0,
    };
    let mut row = 0;
    let mut best = f64::INFINITY;
    for j in 0..grid.ny {
        let d = (grid.node_y(j) - target).abs();
        if d < best {
            best = d;
            row = j;
        }
    }
    let with_v = sol.v.len() == sol.u.len();
    let mut out = String::new();
    let _ = writeln!(out, "# line cut along y = {}", grid.node_y(row));
    let mut header = String::from("# x");
    for k in 0..sol.u.len() {
        let _ = write!(header, " u{}", k + 1);
        if with_v {
            let _ = write!(header, " v{}", k + 1);
        }
    }
    let _ = writeln!(out, "{header}");
    for i in 0..grid.nx {
        let _ = write!(out, "{}", grid.node_x(i));
        for k in 0..sol.u.len() {
            let _ = write!(out, " {}", sol.u[k].get(i, row));
            if with_v {
                let _ = write!(out, " {}", sol.v[k].get(i, row));
            }
        }
        out.push('\n');
    }
    out
}

/// One sweep result. Absent numbers (slack on the plane, iterations of a
/// rejected row) render as `-`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// One token: converged, infeasible, non_convergence, or error.
    pub verdict: &'static str,
    pub slack: Option<f64>,
    pub iterations: Option<u32>,
    pub residual: Option<f64>,
}

pub fn render_sweep(parameter: &str, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# sweep over {parameter}");
    let _ = writeln!(out, "# value verdict slack iterations quant_residual");
    for row in rows {
        let _ = write!(out, "{} {}", row.value, row.verdict);
        match row.slack {
            Some(s) => {
                let _ = write!(out, " {s}");
            }
            None => out.push_str(" -"),
        }
        match row.iterations {
            Some(n) => {
                let _ = write!(out, " {n}");
            }
            None => out.push_str(" -"),
        }
        match row.residual {
            Some(r) => {
                let _ = write!(out, " {r}");
            }
            None => out.push_str(" -"),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Residual;
    use crate::energy::ProblemClass;
    use crate::solver::SolveReport;

    fn tempdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn periodic_dump_round_trips_bit_exactly() {
        let grid = Grid::periodic(2.0 * std::f64::consts::PI, 1.25, 16, 20).unwrap();
        let field = Field::from_fn(grid, |x, y| {
            (x.sin() * (3.0 * y).cos() + 1.0 / 3.0) * 1e-7 + f64::MIN_POSITIVE
        });
        let dir = tempdir();
        let path = dir.path().join("u.vxf");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.grid(), grid);
        for (a, b) in back.samples().iter().zip(field.samples()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn planar_dump_restores_the_half_width() {
        let grid = Grid::planar(7.3, 31, 31).unwrap();
        let field = Field::from_fn(grid, |x, y| -(x * x + y * y).sqrt());
        let dir = tempdir();
        let path = dir.path().join("v.vxf");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.grid().half_width().to_bits(), 7.3f64.to_bits());
        assert_eq!(back.grid().topology, Topology::Dirichlet);
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let grid = Grid::periodic(1.0, 1.0, 16, 16).unwrap();
        let dir = tempdir();
        let path = dir.path().join("u.vxf");
        write_field(&path, &Field::zeros(grid)).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_field(&path).unwrap_err(),
            IoError::Size { expected: 256, got: 255 }
        ));

        let mut nan = std::fs::read(&path).unwrap();
        nan.truncate(nan.iter().position(|&b| b == b'\n').unwrap() + 1);
        nan.extend(std::iter::repeat(f64::NAN.to_le_bytes()).take(256).flatten());
        std::fs::write(&path, &nan).unwrap();
        assert!(matches!(
            read_field(&path).unwrap_err(),
            IoError::NonFinite { index: 0 }
        ));

        std::fs::write(&path, b"VXF9 nonsense\n").unwrap();
        assert!(matches!(read_field(&path).unwrap_err(), IoError::Header { .. }));
    }

    fn toy_solution() -> Solution {
        let grid = Grid::periodic(1.0, 1.0, 16, 16).unwrap();
        Solution {
            class: ProblemClass::ScalarPeriodic,
            regime: None,
            grid,
            mu: None,
            sigma: Some(0.125),
            u: vec![Field::from_fn(grid, |x, _| -x)],
            v: vec![Field::zeros(grid)],
            u0: vec![Field::zeros(grid)],
            clamped_nodes: vec![],
            feasibility: None,
            report: SolveReport {
                newton_iters: 3,
                cg_total: 11,
                energy_trace: vec![1.0, 0.5, 0.25],
                final_grad_norm: 2e-11,
                clamped: false,
            },
            notes: vec!["example note".into()],
        }
    }

    #[test]
    fn report_lists_residuals_in_the_contract_format() {
        let sol = toy_solution();
        let diag = DiagnosticsReport {
            residuals: vec![Residual {
                name: "flux_1",
                value: -12.5,
                rhs: -12.5,
                rel_error: 0.0,
                tolerance: 5e-3,
                pass: true,
                note: None,
            }],
            ..DiagnosticsReport::default()
        };
        let text = render_report(&sol, &diag, 7);
        assert!(text.contains("class: scalar_periodic\n"));
        assert!(text.contains("seed: 7\n"));
        assert!(text.contains("energy: 0.25\n"));
        assert!(text.contains("residuals:\n"));
        assert!(text.contains("  flux_1: value=-12.5 rhs=-12.5 rel_error=0 tolerance=0.005 pass=true\n"));
        assert!(text.contains("  - example note\n"));
        assert!(text.ends_with("all_pass: true\n"));
        assert_eq!(text, render_report(&sol, &diag, 7));
    }

    #[test]
    fn profile_cut_has_one_row_per_x_node() {
        let sol = toy_solution();
        let text = render_profile(&sol);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 16);
        assert!(text.contains("# x u1 v1"));
        // midline row of a 16-node unit cell sits at y = 0.5
        assert!(text.contains("# line cut along y = 0.5"));
    }

    #[test]
    fn sweep_rows_render_dashes_for_absent_numbers() {
        let rows = vec![
            SweepRow {
                value: 3.0,
                verdict: "converged",
                slack: Some(1.5),
                iterations: Some(8),
                residual: Some(1e-12),
            },
            SweepRow {
                value: 4.0,
                verdict: "infeasible",
                slack: Some(-0.25),
                iterations: None,
                residual: None,
            },
        ];
        let text = render_sweep("n", &rows);
        assert!(text.contains("3 converged 1.5 8 0.000000000001\n"));
        assert!(text.contains("4 infeasible -0.25 - -\n"));
    }
}
