//! Parameter models, vortex bookkeeping, coupling regimes, and the counting
//! inequalities that decide solvability on a periodic cell.
//!
//! Everything in this module is plain arithmetic on problem data; no grids or
//! fields appear. The solver consults these checks before spending any effort
//! and the CLI prints the verdicts directly.

use std::fmt;

use thiserror::Error;

/// Relative tolerance for constraints that demand exact equality of two float
/// expressions. The balance conditions of the single-coupling regimes are
/// exact identities that generic float inputs cannot hit, so they are accepted
/// within this margin. Call sites that take a tolerance make it configurable.
pub const EQUALITY_REL_TOL: f64 = 1e-9;

/// A satisfied strict inequality whose slack is below this fraction of its
/// scale is flagged near-critical: solvable in principle, numerically fragile.
pub const NEAR_CRITICAL_REL: f64 = 1e-6;

/// A coupling coefficient counts as zero when it does not exceed this fraction
/// of max(a2, b2, c2, 1). Treating tiny couplings as absent avoids
/// ill-conditioned solves that a nominal classification would hide.
pub const COEFF_ZERO_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite and nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("vortex multiplicity at ({x}, {y}) must be at least 1")]
    ZeroMultiplicity { x: f64, y: f64 },
    #[error("coefficients leave no coercive exponential term: need a2 + b2 > 0 and m*a2 + n*b2 > 0")]
    DegenerateCoefficients,
    #[error("all coupling coefficients vanish; the equations have no exponential term")]
    AllCouplingsVanish,
    #[error("second vortex set is not contained in the first: ({x}, {y}) carries excess multiplicity {excess}")]
    NotSubset { x: f64, y: f64, excess: u32 },
    #[error("vacuum constraint {name} violated: {lhs} vs {rhs}")]
    VacuumViolation { name: &'static str, lhs: f64, rhs: f64 },
}

/// A vortex location with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    pub mult: u32,
}

/// A finite multiset of vortex points.
///
/// Canonical form: sorted by (y, x), coincident points merged by summing
/// multiplicities. Coincidence means bit-equal coordinates; nearby but
/// distinct points are legitimate data and stay separate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VortexSet {
    points: Vec<Vortex>,
}

impl VortexSet {
    pub fn new(points: impl IntoIterator<Item = Vortex>) -> Result<Self, ModelError> {
        let points: Vec<Vortex> = points.into_iter().collect();
        for p in &points {
            if p.mult == 0 {
                return Err(ModelError::ZeroMultiplicity { x: p.x, y: p.y });
            }
        }
        Ok(Self::canonical(points))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn canonical(mut points: Vec<Vortex>) -> Self {
        points.retain(|p| p.mult > 0);
        points.sort_by(|p, q| p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)));
        let mut merged: Vec<Vortex> = Vec::with_capacity(points.len());
        for p in points {
            match merged.last_mut() {
                Some(q) if q.x == p.x && q.y == p.y => q.mult += p.mult,
                _ => merged.push(p),
            }
        }
        Self { points: merged }
    }

    pub fn points(&self) -> &[Vortex] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total vortex number N, multiplicities counted.
    pub fn total(&self) -> u32 {
        self.points.iter().map(|p| p.mult).sum()
    }

    /// Translates every point into [0, lx) x [0, ly) by lattice reduction,
    /// then re-merges points that land on the same spot.
    pub fn reduce_into_cell(&self, lx: f64, ly: f64) -> Self {
        let reduced = self
            .points
            .iter()
            .map(|p| {
                let mut x = p.x.rem_euclid(lx);
                let mut y = p.y.rem_euclid(ly);
                // rem_euclid may round up to the modulus itself.
                if x >= lx {
                    x = 0.0;
                }
                if y >= ly {
                    y = 0.0;
                }
                Vortex { x, y, mult: p.mult }
            })
            .collect();
        Self::canonical(reduced)
    }

    /// Multiset sum.
    pub fn union(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self::canonical(points)
    }

    /// Multiset difference self - other; fails unless other is contained in
    /// self with multiplicity.
    pub fn difference(&self, other: &Self) -> Result<Self, ModelError> {
        let mut points = self.points.clone();
        for q in &other.points {
            match points.iter_mut().find(|p| p.x == q.x && p.y == q.y) {
                Some(p) if p.mult >= q.mult => p.mult -= q.mult,
                Some(p) => {
                    return Err(ModelError::NotSubset {
                        x: q.x,
                        y: q.y,
                        excess: q.mult - p.mult,
                    })
                }
                None => {
                    return Err(ModelError::NotSubset {
                        x: q.x,
                        y: q.y,
                        excess: q.mult,
                    })
                }
            }
        }
        Ok(Self::canonical(points))
    }

    /// Multiset containment: every point of self appears in other with at
    /// least the same multiplicity.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        other.difference(self).is_ok()
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

fn require_nonnegative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Negative { name, value })
    }
}

pub(crate) fn balance_holds(lhs: f64, rhs: f64, rel_tol: f64) -> bool {
    (lhs - rhs).abs() <= rel_tol * lhs.abs().max(rhs.abs())
}

/// Parameters of the scalar equation
///
///   laplace u = lambda (m a2 e^{mu} + n b2 e^{nu} - xi) + 4 pi sum_s mult_s delta_{p_s}.
///
/// The exponents m, n are arbitrary nonnegative reals; a2, b2 are the squared
/// moduli of the two condensate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarModel {
    pub lambda: f64,
    pub xi: f64,
    pub m: f64,
    pub n: f64,
    pub a2: f64,
    pub b2: f64,
}

impl ScalarModel {
    /// Field invariants: lambda, xi > 0; m, n, a2, b2 >= 0; at least one
    /// exponential term survives and carries a positive exponent, otherwise
    /// the reduced one-dimensional energy a e^{mt} + b e^{nt} - c t fails to
    /// be coercive.
    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("lambda", self.lambda)?;
        require_positive("xi", self.xi)?;
        require_nonnegative("m", self.m)?;
        require_nonnegative("n", self.n)?;
        require_nonnegative("a2", self.a2)?;
        require_nonnegative("b2", self.b2)?;
        if self.a2 + self.b2 <= 0.0 || self.m * self.a2 + self.n * self.b2 <= 0.0 {
            return Err(ModelError::DegenerateCoefficients);
        }
        Ok(())
    }

    /// Planar solves need the zero of the right side at u = 0:
    /// m a2 + n b2 = xi.
    pub fn check_vacuum(&self, rel_tol: f64) -> Result<(), ModelError> {
        let lhs = self.m * self.a2 + self.n * self.b2;
        if balance_holds(lhs, self.xi, rel_tol) {
            Ok(())
        } else {
            Err(ModelError::VacuumViolation {
                name: "m*a2 + n*b2 = xi",
                lhs,
                rhs: self.xi,
            })
        }
    }

    /// Decay rate of linearized fluctuations about the vacuum,
    /// sqrt(lambda (m^2 a2 + n^2 b2)); sets the box size for planar solves.
    pub fn vacuum_mass(&self) -> f64 {
        (self.lambda * (self.m * self.m * self.a2 + self.n * self.n * self.b2)).sqrt()
    }
}

/// Parameters of the two-field system
///
///   laplace u1 = lambda1 (m a2 e^{m u1} + b2 e^{u1+u2} + c2 e^{u1-u2} - xi1) + 4 pi sum delta_{p_{1,s}},
///   laplace u2 = lambda2 (b2 e^{u1+u2} - c2 e^{u1-u2} - xi2) + 4 pi sum delta_{p_{2,s}}.
///
/// xi2 may take any sign; the other couplings are constrained by `validate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemModel {
    pub lambda1: f64,
    pub lambda2: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub m: u32,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl SystemModel {
    /// Field invariants: lambda1, lambda2, xi1 > 0; m a positive integer;
    /// a2, b2, c2 >= 0; xi2 finite but otherwise free.
    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("lambda1", self.lambda1)?;
        require_positive("lambda2", self.lambda2)?;
        require_positive("xi1", self.xi1)?;
        if !self.xi2.is_finite() {
            return Err(ModelError::Negative {
                name: "xi2",
                value: self.xi2,
            });
        }
        if self.m == 0 {
            return Err(ModelError::NonPositive {
                name: "m",
                value: 0.0,
            });
        }
        require_nonnegative("a2", self.a2)?;
        require_nonnegative("b2", self.b2)?;
        require_nonnegative("c2", self.c2)?;
        Ok(())
    }

    /// Planar solves need both right sides to vanish at u1 = u2 = 0:
    /// m a2 + b2 + c2 = xi1 and b2 - c2 = xi2.
    pub fn check_vacuum(&self, rel_tol: f64) -> Result<(), ModelError> {
        let first = f64::from(self.m) * self.a2 + self.b2 + self.c2;
        if !balance_holds(first, self.xi1, rel_tol) {
            return Err(ModelError::VacuumViolation {
                name: "m*a2 + b2 + c2 = xi1",
                lhs: first,
                rhs: self.xi1,
            });
        }
        let second = self.b2 - self.c2;
        let scale = self.b2.max(self.c2).max(self.xi2.abs());
        if (second - self.xi2).abs() > rel_tol * scale {
            return Err(ModelError::VacuumViolation {
                name: "b2 - c2 = xi2",
                lhs: second,
                rhs: self.xi2,
            });
        }
        Ok(())
    }

    /// Slowest decay rate of linearized fluctuations about the vacuum: the
    /// square root of the smallest eigenvalue of diag(lambda1, lambda2) M,
    /// where M is the Hessian of the potential at u = 0. Positive whenever at
    /// least two couplings survive, which is the only place it is used (box
    /// sizing for planar system solves).
    pub fn vacuum_mass(&self) -> f64 {
        let ma2 = f64::from(self.m) * f64::from(self.m) * self.a2;
        let m11 = self.lambda1 * (ma2 + self.b2 + self.c2);
        let m12 = self.lambda1 * (self.b2 - self.c2);
        let m21 = self.lambda2 * (self.b2 - self.c2);
        let m22 = self.lambda2 * (self.b2 + self.c2);
        let tr = m11 + m22;
        let det = m11 * m22 - m12 * m21;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        (0.5 * (tr - disc)).max(0.0).sqrt()
    }
}

/// Which coupling coefficients survive the zero threshold.
///
/// `Full` keeps both mixed couplings; a2 may or may not vanish there, the
/// functional stays strictly convex either way. The other tags name the
/// surviving coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Full,
    AB,
    AC,
    AOnly,
    BOnly,
    COnly,
    None,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Regime::Full => "FULL",
            Regime::AB => "AB",
            Regime::AC => "AC",
            Regime::AOnly => "A_ONLY",
            Regime::BOnly => "B_ONLY",
            Regime::COnly => "C_ONLY",
            Regime::None => "NONE",
        };
        f.write_str(tag)
    }
}

/// Pure function of (a2, b2, c2); total, never errors. The all-zero tag is
/// rejected downstream where a solve is actually requested.
pub fn classify_regime(model: &SystemModel) -> Regime {
    let threshold = COEFF_ZERO_REL * model.a2.max(model.b2).max(model.c2).max(1.0);
    let a = model.a2 > threshold;
    let b = model.b2 > threshold;
    let c = model.c2 > threshold;
    match (a, b, c) {
        (_, true, true) => Regime::Full,
        (true, true, false) => Regime::AB,
        (true, false, true) => Regime::AC,
        (true, false, false) => Regime::AOnly,
        (false, true, false) => Regime::BOnly,
        (false, false, true) => Regime::COnly,
        (false, false, false) => Regime::None,
    }
}

/// How a condition relates its two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// lhs < rhs, strictly.
    StrictLess,
    /// lhs = rhs within a relative tolerance.
    Balance,
}

/// One solvability condition together with the numbers that went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub id: &'static str,
    pub formula: &'static str,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl Condition {
    fn strict(id: &'static str, formula: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            id,
            formula,
            relation: Relation::StrictLess,
            lhs,
            rhs,
            satisfied: lhs < rhs,
        }
    }

    fn balance(id: &'static str, formula: &'static str, lhs: f64, rhs: f64, rel_tol: f64) -> Self {
        Self {
            id,
            formula,
            relation: Relation::Balance,
            lhs,
            rhs,
            satisfied: balance_holds(lhs, rhs, rel_tol),
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    fn near_critical(&self) -> bool {
        self.relation == Relation::StrictLess
            && self.satisfied
            && self.slack() < NEAR_CRITICAL_REL * self.lhs.abs().max(self.rhs.abs())
    }
}

/// Outcome of a solvability check. `feasible` holds exactly when `violated`
/// is empty; `slacks` carries the named margins the analysis works with.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub violated: Vec<&'static str>,
    pub slacks: Vec<(&'static str, f64)>,
    pub near_critical: bool,
    pub conditions: Vec<Condition>,
}

impl FeasibilityVerdict {
    fn from_conditions(conditions: Vec<Condition>, slacks: Vec<(&'static str, f64)>) -> Self {
        let violated: Vec<&'static str> = conditions
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| c.id)
            .collect();
        let near_critical = conditions.iter().any(Condition::near_critical);
        Self {
            feasible: violated.is_empty(),
            violated,
            slacks,
            near_critical,
            conditions,
        }
    }

    pub fn slack(&self, name: &str) -> Option<f64> {
        self.slacks
            .iter()
            .find(|(id, _)| *id == name)
            .map(|(_, v)| *v)
    }
}

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Periodic scalar solvability: a unique solution exists iff the vortex
/// budget 4 pi N / lambda < xi |cell| holds strictly. The margin
/// eta = xi |cell| - 4 pi N / lambda is reported; equality is rejected.
pub fn feasibility_scalar_periodic(
    model: &ScalarModel,
    n_total: u32,
    cell_area: f64,
) -> FeasibilityVerdict {
    let lhs = FOUR_PI * f64::from(n_total) / model.lambda;
    let rhs = model.xi * cell_area;
    let cond = Condition::strict("vortex_budget", "4\u{3c0}N/\u{3bb} < \u{3be}|\u{3a9}|", lhs, rhs);
    let eta = cond.slack();
    FeasibilityVerdict::from_conditions(vec![cond], vec![("eta", eta)])
}

/// Margins eta1, eta2 for real-valued vortex totals. Factored over the reals
/// so the symmetry (n2, xi2) -> (-n2, -xi2), which exchanges the two margins
/// exactly, can be exercised directly in tests.
fn system_margins(
    lambda1: f64,
    lambda2: f64,
    xi1: f64,
    xi2: f64,
    n1: f64,
    n2: f64,
    area: f64,
) -> (f64, f64) {
    let t1 = n1 / lambda1 + n2 / lambda2;
    let t2 = n1 / lambda1 - n2 / lambda2;
    let eta1 = 0.5 * (xi1 + xi2) * area - 0.5 * FOUR_PI * t1;
    let eta2 = 0.5 * (xi1 - xi2) * area - 0.5 * FOUR_PI * t2;
    (eta1, eta2)
}

/// Builds the per-regime condition list over real-valued vortex totals.
fn system_conditions(
    lambda1: f64,
    lambda2: f64,
    xi1: f64,
    xi2: f64,
    n1: f64,
    n2: f64,
    area: f64,
    regime: Regime,
    equality_tol: f64,
) -> Result<(Vec<Condition>, Vec<(&'static str, f64)>), ModelError> {
    let t1 = n1 / lambda1 + n2 / lambda2;
    let t2 = n1 / lambda1 - n2 / lambda2;
    let (eta1, eta2) = system_margins(lambda1, lambda2, xi1, xi2, n1, n2, area);
    let sum_budget = || {
        Condition::strict(
            "sum_budget",
            "4\u{3c0}(N\u{2081}/\u{3bb}\u{2081} + N\u{2082}/\u{3bb}\u{2082}) < (\u{3be}\u{2081}+\u{3be}\u{2082})|\u{3a9}|",
            FOUR_PI * t1,
            (xi1 + xi2) * area,
        )
    };
    let difference_budget = || {
        Condition::strict(
            "difference_budget",
            "4\u{3c0}(N\u{2081}/\u{3bb}\u{2081} \u{2212} N\u{2082}/\u{3bb}\u{2082}) < (\u{3be}\u{2081}\u{2212}\u{3be}\u{2082})|\u{3a9}|",
            FOUR_PI * t2,
            (xi1 - xi2) * area,
        )
    };
    let first_budget = || {
        Condition::strict(
            "first_budget",
            "4\u{3c0}N\u{2081}/\u{3bb}\u{2081} < \u{3be}\u{2081}|\u{3a9}|",
            FOUR_PI * n1 / lambda1,
            xi1 * area,
        )
    };
    let mut slacks = vec![("eta1", eta1), ("eta2", eta2)];
    let conditions = match regime {
        Regime::Full => vec![sum_budget(), difference_budget()],
        Regime::AB => {
            slacks.push(("eta3", eta1 - eta2));
            vec![
                difference_budget(),
                Condition::strict(
                    "second_budget",
                    "4\u{3c0}N\u{2082}/\u{3bb}\u{2082} < \u{3be}\u{2082}|\u{3a9}|",
                    FOUR_PI * n2 / lambda2,
                    xi2 * area,
                ),
            ]
        }
        Regime::AC => {
            slacks.push(("eta4", eta2 - eta1));
            vec![
                sum_budget(),
                Condition::strict(
                    "second_excess",
                    "\u{3be}\u{2082}|\u{3a9}| < 4\u{3c0}N\u{2082}/\u{3bb}\u{2082}",
                    xi2 * area,
                    FOUR_PI * n2 / lambda2,
                ),
            ]
        }
        Regime::AOnly => vec![first_budget()],
        Regime::BOnly => vec![
            first_budget(),
            Condition::balance(
                "difference_balance",
                "4\u{3c0}(N\u{2081}/\u{3bb}\u{2081} \u{2212} N\u{2082}/\u{3bb}\u{2082}) = (\u{3be}\u{2081}\u{2212}\u{3be}\u{2082})|\u{3a9}|",
                FOUR_PI * t2,
                (xi1 - xi2) * area,
                equality_tol,
            ),
        ],
        Regime::COnly => vec![
            first_budget(),
            Condition::balance(
                "sum_balance",
                "4\u{3c0}(N\u{2081}/\u{3bb}\u{2081} + N\u{2082}/\u{3bb}\u{2082}) = (\u{3be}\u{2081}+\u{3be}\u{2082})|\u{3a9}|",
                FOUR_PI * t1,
                (xi1 + xi2) * area,
                equality_tol,
            ),
        ],
        Regime::None => return Err(ModelError::AllCouplingsVanish),
    };
    Ok((conditions, slacks))
}

/// Periodic system solvability for the given regime. The caller supplies the
/// regime it classified; the two must agree.
///
/// FULL demands both budget inequalities; AB and AC each trade one budget for
/// a condition on the second component alone; the single-coupling regimes
/// keep the first-component budget and add an exact balance. The margins
/// eta1, eta2 (and eta3 = eta1 - eta2 or eta4 = eta2 - eta1 where they drive
/// a condition) are reported.
pub fn feasibility_system_periodic(
    model: &SystemModel,
    n1: u32,
    n2: u32,
    cell_area: f64,
    regime: Regime,
    equality_tol: f64,
) -> Result<FeasibilityVerdict, ModelError> {
    debug_assert_eq!(regime, classify_regime(model));
    let (conditions, slacks) = system_conditions(
        model.lambda1,
        model.lambda2,
        model.xi1,
        model.xi2,
        f64::from(n1),
        f64::from(n2),
        cell_area,
        regime,
        equality_tol,
    )?;
    Ok(FeasibilityVerdict::from_conditions(conditions, slacks))
}

/// Which negativity guarantees the parameters support.
///
/// `weighted`: u1 < 0 and u1/lambda1 +- u2/lambda2 < 0 everywhere away from
/// the vortex points; granted when m^2 a2 < 2 (lambda2/lambda1 - 1) c2 with
/// lambda2 > lambda1 and b2 > c2.
///
/// `pointwise`: additionally u1 +- u2 < 0; granted when
/// m a2 < min(1, 2/m) (lambda2/lambda1 - 1) c2 with lambda2 > lambda1 and
/// xi2 > 0. For m >= 2 the two coefficient bounds are the same inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignGuarantees {
    pub weighted: bool,
    pub pointwise: bool,
}

pub fn guaranteed_sign_properties(model: &SystemModel) -> SignGuarantees {
    let ratio = model.lambda2 / model.lambda1 - 1.0;
    let m = f64::from(model.m);
    let weighted = ratio > 0.0 && model.b2 > model.c2 && m * m * model.a2 < 2.0 * ratio * model.c2;
    let pointwise =
        ratio > 0.0 && model.xi2 > 0.0 && m * model.a2 < (2.0 / m).min(1.0) * ratio * model.c2;
    SignGuarantees {
        weighted,
        pointwise,
    }
}
