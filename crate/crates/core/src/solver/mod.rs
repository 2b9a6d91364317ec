//! Interior point solver for convex QPs and LPs with banded KKT systems.

mod banded;
mod ipm;
mod mps;
mod ordering;
mod presolve;
mod program;

use std::io::Read;
use std::time::{Duration, Instant};

pub use banded::{BandedLu, BandedMatrix};
pub use ipm::Residuals;
pub use mps::write_mps;
pub use ordering::{bandwidth, reverse_cuthill_mckee};
pub use program::{ConvexProgram, LinearRow};

use crate::error::{invalid, Error, Result};
use ipm::{IpmSettings, Outcome};
use presolve::{presolve, RowOrigin};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Bound on the normalized primal, dual and gap residuals.
    pub tol: f64,
    /// Relative threshold for accepting an infeasibility ray.
    pub infeasibility_tol: f64,
    /// Every computation in this solver is sequential, so results are
    /// reproducible regardless. Kept so callers can record the intent.
    pub deterministic: bool,
    pub regularization: f64,
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
            infeasibility_tol: 1e-8,
            deterministic: true,
            regularization: 1e-9,
            refine_steps: 4,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if !(self.infeasibility_tol > 0.0) {
            return Err(invalid("solver.infeasibility_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        if !(self.regularization >= 0.0) {
            return Err(invalid("solver.regularization", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Objective unbounded below (dual infeasible).
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

/// Multipliers for the Lagrangian
/// `f(x) + y'(Ax - b) + z'(Gx - h) + lower'(l - x) + upper'(x - u)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Duals {
    fn zeros(prog: &ConvexProgram) -> Self {
        let n = prog.num_vars();
        Self {
            eq: vec![0.0; prog.equalities.len()],
            ineq: vec![0.0; prog.inequalities.len()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }
}

/// Evidence attached to an infeasible (or unbounded) status.
#[derive(Clone, Debug, PartialEq)]
pub enum Certificate {
    /// Multipliers with `A'y + G'z - lower + upper = 0` on the free
    /// variables and negative `farkas` = `b'y + h'z - l'lower + u'upper`
    /// (after folding in fixed variables), scaled so that `farkas = -1`.
    Farkas { duals: Duals, farkas: f64 },
    /// A constraint that is violated by the fixed variables alone.
    EmptyRow { row: String, violation: f64 },
    /// A feasible direction along which the objective decreases.
    Ray { direction: Vec<f64>, slope: f64 },
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub duals: Duals,
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    /// Normalized residuals in the original variable space.
    pub residuals: Residuals,
    pub certificate: Option<Certificate>,
    /// Half bandwidth of the ordered KKT matrix.
    pub kkt_bandwidth: usize,
    pub detail: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Turns every non-optimal status into an error.
    pub fn into_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solve {
                status: self.status,
                detail: self.detail,
            })
        }
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Normalized KKT residuals of a primal/dual pair for `prog`.
pub fn kkt_residuals(prog: &ConvexProgram, x: &[f64], d: &Duals) -> Residuals {
    let n = prog.num_vars();
    let qx = prog.quad_times(x);
    let mut grad: Vec<f64> = (0..n).map(|j| qx[j] + prog.linear[j]).collect();
    let mut aty = vec![0.0; n];
    let mut p_err = 0.0f64;
    let mut p_scale = norm_inf(x);
    let mut d_err = 0.0f64;
    let mut xqx = 0.0;
    for j in 0..n {
        xqx += x[j] * qx[j];
    }
    let mut dual_lin = 0.0;
    for (r, row) in prog.equalities.iter().enumerate() {
        let ax = row.eval(x);
        p_err = p_err.max((ax - row.rhs).abs());
        p_scale = p_scale.max(ax.abs()).max(row.rhs.abs());
        for &(j, a) in &row.coeffs {
            aty[j] += a * d.eq[r];
        }
        dual_lin += row.rhs * d.eq[r];
    }
    for (r, row) in prog.inequalities.iter().enumerate() {
        let gx = row.eval(x);
        p_err = p_err.max(gx - row.rhs);
        p_scale = p_scale.max(gx.abs()).max(row.rhs.abs());
        for &(j, a) in &row.coeffs {
            aty[j] += a * d.ineq[r];
        }
        d_err = d_err.max(-d.ineq[r]);
        dual_lin += row.rhs * d.ineq[r];
    }
    for j in 0..n {
        let (lo, hi) = (prog.lower[j], prog.upper[j]);
        if lo.is_finite() {
            p_err = p_err.max(lo - x[j]);
            p_scale = p_scale.max(lo.abs());
            dual_lin -= lo * d.lower[j];
        }
        if hi.is_finite() {
            p_err = p_err.max(x[j] - hi);
            p_scale = p_scale.max(hi.abs());
            dual_lin += hi * d.upper[j];
        }
        d_err = d_err.max(-d.lower[j]).max(-d.upper[j]);
    }
    let bound_part: Vec<f64> = (0..n).map(|j| d.upper[j] - d.lower[j]).collect();
    for j in 0..n {
        grad[j] += aty[j] + bound_part[j];
    }
    d_err = d_err.max(norm_inf(&grad));
    let d_scale = norm_inf(&prog.linear)
        .max(norm_inf(&qx))
        .max(norm_inf(&aty))
        .max(norm_inf(&bound_part));
    let lin: f64 = (0..n).map(|j| prog.linear[j] * x[j]).sum();
    let pobj = 0.5 * xqx + lin;
    let dobj = -0.5 * xqx - dual_lin;
    Residuals {
        primal: p_err.max(0.0) / (1.0 + p_scale),
        dual: d_err / (1.0 + d_scale),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs())),
    }
}

/// Solves `prog` by a homogeneous self-dual interior point method.
pub fn solve(prog: &ConvexProgram, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    prog.validate()?;
    let start = Instant::now();
    let n0 = prog.num_vars();
    let pre = presolve(prog, opts.tol);

    let row_name = |o: RowOrigin| match o {
        RowOrigin::Eq(r) => prog.equalities[r].name.clone(),
        RowOrigin::Ineq(r) => prog.inequalities[r].name.clone(),
        RowOrigin::Lower(j) => format!("lower bound of {}", prog.names[j]),
        RowOrigin::Upper(j) => format!("upper bound of {}", prog.names[j]),
    };

    let assemble_x = |xr: &[f64]| {
        let mut x = pre.fixed_value.clone();
        for (k, &j) in pre.kept.iter().enumerate() {
            x[j] = xr[k];
        }
        x
    };

    if let Some(&(o, viol)) = pre.empty_violations.first() {
        let x = assemble_x(&vec![0.0; pre.kept.len()]);
        return Ok(SolveResult {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            residuals: kkt_residuals(prog, &x, &Duals::zeros(prog)),
            x,
            duals: Duals::zeros(prog),
            iterations: 0,
            wall_time: start.elapsed(),
            certificate: Some(Certificate::EmptyRow {
                row: row_name(o),
                violation: viol,
            }),
            kkt_bandwidth: 0,
            detail: format!("row `{}` is violated by fixed variables", row_name(o)),
        });
    }

    let settings = IpmSettings {
        max_iter: opts.max_iter,
        tol: 0.5 * opts.tol,
        tol_infeasible: opts.infeasibility_tol,
        static_reg: opts.regularization,
        refine_steps: opts.refine_steps,
    };
    let res = if pre.cone.n == 0 {
        ipm::IpmResult {
            outcome: Outcome::Optimal,
            x: Vec::new(),
            z: vec![0.0; pre.cone.m()],
            iterations: 0,
            residuals: Residuals::default(),
            bandwidth: 0,
        }
    } else {
        ipm::solve(&pre.cone, &settings)
    };

    // map multipliers back to the original rows
    let mut duals = Duals::zeros(prog);
    for (r, &o) in pre.origin.iter().enumerate() {
        let zr = res.z[r];
        match o {
            RowOrigin::Eq(i) => duals.eq[i] = zr,
            RowOrigin::Ineq(i) => duals.ineq[i] = zr,
            RowOrigin::Lower(j) => duals.lower[j] = zr,
            RowOrigin::Upper(j) => duals.upper[j] = zr,
        }
    }
    let x = assemble_x(&res.x);

    let status = match &res.outcome {
        Outcome::Optimal => SolveStatus::Optimal,
        Outcome::PrimalInfeasible => SolveStatus::Infeasible,
        Outcome::DualInfeasible => SolveStatus::Unbounded,
        Outcome::MaxIter => SolveStatus::IterationLimit,
        Outcome::Numerical(_) => SolveStatus::NumericalFailure,
    };

    let mut certificate = None;
    let mut detail = String::new();
    match &res.outcome {
        Outcome::PrimalInfeasible => {
            let farkas: f64 = pre.cone.b.iter().zip(&res.z).map(|(b, z)| b * z).sum();
            let scale = -1.0 / farkas;
            let scaled = Duals {
                eq: duals.eq.iter().map(|v| v * scale).collect(),
                ineq: duals.ineq.iter().map(|v| v * scale).collect(),
                lower: duals.lower.iter().map(|v| v * scale).collect(),
                upper: duals.upper.iter().map(|v| v * scale).collect(),
            };
            certificate = Some(Certificate::Farkas {
                duals: scaled,
                farkas: -1.0,
            });
            detail = "primal infeasible".into();
        }
        Outcome::DualInfeasible => {
            let mut dir = vec![0.0; n0];
            for (k, &j) in pre.kept.iter().enumerate() {
                dir[j] = res.x[k];
            }
            let norm = norm_inf(&dir).max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|v| *v /= norm);
            let slope = dir.iter().zip(&prog.linear).map(|(d, c)| d * c).sum();
            certificate = Some(Certificate::Ray { direction: dir, slope });
            detail = "objective unbounded below".into();
        }
        Outcome::Numerical(msg) => detail = msg.clone(),
        Outcome::MaxIter => detail = format!("no convergence in {} iterations", opts.max_iter),
        Outcome::Optimal => {}
    }

    let (objective, residuals) = if status == SolveStatus::Optimal {
        // fixed variables take whichever bound multiplier balances their
        // stationarity row
        let qx = prog.quad_times(&x);
        let mut grad: Vec<f64> = (0..n0).map(|j| qx[j] + prog.linear[j]).collect();
        for (row, &y) in prog.equalities.iter().zip(&duals.eq) {
            for &(j, a) in &row.coeffs {
                grad[j] += a * y;
            }
        }
        for (row, &z) in prog.inequalities.iter().zip(&duals.ineq) {
            for &(j, a) in &row.coeffs {
                grad[j] += a * z;
            }
        }
        for j in 0..n0 {
            if prog.is_fixed(j) {
                if grad[j] > 0.0 {
                    duals.lower[j] = grad[j];
                } else {
                    duals.upper[j] = -grad[j];
                }
            }
        }
        let obj = prog.objective_value(&x);
        (obj, kkt_residuals(prog, &x, &duals))
    } else {
        (f64::NAN, res.residuals)
    };
    if status == SolveStatus::Optimal && residuals.max() > opts.tol {
        log::debug!(
            "original-space residuals {:?} exceed tolerance after presolve",
            residuals
        );
    }

    Ok(SolveResult {
        status,
        x,
        duals,
        objective,
        iterations: res.iterations,
        wall_time: start.elapsed(),
        residuals,
        certificate,
        kkt_bandwidth: res.bandwidth,
        detail,
    })
}

/// Feasibility and objective of an externally computed point.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub objective: f64,
    /// Largest constraint or bound violation.
    pub max_violation: f64,
    /// Name of the row or bound where it occurs.
    pub worst: Option<String>,
}

/// Checks an externally produced primal vector against `prog`.
pub fn verify_point(prog: &ConvexProgram, x: &[f64]) -> Result<Verification> {
    if x.len() != prog.num_vars() {
        return Err(Error::Dimension(format!(
            "point has {} entries, program has {} variables",
            x.len(),
            prog.num_vars()
        )));
    }
    let mut worst = None;
    let mut max_violation = 0.0;
    let mut note = |v: f64, name: &dyn Fn() -> String| {
        if v > max_violation {
            max_violation = v;
            worst = Some(name());
        }
    };
    for row in &prog.equalities {
        note((row.eval(x) - row.rhs).abs(), &|| row.name.clone());
    }
    for row in &prog.inequalities {
        note(row.eval(x) - row.rhs, &|| row.name.clone());
    }
    for j in 0..x.len() {
        note(prog.lower[j] - x[j], &|| format!("lower bound of {}", prog.names[j]));
        note(x[j] - prog.upper[j], &|| format!("upper bound of {}", prog.names[j]));
    }
    Ok(Verification {
        objective: prog.objective_value(x),
        max_violation,
        worst,
    })
}

/// Reads a primal vector written one value per line, either as `value` or
/// as `name value`. Named entries are placed by name; `#` starts a comment.
pub fn read_point<R: Read>(prog: &ConvexProgram, mut r: R) -> Result<Vec<f64>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut x = vec![f64::NAN; prog.num_vars()];
    let mut next = 0usize;
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
        };
        let (idx, val) = match parts.as_slice() {
            [v] => {
                let i = next;
                next += 1;
                (i, parse(v)?)
            }
            [name, v] => {
                let i = prog
                    .var_index(name)
                    .ok_or_else(|| Error::Parse(format!("line {}: unknown variable {name}", ln + 1)))?;
                (i, parse(v)?)
            }
            _ => return Err(Error::Parse(format!("line {}: expected `[name] value`", ln + 1))),
        };
        if idx >= x.len() {
            return Err(Error::Dimension(format!("more than {} values", x.len())));
        }
        x[idx] = val;
    }
    if let Some(j) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::Dimension(format!("no value for {}", prog.names[j])));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn single_variable_lp() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 1.0, f64::INFINITY);
        p.add_linear(x, 1.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.duals.lower[0], 1.0, epsilon = 1e-6);
        assert!(r.residuals.max() <= 1e-8, "{:?}", r.residuals);
    }

    #[test]
    fn equality_constrained_qp() {
        let mut p = ConvexProgram::new();
        let x = p.add_free_var("x");
        let y = p.add_free_var("y");
        p.add_quadratic(x, x, 2.0);
        p.add_quadratic(y, y, 2.0);
        p.add_eq("sum", vec![(x, 1.0), (y, 1.0)], 2.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.objective, 2.0, epsilon = 1e-7);
        assert_relative_eq!(r.duals.eq[0], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_lp_has_farkas_ray() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        let y = p.add_var("y", 0.0, f64::INFINITY);
        p.add_linear(x, 1.0);
        p.add_le("cap", vec![(x, 1.0), (y, 1.0)], -1.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        match r.certificate {
            Some(Certificate::Farkas { duals, farkas }) => {
                assert_eq!(farkas, -1.0);
                assert!(duals.ineq[0] > 0.0);
            }
            other => panic!("unexpected certificate {other:?}"),
        }
    }

    #[test]
    fn unbounded_lp_is_detected() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        p.add_linear(x, -1.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn fixed_variable_violation_is_reported() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 2.0, 2.0);
        p.add_le("cap", vec![(x, 1.0)], 1.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(matches!(r.certificate, Some(Certificate::EmptyRow { .. })));
    }

    #[test]
    fn all_fixed_program_is_evaluated() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 3.0, 3.0);
        p.add_linear(x, 2.0);
        p.add_le("cap", vec![(x, 1.0)], 5.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 6.0);
        assert_eq!(r.duals.lower[0], 2.0);
    }

    #[test]
    fn degenerate_lp_face() {
        // every point of the segment x + y = 1 is optimal
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", 0.0, 1.0);
        p.add_linear(x, 1.0);
        p.add_linear(y, 1.0);
        p.add_ge("floor", vec![(x, 1.0), (y, 1.0)], 1.0);
        let r = solve(&p, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn objective_scaling_preserves_argmin() {
        let build = |lam: f64| {
            let mut p = ConvexProgram::new();
            let x = p.add_var("x", -1.0, 4.0);
            let y = p.add_var("y", -2.0, 3.0);
            p.add_quadratic(x, x, lam);
            p.add_quadratic(x, y, 0.5 * lam);
            p.add_quadratic(y, y, 2.0 * lam);
            p.add_linear(x, -3.0 * lam);
            p.add_linear(y, lam);
            p.add_le("c", vec![(x, 1.0), (y, 2.0)], 2.0);
            p
        };
        let a = solve(&build(1.0), &opts()).unwrap();
        let b = solve(&build(250.0), &opts()).unwrap();
        assert_relative_eq!(b.objective, 250.0 * a.objective, max_relative = 1e-7);
        for (p, q) in a.x.iter().zip(&b.x) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let mut p = ConvexProgram::new();
        let v: Vec<usize> = (0..6).map(|j| p.add_var(format!("x{j}"), -1.0, 1.0)).collect();
        for (k, &j) in v.iter().enumerate() {
            p.add_linear(j, (k as f64 * 0.7).sin());
            p.add_quadratic(j, j, 0.1 * k as f64);
        }
        p.add_le("r", v.iter().map(|&j| (j, 1.0)).collect(), 0.5);
        let a = solve(&p, &opts()).unwrap();
        let b = solve(&p, &opts()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn point_round_trip() {
        let mut p = ConvexProgram::new();
        p.add_var("a", 0.0, 1.0);
        p.add_var("b", 0.0, 1.0);
        p.add_le("r", vec![(0, 1.0), (1, 1.0)], 1.0);
        let x = read_point(&p, "b 0.75\na 0.5\n".as_bytes()).unwrap();
        assert_eq!(x, vec![0.5, 0.75]);
        let v = verify_point(&p, &x).unwrap();
        assert_relative_eq!(v.max_violation, 0.25);
        assert_eq!(v.worst.as_deref(), Some("r"));
        assert!(read_point(&p, "1\n".as_bytes()).is_err());
    }
}
