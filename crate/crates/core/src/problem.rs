//! Discrete intersection-approach programs for every strategy and the
//! mapping from solver output back to trajectories.

use std::time::Duration;

use crate::dynamics::{recover_control_input, BoundarySpec, Limits, ResistanceCoefficients, RoadSpec, SafetySpec};
use crate::error::{invalid, Error, Result};
use crate::pwa::PwaSegments;
use crate::solver::{ConvexProgram, Residuals, SolveResult, SolveStatus};
use crate::trajectory::{horizon_steps, Trajectory};

/// Everything that defines the feasible set of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub road: RoadSpec<f64>,
    pub boundary: BoundarySpec<f64>,
    pub limits: Limits<f64>,
    pub coeffs: ResistanceCoefficients<f64>,
    pub dt: f64,
    pub safety: Option<SafetySpec<f64>>,
    /// Leaves `x_H` free instead of pinning it to the road length.
    pub free_terminal_position: bool,
}

impl ScenarioSpec {
    pub fn horizon(&self) -> usize {
        horizon_steps(self.boundary.travel_time, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.boundary.validate()?;
        self.limits.validate()?;
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.coeffs.d3 > 0.0) {
            return Err(Error::NonConvexResistance(self.coeffs.d3));
        }
        if self.horizon() == 0 {
            return Err(invalid("boundary.travel_time", "shorter than one step"));
        }
        for (name, v) in [
            ("boundary.v_init", self.boundary.v_init),
            ("boundary.v_final", self.boundary.v_final),
        ] {
            if v > self.limits.v_max {
                return Err(invalid(name, "exceeds v_max"));
            }
        }
        if let Some(s) = &self.safety {
            s.validate(self.horizon())?;
        }
        Ok(())
    }

    /// Cheap necessary conditions; violations are reported, not enforced.
    pub fn feasibility_warnings(&self) -> Vec<String> {
        let b = &self.boundary;
        let l = &self.limits;
        let tm = self.horizon() as f64 * self.dt;
        let mut w = Vec::new();
        let dv = b.v_final - b.v_init;
        let reach = if dv >= 0.0 {
            (l.u_max + self.coeffs.eval(0.0).abs()) * tm
        } else {
            (-l.u_min + self.coeffs.eval(l.v_max)) * tm
        };
        if dv.abs() > reach {
            w.push(format!(
                "speed change {dv:.3} m/s exceeds what {tm:.2} s of control can deliver"
            ));
        }
        if !self.free_terminal_position && self.road.length > l.v_max * tm {
            w.push(format!(
                "covering {} m in {tm:.2} s needs more than v_max",
                self.road.length
            ));
        }
        w
    }
}

/// How the positive-control objective approximates `a_r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PwaMode {
    /// Production setting with few segments.
    Pwa(usize),
    /// Dense segmentation standing in for the exact quadratic.
    FineOracle(usize),
}

impl PwaMode {
    pub fn segments(self) -> usize {
        match self {
            PwaMode::Pwa(k) | PwaMode::FineOracle(k) => k,
        }
    }
}

/// Per-stage convex quadratic in `(a_i, v_i)` with stage-dependent linear
/// terms, the form taken by one convex-concave subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct StageCost {
    /// Hessian `[[h_aa, h_av], [h_av, h_vv]]`; must be PSD.
    pub hessian: [[f64; 2]; 2],
    /// Linear coefficients for `a_i`, `i = 0..H`.
    pub lin_a: Vec<f64>,
    /// Linear coefficients for `v_i`, `i = 0..H`.
    pub lin_v: Vec<f64>,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StrategyKind {
    EcoPlus(PwaMode),
    Vm,
    Jm,
    Am,
    DcSurrogate(StageCost),
}

impl StrategyKind {
    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::EcoPlus(PwaMode::Pwa(_)) => "ecoplus",
            StrategyKind::EcoPlus(PwaMode::FineOracle(_)) => "ecoplus-fine",
            StrategyKind::Vm => "vm",
            StrategyKind::Jm => "jm",
            StrategyKind::Am => "am",
            StrategyKind::DcSurrogate(_) => "dc",
        }
    }
}

/// Indices of the structural variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VarMap {
    pub x: Vec<usize>,
    pub v: Vec<usize>,
    pub a: Vec<usize>,
    pub jerk: Vec<usize>,
    /// Epigraph variables, one per interval (positive-control strategy only).
    pub z: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BuiltProblem {
    pub program: ConvexProgram,
    pub vars: VarMap,
    pub horizon: usize,
    pub dt: f64,
    pub strategy: StrategyKind,
    pub pwa: PwaSegments<f64>,
    pub warnings: Vec<String>,
}

/// Affine under-estimate `y = s v + c` of `a_r` on `[0, v_max]`, the
/// tangent at mid-range.
pub fn lower_resistance_bound(coeffs: &ResistanceCoefficients<f64>, v_max: f64) -> (f64, f64) {
    let vt = 0.5 * v_max;
    let s = coeffs.slope_at(vt);
    (s, coeffs.eval(vt) - s * vt)
}

/// Assembles the program for `strategy`. `pwa` encodes the resistance in
/// the control-limit rows, and in the objective for the positive-control
/// strategy.
pub fn build_problem(spec: &ScenarioSpec, strategy: &StrategyKind, pwa: &PwaSegments<f64>) -> Result<BuiltProblem> {
    spec.validate()?;
    if (pwa.v_max - spec.limits.v_max).abs() > 1e-12 * spec.limits.v_max {
        return Err(invalid("pwa.v_max", "must match limits.v_max"));
    }
    if let StrategyKind::EcoPlus(mode) = strategy {
        if mode.segments() != pwa.len() {
            return Err(invalid("pwa.segments", "does not match the strategy"));
        }
    }
    let h = spec.horizon();
    let dt = spec.dt;
    let lim = &spec.limits;
    let c = &spec.coeffs;
    let eco = matches!(strategy, StrategyKind::EcoPlus(_));
    let warnings = spec.feasibility_warnings();
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut p = ConvexProgram::new();
    let mut vars = VarMap::default();
    let (a_lo, a_hi) = lim.accel.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    for i in 0..=h {
        vars.x.push(p.add_free_var(format!("x_{i}")));
        vars.v.push(p.add_var(format!("v_{i}"), 0.0, lim.v_max));
        vars.a.push(p.add_var(format!("a_{i}"), a_lo, a_hi));
        if i < h {
            vars.jerk.push(p.add_var(format!("J_{i}"), lim.j_min, lim.j_max));
            if eco {
                vars.z.push(p.add_var(format!("z_{i}"), 0.0, f64::INFINITY));
            }
        }
    }

    // boundary conditions, removed again by presolve
    let b = &spec.boundary;
    p.fix_var(vars.x[0], 0.0);
    if !spec.free_terminal_position {
        p.fix_var(vars.x[h], spec.road.length);
    }
    p.fix_var(vars.v[0], b.v_init);
    p.fix_var(vars.v[h], b.v_final);
    p.fix_var(vars.a[0], -c.eval(b.v_init));
    p.fix_var(vars.a[h], -c.eval(b.v_final));
    for (j, name) in [(vars.a[0], "initial"), (vars.a[h], "terminal")] {
        let val = p.lower[j];
        if let Some((lo, hi)) = lim.accel {
            if val < lo || val > hi {
                log::warn!("{name} acceleration {val} violates the acceleration limits");
            }
        }
    }

    for i in 0..h {
        p.add_eq(
            format!("pos_{i}"),
            vec![(vars.x[i + 1], 1.0), (vars.x[i], -1.0), (vars.v[i], -dt)],
            0.0,
        );
        p.add_eq(
            format!("vel_{i}"),
            vec![(vars.v[i + 1], 1.0), (vars.v[i], -1.0), (vars.a[i], -dt)],
            0.0,
        );
        p.add_eq(
            format!("jerk_{i}"),
            vec![(vars.jerk[i], dt), (vars.a[i + 1], -1.0), (vars.a[i], 1.0)],
            0.0,
        );
    }

    // control limits with u eliminated; the end samples have u = 0
    let (ts, tc) = lower_resistance_bound(c, lim.v_max);
    for i in 1..h {
        for (k, (b1, b2)) in pwa.pieces().enumerate() {
            p.add_le(
                format!("umax_{i}_{k}"),
                vec![(vars.a[i], 1.0), (vars.v[i], b1)],
                lim.u_max - b2,
            );
        }
        p.add_ge(
            format!("umin_{i}"),
            vec![(vars.a[i], 1.0), (vars.v[i], ts)],
            lim.u_min - tc,
        );
    }

    if eco {
        for i in 0..h {
            for (k, (b1, b2)) in pwa.pieces().enumerate() {
                // z_i >= a_i + b1 v_i + b2
                p.add_le(
                    format!("epi_{i}_{k}"),
                    vec![(vars.a[i], 1.0), (vars.v[i], b1), (vars.z[i], -1.0)],
                    -b2,
                );
            }
        }
    }

    if let Some(s) = &spec.safety {
        for i in 0..=h {
            p.add_le(format!("gap_{i}"), vec![(vars.x[i], 1.0)], s.leader_x[i] - s.min_gap);
            if s.time_gap > 0.0 {
                p.add_le(
                    format!("tgap_{i}"),
                    vec![(vars.x[i], 1.0), (vars.v[i], s.time_gap)],
                    s.leader_x[i] + s.time_gap * s.leader_v[i],
                );
            }
        }
    }

    match strategy {
        StrategyKind::EcoPlus(_) => {
            for &z in &vars.z {
                p.add_linear(z, dt);
            }
        }
        StrategyKind::Vm => (0..h).for_each(|i| p.add_quadratic(vars.v[i], vars.v[i], 2.0 * dt)),
        StrategyKind::Jm => (0..h).for_each(|i| p.add_quadratic(vars.jerk[i], vars.jerk[i], 2.0 * dt)),
        StrategyKind::Am => (0..h).for_each(|i| p.add_quadratic(vars.a[i], vars.a[i], 2.0 * dt)),
        StrategyKind::DcSurrogate(cost) => {
            if cost.lin_a.len() < h || cost.lin_v.len() < h {
                return Err(Error::Dimension(format!(
                    "stage cost has {} / {} linear terms for {h} stages",
                    cost.lin_a.len(),
                    cost.lin_v.len()
                )));
            }
            let hs = cost.hessian;
            for i in 0..h {
                let (a, v) = (vars.a[i], vars.v[i]);
                p.add_quadratic(a, a, dt * hs[0][0]);
                p.add_quadratic(a, v, dt * hs[0][1]);
                p.add_quadratic(v, v, dt * hs[1][1]);
                p.add_linear(a, dt * cost.lin_a[i]);
                p.add_linear(v, dt * cost.lin_v[i]);
            }
            p.constant = cost.constant;
        }
    }

    Ok(BuiltProblem {
        program: p,
        vars,
        horizon: h,
        dt,
        strategy: strategy.clone(),
        pwa: pwa.clone(),
        warnings,
    })
}

/// Optimized trajectory with the diagnostics of the solve that produced it.
#[derive(Clone, Debug)]
pub struct SolutionBundle {
    pub trajectory: Trajectory<f64>,
    /// Objective reported by the solver.
    pub objective: f64,
    /// Objective recomputed from the trajectory alone.
    pub recomputed_objective: f64,
    /// Largest amount by which the recovered control leaves `[u_min, u_max]`.
    pub u_violation: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    pub residuals: Residuals,
}

/// Relative tolerance of the objective cross-check.
pub const OBJECTIVE_CHECK_TOL: f64 = 1e-8;

/// Objective of `strategy` evaluated on a trajectory. For the positive
/// control strategy the epigraph variables are replaced by their tight
/// value `max(0, a_i + pwa(v_i))`.
pub fn strategy_objective(strategy: &StrategyKind, pwa: &PwaSegments<f64>, traj: &Trajectory<f64>) -> f64 {
    let h = traj.horizon();
    let dt = traj.dt;
    let sum = |f: &dyn Fn(usize) -> f64| (0..h).map(f).sum::<f64>() * dt;
    match strategy {
        StrategyKind::EcoPlus(_) => sum(&|i| (traj.a[i] + pwa.eval_unchecked(traj.v[i])).max(0.0)),
        StrategyKind::Vm => sum(&|i| traj.v[i] * traj.v[i]),
        StrategyKind::Jm => sum(&|i| traj.jerk[i] * traj.jerk[i]),
        StrategyKind::Am => sum(&|i| traj.a[i] * traj.a[i]),
        StrategyKind::DcSurrogate(c) => {
            let hs = c.hessian;
            sum(&|i| {
                let (a, v) = (traj.a[i], traj.v[i]);
                0.5 * (hs[0][0] * a * a + 2.0 * hs[0][1] * a * v + hs[1][1] * v * v) + c.lin_a[i] * a + c.lin_v[i] * v
            }) + c.constant
        }
    }
}

/// Builds the trajectory from an optimal solver vector, recovers `u` and
/// cross-checks the objective.
pub fn extract_solution(
    built: &BuiltProblem,
    result: &SolveResult,
    coeffs: &ResistanceCoefficients<f64>,
    limits: &Limits<f64>,
) -> Result<SolutionBundle> {
    if result.status != SolveStatus::Optimal {
        return Err(Error::Solve {
            status: result.status,
            detail: result.detail.clone(),
        });
    }
    let n = built.program.num_vars();
    if result.x.len() != n {
        return Err(Error::Dimension(format!(
            "solution has {} entries, program has {n}",
            result.x.len()
        )));
    }
    let vm = &built.vars;
    let h = built.horizon;
    if vm.x.len() != h + 1 || vm.jerk.len() != h {
        return Err(Error::Dimension("variable map does not match horizon".into()));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&j| result.x[j]).collect::<Vec<_>>();
    let mut traj = Trajectory::zeros(h, built.dt);
    traj.x = pick(&vm.x);
    traj.v = pick(&vm.v);
    traj.a = pick(&vm.a);
    traj.jerk = pick(&vm.jerk);
    traj.u = recover_control_input(&traj, coeffs);

    let mut u_violation = 0.0f64;
    for &u in &traj.u[..] {
        u_violation = u_violation.max(u - limits.u_max).max(limits.u_min - u);
    }
    if u_violation > 0.0 {
        log::debug!("recovered control leaves its limits by {u_violation:.3e}");
    }

    let recomputed = strategy_objective(&built.strategy, &built.pwa, &traj);
    let scale = 1.0 + result.objective.abs().max(recomputed.abs());
    if (recomputed - result.objective).abs() > OBJECTIVE_CHECK_TOL * scale {
        return Err(Error::ObjectiveMismatch {
            solver: result.objective,
            recomputed,
        });
    }
    Ok(SolutionBundle {
        trajectory: traj,
        objective: result.objective,
        recomputed_objective: recomputed,
        u_violation: u_violation.max(0.0),
        status: result.status,
        iterations: result.iterations,
        solve_time: result.wall_time,
        residuals: result.residuals,
    })
}
