//! Travel-time sweeps, the leading-vehicle and comfort scenarios, and the
//! PWA fidelity study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::consumption::{relative_difference, ModelKind, VehicleModel};
use crate::dc::{dc_solve, fit_surrogate, DcOptions, QuadraticSurrogate};
use crate::dynamics::{
    derive_resistance_coefficients, validate_trajectory, BoundarySpec, Limits, ResistanceCoefficients, RoadSpec,
    SafetySpec,
};
use crate::error::{invalid, Error, Result};
use crate::problem::{build_problem, extract_solution, PwaMode, ScenarioSpec, SolutionBundle, StrategyKind};
use crate::pwa::{build_pwa, PwaSegments};
use crate::solver::{solve, SolveStatus, SolverOptions};
use crate::trajectory::{fmt_sig9, Trajectory};

/// Tolerance of every constraint audit.
pub const AUDIT_TOL: f64 = 1e-6;
/// Discrete differences below this count as flat in the shape check.
pub const SHAPE_NOISE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    EcoPlus,
    EcoPlusFine,
    Vm,
    Jm,
    Am,
    Dc,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::EcoPlus,
        Strategy::EcoPlusFine,
        Strategy::Vm,
        Strategy::Jm,
        Strategy::Am,
        Strategy::Dc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EcoPlus => "ecoplus",
            Strategy::EcoPlusFine => "ecoplus-fine",
            Strategy::Vm => "vm",
            Strategy::Jm => "jm",
            Strategy::Am => "am",
            Strategy::Dc => "dc",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioFamily {
    Single,
    Leading,
    Comfort,
}

impl std::str::FromStr for ScenarioFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(ScenarioFamily::Single),
            "leading" => Ok(ScenarioFamily::Leading),
            "comfort" => Ok(ScenarioFamily::Comfort),
            other => Err(Error::Parse(format!("unknown scenario family `{other}`"))),
        }
    }
}

/// Leader that cruises, brakes to a stop, waits, then accelerates to an exit
/// speed along an acceleration-minimizing profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderConfig {
    pub cruise_speed: f64,
    pub stop_time: f64,
    pub hold: f64,
    pub exit_speed: f64,
    pub exit_time: f64,
    /// Ego entry delay in s.
    pub entry_delay: f64,
    pub min_gap: f64,
    pub time_gap: f64,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 6.0,
            stop_time: 10.5,
            hold: 0.5,
            exit_speed: 8.0,
            exit_time: 21.0,
            entry_delay: 2.0,
            min_gap: 2.0,
            time_gap: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub family: ScenarioFamily,
    pub vehicle: VehicleModel<f64>,
    pub strategies: Vec<Strategy>,
    pub v_final: Vec<f64>,
    pub road: RoadSpec<f64>,
    pub v_init: f64,
    pub limits: Limits<f64>,
    pub dt: f64,
    /// First travel time; `None` searches for the first feasible one.
    pub tm_min: Option<f64>,
    pub tm_max: f64,
    pub tm_step: f64,
    pub segments: usize,
    pub fine_segments: usize,
    pub leader: LeaderConfig,
    pub dc: DcOptions,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Keep every optimized trajectory in the records.
    pub keep_trajectories: bool,
}

impl ExperimentConfig {
    /// Single-vehicle sweep with the default study parameters.
    pub fn single(model: ModelKind) -> Self {
        let limits = Limits::standard();
        Self {
            family: ScenarioFamily::Single,
            vehicle: VehicleModel::reference(model),
            strategies: vec![
                Strategy::EcoPlus,
                Strategy::Vm,
                Strategy::Jm,
                Strategy::Am,
                Strategy::Dc,
            ],
            v_final: vec![6.0, 8.0, 10.0],
            road: RoadSpec::flat(100.0),
            v_init: 8.0,
            limits,
            dt: 0.1,
            tm_min: None,
            tm_max: 30.0,
            tm_step: 0.1,
            segments: 5,
            fine_segments: 500,
            leader: LeaderConfig::default(),
            dc: DcOptions::for_limits(limits.u_min, limits.u_max, limits.v_max),
            solver: SolverOptions::default(),
            seed: 0,
            keep_trajectories: false,
        }
    }

    pub fn leading(model: ModelKind) -> Self {
        Self {
            family: ScenarioFamily::Leading,
            strategies: vec![Strategy::EcoPlus, Strategy::Vm, Strategy::Dc],
            v_final: vec![10.0],
            ..Self::single(model)
        }
    }

    pub fn comfort(model: ModelKind) -> Self {
        Self {
            family: ScenarioFamily::Comfort,
            strategies: vec![Strategy::EcoPlus, Strategy::Vm, Strategy::Dc],
            v_final: vec![8.0],
            limits: Limits::comfort(),
            ..Self::single(model)
        }
    }

    pub fn model(&self) -> ModelKind {
        self.vehicle.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.road.validate()?;
        self.limits.validate()?;
        self.dc.validate()?;
        self.solver.validate()?;
        if self.strategies.is_empty() || self.v_final.is_empty() {
            return Err(invalid("experiment", "need at least one strategy and v_final"));
        }
        if !(self.tm_step > 0.0 && self.dt > 0.0) {
            return Err(invalid("experiment.tm_step", "steps must be positive"));
        }
        if let Some(lo) = self.tm_min {
            if !(lo > 0.0 && lo <= self.tm_max) {
                return Err(invalid("experiment.tm_min", "need 0 < tm_min <= tm_max"));
            }
        }
        if self.segments == 0 || self.fine_segments == 0 {
            return Err(invalid("pwa.segments", "need at least one segment"));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Result<ResistanceCoefficients<f64>> {
        derive_resistance_coefficients(&self.vehicle, &self.road)
    }
}

/// Worst audit outcome of one solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Audit {
    pub passed: bool,
    pub max_violation: f64,
    pub worst: String,
    pub u_violation: f64,
    /// Smallest leader-ego spacing, when a leader is present.
    pub min_spacing: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Record {
    pub tm: f64,
    pub strategy: Strategy,
    pub model: ModelKind,
    pub status: SolveStatus,
    pub consumption: Option<f64>,
    pub objective: Option<f64>,
    pub solve_ms: f64,
    pub audit: Option<Audit>,
    pub trajectory: Option<Trajectory<f64>>,
    pub detail: String,
}

impl Record {
    pub fn feasible(&self) -> bool {
        self.status == SolveStatus::Optimal && self.consumption.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct TradeoffCurve {
    pub family: ScenarioFamily,
    pub model: ModelKind,
    pub v_final: f64,
    pub records: Vec<Record>,
}

impl TradeoffCurve {
    pub fn strategy(&self, s: Strategy) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.strategy == s)
    }

    /// `(tm, consumption)` of the feasible points of a strategy.
    pub fn points(&self, s: Strategy) -> Vec<(f64, f64)> {
        self.strategy(s)
            .filter(|r| r.feasible())
            .map(|r| (r.tm, r.consumption.expect("feasible record")))
            .collect()
    }

    /// Writes `tm,strategy,model,consumption,objective,status,solve_ms`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tm,strategy,model,consumption,objective,status,solve_ms")?;
        let opt = |x: Option<f64>| x.map(fmt_sig9).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_sig9(r.tm),
                r.strategy,
                r.model,
                opt(r.consumption),
                opt(r.objective),
                r.status,
                fmt_sig9(r.solve_ms)
            )?;
        }
        Ok(())
    }

    /// Mean of `relative_difference(other, base)` over the travel times where
    /// both are feasible, with the number of such points.
    pub fn mean_relative_difference(&self, other: Strategy, base: Strategy) -> Option<(f64, usize)> {
        let a: BTreeMap<u64, f64> = self.points(other).into_iter().map(|(t, c)| (tm_key(t), c)).collect();
        let diffs: Vec<f64> = self
            .points(base)
            .into_iter()
            .filter_map(|(t, c)| a.get(&tm_key(t)).map(|&o| relative_difference(o, c)))
            .collect();
        if diffs.is_empty() {
            None
        } else {
            Some((diffs.iter().sum::<f64>() / diffs.len() as f64, diffs.len()))
        }
    }

    /// Travel times where `better` consumes more than `worse` beyond `tol`
    /// (relative to the larger magnitude).
    pub fn dominance_exceptions(&self, better: Strategy, worse: Strategy, tol: f64) -> Vec<f64> {
        let w: BTreeMap<u64, f64> = self.points(worse).into_iter().map(|(t, c)| (tm_key(t), c)).collect();
        self.points(better)
            .into_iter()
            .filter(|&(t, c)| {
                w.get(&tm_key(t))
                    .is_some_and(|&o| c - o > tol * c.abs().max(o.abs()).max(1e-12))
            })
            .map(|(t, _)| t)
            .collect()
    }

    /// Infeasible travel times that lie above a feasible one.
    pub fn feasibility_gaps(&self, s: Strategy) -> Vec<f64> {
        let mut seen = false;
        let mut gaps = Vec::new();
        for r in self.strategy(s) {
            if r.feasible() {
                seen = true;
            } else if seen {
                gaps.push(r.tm);
            }
        }
        gaps
    }
}

fn tm_key(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

/// Number of sign changes in the discrete differences of `ys`, ignoring
/// differences with magnitude at most `noise`.
pub fn sign_changes(ys: &[f64], noise: f64) -> usize {
    let signs: Vec<bool> = ys
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > noise)
        .map(|d| d > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// At most one sign change of the discrete differences beyond `noise`.
pub fn is_unimodal(ys: &[f64], noise: f64) -> bool {
    sign_changes(ys, noise) <= 1
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ECOPLUS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("ECOPLUS_THREADS=`{v}` is not a count")))?;
        if n > 0 {
            b = b.num_threads(n);
        }
    }
    b.build().map_err(|e| Error::Parse(format!("thread pool: {e}")))
}

/// Shared, read-only inputs of one sweep.
struct SweepContext {
    cfg: ExperimentConfig,
    coeffs: ResistanceCoefficients<f64>,
    pwa: PwaSegments<f64>,
    fine: PwaSegments<f64>,
    surrogate: Option<QuadraticSurrogate>,
    leader: Option<Trajectory<f64>>,
}

impl SweepContext {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let coeffs = cfg.coefficients()?;
        let v_max = cfg.limits.v_max;
        let pwa = build_pwa(&coeffs, v_max, cfg.segments)?;
        let fine = build_pwa(&coeffs, v_max, cfg.fine_segments)?;
        let surrogate = if cfg.strategies.contains(&Strategy::Dc) {
            Some(fit_surrogate(
                &cfg.vehicle,
                &coeffs,
                cfg.road.slope,
                cfg.limits.u_max,
                &cfg.dc,
            )?)
        } else {
            None
        };
        let leader = match cfg.family {
            ScenarioFamily::Leading => Some(build_leading_profile(cfg)?),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            coeffs,
            pwa,
            fine,
            surrogate,
            leader,
        })
    }

    fn spec(&self, v_final: f64, tm: f64) -> Result<ScenarioSpec> {
        let boundary = BoundarySpec {
            v_init: self.cfg.v_init,
            v_final,
            travel_time: tm,
        };
        let mut spec = ScenarioSpec {
            road: self.cfg.road,
            boundary,
            limits: self.cfg.limits,
            coeffs: self.coeffs,
            dt: self.cfg.dt,
            safety: None,
            free_terminal_position: false,
        };
        if let Some(leader) = &self.leader {
            let l = &self.cfg.leader;
            spec.safety = Some(SafetySpec::from_leader(
                leader,
                l.entry_delay,
                spec.horizon(),
                l.min_gap,
                l.time_gap,
            )?);
        }
        Ok(spec)
    }

    fn audit(&self, spec: &ScenarioSpec, sol: &SolutionBundle) -> Result<Audit> {
        let rep = validate_trajectory(
            &sol.trajectory,
            &spec.road,
            &spec.boundary,
            &spec.limits,
            spec.safety.as_ref(),
            &spec.coeffs,
            AUDIT_TOL,
        )?;
        let worst = rep
            .checks
            .iter()
            .max_by(|a, b| a.max_violation.total_cmp(&b.max_violation))
            .map(|c| c.kind.name().to_string())
            .unwrap_or_default();
        let min_spacing = spec.safety.as_ref().map(|s| {
            (0..sol.trajectory.x.len())
                .map(|i| s.leader_x[i] - sol.trajectory.x[i])
                .fold(f64::INFINITY, f64::min)
        });
        Ok(Audit {
            passed: rep.passed() && sol.u_violation <= AUDIT_TOL,
            max_violation: rep.max_violation(),
            worst,
            u_violation: sol.u_violation,
            min_spacing,
        })
    }

    fn record(
        &self,
        tm: f64,
        strategy: Strategy,
        spec: &ScenarioSpec,
        out: Result<(SolutionBundle, f64)>,
        ms: f64,
    ) -> Record {
        let model = self.cfg.model();
        match out {
            Ok((sol, objective)) => {
                let consumption = self
                    .cfg
                    .vehicle
                    .evaluate(&sol.trajectory, spec.road.slope)
                    .map(|r| r.total);
                let audit = self.audit(spec, &sol);
                let detail = match (&consumption, &audit) {
                    (Err(e), _) | (_, Err(e)) => e.to_string(),
                    _ => String::new(),
                };
                Record {
                    tm,
                    strategy,
                    model,
                    status: sol.status,
                    consumption: consumption.ok(),
                    objective: Some(objective),
                    solve_ms: ms,
                    audit: audit.ok(),
                    trajectory: self.cfg.keep_trajectories.then(|| sol.trajectory.clone()),
                    detail,
                }
            }
            Err(e) => {
                let status = match &e {
                    Error::Solve { status, .. } => *status,
                    _ => SolveStatus::NumericalFailure,
                };
                if status != SolveStatus::Infeasible {
                    log::warn!("{strategy} at tm={tm:.1}: {e}");
                }
                Record {
                    tm,
                    strategy,
                    model,
                    status,
                    consumption: None,
                    objective: None,
                    solve_ms: ms,
                    audit: None,
                    trajectory: None,
                    detail: e.to_string(),
                }
            }
        }
    }

    fn solve_direct(&self, spec: &ScenarioSpec, kind: StrategyKind, pwa: &PwaSegments<f64>) -> Result<SolutionBundle> {
        let built = build_problem(spec, &kind, pwa)?;
        let res = solve(&built.program, &self.cfg.solver)?;
        extract_solution(&built, &res, &spec.coeffs, &spec.limits)
    }

    /// Every configured strategy at one travel time.
    fn run_point(&self, v_final: f64, tm: f64) -> Vec<Record> {
        let spec = match self.spec(v_final, tm) {
            Ok(s) => s,
            Err(e) => {
                return self
                    .cfg
                    .strategies
                    .iter()
                    .map(|&s| {
                        self.record(
                            tm,
                            s,
                            &ScenarioSpec::placeholder(),
                            Err(invalid("scenario", e.to_string())),
                            0.0,
                        )
                    })
                    .collect()
            }
        };
        let mut vm_traj: Option<Trajectory<f64>> = None;
        let mut order = self.cfg.strategies.clone();
        // the convex-concave procedure starts from the VM solution
        order.sort_by_key(|&s| s == Strategy::Dc);
        let mut out = Vec::with_capacity(order.len());
        for s in order {
            let t0 = Instant::now();
            let res: Result<(SolutionBundle, f64)> = match s {
                Strategy::EcoPlus => self
                    .solve_direct(&spec, StrategyKind::EcoPlus(PwaMode::Pwa(self.cfg.segments)), &self.pwa)
                    .map(|b| {
                        let o = b.objective;
                        (b, o)
                    }),
                Strategy::EcoPlusFine => self
                    .solve_direct(
                        &spec,
                        StrategyKind::EcoPlus(PwaMode::FineOracle(self.cfg.fine_segments)),
                        &self.fine,
                    )
                    .map(|b| {
                        let o = b.objective;
                        (b, o)
                    }),
                Strategy::Vm | Strategy::Jm | Strategy::Am => {
                    let kind = match s {
                        Strategy::Vm => StrategyKind::Vm,
                        Strategy::Jm => StrategyKind::Jm,
                        _ => StrategyKind::Am,
                    };
                    let r = self.solve_direct(&spec, kind, &self.pwa).map(|b| {
                        let o = b.objective;
                        (b, o)
                    });
                    if s == Strategy::Vm {
                        if let Ok((b, _)) = &r {
                            vm_traj = Some(b.trajectory.clone());
                        }
                    }
                    r
                }
                Strategy::Dc => {
                    let sur = self.surrogate.as_ref().expect("surrogate fitted for dc");
                    dc_solve(&spec, sur, &self.pwa, &self.cfg.dc, &self.cfg.solver, vm_traj.as_ref()).map(|r| {
                        let o = sur.trajectory_value(&r.solution.trajectory);
                        (r.solution, o)
                    })
                }
            };
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            out.push(self.record(tm, s, &spec, res, ms));
        }
        out
    }

    /// Smallest travel time on the grid with a feasible VM program.
    fn first_feasible(&self, v_final: f64) -> Result<f64> {
        let step = self.cfg.tm_step;
        let lower = (self.cfg.road.length / self.cfg.limits.v_max).max(self.cfg.dt);
        let mut k = (lower / step).floor().max(1.0) as usize;
        loop {
            let tm = k as f64 * step;
            if tm > self.cfg.tm_max + 1e-9 {
                return Err(invalid("experiment", "no feasible travel time in range"));
            }
            let spec = self.spec(v_final, tm)?;
            let built = build_problem(&spec, &StrategyKind::Vm, &self.pwa)?;
            if solve(&built.program, &self.cfg.solver)?.is_optimal() {
                return Ok(tm);
            }
            k += 1;
        }
    }

    fn grid(&self, v_final: f64) -> Result<Vec<f64>> {
        let step = self.cfg.tm_step;
        let start = match self.cfg.tm_min {
            Some(t) => t,
            None => self.first_feasible(v_final)?,
        };
        let k0 = (start / step).round() as usize;
        let k1 = ((self.cfg.tm_max + 1e-9) / step).floor() as usize;
        Ok((k0.max(1)..=k1).map(|k| k as f64 * step).collect())
    }
}

impl ScenarioSpec {
    fn placeholder() -> Self {
        ScenarioSpec {
            road: RoadSpec::flat(1.0),
            boundary: BoundarySpec {
                v_init: 0.0,
                v_final: 0.0,
                travel_time: 1.0,
            },
            limits: Limits::standard(),
            coeffs: ResistanceCoefficients {
                d1: 0.0,
                d2: 0.0,
                d3: 1.0,
            },
            dt: 1.0,
            safety: None,
            free_terminal_position: false,
        }
    }
}

/// Runs every configured strategy over the travel-time grid, one curve per
/// terminal speed.
pub fn tradeoff_sweep(cfg: &ExperimentConfig) -> Result<Vec<TradeoffCurve>> {
    let ctx = SweepContext::new(cfg)?;
    let pool = thread_pool()?;
    let mut curves = Vec::new();
    for &vd in &cfg.v_final {
        let grid = ctx.grid(vd)?;
        let mut records: Vec<Record> =
            pool.install(|| grid.par_iter().flat_map_iter(|&tm| ctx.run_point(vd, tm)).collect());
        records.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.tm.total_cmp(&b.tm)));
        let curve = TradeoffCurve {
            family: cfg.family,
            model: cfg.model(),
            v_final: vd,
            records,
        };
        if curve.records.iter().all(|r| !r.feasible()) {
            log::warn!("no feasible point for v_final = {vd}");
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Kinematic resistance of the leader: drag only, so that standstill is an
/// equilibrium.
fn leader_coefficients(cfg: &ExperimentConfig) -> Result<ResistanceCoefficients<f64>> {
    let c = cfg.coefficients()?;
    ResistanceCoefficients::new(0.0, 0.0, c.d3)
}

/// Leader trajectory on its own clock: cruise, constant-deceleration stop,
/// hold, acceleration-minimizing launch to the exit speed.
pub fn build_leading_profile(cfg: &ExperimentConfig) -> Result<Trajectory<f64>> {
    let l = &cfg.leader;
    let dt = cfg.dt;
    let coeffs = leader_coefficients(cfg)?;
    let steps = |t: f64| {
        let k = (t / dt).round();
        if (k * dt - t).abs() > 1e-9 {
            Err(invalid("leader", "event times must lie on the time grid"))
        } else {
            Ok(k as usize)
        }
    };
    let stop = steps(l.stop_time)?;
    let launch = steps(l.stop_time + l.hold)?;
    let exit = steps(l.exit_time)?;
    if !(launch < exit) || !(l.cruise_speed > 0.0) {
        return Err(invalid("leader", "need cruise > 0 and launch before exit"));
    }
    // fewest braking steps whose constant deceleration respects u_min
    let mut brake = 1usize;
    while -l.cruise_speed / (brake as f64 * dt) < cfg.limits.u_min {
        brake += 1;
    }
    if brake > stop {
        return Err(invalid("leader", "cannot stop by the requested time"));
    }
    let decel = -l.cruise_speed / (brake as f64 * dt);

    let mut tr = Trajectory::zeros(exit, dt);
    for i in 0..launch {
        tr.a[i] = if i + brake >= stop && i < stop { decel } else { 0.0 };
        tr.v[i + 1] = if i + 1 >= stop { 0.0 } else { tr.v[i] + dt * tr.a[i] };
        if i == 0 {
            tr.v[0] = l.cruise_speed;
            tr.v[1] = tr.v[0] + dt * tr.a[0];
        }
        tr.x[i + 1] = tr.x[i] + dt * tr.v[i];
    }

    let seg = exit - launch;
    let spec = ScenarioSpec {
        road: RoadSpec::flat(1.0),
        boundary: BoundarySpec {
            v_init: 0.0,
            v_final: l.exit_speed,
            travel_time: seg as f64 * dt,
        },
        limits: cfg.limits,
        coeffs,
        dt,
        safety: None,
        free_terminal_position: true,
    };
    let pwa = build_pwa(&coeffs, cfg.limits.v_max, cfg.segments)?;
    let built = build_problem(&spec, &StrategyKind::Am, &pwa)?;
    let res = solve(&built.program, &cfg.solver)?;
    if !res.is_optimal() {
        return Err(Error::Solve {
            status: res.status,
            detail: format!("leader launch segment: {}", res.detail),
        });
    }
    let sol = extract_solution(&built, &res, &coeffs, &cfg.limits)?;
    let x0 = tr.x[launch];
    for k in 0..=seg {
        let i = launch + k;
        tr.x[i] = x0 + sol.trajectory.x[k];
        tr.v[i] = sol.trajectory.v[k];
        tr.a[i] = sol.trajectory.a[k];
    }
    for i in 0..=exit {
        tr.u[i] = tr.a[i] + coeffs.eval(tr.v[i]);
    }
    tr.refresh_jerk();
    Ok(tr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseDifference {
    pub v_final: f64,
    pub strategy: Strategy,
    pub baseline: Strategy,
    pub mean_percent: f64,
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub family: ScenarioFamily,
    pub model: ModelKind,
    pub curves: Vec<TradeoffCurve>,
    pub differences: Vec<PairwiseDifference>,
    /// Failed audits: (v_final, tm, strategy, worst constraint).
    pub audit_failures: Vec<(f64, f64, Strategy, String)>,
    /// Infeasible points above feasible ones: (v_final, strategy, tm).
    pub feasibility_gaps: Vec<(f64, Strategy, f64)>,
    /// Curves that are not unimodal: (v_final, strategy).
    pub non_unimodal: Vec<(f64, Strategy)>,
}

impl ScenarioReport {
    pub fn difference(&self, v_final: f64, strategy: Strategy, baseline: Strategy) -> Option<&PairwiseDifference> {
        self.differences
            .iter()
            .find(|d| (d.v_final - v_final).abs() < 1e-9 && d.strategy == strategy && d.baseline == baseline)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {:?}, model {}", self.family, self.model);
        let _ = writeln!(
            s,
            "{:>6} {:>14} {:>14} {:>10} {:>7}",
            "v_d", "strategy", "baseline", "mean %", "points"
        );
        for d in &self.differences {
            let _ = writeln!(
                s,
                "{:>6} {:>14} {:>14} {:>10.3} {:>7}",
                d.v_final, d.strategy, d.baseline, d.mean_percent, d.points
            );
        }
        for c in &self.curves {
            for st in Strategy::ALL {
                let n = c.strategy(st).count();
                if n > 0 {
                    let ok = c.strategy(st).filter(|r| r.feasible()).count();
                    let _ = writeln!(s, "v_d={} {st}: {ok}/{n} feasible", c.v_final);
                }
            }
        }
        let _ = writeln!(s, "audit failures: {}", self.audit_failures.len());
        for (vd, tm, st, w) in self.audit_failures.iter().take(10) {
            let _ = writeln!(s, "  v_d={vd} tm={tm:.1} {st}: {w}");
        }
        let _ = writeln!(s, "feasibility gaps: {}", self.feasibility_gaps.len());
        let _ = writeln!(s, "non-unimodal curves: {:?}", self.non_unimodal);
        s
    }
}

/// Sweep plus the derived comparisons. Differences are taken against the
/// first strategy in the configuration.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioReport> {
    let curves = tradeoff_sweep(cfg)?;
    let base = cfg.strategies[0];
    let mut differences = Vec::new();
    let mut audit_failures = Vec::new();
    let mut feasibility_gaps = Vec::new();
    let mut non_unimodal = Vec::new();
    for c in &curves {
        for &s in &cfg.strategies {
            if s != base {
                if let Some((mean, n)) = c.mean_relative_difference(s, base) {
                    differences.push(PairwiseDifference {
                        v_final: c.v_final,
                        strategy: s,
                        baseline: base,
                        mean_percent: mean,
                        points: n,
                    });
                }
            }
            for tm in c.feasibility_gaps(s) {
                feasibility_gaps.push((c.v_final, s, tm));
            }
            let ys: Vec<f64> = c.points(s).into_iter().map(|(_, y)| y).collect();
            if !is_unimodal(&ys, SHAPE_NOISE) {
                non_unimodal.push((c.v_final, s));
            }
        }
        for r in &c.records {
            if let Some(a) = &r.audit {
                if !a.passed {
                    audit_failures.push((
                        c.v_final,
                        r.tm,
                        r.strategy,
                        format!("{} {:.3e}", a.worst, a.max_violation),
                    ));
                }
            }
        }
    }
    Ok(ScenarioReport {
        family: cfg.family,
        model: cfg.model(),
        curves,
        differences,
        audit_failures,
        feasibility_gaps,
        non_unimodal,
    })
}

/// Objective and timing of the coarse and fine segmentations at one
/// travel time.
#[derive(Clone, Debug, PartialEq)]
pub struct PwaStudyPoint {
    pub tm: f64,
    pub objective: f64,
    pub fine_objective: f64,
    pub ms: f64,
    pub fine_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaStudy {
    pub v_final: f64,
    pub points: Vec<PwaStudyPoint>,
    pub mean_relative_percent: f64,
    pub mean_ms: f64,
    pub mean_fine_ms: f64,
}

impl PwaStudy {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tm,objective,fine_objective,solve_ms,fine_solve_ms")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig9(p.tm),
                fmt_sig9(p.objective),
                fmt_sig9(p.fine_objective),
                fmt_sig9(p.ms),
                fmt_sig9(p.fine_ms)
            )?;
        }
        Ok(())
    }
}

/// Coarse against fine PWA objectives of the positive-control program for
/// the first terminal speed of `cfg`. Solves run one at a time so that the
/// timings are comparable.
pub fn pwa_study(cfg: &ExperimentConfig) -> Result<PwaStudy> {
    let mut c = cfg.clone();
    c.strategies = vec![Strategy::EcoPlus, Strategy::EcoPlusFine];
    c.family = ScenarioFamily::Single;
    let ctx = SweepContext::new(&c)?;
    let vd = c.v_final[0];
    let mut points = Vec::new();
    for tm in ctx.grid(vd)? {
        let spec = ctx.spec(vd, tm)?;
        let run = |kind: StrategyKind, pwa: &PwaSegments<f64>| -> Result<(f64, f64)> {
            let built = build_problem(&spec, &kind, pwa)?;
            let t0 = Instant::now();
            let res = solve(&built.program, &c.solver)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            Ok((res.into_optimal()?.objective, ms))
        };
        let coarse = run(StrategyKind::EcoPlus(PwaMode::Pwa(c.segments)), &ctx.pwa);
        let fine = run(StrategyKind::EcoPlus(PwaMode::FineOracle(c.fine_segments)), &ctx.fine);
        if let (Ok((o, ms)), Ok((fo, fms))) = (coarse, fine) {
            points.push(PwaStudyPoint {
                tm,
                objective: o,
                fine_objective: fo,
                ms,
                fine_ms: fms,
            });
        }
    }
    if points.is_empty() {
        return Err(invalid("pwa-study", "no travel time solved with both segmentations"));
    }
    let n = points.len() as f64;
    Ok(PwaStudy {
        v_final: vd,
        mean_relative_percent: points
            .iter()
            .map(|p| relative_difference(p.objective, p.fine_objective))
            .sum::<f64>()
            / n,
        mean_ms: points.iter().map(|p| p.ms).sum::<f64>() / n,
        mean_fine_ms: points.iter().map(|p| p.fine_ms).sum::<f64>() / n,
        points,
    })
}

/// Solves a single travel time with one strategy.
pub fn solve_single(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    v_final: f64,
    tm: f64,
) -> Result<(ScenarioSpec, Record)> {
    let mut c = cfg.clone();
    c.strategies = if strategy == Strategy::Dc {
        vec![Strategy::Vm, Strategy::Dc]
    } else {
        vec![strategy]
    };
    c.keep_trajectories = true;
    let ctx = SweepContext::new(&c)?;
    let spec = ctx.spec(v_final, tm)?;
    let rec = ctx
        .run_point(v_final, tm)
        .into_iter()
        .find(|r| r.strategy == strategy)
        .expect("requested strategy was run");
    Ok((spec, rec))
}

/// Scenario definition used by a sweep point, for re-validation.
pub fn scenario_spec(cfg: &ExperimentConfig, v_final: f64, tm: f64) -> Result<ScenarioSpec> {
    let mut c = cfg.clone();
    c.strategies = vec![Strategy::Vm];
    SweepContext::new(&c)?.spec(v_final, tm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("nls".parse::<Strategy>().is_err());
    }

    #[test]
    fn unimodality_check() {
        assert!(is_unimodal(&[5.0, 3.0, 2.0, 2.5, 4.0], 1e-6));
        assert!(is_unimodal(&[1.0, 2.0, 3.0], 1e-6));
        assert!(!is_unimodal(&[5.0, 3.0, 4.0, 3.5, 6.0], 1e-6));
        assert!(!is_unimodal(&[5.0, 3.0, 4.0, 3.0], 1e-6));
        assert!(is_unimodal(&[5.0, 3.0, 3.0 + 1e-9, 3.0, 4.0], 1e-6));
        assert_eq!(sign_changes(&[5.0, 3.0, 4.0, 3.5, 6.0], 1e-6), 3);
    }

    #[test]
    fn leader_profile_matches_event_times() {
        let cfg = ExperimentConfig::leading(ModelKind::Cpem);
        let tr = build_leading_profile(&cfg).unwrap();
        let at = |t: f64| tr.v[(t / cfg.dt).round() as usize];
        assert_eq!(at(0.0), 6.0);
        assert!(at(10.5).abs() < 1e-12);
        assert!(at(10.6).abs() < 1e-12);
        assert!((at(21.0) - 8.0).abs() < 1e-9);
        assert!(tr.v.iter().all(|&v| v >= -1e-9));
        assert!(tr.x.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn single_point_sweep() {
        let mut cfg = ExperimentConfig::single(ModelKind::Cpem);
        cfg.v_final = vec![8.0];
        cfg.tm_min = Some(18.0);
        cfg.tm_max = 18.0;
        cfg.strategies = vec![Strategy::EcoPlus, Strategy::Vm, Strategy::Dc];
        let curves = tradeoff_sweep(&cfg).unwrap();
        assert_eq!(curves[0].records.len(), 3);
        for r in &curves[0].records {
            assert!(r.feasible(), "{}: {}", r.strategy, r.detail);
            assert!(r.audit.as_ref().unwrap().passed);
        }
        let mut buf = Vec::new();
        curves[0].write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tm,strategy,model,consumption,objective,status,solve_ms\n18,ecoplus,cpem,"));
    }
}
