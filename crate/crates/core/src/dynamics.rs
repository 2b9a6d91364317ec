//! Third-order longitudinal dynamics: resistance coefficients, Euler
//! rollout, control recovery and feasibility auditing.

use crate::consumption::VehicleModel;
use crate::error::{invalid, Error, Result};
use crate::scalar::{Scalar, GRAVITY};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoadSpec<T: Scalar> {
    /// Segment length in m.
    pub length: T,
    /// Constant road slope in rad.
    pub slope: T,
    pub gravity: T,
}

impl<T: Scalar> RoadSpec<T> {
    pub fn flat(length: T) -> Self {
        Self {
            length,
            slope: T::zero(),
            gravity: T::lit(GRAVITY),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > T::zero()) {
            return Err(invalid("road.length", "must be positive"));
        }
        if !(self.slope.abs() < T::lit(std::f64::consts::FRAC_PI_2)) {
            return Err(invalid("road.slope", "must satisfy |slope| < pi/2"));
        }
        if !(self.gravity > T::zero()) {
            return Err(invalid("road.gravity", "must be positive"));
        }
        Ok(())
    }
}

/// Entry/exit speeds and imposed travel time. Positions are `0` and the
/// road length; the control input is zero at both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySpec<T: Scalar> {
    pub v_init: T,
    pub v_final: T,
    pub travel_time: T,
}

impl<T: Scalar> BoundarySpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_init >= T::zero()) {
            return Err(invalid("boundary.v_init", "must be non-negative"));
        }
        if !(self.v_final >= T::zero()) {
            return Err(invalid("boundary.v_final", "must be non-negative"));
        }
        if !(self.travel_time > T::zero()) {
            return Err(invalid("boundary.travel_time", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits<T: Scalar> {
    pub v_max: T,
    pub u_min: T,
    pub u_max: T,
    pub j_min: T,
    pub j_max: T,
    /// Acceleration bounds, used only by the comfort scenario.
    pub accel: Option<(T, T)>,
}

impl<T: Scalar> Limits<T> {
    /// Default actuator limits of the intersection-approach study.
    pub fn standard() -> Self {
        Self {
            v_max: T::lit(15.0),
            u_min: T::lit(-3.5),
            u_max: T::lit(2.5),
            j_min: T::lit(-10.0),
            j_max: T::lit(10.0),
            accel: None,
        }
    }

    /// Tight jerk and acceleration limits for passenger comfort.
    pub fn comfort() -> Self {
        Self {
            j_min: T::lit(-1.0),
            j_max: T::lit(1.0),
            accel: Some((T::lit(-1.25), T::lit(1.25))),
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > T::zero()) {
            return Err(invalid("limits.v_max", "must be positive"));
        }
        if !(self.u_min < T::zero() && T::zero() < self.u_max) {
            return Err(invalid("limits.u", "need u_min < 0 < u_max"));
        }
        if !(self.j_min < T::zero() && T::zero() < self.j_max) {
            return Err(invalid("limits.jerk", "need j_min < 0 < j_max"));
        }
        if let Some((lo, hi)) = self.accel {
            if !(lo < T::zero() && T::zero() < hi) {
                return Err(invalid("limits.accel", "need a_min < 0 < a_max"));
            }
        }
        Ok(())
    }
}

/// Equivalent resistive deceleration `a_r(v) = d1 + d2 v + d3 v^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResistanceCoefficients<T: Scalar> {
    pub d1: T,
    pub d2: T,
    pub d3: T,
}

impl<T: Scalar> ResistanceCoefficients<T> {
    /// Checked constructor; `d3` must be positive for the convex
    /// reformulation to hold.
    pub fn new(d1: T, d2: T, d3: T) -> Result<Self> {
        if !(d3 > T::zero()) {
            return Err(Error::NonConvexResistance(d3.to_f64_lossy()));
        }
        Ok(Self { d1, d2, d3 })
    }

    #[inline]
    pub fn eval(&self, v: T) -> T {
        self.d1 + v * (self.d2 + v * self.d3)
    }

    #[inline]
    pub fn slope_at(&self, v: T) -> T {
        self.d2 + T::lit(2.0) * self.d3 * v
    }

    pub fn to_f64(&self) -> ResistanceCoefficients<f64> {
        ResistanceCoefficients {
            d1: self.d1.to_f64_lossy(),
            d2: self.d2.to_f64_lossy(),
            d3: self.d3.to_f64_lossy(),
        }
    }
}

/// Leader trajectory sampled on the ego time grid plus spacing rules.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetySpec<T: Scalar> {
    pub leader_x: Vec<T>,
    pub leader_v: Vec<T>,
    /// Minimum bumper gap in m.
    pub min_gap: T,
    /// Time gap in s applied to the closing speed.
    pub time_gap: T,
    /// Ego entry delay relative to the leader's clock, in s.
    pub entry_delay: T,
}

impl<T: Scalar> SafetySpec<T> {
    /// Samples `leader` (on its own clock, same step) at ego times
    /// `entry_delay + i dt` for `i = 0..=horizon`. Beyond the end of the
    /// leader's record it continues at its final speed.
    pub fn from_leader(
        leader: &Trajectory<T>,
        entry_delay: T,
        horizon: usize,
        min_gap: T,
        time_gap: T,
    ) -> Result<Self> {
        leader.check_shape()?;
        let dt = leader.dt;
        let shift = entry_delay / dt;
        let shift_steps = shift.round();
        if (shift - shift_steps).abs() > T::lit(1e-9) * shift.abs().max(T::one()) {
            return Err(invalid("safety.entry_delay", "must be a multiple of the time step"));
        }
        let shift_steps = shift_steps.to_f64_lossy().max(0.0) as usize;
        let last = leader.horizon();
        let mut leader_x = Vec::with_capacity(horizon + 1);
        let mut leader_v = Vec::with_capacity(horizon + 1);
        for i in 0..=horizon {
            let k = i + shift_steps;
            if k <= last {
                leader_x.push(leader.x[k]);
                leader_v.push(leader.v[k]);
            } else {
                let extra = T::lit((k - last) as f64) * dt;
                leader_x.push(leader.x[last] + leader.v[last] * extra);
                leader_v.push(leader.v[last]);
            }
        }
        let spec = Self {
            leader_x,
            leader_v,
            min_gap,
            time_gap,
            entry_delay,
        };
        spec.validate(horizon)?;
        Ok(spec)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.min_gap > T::zero()) {
            return Err(invalid("safety.min_gap", "must be positive"));
        }
        if !(self.time_gap >= T::zero()) {
            return Err(invalid("safety.time_gap", "must be non-negative"));
        }
        if self.leader_x.len() < horizon + 1 || self.leader_v.len() < horizon + 1 {
            return Err(invalid(
                "safety.leader",
                format!(
                    "leader covers {} samples, horizon needs {}",
                    self.leader_x.len().min(self.leader_v.len()),
                    horizon + 1
                ),
            ));
        }
        Ok(())
    }
}

/// Equivalent deceleration coefficients for a vehicle model on a road.
pub fn derive_resistance_coefficients<T: Scalar>(
    model: &VehicleModel<T>,
    road: &RoadSpec<T>,
) -> Result<ResistanceCoefficients<T>> {
    road.validate()?;
    let g = road.gravity;
    let (cos, sin) = (road.slope.cos(), road.slope.sin());
    let two = T::lit(2.0);
    let (d1, d2, d3) = match model {
        VehicleModel::Kmmk(p) => {
            if !(p.mass > T::zero()) {
                return Err(invalid("kmmk.mass", "must be positive"));
            }
            (
                p.mu * g * cos + g * sin,
                T::zero(),
                p.c_d * p.rho * p.area / (two * p.mass),
            )
        }
        VehicleModel::Cpem(p) => {
            if !(p.mass > T::zero()) {
                return Err(invalid("cpem.mass", "must be positive"));
            }
            let roll = g * cos * p.c_r / T::lit(1000.0);
            (
                roll * p.c2 + g * sin,
                roll * p.c1,
                p.rho * p.area * p.c_d / (two * p.mass),
            )
        }
    };
    ResistanceCoefficients::new(d1, d2, d3)
}

/// Forward-Euler simulation from the entry state driven by `u`
/// (`H + 1` samples).
pub fn rollout<T: Scalar>(
    u: &[T],
    boundary: &BoundarySpec<T>,
    coeffs: &ResistanceCoefficients<T>,
    dt: T,
) -> Trajectory<T> {
    assert!(!u.is_empty(), "control sequence must not be empty");
    let h = u.len() - 1;
    let mut tr = Trajectory::zeros(h, dt);
    tr.u.copy_from_slice(u);
    tr.x[0] = T::zero();
    tr.v[0] = boundary.v_init;
    for i in 0..=h {
        tr.a[i] = u[i] - coeffs.eval(tr.v[i]);
        if i < h {
            tr.x[i + 1] = tr.x[i] + dt * tr.v[i];
            tr.v[i + 1] = tr.v[i] + dt * tr.a[i];
        }
    }
    tr.refresh_jerk();
    tr
}

/// `u_i = a_i + a_r(v_i)` for every sample.
pub fn recover_control_input<T: Scalar>(traj: &Trajectory<T>, coeffs: &ResistanceCoefficients<T>) -> Vec<T> {
    traj.a.iter().zip(&traj.v).map(|(&a, &v)| a + coeffs.eval(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    PositionUpdate,
    VelocityUpdate,
    JerkDefinition,
    ControlIdentity,
    InitialPosition,
    FinalPosition,
    InitialVelocity,
    FinalVelocity,
    InitialControl,
    FinalControl,
    VelocityBound,
    ControlBound,
    JerkBound,
    AccelBound,
    SafetyGap,
    TimeGap,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::PositionUpdate => "position-update",
            ConstraintKind::VelocityUpdate => "velocity-update",
            ConstraintKind::JerkDefinition => "jerk-definition",
            ConstraintKind::ControlIdentity => "control-identity",
            ConstraintKind::InitialPosition => "initial-position",
            ConstraintKind::FinalPosition => "final-position",
            ConstraintKind::InitialVelocity => "initial-velocity",
            ConstraintKind::FinalVelocity => "final-velocity",
            ConstraintKind::InitialControl => "initial-control",
            ConstraintKind::FinalControl => "final-control",
            ConstraintKind::VelocityBound => "velocity-bound",
            ConstraintKind::ControlBound => "control-bound",
            ConstraintKind::JerkBound => "jerk-bound",
            ConstraintKind::AccelBound => "accel-bound",
            ConstraintKind::SafetyGap => "safety-gap",
            ConstraintKind::TimeGap => "time-gap",
        }
    }
}

/// Worst residual of one constraint family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    /// Largest violation (absolute residual for equalities, positive part
    /// for inequalities).
    pub max_violation: f64,
    /// Sample index where it occurs.
    pub index: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub tol: f64,
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, kind: ConstraintKind) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_violation).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<18} {:>12.3e} at i={:<5} {}",
                c.kind.name(),
                c.max_violation,
                c.index,
                if c.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

struct Worst {
    kind: ConstraintKind,
    value: f64,
    index: usize,
}

impl Worst {
    fn new(kind: ConstraintKind) -> Self {
        Self {
            kind,
            value: 0.0,
            index: 0,
        }
    }

    fn push(&mut self, i: usize, violation: f64) {
        // NaN must register as a violation
        if violation > self.value || violation.is_nan() && !self.value.is_nan() {
            self.value = violation;
            self.index = i;
        }
    }

    fn finish(self, tol: f64) -> ConstraintCheck {
        ConstraintCheck {
            kind: self.kind,
            max_violation: self.value,
            index: self.index,
            passed: self.value <= tol,
        }
    }
}

/// Audits every discrete constraint of the intersection-approach problem.
pub fn validate_trajectory<T: Scalar>(
    traj: &Trajectory<T>,
    road: &RoadSpec<T>,
    boundary: &BoundarySpec<T>,
    limits: &Limits<T>,
    safety: Option<&SafetySpec<T>>,
    coeffs: &ResistanceCoefficients<T>,
    tol: f64,
) -> Result<ValidationReport> {
    traj.check_shape()?;
    let tr = traj.to_f64();
    let c = coeffs.to_f64();
    let h = tr.horizon();
    let dt = tr.dt;
    let f = |x: T| x.to_f64_lossy();
    use ConstraintKind::*;

    let mut pos = Worst::new(PositionUpdate);
    let mut vel = Worst::new(VelocityUpdate);
    let mut jdef = Worst::new(JerkDefinition);
    let mut ident = Worst::new(ControlIdentity);
    for i in 0..h {
        pos.push(i, (tr.x[i + 1] - tr.x[i] - dt * tr.v[i]).abs());
        vel.push(i, (tr.v[i + 1] - tr.v[i] - dt * tr.a[i]).abs());
        jdef.push(i, (tr.jerk[i] * dt - (tr.a[i + 1] - tr.a[i])).abs());
    }
    for i in 0..=h {
        ident.push(i, (tr.u[i] - tr.a[i] - c.eval(tr.v[i])).abs());
    }

    let single = |kind, idx, r: f64| {
        let mut w = Worst::new(kind);
        w.push(idx, r.abs());
        w.finish(tol)
    };

    let mut vb = Worst::new(VelocityBound);
    let mut ub = Worst::new(ControlBound);
    let mut ab = Worst::new(AccelBound);
    let (vmax, umin, umax) = (f(limits.v_max), f(limits.u_min), f(limits.u_max));
    for i in 0..=h {
        vb.push(i, (-tr.v[i]).max(tr.v[i] - vmax).max(0.0));
        ub.push(i, (umin - tr.u[i]).max(tr.u[i] - umax).max(0.0));
        if let Some((lo, hi)) = limits.accel {
            ab.push(i, (f(lo) - tr.a[i]).max(tr.a[i] - f(hi)).max(0.0));
        }
    }
    let mut jb = Worst::new(JerkBound);
    let (jmin, jmax) = (f(limits.j_min), f(limits.j_max));
    for (i, &j) in tr.jerk.iter().enumerate() {
        jb.push(i, (jmin - j).max(j - jmax).max(0.0));
    }

    let mut checks = vec![
        pos.finish(tol),
        vel.finish(tol),
        jdef.finish(tol),
        ident.finish(tol),
        single(InitialPosition, 0, tr.x[0]),
        single(FinalPosition, h, tr.x[h] - f(road.length)),
        single(InitialVelocity, 0, tr.v[0] - f(boundary.v_init)),
        single(FinalVelocity, h, tr.v[h] - f(boundary.v_final)),
        single(InitialControl, 0, tr.u[0]),
        single(FinalControl, h, tr.u[h]),
        vb.finish(tol),
        ub.finish(tol),
        jb.finish(tol),
    ];
    if limits.accel.is_some() {
        checks.push(ab.finish(tol));
    }

    if let Some(s) = safety {
        s.validate(h)?;
        let mut gap = Worst::new(SafetyGap);
        let mut tgap = Worst::new(TimeGap);
        let (delta, tg) = (f(s.min_gap), f(s.time_gap));
        for i in 0..=h {
            let spacing = f(s.leader_x[i]) - tr.x[i];
            gap.push(i, (delta - spacing).max(0.0));
            tgap.push(i, ((tr.v[i] - f(s.leader_v[i])) * tg - spacing).max(0.0));
        }
        checks.push(gap.finish(tol));
        checks.push(tgap.finish(tol));
    }

    Ok(ValidationReport { tol, checks })
}
