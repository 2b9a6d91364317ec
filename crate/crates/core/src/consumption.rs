//! Electric energy (CPEM) and fuel (KMMK) consumption models.
//!
//! Both models are evaluated on the Euler grid with a left Riemann sum, so
//! the rate at sample `i` is charged for the interval `[t_i, t_{i+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{Scalar, GRAVITY};
use crate::trajectory::Trajectory;

/// Recovered control inputs may exceed `u_max` by this much before they are
/// treated as outside the fuel model's indicator support.
pub const RECOVERED_U_TOL: f64 = 1e-6;

/// Joules per kWh.
const J_PER_KWH: f64 = 3.6e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cpem,
    Kmmk,
}

impl ModelKind {
    pub fn unit(self) -> &'static str {
        match self {
            ModelKind::Cpem => "kWh",
            ModelKind::Kmmk => "mL",
        }
    }

    pub fn rate_unit(self) -> &'static str {
        match self {
            ModelKind::Cpem => "W",
            ModelKind::Kmmk => "mL/s",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cpem => "cpem",
            ModelKind::Kmmk => "kmmk",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cpem" => Ok(ModelKind::Cpem),
            "kmmk" => Ok(ModelKind::Kmmk),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

/// Battery-electric power model parameters (Nissan Leaf fit).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpemParams<T: Scalar> {
    pub c1: T,
    pub c2: T,
    /// Rolling resistance constant, divided by 1000 in the force term.
    pub c_r: T,
    pub rho: T,
    pub area: T,
    pub c_d: T,
    /// Vehicle mass in kg. Not among the fitted parameters; 1521 kg is the
    /// reference Leaf curb mass.
    pub mass: T,
    pub eta_driveline: T,
    pub eta_motor: T,
    pub eta_battery: T,
    /// Exponent coefficient of the regenerative braking efficiency fit.
    pub regen_coeff: T,
    pub chain: EfficiencyChain,
}

/// How the drivetrain and battery efficiencies enter the battery power.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EfficiencyChain {
    /// Losses always shrink the delivered energy: traction draws
    /// `P_w / (eta_d eta_em eta_b)`, recuperation returns
    /// `P_w eta_d eta_em eta_rb eta_b`.
    #[default]
    Lossy,
    /// `P_w / (eta_d eta_em)` on both branches, regen factor on the negative
    /// one, then times `eta_b`. Recovers more than the wheel energy under
    /// hard braking.
    Divided,
}

impl std::str::FromStr for EfficiencyChain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lossy" => Ok(EfficiencyChain::Lossy),
            "divided" => Ok(EfficiencyChain::Divided),
            other => Err(Error::Parse(format!("unknown efficiency chain `{other}`"))),
        }
    }
}

impl<T: Scalar> CpemParams<T> {
    pub fn nissan_leaf() -> Self {
        Self {
            c1: T::lit(0.0328),
            c2: T::lit(4.575),
            c_r: T::lit(1.75),
            rho: T::lit(1.2256),
            area: T::lit(2.3316),
            c_d: T::lit(0.28),
            mass: T::lit(1521.0),
            eta_driveline: T::lit(0.92),
            eta_motor: T::lit(0.91),
            eta_battery: T::lit(0.9),
            regen_coeff: T::lit(0.0411),
            chain: EfficiencyChain::Lossy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, x: T| {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {x}")))
            }
        };
        pos("cpem.mass", self.mass)?;
        pos("cpem.rho", self.rho)?;
        pos("cpem.area", self.area)?;
        pos("cpem.c_d", self.c_d)?;
        for (name, eta) in [
            ("cpem.eta_driveline", self.eta_driveline),
            ("cpem.eta_motor", self.eta_motor),
            ("cpem.eta_battery", self.eta_battery),
        ] {
            if !(eta > T::zero() && eta <= T::one()) {
                return Err(invalid(name, format!("efficiency {eta} not in (0, 1]")));
            }
        }
        if !(self.regen_coeff >= T::zero()) {
            return Err(invalid("cpem.regen_coeff", "must be non-negative"));
        }
        Ok(())
    }
}

/// Polynomial fuel-rate model parameters (Nissan March fit).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KmmkParams<T: Scalar> {
    /// `c[0..4]` cruise polynomial, `c[4..7]` acceleration factor.
    pub c: [T; 7],
    pub mass: T,
    pub rho: T,
    pub c_d: T,
    pub area: T,
    pub mu: T,
    /// Upper end of the indicator support `(0, u_max]`.
    pub u_max: T,
}

impl<T: Scalar> KmmkParams<T> {
    pub fn nissan_march() -> Self {
        Self {
            c: [
                T::lit(0.1569),
                T::lit(0.0245),
                T::lit(-7.415e-4),
                T::lit(5.975e-5),
                T::lit(0.07224),
                T::lit(0.09681),
                T::lit(1.075e-3),
            ],
            mass: T::lit(1200.0),
            rho: T::lit(1.184),
            c_d: T::lit(0.32),
            area: T::lit(2.5),
            mu: T::lit(0.015),
            u_max: T::lit(2.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero()) {
            return Err(invalid("kmmk.mass", "must be positive"));
        }
        if !(self.rho > T::zero() && self.area > T::zero() && self.c_d > T::zero()) {
            return Err(invalid("kmmk.drag", "rho, area and c_d must be positive"));
        }
        if !(self.u_max > T::zero()) {
            return Err(invalid("kmmk.u_max", "must be positive"));
        }
        if self.c.iter().any(|c| !c.is_finite()) {
            return Err(invalid("kmmk.c", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn cruise_rate(&self, v: T) -> T {
        let c = &self.c;
        c[0] + v * (c[1] + v * (c[2] + v * c[3]))
    }

    /// Acceleration factor `c4 + c5 v + c6 v^2`.
    pub fn accel_factor(&self, v: T) -> T {
        let c = &self.c;
        c[4] + v * (c[5] + v * c[6])
    }

    /// Apparent acceleration `a_v + a_theta` for control input `u`.
    pub fn apparent_accel(&self, v: T, u: T, slope: T) -> T {
        let g = T::lit(GRAVITY);
        let two = T::lit(2.0);
        let a_v =
            -self.c_d * self.rho * self.area * v * v / (two * self.mass) - self.mu * g * slope.cos() - g * slope.sin()
                + u;
        a_v + g * slope.sin()
    }
}

/// Model family with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VehicleModel<T: Scalar> {
    Cpem(CpemParams<T>),
    Kmmk(KmmkParams<T>),
}

impl<T: Scalar> VehicleModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            VehicleModel::Cpem(_) => ModelKind::Cpem,
            VehicleModel::Kmmk(_) => ModelKind::Kmmk,
        }
    }

    pub fn reference(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Cpem => VehicleModel::Cpem(CpemParams::nissan_leaf()),
            ModelKind::Kmmk => VehicleModel::Kmmk(KmmkParams::nissan_march()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VehicleModel::Cpem(p) => p.validate(),
            VehicleModel::Kmmk(p) => p.validate(),
        }
    }

    /// Instantaneous rate: battery power in W (CPEM) or fuel in mL/s (KMMK).
    pub fn rate(&self, v: T, a: T, u: T, slope: T) -> Result<T> {
        match self {
            VehicleModel::Cpem(p) => cpem_power(v, a, p, slope),
            VehicleModel::Kmmk(p) => kmmk_rate(v, u, p, slope),
        }
    }

    pub fn evaluate(&self, traj: &Trajectory<T>, slope: T) -> Result<ConsumptionReport<T>> {
        match self {
            VehicleModel::Cpem(p) => cpem_energy(traj, p, slope),
            VehicleModel::Kmmk(p) => kmmk_fuel(traj, p, slope),
        }
    }
}

/// Trip total with the per-step rates it was integrated from.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionReport<T: Scalar> {
    pub model: ModelKind,
    /// kWh for CPEM, mL for KMMK.
    pub total: T,
    /// W for CPEM, mL/s for KMMK; one entry per interval.
    pub rates: Vec<T>,
    /// Samples whose control input fell outside the fuel indicator support
    /// by more than [`RECOVERED_U_TOL`].
    pub anomalies: Vec<usize>,
}

/// Regenerative braking efficiency as a function of realized acceleration.
pub fn regen_efficiency<T: Scalar>(a: T, coeff: T) -> T {
    if a >= T::zero() {
        T::zero()
    } else {
        (-coeff / a.abs()).exp()
    }
}

/// Power at the wheels in W.
pub fn wheel_power<T: Scalar>(v: T, a: T, p: &CpemParams<T>, slope: T) -> T {
    let g = T::lit(GRAVITY);
    let half = T::lit(0.5);
    let rolling = p.mass * g * slope.cos() * (p.c_r / T::lit(1000.0)) * (p.c1 * v + p.c2);
    let drag = half * p.rho * p.area * p.c_d * v * v;
    (p.mass * a + rolling + drag + p.mass * g * slope.sin()) * v
}

/// Battery-side power in W; negative while recuperating.
pub fn cpem_power<T: Scalar>(v: T, a: T, p: &CpemParams<T>, slope: T) -> Result<T> {
    if v < T::zero() {
        return Err(Error::OutOfDomain {
            value: v.to_f64_lossy(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let p_w = wheel_power(v, a, p, slope);
    let drive = p.eta_driveline * p.eta_motor;
    let rb = regen_efficiency(a, p.regen_coeff);
    Ok(match (p.chain, p_w >= T::zero()) {
        (EfficiencyChain::Lossy, true) => p_w / (drive * p.eta_battery),
        (EfficiencyChain::Lossy, false) => p_w * drive * rb * p.eta_battery,
        (EfficiencyChain::Divided, true) => p_w / drive * p.eta_battery,
        (EfficiencyChain::Divided, false) => p_w / drive * rb * p.eta_battery,
    })
}

fn check_samples<T: Scalar>(traj: &Trajectory<T>) -> Result<()> {
    traj.check_shape()
}

/// Negative speeds below this are rounding noise from the optimizer and
/// evaluate as standstill.
fn clamp_speed<T: Scalar>(v: T) -> T {
    if v < T::zero() && v > T::lit(-RECOVERED_U_TOL) {
        T::zero()
    } else {
        v
    }
}

/// Net battery energy over the trip in kWh.
pub fn cpem_energy<T: Scalar>(traj: &Trajectory<T>, p: &CpemParams<T>, slope: T) -> Result<ConsumptionReport<T>> {
    check_samples(traj)?;
    let h = traj.horizon();
    let rates = (0..h)
        .map(|i| cpem_power(clamp_speed(traj.v[i]), traj.a[i], p, slope))
        .collect::<Result<Vec<_>>>()?;
    let joules = rates.iter().fold(T::zero(), |acc, r| acc + *r * traj.dt);
    Ok(ConsumptionReport {
        model: ModelKind::Cpem,
        total: joules / T::lit(J_PER_KWH),
        rates,
        anomalies: Vec::new(),
    })
}

/// Instantaneous fuel rate in mL/s. Zero unless `0 < u <= u_max`.
pub fn kmmk_rate<T: Scalar>(v: T, u: T, p: &KmmkParams<T>, slope: T) -> Result<T> {
    if v < T::zero() {
        return Err(Error::OutOfDomain {
            value: v.to_f64_lossy(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !(u > T::zero() && u <= p.u_max) {
        return Ok(T::zero());
    }
    let a_hat = p.apparent_accel(v, u, slope);
    let rate = p.cruise_rate(v) + a_hat * p.accel_factor(v);
    // the fit can dip below zero far outside its calibration range
    Ok(rate.max(T::zero()))
}

/// Trip fuel in mL.
pub fn kmmk_fuel<T: Scalar>(traj: &Trajectory<T>, p: &KmmkParams<T>, slope: T) -> Result<ConsumptionReport<T>> {
    check_samples(traj)?;
    let h = traj.horizon();
    let tol = T::lit(RECOVERED_U_TOL);
    let mut anomalies = Vec::new();
    let mut rates = Vec::with_capacity(h);
    for i in 0..h {
        let mut u = traj.u[i];
        if u > p.u_max {
            if u <= p.u_max + tol {
                u = p.u_max;
            } else {
                anomalies.push(i);
            }
        }
        rates.push(kmmk_rate(clamp_speed(traj.v[i]), u, p, slope)?);
    }
    if !anomalies.is_empty() {
        log::warn!(
            "{} samples with u above u_max; fuel indicator zeroes them",
            anomalies.len()
        );
    }
    let total = rates.iter().fold(T::zero(), |acc, r| acc + *r * traj.dt);
    Ok(ConsumptionReport {
        model: ModelKind::Kmmk,
        total,
        rates,
        anomalies,
    })
}

/// `|x - y| / max(|x|, |y|)` in percent; 0 when both are zero.
pub fn relative_difference<T: Scalar>(x: T, y: T) -> T {
    let denom = x.abs().max(y.abs());
    if denom == T::zero() {
        return T::zero();
    }
    (x - y).abs() / denom * T::lit(100.0)
}
