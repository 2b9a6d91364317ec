use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ecoplus::consumption::{CpemParams, EfficiencyChain, KmmkParams};
use ecoplus::dc::DcOptions;
use ecoplus::experiments::{ExperimentConfig, LeaderConfig, ScenarioFamily, Strategy};
use ecoplus::{Limits, ModelKind, RoadSpec, SolverOptions, VehicleModel};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub road: Road,
    pub boundary: Boundary,
    pub limits: LimitsSection,
    pub model: Model,
    pub pwa: Pwa,
    pub safety: Safety,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Road {
    /// m
    pub length: f64,
    /// rad
    pub slope: f64,
}

impl Default for Road {
    fn default() -> Self {
        Self {
            length: 100.0,
            slope: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Boundary {
    pub v_init: f64,
    /// Terminal speeds swept by `sweep`.
    pub v_final: Vec<f64>,
    /// Travel time used by `solve` and `validate`.
    pub travel_time: f64,
}

impl Default for Boundary {
    fn default() -> Self {
        Self {
            v_init: 8.0,
            v_final: vec![6.0, 8.0, 10.0],
            travel_time: 18.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub j_min: f64,
    pub j_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_max: Option<f64>,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let l = Limits::<f64>::standard();
        Self {
            v_max: l.v_max,
            u_min: l.u_min,
            u_max: l.u_max,
            j_min: l.j_min,
            j_max: l.j_max,
            a_min: None,
            a_max: None,
        }
    }
}

impl LimitsSection {
    fn to_limits(&self) -> Result<Limits<f64>> {
        let accel = match (self.a_min, self.a_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => bail!("limits.a_min and limits.a_max must be given together"),
        };
        Ok(Limits {
            v_max: self.v_max,
            u_min: self.u_min,
            u_max: self.u_max,
            j_min: self.j_min,
            j_max: self.j_max,
            accel,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Model {
    /// `cpem` or `kmmk`.
    pub kind: String,
    pub cpem: Cpem,
    pub kmmk: Kmmk,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            kind: "cpem".into(),
            cpem: Cpem::default(),
            kmmk: Kmmk::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cpem {
    pub c1: f64,
    pub c2: f64,
    pub c_r: f64,
    pub rho: f64,
    pub area: f64,
    pub c_d: f64,
    /// kg. Not among the fitted parameters; reference Leaf curb mass.
    pub mass: f64,
    pub eta_driveline: f64,
    pub eta_motor: f64,
    pub eta_battery: f64,
    pub regen_coeff: f64,
    /// `lossy` or `divided`.
    pub efficiency_chain: String,
}

impl Default for Cpem {
    fn default() -> Self {
        let p = CpemParams::<f64>::nissan_leaf();
        Self {
            c1: p.c1,
            c2: p.c2,
            c_r: p.c_r,
            rho: p.rho,
            area: p.area,
            c_d: p.c_d,
            mass: p.mass,
            eta_driveline: p.eta_driveline,
            eta_motor: p.eta_motor,
            eta_battery: p.eta_battery,
            regen_coeff: p.regen_coeff,
            efficiency_chain: "lossy".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kmmk {
    pub c: [f64; 7],
    pub mass: f64,
    pub rho: f64,
    pub c_d: f64,
    pub area: f64,
    pub mu: f64,
}

impl Default for Kmmk {
    fn default() -> Self {
        let p = KmmkParams::<f64>::nissan_march();
        Self {
            c: p.c,
            mass: p.mass,
            rho: p.rho,
            c_d: p.c_d,
            area: p.area,
            mu: p.mu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pwa {
    pub segments: usize,
    pub fine_segments: usize,
}

impl Default for Pwa {
    fn default() -> Self {
        Self {
            segments: 5,
            fine_segments: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Safety {
    /// m
    pub min_gap: f64,
    /// s
    pub time_gap: f64,
    pub entry_delay: f64,
    pub leader_cruise_speed: f64,
    pub leader_stop_time: f64,
    pub leader_hold: f64,
    pub leader_exit_speed: f64,
    pub leader_exit_time: f64,
}

impl Default for Safety {
    fn default() -> Self {
        let l = LeaderConfig::default();
        Self {
            min_gap: l.min_gap,
            time_gap: l.time_gap,
            entry_delay: l.entry_delay,
            leader_cruise_speed: l.cruise_speed,
            leader_stop_time: l.stop_time,
            leader_hold: l.hold,
            leader_exit_speed: l.exit_speed,
            leader_exit_time: l.exit_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// `single`, `leading` or `comfort`.
    pub family: String,
    pub strategies: Vec<String>,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tm_min: Option<f64>,
    pub tm_max: f64,
    pub tm_step: f64,
    pub seed: u64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Fit the KMMK surrogate only where fuel is positive.
    pub dc_fuel_positive_only: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            family: "single".into(),
            strategies: ["ecoplus", "vm", "jm", "am", "dc"].map(String::from).to_vec(),
            dt: 0.1,
            tm_min: None,
            tm_max: 30.0,
            tm_step: 0.1,
            seed: 0,
            solver_tol: s.tol,
            solver_max_iter: s.max_iter,
            dc_fuel_positive_only: false,
        }
    }
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(self.model.kind.parse()?)
    }

    pub fn vehicle(&self) -> Result<VehicleModel<f64>> {
        Ok(match self.model_kind()? {
            ModelKind::Cpem => {
                let c = &self.model.cpem;
                let chain: EfficiencyChain = c.efficiency_chain.parse()?;
                VehicleModel::Cpem(CpemParams {
                    c1: c.c1,
                    c2: c.c2,
                    c_r: c.c_r,
                    rho: c.rho,
                    area: c.area,
                    c_d: c.c_d,
                    mass: c.mass,
                    eta_driveline: c.eta_driveline,
                    eta_motor: c.eta_motor,
                    eta_battery: c.eta_battery,
                    regen_coeff: c.regen_coeff,
                    chain,
                })
            }
            ModelKind::Kmmk => {
                let k = &self.model.kmmk;
                VehicleModel::Kmmk(KmmkParams {
                    c: k.c,
                    mass: k.mass,
                    rho: k.rho,
                    c_d: k.c_d,
                    area: k.area,
                    mu: k.mu,
                    u_max: self.limits.u_max,
                })
            }
        })
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        self.experiment.strategies.iter().map(|s| Ok(s.parse()?)).collect()
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let family: ScenarioFamily = self.experiment.family.parse()?;
        let limits = self.limits.to_limits()?;
        let mut dc = DcOptions::for_limits(limits.u_min, limits.u_max, limits.v_max);
        dc.fuel_positive_only = self.experiment.dc_fuel_positive_only;
        let solver = SolverOptions {
            tol: self.experiment.solver_tol,
            max_iter: self.experiment.solver_max_iter,
            ..SolverOptions::default()
        };
        let s = &self.safety;
        let cfg = ExperimentConfig {
            family,
            vehicle: self.vehicle()?,
            strategies: self.strategies()?,
            v_final: self.boundary.v_final.clone(),
            road: RoadSpec {
                length: self.road.length,
                slope: self.road.slope,
                ..RoadSpec::flat(self.road.length)
            },
            v_init: self.boundary.v_init,
            limits,
            dt: self.experiment.dt,
            tm_min: self.experiment.tm_min,
            tm_max: self.experiment.tm_max,
            tm_step: self.experiment.tm_step,
            segments: self.pwa.segments,
            fine_segments: self.pwa.fine_segments,
            leader: LeaderConfig {
                cruise_speed: s.leader_cruise_speed,
                stop_time: s.leader_stop_time,
                hold: s.leader_hold,
                exit_speed: s.leader_exit_speed,
                exit_time: s.leader_exit_time,
                entry_delay: s.entry_delay,
                min_gap: s.min_gap,
                time_gap: s.time_gap,
            },
            dc,
            solver,
            seed: self.experiment.seed,
            keep_trajectories: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Switches to the comfort limits unless the file already set
    /// acceleration bounds.
    pub fn apply_family_defaults(&mut self) {
        if self.experiment.family == "comfort" && self.limits.a_min.is_none() {
            let c = Limits::<f64>::comfort();
            self.limits.j_min = c.j_min;
            self.limits.j_max = c.j_max;
            let (lo, hi) = c.accel.expect("comfort limits bound the acceleration");
            self.limits.a_min = Some(lo);
            self.limits.a_max = Some(hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        let text = c.to_toml().unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(text.contains("length = 100.0"));
        assert!(text.contains("u_min = -3.5"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[road]\nlenght = 50.0\n").is_err());
        assert!(toml::from_str::<Config>("[roads]\n").is_err());
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c: Config = toml::from_str("[pwa]\nsegments = 7\n").unwrap();
        assert_eq!(c.pwa.segments, 7);
        assert_eq!(c.pwa.fine_segments, 500);
        assert_eq!(c.road, Road::default());
    }

    #[test]
    fn experiment_config_matches_library_defaults() {
        let cfg = Config::default().experiment_config().unwrap();
        let lib = ExperimentConfig::single(ModelKind::Cpem);
        assert_eq!(cfg.vehicle, lib.vehicle);
        assert_eq!(cfg.limits, lib.limits);
        assert_eq!(cfg.road, lib.road);
        assert_eq!(cfg.v_final, lib.v_final);
        assert_eq!(cfg.dc, lib.dc);
    }

    #[test]
    fn comfort_family_tightens_limits() {
        let mut c = Config::default();
        c.experiment.family = "comfort".into();
        c.apply_family_defaults();
        let l = c.limits.to_limits().unwrap();
        assert_eq!(l, Limits::comfort());
    }
}
