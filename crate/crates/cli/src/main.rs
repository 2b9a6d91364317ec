mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecoplus::experiments::{self, ScenarioReport, Strategy, AUDIT_TOL};
use ecoplus::trajectory::{read_csv, write_csv};

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "ecoplus", version, about = "Energy-aware intersection approach planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cpem or kmmk.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated strategies (ecoplus, ecoplus-fine, vm, jm, am, dc).
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<String>,
    /// Comma-separated terminal speeds in m/s.
    #[arg(long, value_delimiter = ',')]
    vd: Vec<f64>,
    /// Travel time in s (first sweep point for sweeps).
    #[arg(long)]
    tm: Option<f64>,
    #[arg(long)]
    tm_max: Option<f64>,
    /// Time step in s.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of PWA segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Output directory (file for `solve`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero when an audit or acceptance check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Consumption against travel time for every strategy.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write every optimized trajectory.
        #[arg(long)]
        trajectories: bool,
    },
    /// Leading-vehicle or comfort scenario sweep.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// leading or comfort.
        #[arg(long, default_value = "leading")]
        family: String,
    },
    /// Coarse against fine PWA objective and solve time.
    PwaStudy {
        #[command(flatten)]
        common: Common,
    },
    /// One travel time, one strategy; writes the trajectory CSV.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Re-checks a trajectory CSV against the configured scenario.
    Validate {
        #[command(flatten)]
        common: Common,
        trajectory: PathBuf,
        /// Absolute tolerance of every constraint.
        #[arg(long, default_value_t = AUDIT_TOL)]
        tol: f64,
    },
}

fn effective_config(c: &Common, family: Option<&str>) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(f) = family {
        cfg.experiment.family = f.to_string();
        if f != "single"
            && c.strategy.is_empty()
            && cfg.experiment.strategies == Config::default().experiment.strategies
        {
            cfg.experiment.strategies = vec!["ecoplus".into(), "vm".into(), "dc".into()];
        }
        if f != "single" && c.vd.is_empty() && cfg.boundary.v_final == Config::default().boundary.v_final {
            cfg.boundary.v_final = vec![if f == "leading" { 10.0 } else { 8.0 }];
        }
    }
    cfg.apply_family_defaults();
    if let Some(m) = &c.model {
        cfg.model.kind = m.clone();
    }
    if !c.strategy.is_empty() {
        cfg.experiment.strategies = c.strategy.clone();
    }
    if !c.vd.is_empty() {
        cfg.boundary.v_final = c.vd.clone();
    }
    if let Some(t) = c.tm {
        cfg.boundary.travel_time = t;
        cfg.experiment.tm_min = Some(t);
    }
    if let Some(t) = c.tm_max {
        cfg.experiment.tm_max = t;
    }
    if let Some(dt) = c.dt {
        cfg.experiment.dt = dt;
    }
    if let Some(k) = c.segments {
        cfg.pwa.segments = k;
    }
    eprintln!("# effective config\n{}", cfg.to_toml()?);
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_report(dir: &Path, report: &ScenarioReport, trajectories: bool) -> Result<()> {
    let family = format!("{:?}", report.family).to_lowercase();
    for c in &report.curves {
        let path = dir.join(format!("{family}_{}_vd{}.csv", c.model, c.v_final));
        let mut w = create(&path)?;
        c.write_csv(&mut w)?;
        w.flush()?;
        log::info!("wrote {}", path.display());
        if trajectories {
            let tdir = dir.join("trajectories");
            fs::create_dir_all(&tdir)?;
            for r in &c.records {
                if let Some(t) = &r.trajectory {
                    let p = tdir.join(format!("{}_{}_vd{}_tm{:.1}.csv", r.strategy, c.model, c.v_final, r.tm));
                    let mut w = create(&p)?;
                    write_csv(&mut w, t, None)?;
                    w.flush()?;
                }
            }
        }
    }
    let summary = report.summary();
    fs::write(dir.join(format!("{family}_{}_summary.txt", report.model)), &summary)?;
    print!("{summary}");
    Ok(())
}

fn report_problems(report: &ScenarioReport) -> Vec<String> {
    let mut v = Vec::new();
    if !report.audit_failures.is_empty() {
        v.push(format!(
            "{} solutions failed the constraint audit",
            report.audit_failures.len()
        ));
    }
    if !report.feasibility_gaps.is_empty() {
        v.push(format!(
            "{} infeasible points above the first feasible one",
            report.feasibility_gaps.len()
        ));
    }
    v
}

fn finish(check: bool, problems: Vec<String>) -> Result<ExitCode> {
    for p in &problems {
        eprintln!("check: {p}");
    }
    if check && !problems.is_empty() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep { common, trajectories } => {
            let cfg = effective_config(&common, Some("single"))?;
            let mut ec = cfg.experiment_config()?;
            ec.keep_trajectories = trajectories;
            let report = experiments::run_scenario(&ec)?;
            write_report(&out_dir(&common)?, &report, trajectories)?;
            finish(common.check, report_problems(&report))
        }
        Command::Scenario { common, family } => {
            if family != "leading" && family != "comfort" {
                bail!("unknown scenario family `{family}` (leading or comfort)");
            }
            let cfg = effective_config(&common, Some(&family))?;
            let report = experiments::run_scenario(&cfg.experiment_config()?)?;
            write_report(&out_dir(&common)?, &report, false)?;
            finish(common.check, report_problems(&report))
        }
        Command::PwaStudy { common } => {
            let cfg = effective_config(&common, None)?;
            let study = experiments::pwa_study(&cfg.experiment_config()?)?;
            let dir = out_dir(&common)?;
            let path = dir.join(format!("pwa_study_vd{}.csv", study.v_final));
            let mut w = create(&path)?;
            study.write_csv(&mut w)?;
            w.flush()?;
            println!(
                "points {}  mean relative objective difference {:.4}%  mean solve {:.3} ms (K={}) vs {:.3} ms (K={})",
                study.points.len(),
                study.mean_relative_percent,
                study.mean_ms,
                cfg.pwa.segments,
                study.mean_fine_ms,
                cfg.pwa.fine_segments
            );
            let mut problems = Vec::new();
            if study.mean_relative_percent > 1.0 {
                problems.push(format!(
                    "mean objective difference {:.4}% exceeds 1%",
                    study.mean_relative_percent
                ));
            }
            if study.mean_ms >= study.mean_fine_ms {
                problems.push("coarse segmentation is not faster on average".into());
            }
            finish(common.check, problems)
        }
        Command::Solve { common } => {
            let cfg = effective_config(&common, None)?;
            let ec = cfg.experiment_config()?;
            let strategy: Strategy = match ec.strategies.as_slice() {
                [s] => *s,
                _ if common.strategy.is_empty() => Strategy::EcoPlus,
                _ => bail!("solve takes exactly one strategy"),
            };
            let vd = match cfg.boundary.v_final.as_slice() {
                [v] => *v,
                _ if common.vd.is_empty() => cfg.boundary.v_final[0],
                _ => bail!("solve takes exactly one terminal speed"),
            };
            let tm = cfg.boundary.travel_time;
            let (spec, rec) = experiments::solve_single(&ec, strategy, vd, tm)?;
            let Some(traj) = rec.trajectory.as_ref().filter(|_| rec.feasible()) else {
                eprintln!("{strategy} at tm={tm}, v_d={vd}: {} {}", rec.status, rec.detail);
                return Ok(ExitCode::from(1));
            };
            let rates = ec.vehicle.evaluate(traj, spec.road.slope)?.rates;
            let path = match &common.out {
                Some(p) if p.extension().is_some_and(|e| e == "csv") => {
                    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(parent)?;
                    }
                    p.clone()
                }
                _ => out_dir(&common)?.join(format!("{strategy}_{}_vd{vd}_tm{tm}.csv", ec.model())),
            };
            let mut w = create(&path)?;
            write_csv(&mut w, traj, Some(&rates))?;
            w.flush()?;
            println!(
                "{strategy} {} tm={tm} v_d={vd}: status {} consumption {} {} objective {} solve {:.3} ms -> {}",
                ec.model(),
                rec.status,
                ecoplus::trajectory::fmt_sig9(rec.consumption.unwrap_or(f64::NAN)),
                ec.model().unit(),
                ecoplus::trajectory::fmt_sig9(rec.objective.unwrap_or(f64::NAN)),
                rec.solve_ms,
                path.display()
            );
            let audit_ok = rec.audit.as_ref().is_some_and(|a| a.passed);
            finish(
                common.check,
                if audit_ok {
                    vec![]
                } else {
                    vec!["solution failed the constraint audit".into()]
                },
            )
        }
        Command::Validate {
            common,
            trajectory,
            tol,
        } => {
            let cfg = effective_config(&common, None)?;
            let ec = cfg.experiment_config()?;
            let traj = read_csv(BufReader::new(
                File::open(&trajectory).with_context(|| format!("opening {}", trajectory.display()))?,
            ))?;
            let vd = match cfg.boundary.v_final.as_slice() {
                [v] => *v,
                _ => bail!("validate needs a single terminal speed (--vd)"),
            };
            let tm = if common.tm.is_some() {
                cfg.boundary.travel_time
            } else {
                traj.horizon() as f64 * traj.dt
            };
            if (traj.dt - ec.dt).abs() > 1e-9 {
                bail!("trajectory step {} differs from configured dt {}", traj.dt, ec.dt);
            }
            let spec = experiments::scenario_spec(&ec, vd, tm)?;
            let report = ecoplus::validate_trajectory(
                &traj,
                &spec.road,
                &spec.boundary,
                &spec.limits,
                spec.safety.as_ref(),
                &spec.coeffs,
                tol,
            )?;
            print!("{report}");
            if report.passed() {
                println!("valid (tol {tol:e})");
                Ok(ExitCode::SUCCESS)
            } else {
                for c in report.failures() {
                    eprintln!(
                        "violated: {} by {:.3e} at i={}",
                        c.kind.name(),
                        c.max_violation,
                        c.index
                    );
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
