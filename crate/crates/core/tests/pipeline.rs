use ecoplus::consumption::ModelKind;
use ecoplus::experiments::{scenario_spec, solve_single, tradeoff_sweep, ExperimentConfig, Strategy, AUDIT_TOL};
use ecoplus::solver::SolveStatus;
use ecoplus::trajectory::{read_csv, write_csv};
use ecoplus::validate_trajectory;

#[test]
fn every_strategy_solves_and_audits() {
    for model in [ModelKind::Cpem, ModelKind::Kmmk] {
        let cfg = ExperimentConfig::single(model);
        for s in Strategy::ALL {
            let (_, rec) = solve_single(&cfg, s, 8.0, 16.0).unwrap();
            assert_eq!(rec.status, SolveStatus::Optimal, "{model} {s}: {}", rec.detail);
            let audit = rec.audit.as_ref().unwrap();
            assert!(audit.passed, "{model} {s}: {} {:e}", audit.worst, audit.max_violation);
            let tr = rec.trajectory.as_ref().unwrap();
            assert!((tr.x.last().unwrap() - 100.0).abs() <= AUDIT_TOL);
            assert!((tr.v.last().unwrap() - 8.0).abs() <= AUDIT_TOL);
        }
    }
}

#[test]
fn written_trajectory_revalidates() {
    let cfg = ExperimentConfig::single(ModelKind::Cpem);
    let (spec, rec) = solve_single(&cfg, Strategy::EcoPlus, 6.0, 20.0).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, rec.trajectory.as_ref().unwrap(), None).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    let again = scenario_spec(&cfg, 6.0, 20.0).unwrap();
    assert_eq!(again.boundary, spec.boundary);
    let rep = validate_trajectory(
        &back,
        &again.road,
        &again.boundary,
        &again.limits,
        None,
        &again.coeffs,
        AUDIT_TOL,
    )
    .unwrap();
    assert!(rep.passed(), "{rep}");
}

#[test]
fn too_short_travel_time_is_infeasible_everywhere() {
    let cfg = ExperimentConfig::single(ModelKind::Kmmk);
    for s in [Strategy::EcoPlus, Strategy::Vm, Strategy::Am] {
        let (_, rec) = solve_single(&cfg, s, 10.0, 4.0).unwrap();
        assert!(!rec.feasible());
        assert_eq!(rec.status, SolveStatus::Infeasible);
    }
}

#[test]
fn short_sweep_orders_points_and_strategies() {
    let mut cfg = ExperimentConfig::single(ModelKind::Cpem);
    cfg.strategies = vec![Strategy::EcoPlus, Strategy::Vm];
    cfg.v_final = vec![10.0];
    cfg.tm_min = Some(12.0);
    cfg.tm_max = 12.5;
    let curves = tradeoff_sweep(&cfg).unwrap();
    assert_eq!(curves.len(), 1);
    let c = &curves[0];
    let tms: Vec<f64> = c.strategy(Strategy::EcoPlus).map(|r| r.tm).collect();
    assert_eq!(tms.len(), 6);
    assert!(tms.windows(2).all(|w| w[1] > w[0]));
    for (e, v) in c.strategy(Strategy::EcoPlus).zip(c.strategy(Strategy::Vm)) {
        assert!(e.feasible() && v.feasible());
    }
    let (mean, n) = c.mean_relative_difference(Strategy::Vm, Strategy::EcoPlus).unwrap();
    assert_eq!(n, 6);
    assert!(mean.is_finite());
}
