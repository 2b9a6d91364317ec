use ecoplus::consumption::{ModelKind, VehicleModel};
use ecoplus::dynamics::{recover_control_input, rollout, ConstraintKind};
use ecoplus::{
    derive_resistance_coefficients, validate_trajectory, BoundarySpec, Limits, ResistanceCoefficients, RoadSpec,
};
use proptest::prelude::*;

fn coeffs(model: ModelKind, slope: f64) -> ResistanceCoefficients<f64> {
    let road = RoadSpec {
        slope,
        ..RoadSpec::flat(100.0)
    };
    derive_resistance_coefficients(&VehicleModel::reference(model), &road).unwrap()
}

fn boundary(v_init: f64, h: usize) -> BoundarySpec<f64> {
    BoundarySpec {
        v_init,
        v_final: 0.0,
        travel_time: h as f64 * 0.1,
    }
}

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Cpem), Just(ModelKind::Kmmk)]
}

proptest! {
    #[test]
    fn rollout_satisfies_update_rows(
        m in model(),
        slope in -0.05..0.05f64,
        v0 in 0.0..15.0f64,
        u in prop::collection::vec(-0.5..0.5f64, 2..80),
    ) {
        let c = coeffs(m, slope);
        let b = boundary(v0, u.len() - 1);
        let tr = rollout(&u, &b, &c, 0.1);
        let road = RoadSpec { slope, ..RoadSpec::flat(100.0) };
        let rep = validate_trajectory(&tr, &road, &b, &Limits::standard(), None, &c, 1e-9).unwrap();
        for k in [ConstraintKind::PositionUpdate, ConstraintKind::VelocityUpdate,
                  ConstraintKind::JerkDefinition, ConstraintKind::ControlIdentity,
                  ConstraintKind::InitialPosition, ConstraintKind::InitialVelocity] {
            let chk = rep.get(k).unwrap();
            prop_assert!(chk.passed, "{} off by {}", k.name(), chk.max_violation);
        }
        let back = recover_control_input(&tr, &c);
        for (a, b) in back.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_precision_tracks_double(
        v0 in 1.0..12.0f64,
        u in prop::collection::vec(-1.0..1.0f64, 2..60),
    ) {
        let c = coeffs(ModelKind::Cpem, 0.0);
        let c32 = ResistanceCoefficients::<f32>::new(c.d1 as f32, c.d2 as f32, c.d3 as f32).unwrap();
        let b = boundary(v0, u.len() - 1);
        let b32 = BoundarySpec { v_init: v0 as f32, v_final: 0.0, travel_time: b.travel_time as f32 };
        let u32: Vec<f32> = u.iter().map(|&x| x as f32).collect();
        let t64 = rollout(&u, &b, &c, 0.1);
        let t32 = rollout(&u32, &b32, &c32, 0.1f32);
        for i in 0..t64.v.len() {
            prop_assert!((t64.v[i] - t32.v[i] as f64).abs() <= 1e-4 * (1.0 + t64.v[i].abs()));
            prop_assert!((t64.x[i] - t32.x[i] as f64).abs() <= 1e-4 * (1.0 + t64.x[i].abs()));
        }
    }

    #[test]
    fn perturbed_speed_is_caught(
        v0 in 2.0..12.0f64,
        u in prop::collection::vec(-0.3..0.3f64, 10..40),
        at in 1usize..9,
        eps in 1e-4..1.0f64,
    ) {
        let c = coeffs(ModelKind::Kmmk, 0.0);
        let b = boundary(v0, u.len() - 1);
        let mut tr = rollout(&u, &b, &c, 0.1);
        tr.v[at] += eps;
        let rep = validate_trajectory(&tr, &RoadSpec::flat(100.0), &b, &Limits::standard(), None, &c, 1e-6).unwrap();
        prop_assert!(!rep.get(ConstraintKind::VelocityUpdate).unwrap().passed);
    }
}

#[test]
fn uphill_raises_constant_term_only() {
    for m in [ModelKind::Cpem, ModelKind::Kmmk] {
        let flat = coeffs(m, 0.0);
        let up = coeffs(m, 0.03);
        assert!(up.d1 > flat.d1);
        assert!((up.d3 - flat.d3).abs() < 1e-15);
    }
}
