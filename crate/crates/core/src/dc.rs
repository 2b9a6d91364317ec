//! Quadratic surrogate fit of a consumption model and its minimization by
//! the convex-concave procedure.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::consumption::{ModelKind, VehicleModel};
use crate::dynamics::ResistanceCoefficients;
use crate::error::{invalid, Error, Result};
use crate::problem::{build_problem, extract_solution, ScenarioSpec, SolutionBundle, StageCost, StrategyKind};
use crate::pwa::PwaSegments;
use crate::solver::{solve, SolveStatus, SolverOptions};
use crate::trajectory::{fmt_sig9, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct DcOptions {
    /// Fit range for the acceleration, normally `[u_min, u_max]`.
    pub a_range: (f64, f64),
    /// Fit range for the speed, normally `[0, v_max]`.
    pub v_range: (f64, f64),
    /// Grid points per axis.
    pub resolution: (usize, usize),
    pub max_iter: usize,
    /// Stop when the relative decrease of the surrogate falls below this.
    pub rel_tol: f64,
    /// Restrict the fuel-rate fit to the support of the fuel indicator.
    pub fuel_positive_only: bool,
}

impl DcOptions {
    pub fn for_limits(u_min: f64, u_max: f64, v_max: f64) -> Self {
        Self {
            a_range: (u_min, u_max),
            v_range: (0.0, v_max),
            resolution: (61, 61),
            max_iter: 50,
            rel_tol: 1e-6,
            fuel_positive_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.0 < 10 || self.resolution.1 < 10 {
            return Err(invalid("dc.resolution", "need at least 10 x 10 points"));
        }
        if !(self.a_range.0 < self.a_range.1 && self.v_range.0 < self.v_range.1) {
            return Err(invalid("dc.range", "empty fit range"));
        }
        if !(self.rel_tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("dc.stopping", "need positive tolerance and iterations"));
        }
        Ok(())
    }

    fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (na, nv) = self.resolution;
        let (a0, a1) = self.a_range;
        let (v0, v1) = self.v_range;
        (0..na).flat_map(move |i| {
            let a = a0 + (a1 - a0) * i as f64 / (na - 1) as f64;
            (0..nv).map(move |j| (a, v0 + (v1 - v0) * j as f64 / (nv - 1) as f64))
        })
    }
}

/// `c1 a^2 + c2 v^2 + c3 a v + c4 a + c5 v + c6` with its split into
/// convex and concave parts.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSurrogate {
    pub coeffs: [f64; 6],
    pub q_plus: [[f64; 2]; 2],
    pub q_minus: [[f64; 2]; 2],
    /// Root mean square of the fit residual over the points used.
    pub rms: f64,
    pub max_abs: f64,
    pub samples: usize,
    /// Factor applied to the model rate before fitting (W to kW for CPEM).
    pub rate_scale: f64,
}

impl QuadraticSurrogate {
    /// Builds the split for given coefficients.
    pub fn from_coeffs(coeffs: [f64; 6]) -> Self {
        let h = Matrix2::new(2.0 * coeffs[0], coeffs[2], coeffs[2], 2.0 * coeffs[1]);
        let eig = SymmetricEigen::new(h);
        let mut plus = Matrix2::zeros();
        let mut minus = Matrix2::zeros();
        // fitting noise around a semidefinite Hessian is not concavity
        let floor = 1e-12 * eig.eigenvalues.amax();
        for k in 0..2 {
            let e = eig.eigenvectors.column(k);
            let outer = e * e.transpose();
            let lam = eig.eigenvalues[k];
            if lam > 0.0 {
                plus += outer * lam;
            } else if lam < -floor {
                minus -= outer * lam;
            }
        }
        let arr = |m: Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
        Self {
            coeffs,
            q_plus: arr(plus),
            q_minus: arr(minus),
            rms: 0.0,
            max_abs: 0.0,
            samples: 0,
            rate_scale: 1.0,
        }
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let c = &self.coeffs;
        [[2.0 * c[0], c[2]], [c[2], 2.0 * c[1]]]
    }

    pub fn value(&self, a: f64, v: f64) -> f64 {
        let c = &self.coeffs;
        c[0] * a * a + c[1] * v * v + c[2] * a * v + c[3] * a + c[4] * v + c[5]
    }

    pub fn is_convex(&self) -> bool {
        self.q_minus.iter().flatten().all(|&x| x == 0.0)
    }

    /// `max |Q+ - Q- - H|`.
    pub fn split_error(&self) -> f64 {
        let h = self.hessian();
        let mut e = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                e = e.max((self.q_plus[i][j] - self.q_minus[i][j] - h[i][j]).abs());
            }
        }
        e
    }

    /// Surrogate summed over the intervals of a trajectory.
    pub fn trajectory_value(&self, traj: &Trajectory<f64>) -> f64 {
        (0..traj.horizon())
            .map(|i| self.value(traj.a[i], traj.v[i]))
            .sum::<f64>()
            * traj.dt
    }

    /// Writes `c1,...,c6,rms` with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "c1,c2,c3,c4,c5,c6,rms")?;
        let vals: Vec<String> = self
            .coeffs
            .iter()
            .chain(std::iter::once(&self.rms))
            .map(|&x| fmt_sig9(x))
            .collect();
        writeln!(w, "{}", vals.join(","))?;
        Ok(())
    }

    /// Convex stage cost with the concave part linearized at `traj`.
    pub fn linearize(&self, traj: &Trajectory<f64>) -> StageCost {
        let h = traj.horizon();
        let m = self.q_minus;
        let mut lin_a = Vec::with_capacity(h + 1);
        let mut lin_v = Vec::with_capacity(h + 1);
        let mut constant = 0.0;
        for i in 0..=h {
            let (a, v) = (traj.a[i], traj.v[i]);
            let ga = m[0][0] * a + m[0][1] * v;
            let gv = m[1][0] * a + m[1][1] * v;
            lin_a.push(self.coeffs[3] - ga);
            lin_v.push(self.coeffs[4] - gv);
            if i < h {
                constant += self.coeffs[5] + 0.5 * (a * ga + v * gv);
            }
        }
        StageCost {
            hessian: self.q_plus,
            lin_a,
            lin_v,
            constant: constant * traj.dt,
        }
    }
}

/// Least-squares fit of an arbitrary function of `(a, v)` over the points
/// of the grid where `keep` holds.
pub fn fit_quadratic(
    opts: &DcOptions,
    f: impl Fn(f64, f64) -> Result<f64>,
    keep: impl Fn(f64, f64) -> bool,
) -> Result<QuadraticSurrogate> {
    opts.validate()?;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (a, v) in opts.grid() {
        if keep(a, v) {
            rows.extend_from_slice(&[a * a, v * v, a * v, a, v, 1.0]);
            rhs.push(f(a, v)?);
        }
    }
    let m = rhs.len();
    if m < 6 {
        return Err(Error::RankDeficient(format!("only {m} fit points")));
    }
    let x = DMatrix::from_row_slice(m, 6, &rows);
    let y = DVector::from_vec(rhs);
    // scale columns so the rank test is unit-free
    let norms: Vec<f64> = (0..6).map(|j| x.column(j).norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::RankDeficient("a basis function vanishes on the grid".into()));
    }
    let mut xs = x.clone();
    for (j, n) in norms.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "condition {:.3e} over {m} points",
            smax / smin
        )));
    }
    let sol = svd.solve(&y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let mut coeffs = [0.0; 6];
    for j in 0..6 {
        coeffs[j] = sol[j] / norms[j];
    }
    let resid = &y - &x * DVector::from_column_slice(&coeffs);
    let mut s = QuadraticSurrogate::from_coeffs(coeffs);
    s.rms = (resid.norm_squared() / m as f64).sqrt();
    s.max_abs = resid.amax();
    s.samples = m;
    Ok(s)
}

/// Fits the consumption rate of `model` over the grid: CPEM in kW, KMMK in
/// mL/s, optionally only at the points with `0 < u <= u_max`.
pub fn fit_surrogate(
    model: &VehicleModel<f64>,
    coeffs: &ResistanceCoefficients<f64>,
    slope: f64,
    u_max: f64,
    opts: &DcOptions,
) -> Result<QuadraticSurrogate> {
    let u_of = |a: f64, v: f64| a + coeffs.eval(v);
    let (scale, restrict) = match model.kind() {
        ModelKind::Cpem => (1e-3, false),
        ModelKind::Kmmk => (1.0, opts.fuel_positive_only),
    };
    let rate = |a: f64, v: f64| Ok(model.rate(v, a, u_of(a, v), slope)? * scale);
    let mut s = fit_quadratic(opts, rate, |a, v| {
        !restrict || {
            let u = u_of(a, v);
            u > 0.0 && u <= u_max
        }
    })?;
    s.rate_scale = scale;
    log::info!(
        "{} surrogate fit over {} points: rms {:.4e}, max {:.4e}",
        model.kind(),
        s.samples,
        s.rms,
        s.max_abs
    );
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct DcResult {
    pub solution: SolutionBundle,
    /// Surrogate value of the initial point and after every iteration.
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Convex-concave procedure from `init`, or from the velocity-minimizing
/// solution when `init` is `None`.
pub fn dc_solve(
    spec: &ScenarioSpec,
    surrogate: &QuadraticSurrogate,
    pwa: &PwaSegments<f64>,
    opts: &DcOptions,
    solver: &SolverOptions,
    init: Option<&Trajectory<f64>>,
) -> Result<DcResult> {
    opts.validate()?;
    let vm;
    let mut current = match init {
        Some(t) => t.clone(),
        None => {
            let built = build_problem(spec, &StrategyKind::Vm, pwa)?;
            let res = solve(&built.program, solver)?;
            vm = extract_solution(&built, &res, &spec.coeffs, &spec.limits)?;
            vm.trajectory.clone()
        }
    };
    if current.horizon() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "initial trajectory has horizon {}, scenario needs {}",
            current.horizon(),
            spec.horizon()
        )));
    }
    let mut history = vec![surrogate.trajectory_value(&current)];
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let cost = surrogate.linearize(&current);
        let built = build_problem(spec, &StrategyKind::DcSurrogate(cost), pwa)?;
        let res = solve(&built.program, solver)?;
        if res.status != SolveStatus::Optimal {
            return Err(Error::Solve {
                status: res.status,
                detail: format!("convex-concave subproblem: {}", res.detail),
            });
        }
        let sol = extract_solution(&built, &res, &spec.coeffs, &spec.limits)?;
        let value = surrogate.trajectory_value(&sol.trajectory);
        let prev = *history.last().expect("history starts non-empty");
        history.push(value);
        current = sol.trajectory.clone();
        last = Some(sol);
        if surrogate.is_convex() || prev - value < opts.rel_tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("convex-concave procedure stopped after {iterations} iterations");
    }
    Ok(DcResult {
        solution: last.expect("at least one iteration"),
        history,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consumption::VehicleModel;
    use crate::dynamics::{derive_resistance_coefficients, RoadSpec};
    use approx::assert_relative_eq;

    fn opts() -> DcOptions {
        DcOptions::for_limits(-3.5, 2.5, 15.0)
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let s = fit_quadratic(&opts(), |a, v| Ok(a * a + v), |_, _| true).unwrap();
        let want = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        for (c, w) in s.coeffs.iter().zip(want) {
            assert!((c - w).abs() < 1e-10, "{:?}", s.coeffs);
        }
        assert!(s.rms < 1e-10);
        assert!(s.is_convex());
    }

    #[test]
    fn indefinite_hessian_splits_exactly() {
        let s = QuadraticSurrogate::from_coeffs([1.0, -2.0, 3.0, 0.0, 0.0, 0.0]);
        assert!(!s.is_convex());
        assert!(s.split_error() <= 1e-12);
        for q in [s.q_plus, s.q_minus] {
            let tr = q[0][0] + q[1][1];
            let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
            assert!(tr >= -1e-12 && det >= -1e-12);
        }
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let mut o = opts();
        o.v_range = (0.0, 1e-300);
        assert!(matches!(
            fit_quadratic(&o, |a, _| Ok(a), |_, _| true),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_quadratic(&opts(), |a, _| Ok(a), |_, _| false).is_err());
    }

    #[test]
    fn kmmk_fit_has_matching_sign() {
        let road = RoadSpec::flat(100.0);
        let model = VehicleModel::reference(crate::consumption::ModelKind::Kmmk);
        let c = derive_resistance_coefficients(&model, &road).unwrap();
        let o = DcOptions {
            fuel_positive_only: true,
            ..opts()
        };
        let s = fit_surrogate(&model, &c, 0.0, 2.5, &o).unwrap();
        assert!(s.rms > 0.0 && s.rms.is_finite());
        let full = fit_surrogate(&model, &c, 0.0, 2.5, &opts()).unwrap();
        assert_eq!(full.samples, 61 * 61);
        assert!(s.samples < full.samples);
        let (mut total, mut agree) = (0, 0);
        for (a, v) in o.grid() {
            let u = a + c.eval(v);
            if u > 0.0 && u <= 2.5 {
                total += 1;
                let r = model.rate(v, a, u, 0.0).unwrap();
                if (r > 0.0) == (s.value(a, v) > 0.0) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn csv_export() {
        let s = QuadraticSurrogate::from_coeffs([1.0, 2.0, 0.0, 0.0, -1.0, 0.5]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "c1,c2,c3,c4,c5,c6,rms\n1,2,0,0,-1,0.5,0\n"
        );
    }

    #[test]
    fn linearization_touches_surrogate_at_incumbent() {
        let s = QuadraticSurrogate::from_coeffs([0.5, -0.2, 0.3, 0.1, 0.05, 0.4]);
        let mut t = Trajectory::zeros(3, 0.1);
        t.a = vec![0.5, -1.0, 0.2, 0.0];
        t.v = vec![8.0, 7.0, 6.5, 7.0];
        let cost = s.linearize(&t);
        let lin: f64 = (0..3)
            .map(|i| {
                let (a, v) = (t.a[i], t.v[i]);
                let q = cost.hessian;
                0.5 * (q[0][0] * a * a + 2.0 * q[0][1] * a * v + q[1][1] * v * v)
                    + cost.lin_a[i] * a
                    + cost.lin_v[i] * v
            })
            .sum::<f64>()
            * 0.1
            + cost.constant;
        assert_relative_eq!(lin, s.trajectory_value(&t), epsilon = 1e-12);
    }
}
