//! Homogeneous self-dual interior point method for
//!
//! ```text
//!   min 1/2 x'Px + q'x   s.t.  A x + s = b,  s in {0}^m_eq x R+^m_in
//! ```
//!
//! Each iteration factors one quasi-definite reduced KKT matrix in banded
//! form (inequality rows are folded into the variable block) and uses it for
//! the constant, predictor and corrector solves.

use super::banded::{BandedLu, BandedMatrix};
use super::ordering::{bandwidth, reverse_cuthill_mckee};

/// Compressed sparse rows.
#[derive(Clone, Debug, Default)]
pub(crate) struct Csr {
    pub ncols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            ptr: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: impl IntoIterator<Item = (usize, f64)>) {
        for (j, v) in row {
            debug_assert!(j < self.ncols);
            if v != 0.0 {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        self.ptr.push(self.idx.len());
    }

    pub fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        self.idx[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    #[inline]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(j, v)| v * x[j]).sum()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_dot(r, x);
        }
    }

    /// `out += A' y` restricted to rows `rows`.
    pub fn mul_t_add(&self, y: &[f64], rows: std::ops::Range<usize>, out: &mut [f64]) {
        for r in rows {
            let yr = y[r];
            if yr != 0.0 {
                for (j, v) in self.row(r) {
                    out[j] += v * yr;
                }
            }
        }
    }
}

/// Presolved program in cone form. `p` stores each unordered pair once.
#[derive(Clone, Debug)]
pub(crate) struct ConeProblem {
    pub n: usize,
    pub p: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub a: Csr,
    pub b: Vec<f64>,
    pub m_eq: usize,
}

impl ConeProblem {
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn m_in(&self) -> usize {
        self.m() - self.m_eq
    }

    pub fn p_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.p {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m()];
        self.a.mul(x, &mut y);
        y
    }

    pub fn at_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.a.mul_t_add(z, 0..self.m(), &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct IpmSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub tol_infeasible: f64,
    pub static_reg: f64,
    pub refine_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Outcome {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
    Numerical(String),
}

/// Normalized residuals of a candidate solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct IpmResult {
    pub outcome: Outcome,
    /// Primal/dual estimates (already divided by tau when optimal).
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residuals: Residuals,
    pub bandwidth: usize,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residuals of `(x, s, z)` as a solution of the cone problem.
pub(crate) fn cone_residuals(cp: &ConeProblem, x: &[f64], s: &[f64], z: &[f64]) -> Residuals {
    residuals_with(cp, x, s, z, &cp.a_mul(x), &cp.p_mul(x), &cp.at_mul(z), 1.0)
}

/// Same as [`cone_residuals`] for `(x, s, z) / tau`, given the products of the
/// unscaled iterate.
#[allow(clippy::too_many_arguments)]
fn residuals_with(
    cp: &ConeProblem,
    x: &[f64],
    s: &[f64],
    z: &[f64],
    ax: &[f64],
    px: &[f64],
    atz: &[f64],
    tau: f64,
) -> Residuals {
    let inv = 1.0 / tau;
    let mut rp = 0.0f64;
    for r in 0..cp.m() {
        let slack = if r < cp.m_eq { 0.0 } else { s[r] };
        rp = rp.max(((ax[r] + slack) * inv - cp.b[r]).abs());
    }
    let mut rd = 0.0f64;
    for j in 0..cp.n {
        rd = rd.max(((px[j] + atz[j]) * inv + cp.q[j]).abs());
    }
    let xpx = dot(x, px) * inv * inv;
    let pobj = 0.5 * xpx + dot(&cp.q, x) * inv;
    let dobj = -0.5 * xpx - dot(&cp.b, z) * inv;
    Residuals {
        primal: rp / (1.0 + norm_inf(&cp.b).max(norm_inf(ax) * inv)),
        dual: rd / (1.0 + norm_inf(&cp.q).max(norm_inf(px) * inv).max(norm_inf(atz) * inv)),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs())),
    }
}

/// Reduced KKT operator in a fixed bandwidth-reducing ordering.
struct Kkt<'a> {
    cp: &'a ConeProblem,
    perm: Vec<usize>,
    kb: usize,
    size: usize,
}

impl<'a> Kkt<'a> {
    fn new(cp: &'a ConeProblem) -> Self {
        let n = cp.n;
        let size = n + cp.m_eq;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); size];
        let mut link = |a: usize, b: usize| {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        };
        for &(i, j, _) in &cp.p {
            link(i, j);
        }
        for r in 0..cp.m_eq {
            for (j, _) in cp.a.row(r) {
                link(j, n + r);
            }
        }
        for r in cp.m_eq..cp.m() {
            let cols: Vec<usize> = cp.a.row(r).map(|(j, _)| j).collect();
            for (k, &ja) in cols.iter().enumerate() {
                for &jb in &cols[k + 1..] {
                    link(ja, jb);
                }
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let kb = bandwidth(&adj, &perm);
        Self { cp, perm, kb, size }
    }

    fn assemble(&self, w: &[f64], reg: f64) -> BandedMatrix {
        let cp = self.cp;
        let n = cp.n;
        let p = &self.perm;
        let mut m = BandedMatrix::zeros(self.size, self.kb, self.kb);
        for &(i, j, v) in &cp.p {
            m.add(p[i], p[j], v);
            if i != j {
                m.add(p[j], p[i], v);
            }
        }
        for r in cp.m_eq..cp.m() {
            let wr = w[r - cp.m_eq];
            let (a, b) = (cp.a.ptr[r], cp.a.ptr[r + 1]);
            for ka in a..b {
                let (ja, va) = (cp.a.idx[ka], cp.a.val[ka]);
                for kb in a..b {
                    let (jb, vb) = (cp.a.idx[kb], cp.a.val[kb]);
                    m.add(p[ja], p[jb], wr * va * vb);
                }
            }
        }
        for r in 0..cp.m_eq {
            for (j, v) in cp.a.row(r) {
                m.add(p[j], p[n + r], v);
                m.add(p[n + r], p[j], v);
            }
        }
        for j in 0..n {
            m.add(p[j], p[j], reg);
        }
        for r in 0..cp.m_eq {
            m.add(p[n + r], p[n + r], -reg);
        }
        m
    }

    /// Unregularized reduced operator.
    fn apply(&self, w: &[f64], u: &[f64], out: &mut [f64]) {
        let cp = self.cp;
        let n = cp.n;
        let (ux, uy) = u.split_at(n);
        let px = cp.p_mul(ux);
        out[..n].copy_from_slice(&px);
        for r in cp.m_eq..cp.m() {
            let t = w[r - cp.m_eq] * cp.a.row_dot(r, ux);
            if t != 0.0 {
                for (j, v) in cp.a.row(r) {
                    out[j] += v * t;
                }
            }
        }
        for r in 0..cp.m_eq {
            let yr = uy[r];
            let mut ax = 0.0;
            for (j, v) in cp.a.row(r) {
                out[j] += v * yr;
                ax += v * ux[j];
            }
            out[n + r] = ax;
        }
    }

    fn solve_permuted(&self, lu: &BandedLu, rhs: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.size];
        for (i, &v) in rhs.iter().enumerate() {
            b[self.perm[i]] = v;
        }
        lu.solve_in_place(&mut b);
        (0..self.size).map(|i| b[self.perm[i]]).collect()
    }

    fn solve_reduced(&self, lu: &BandedLu, w: &[f64], rhs: &[f64], steps: usize) -> Vec<f64> {
        let mut u = self.solve_permuted(lu, rhs);
        let scale = 1.0 + norm_inf(rhs);
        let mut ku = vec![0.0; self.size];
        let mut last = f64::INFINITY;
        for _ in 0..steps {
            self.apply(w, &u, &mut ku);
            let res: Vec<f64> = rhs.iter().zip(&ku).map(|(r, k)| r - k).collect();
            let rn = norm_inf(&res);
            if rn <= 1e-15 * scale || rn >= last {
                break;
            }
            last = rn;
            let du = self.solve_permuted(lu, &res);
            for (a, b) in u.iter_mut().zip(du) {
                *a += b;
            }
        }
        u
    }

    /// Solves the full system
    /// `[P A_eq' A_in'; A_eq 0 0; A_in 0 -W] [dx; dz_eq; dz_in] = [rx; req; rin]`
    /// with `W^{-1} = w`.
    fn solve(&self, lu: &BandedLu, w: &[f64], rx: &[f64], rz: &[f64], steps: usize) -> (Vec<f64>, Vec<f64>) {
        let cp = self.cp;
        let n = cp.n;
        let mut rhs = vec![0.0; self.size];
        rhs[..n].copy_from_slice(rx);
        for r in cp.m_eq..cp.m() {
            let t = w[r - cp.m_eq] * rz[r];
            if t != 0.0 {
                for (j, v) in cp.a.row(r) {
                    rhs[j] += v * t;
                }
            }
        }
        rhs[n..].copy_from_slice(&rz[..cp.m_eq]);
        let u = self.solve_reduced(lu, w, &rhs, steps);
        let dx = u[..n].to_vec();
        let mut dz = vec![0.0; cp.m()];
        dz[..cp.m_eq].copy_from_slice(&u[n..]);
        for r in cp.m_eq..cp.m() {
            dz[r] = w[r - cp.m_eq] * (cp.a.row_dot(r, &dx) - rz[r]);
        }
        (dx, dz)
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn shift_into_cone(v: &mut [f64]) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        let shift = 1.0 - min;
        v.iter_mut().for_each(|x| *x += shift);
    }
}

pub(crate) fn solve(cp: &ConeProblem, st: &IpmSettings) -> IpmResult {
    let n = cp.n;
    let m = cp.m();
    let m_eq = cp.m_eq;
    let m_in = cp.m_in();
    let kkt = Kkt::new(cp);
    let bw = kkt.kb;
    let tiny = 1e-13;

    let fail = |msg: String, x: Vec<f64>, z: Vec<f64>, s: Vec<f64>, it: usize| IpmResult {
        outcome: Outcome::Numerical(msg),
        residuals: cone_residuals(cp, &x, &s, &z),
        x,
        z,
        iterations: it,
        bandwidth: bw,
    };

    // starting point from two least-squares style solves with W = I
    let ones = vec![1.0; m_in];
    let lu0 = kkt.assemble(&ones, st.static_reg).factor(tiny);
    let (mut x, dz) = kkt.solve(&lu0, &ones, &vec![0.0; n], &cp.b, st.refine_steps);
    let mut s = vec![0.0; m];
    for r in m_eq..m {
        s[r] = -dz[r];
    }
    let neg_q: Vec<f64> = cp.q.iter().map(|v| -v).collect();
    let (_, mut z) = kkt.solve(&lu0, &ones, &neg_q, &vec![0.0; m], st.refine_steps);
    shift_into_cone(&mut s[m_eq..]);
    shift_into_cone(&mut z[m_eq..]);
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let norm_b = norm_inf(&cp.b);
    let norm_q = norm_inf(&cp.q);
    let _ = (norm_b, norm_q);

    for iter in 0..st.max_iter {
        if x.iter().chain(&z).chain(&s).any(|v| !v.is_finite()) || !tau.is_finite() {
            return fail("non-finite iterate".into(), x, z, s, iter);
        }
        // residuals of the homogeneous embedding
        let px = cp.p_mul(&x);
        let ax = cp.a_mul(&x);
        let atz = cp.at_mul(&z);
        let rx: Vec<f64> = (0..n).map(|j| px[j] + atz[j] + cp.q[j] * tau).collect();
        let rz: Vec<f64> = (0..m)
            .map(|r| ax[r] + if r < m_eq { 0.0 } else { s[r] } - cp.b[r] * tau)
            .collect();
        let xpx = dot(&x, &px);
        let qx = dot(&cp.q, &x);
        let bz = dot(&cp.b, &z);
        let rtau = qx + bz + kappa + xpx / tau;

        // termination
        let res = residuals_with(cp, &x, &s, &z, &ax, &px, &atz, tau);
        if res.primal <= st.tol && res.dual <= st.tol && res.gap <= st.tol {
            return IpmResult {
                outcome: Outcome::Optimal,
                x: x.iter().map(|v| v / tau).collect(),
                z: z.iter().map(|v| v / tau).collect(),
                iterations: iter,
                residuals: res,
                bandwidth: bw,
            };
        }
        if bz < 0.0 && norm_inf(&atz) <= st.tol_infeasible * -bz {
            return IpmResult {
                outcome: Outcome::PrimalInfeasible,
                residuals: res,
                x,
                z,
                iterations: iter,
                bandwidth: bw,
            };
        }
        if qx < 0.0 {
            let lim = st.tol_infeasible * -qx;
            let eq_ok = (0..m_eq).all(|r| ax[r].abs() <= lim);
            let in_ok = (m_eq..m).all(|r| ax[r] <= lim);
            if norm_inf(&px) <= lim && eq_ok && in_ok {
                return IpmResult {
                    outcome: Outcome::DualInfeasible,
                    residuals: res,
                    x,
                    z,
                    iterations: iter,
                    bandwidth: bw,
                };
            }
        }

        let mu = (dot(&s[m_eq..], &z[m_eq..]) + tau * kappa) / (m_in as f64 + 1.0);
        let w: Vec<f64> = (m_eq..m).map(|r| z[r] / s[r]).collect();
        let lu = kkt.assemble(&w, st.static_reg).factor(tiny);

        // constant system K u1 = [-q; b]
        let (x1, z1) = kkt.solve(&lu, &w, &neg_q, &cp.b, st.refine_steps);
        let xi: Vec<f64> = x.iter().map(|v| v / tau).collect();
        let pxi: Vec<f64> = px.iter().map(|v| v / tau).collect();
        let xi_p_xi = xpx / (tau * tau);
        let q2: Vec<f64> = (0..n).map(|j| cp.q[j] + 2.0 * pxi[j]).collect();
        let denom = dot(&q2, &x1) + dot(&cp.b, &z1) - xi_p_xi - kappa / tau;
        let _ = &xi;

        // one Newton direction for given right-hand sides
        let direction = |dscale: f64, ds: &[f64], dkappa: f64| {
            let rhs_x: Vec<f64> = rx.iter().map(|v| -dscale * v).collect();
            let rhs_z: Vec<f64> = (0..m)
                .map(|r| {
                    if r < m_eq {
                        -dscale * rz[r]
                    } else {
                        -dscale * rz[r] + ds[r - m_eq] / z[r]
                    }
                })
                .collect();
            let (x2, z2) = kkt.solve(&lu, &w, &rhs_x, &rhs_z, st.refine_steps);
            let dtau = (-dscale * rtau + dkappa / tau - dot(&q2, &x2) - dot(&cp.b, &z2)) / denom;
            let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * x1[j]).collect();
            let dz: Vec<f64> = (0..m).map(|r| z2[r] + dtau * z1[r]).collect();
            let mut dsv = vec![0.0; m];
            for r in m_eq..m {
                dsv[r] = -(ds[r - m_eq] + s[r] * dz[r]) / z[r];
            }
            let dk = -(dkappa + kappa * dtau) / tau;
            (dx, dz, dsv, dtau, dk)
        };
        let step_to_boundary = |dz: &[f64], dsv: &[f64], dtau: f64, dk: f64| {
            let mut a = max_step(&s[m_eq..], &dsv[m_eq..]).min(max_step(&z[m_eq..], &dz[m_eq..]));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dk < 0.0 {
                a = a.min(-kappa / dk);
            }
            a
        };

        // predictor
        let sz: Vec<f64> = (m_eq..m).map(|r| s[r] * z[r]).collect();
        let (_, dz_a, ds_a, dtau_a, dk_a) = direction(1.0, &sz, tau * kappa);
        let alpha_aff = step_to_boundary(&dz_a, &ds_a, dtau_a, dk_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let ds_c: Vec<f64> = (m_eq..m)
            .map(|r| s[r] * z[r] + ds_a[r] * dz_a[r] - sigma * mu)
            .collect();
        let dk_c = tau * kappa + dtau_a * dk_a - sigma * mu;
        let (dx, dz, dsv, dtau, dk) = direction(1.0 - sigma, &ds_c, dk_c);
        let alpha = (0.99 * step_to_boundary(&dz, &dsv, dtau, dk)).min(1.0);
        if !alpha.is_finite() || alpha < 1e-12 {
            let scaled = |v: &[f64]| v.iter().map(|e| e / tau).collect::<Vec<f64>>();
            return fail(
                format!("step length {alpha:e} at iteration {iter}"),
                scaled(&x),
                scaled(&z),
                scaled(&s),
                iter,
            );
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for r in 0..m {
            z[r] += alpha * dz[r];
            s[r] += alpha * dsv[r];
        }
        tau += alpha * dtau;
        kappa += alpha * dk;
        // guard against collapse of the cone variables
        for r in m_eq..m {
            s[r] = s[r].max(1e-300);
            z[r] = z[r].max(1e-300);
        }
    }
    let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
    let ss: Vec<f64> = s.iter().map(|v| v / tau).collect();
    let zs: Vec<f64> = z.iter().map(|v| v / tau).collect();
    IpmResult {
        outcome: Outcome::MaxIter,
        residuals: cone_residuals(cp, &xs, &ss, &zs),
        x: xs,
        z: zs,
        iterations: st.max_iter,
        bandwidth: bw,
    }
}
