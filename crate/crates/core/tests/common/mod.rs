//! Brute-force oracles for small convex programs.
#![allow(dead_code)]

use ecoplus::solver::ConvexProgram;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Dense Gaussian elimination with partial pivoting. `None` if singular.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() <= 1e-11 * scale {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Every constraint of `p` as a dense `<=` row (equalities as `=` rows).
pub struct DenseRows {
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

pub fn dense_rows(p: &ConvexProgram) -> DenseRows {
    let n = p.num_vars();
    let dense = |coeffs: &[(usize, f64)]| {
        let mut r = vec![0.0; n];
        for &(j, a) in coeffs {
            r[j] += a;
        }
        r
    };
    let eq = p.equalities.iter().map(|r| (dense(&r.coeffs), r.rhs)).collect();
    let mut le: Vec<(Vec<f64>, f64)> = p.inequalities.iter().map(|r| (dense(&r.coeffs), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        if p.lower[j].is_finite() {
            e[j] = -1.0;
            le.push((e.clone(), -p.lower[j]));
        }
        if p.upper[j].is_finite() {
            e[j] = 1.0;
            le.push((e, p.upper[j]));
        }
    }
    DenseRows { eq, le }
}

fn feasible(rows: &DenseRows, x: &[f64], tol: f64) -> bool {
    let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    rows.eq.iter().all(|(r, b)| (dot(r) - b).abs() <= tol * (1.0 + b.abs()))
        && rows.le.iter().all(|(r, b)| dot(r) - b <= tol * (1.0 + b.abs()))
}

fn subsets(m: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..m {
            cur.push(i);
            if rec(i + 1, m, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(0, m, k, &mut Vec::new(), f);
}

/// Minimum of a bounded LP over all basic feasible solutions.
pub fn lp_vertex_enumeration(p: &ConvexProgram) -> Option<f64> {
    let n = p.num_vars();
    let rows = dense_rows(p);
    let k = n.checked_sub(rows.eq.len())?;
    let mut best: Option<f64> = None;
    subsets(rows.le.len(), k, &mut |s| {
        let mut a: Vec<Vec<f64>> = rows.eq.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = rows.eq.iter().map(|(_, v)| *v).collect();
        for &i in s {
            a.push(rows.le[i].0.clone());
            b.push(rows.le[i].1);
        }
        if let Some(x) = dense_solve(a, b) {
            if feasible(&rows, &x, 1e-9) {
                let obj = p.objective_value(&x);
                best = Some(best.map_or(obj, |o: f64| o.min(obj)));
            }
        }
        false
    });
    best
}

/// Minimum of a strictly convex QP: closed-form equality-constrained
/// solutions over every candidate active set, keeping the first that
/// satisfies the full KKT conditions.
pub fn qp_active_set_enumeration(p: &ConvexProgram) -> Option<(f64, Vec<f64>)> {
    let n = p.num_vars();
    let rows = dense_rows(p);
    let q = p.dense_quadratic();
    let m_eq = rows.eq.len();
    let mut found = None;
    for k in 0..=n.saturating_sub(m_eq) {
        subsets(rows.le.len(), k, &mut |s| {
            let act: Vec<&(Vec<f64>, f64)> = rows.eq.iter().chain(s.iter().map(|&i| &rows.le[i])).collect();
            let dim = n + act.len();
            let mut a = vec![vec![0.0; dim]; dim];
            let mut b = vec![0.0; dim];
            for i in 0..n {
                a[i][..n].copy_from_slice(&q[i]);
                b[i] = -p.linear[i];
            }
            for (r, (row, rhs)) in act.iter().enumerate() {
                for j in 0..n {
                    a[j][n + r] = row[j];
                    a[n + r][j] = row[j];
                }
                b[n + r] = *rhs;
            }
            let Some(sol) = dense_solve(a, b) else { return false };
            let x = &sol[..n];
            let mult_ok = sol[n + m_eq..].iter().all(|&l| l >= -1e-9);
            if mult_ok && feasible(&rows, x, 1e-9) {
                found = Some((p.objective_value(x), x.to_vec()));
                return true;
            }
            false
        });
        if found.is_some() {
            break;
        }
    }
    found
}

/// Random bounded program around an interior point so that it is feasible.
pub fn random_program(seed: u64, quadratic: bool) -> ConvexProgram {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = if quadratic {
        rng.gen_range(1..=6)
    } else {
        rng.gen_range(1..=5)
    };
    let mut p = ConvexProgram::new();
    let mut x0 = Vec::new();
    for j in 0..n {
        let lo = -rng.gen_range(0.5..5.0);
        let hi = rng.gen_range(0.5..5.0);
        p.add_var(format!("x{j}"), lo, hi);
        x0.push(rng.gen_range(lo * 0.5..hi * 0.5));
        p.add_linear(j, rng.gen_range(-3.0..3.0));
    }
    if quadratic {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for i in 0..n {
            for j in i..n {
                let mut v: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                if i == j {
                    v += 0.1;
                }
                p.add_quadratic(i, j, v);
            }
        }
    }
    let m_eq = if n > 1 { rng.gen_range(0..=1) } else { 0 };
    let max_in = if quadratic { 3 } else { 5 };
    let m_in = rng.gen_range(0..=max_in);
    for r in 0..m_eq + m_in {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-2.0..2.0)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.gen_range(0..n), 1.0));
        }
        let ax0: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        if r < m_eq {
            p.add_eq(format!("e{r}"), coeffs, ax0);
        } else {
            p.add_le(format!("l{r}"), coeffs, ax0 + rng.gen_range(0.0..1.0));
        }
    }
    p
}
