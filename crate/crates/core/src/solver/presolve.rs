//! Removal of fixed variables and conversion to cone form.

use super::ipm::{ConeProblem, Csr};
use super::program::ConvexProgram;

/// Where a cone row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowOrigin {
    Eq(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct Presolved {
    pub cone: ConeProblem,
    /// Original index of each reduced variable.
    pub kept: Vec<usize>,
    /// Values of all original variables that were fixed (others NaN).
    pub fixed_value: Vec<f64>,
    pub origin: Vec<RowOrigin>,
    /// Rows that became empty and are violated: (origin, residual).
    pub empty_violations: Vec<(RowOrigin, f64)>,
}

pub(crate) fn presolve(prog: &ConvexProgram, feas_tol: f64) -> Presolved {
    let n0 = prog.num_vars();
    let mut fixed_value = vec![f64::NAN; n0];
    let mut new_index = vec![usize::MAX; n0];
    let mut kept = Vec::new();
    for j in 0..n0 {
        if prog.is_fixed(j) {
            fixed_value[j] = prog.lower[j];
        } else {
            new_index[j] = kept.len();
            kept.push(j);
        }
    }
    let n = kept.len();

    let mut q: Vec<f64> = kept.iter().map(|&j| prog.linear[j]).collect();
    let mut p = Vec::new();
    for &(i, j, v) in &prog.quadratic {
        match (new_index[i], new_index[j]) {
            (usize::MAX, usize::MAX) => {}
            (a, usize::MAX) => q[a] += v * fixed_value[j],
            (usize::MAX, b) => q[b] += v * fixed_value[i],
            (a, b) => {
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                p.push((a, b, v));
            }
        }
    }

    let mut a = Csr::new(n);
    let mut b = Vec::new();
    let mut origin = Vec::new();
    let mut empty_violations = Vec::new();
    let reduce = |coeffs: &[(usize, f64)], rhs: f64| {
        let mut shifted = rhs;
        let mut row = Vec::with_capacity(coeffs.len());
        for &(j, c) in coeffs {
            if new_index[j] == usize::MAX {
                shifted -= c * fixed_value[j];
            } else if c != 0.0 {
                row.push((new_index[j], c));
            }
        }
        (row, shifted)
    };
    let mut eq_rows = Vec::new();
    for (r, row) in prog.equalities.iter().enumerate() {
        let (coeffs, rhs) = reduce(&row.coeffs, row.rhs);
        if coeffs.is_empty() {
            if rhs.abs() > feas_tol * (1.0 + row.rhs.abs()) {
                empty_violations.push((RowOrigin::Eq(r), rhs.abs()));
            }
        } else {
            eq_rows.push((coeffs, rhs, RowOrigin::Eq(r)));
        }
    }
    let m_eq = eq_rows.len();
    for (coeffs, rhs, o) in eq_rows {
        a.push_row(coeffs);
        b.push(rhs);
        origin.push(o);
    }
    for (r, row) in prog.inequalities.iter().enumerate() {
        let (coeffs, rhs) = reduce(&row.coeffs, row.rhs);
        if coeffs.is_empty() {
            if rhs < -feas_tol * (1.0 + row.rhs.abs()) {
                empty_violations.push((RowOrigin::Ineq(r), -rhs));
            }
        } else {
            a.push_row(coeffs);
            b.push(rhs);
            origin.push(RowOrigin::Ineq(r));
        }
    }
    for (k, &j) in kept.iter().enumerate() {
        if prog.lower[j].is_finite() {
            a.push_row([(k, -1.0)]);
            b.push(-prog.lower[j]);
            origin.push(RowOrigin::Lower(j));
        }
        if prog.upper[j].is_finite() {
            a.push_row([(k, 1.0)]);
            b.push(prog.upper[j]);
            origin.push(RowOrigin::Upper(j));
        }
    }

    Presolved {
        cone: ConeProblem { n, p, q, a, b, m_eq },
        kept,
        fixed_value,
        origin,
        empty_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_variables_fold_into_rhs_and_cost() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 2.0, 2.0);
        let y = p.add_var("y", 0.0, f64::INFINITY);
        p.add_quadratic(x, y, 3.0);
        p.add_linear(x, 1.0);
        p.add_eq("e", vec![(x, 1.0), (y, 1.0)], 5.0);
        p.add_le("only_x", vec![(x, 1.0)], 1.0);
        let pre = presolve(&p, 1e-9);
        assert_eq!(pre.kept, vec![y]);
        assert_eq!(pre.cone.q, vec![6.0]);
        assert_eq!(pre.cone.b, vec![3.0, -0.0]);
        assert_eq!(pre.cone.m_eq, 1);
        assert_eq!(pre.empty_violations.len(), 1);
    }
}
