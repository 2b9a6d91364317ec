use crate::error::{Error, Result};

/// Sparse linear row `sum coeffs[k].1 * x[coeffs[k].0]` against `rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min 1/2 x'Qx + c'x + constant` subject to `A x = b`, `G x <= h` and
/// `lower <= x <= upper`.
///
/// `quadratic` holds one entry per unordered index pair with `i <= j`;
/// repeated pairs accumulate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexProgram {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub constant: f64,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.linear.push(0.0);
        self.names.len() - 1
    }

    pub fn add_free_var(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn fix_var(&mut self, j: usize, value: f64) {
        self.lower[j] = value;
        self.upper[j] = value;
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    pub fn add_linear(&mut self, j: usize, c: f64) {
        self.linear[j] += c;
    }

    /// Adds `value` to `Q[i][j]` (and `Q[j][i]`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.quadratic.push((i, j, value));
    }

    pub fn add_eq(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow {
            name: name.into(),
            coeffs,
            rhs,
        });
    }

    pub fn add_le(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearRow {
            name: name.into(),
            coeffs,
            rhs,
        });
    }

    pub fn add_ge(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) {
        let coeffs = coeffs.into_iter().map(|(j, a)| (j, -a)).collect();
        self.add_le(name, coeffs, -rhs);
    }

    pub fn is_lp(&self) -> bool {
        self.quadratic.iter().all(|&(_, _, v)| v == 0.0)
    }

    /// `Q x` with both triangles applied.
    pub fn quad_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for &(i, j, v) in &self.quadratic {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let qx = self.quad_times(x);
        let quad: f64 = x.iter().zip(&qx).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    /// Dense symmetric `Q`, for small programs and tests.
    pub fn dense_quadratic(&self) -> Vec<Vec<f64>> {
        let n = self.num_vars();
        let mut q = vec![vec![0.0; n]; n];
        for &(i, j, v) in &self.quadratic {
            q[i][j] += v;
            if i != j {
                q[j][i] += v;
            }
        }
        q
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Checks dimensions, finiteness and bound ordering.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.linear.len() != n {
            return Err(Error::Dimension(format!(
                "{} names, {} lower, {} upper, {} linear",
                n,
                self.lower.len(),
                self.upper.len(),
                self.linear.len()
            )));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::Dimension(format!(
                    "variable {} has bounds [{}, {}]",
                    self.names[j], self.lower[j], self.upper[j]
                )));
            }
            if !self.linear[j].is_finite() {
                return Err(Error::Dimension(format!(
                    "objective coefficient of {} is not finite",
                    self.names[j]
                )));
            }
        }
        for &(i, j, v) in &self.quadratic {
            if i >= n || j >= n || !v.is_finite() {
                return Err(Error::Dimension(format!("bad quadratic entry ({i}, {j}, {v})")));
            }
        }
        let q = self.dense_diag();
        if let Some(j) = q.iter().position(|&d| d < 0.0) {
            return Err(Error::Dimension(format!(
                "quadratic term has negative diagonal at {}",
                self.names[j]
            )));
        }
        for row in self.equalities.iter().chain(&self.inequalities) {
            if !row.rhs.is_finite() {
                return Err(Error::Dimension(format!("row {} has non-finite rhs", row.name)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Dimension(format!("row {} has bad entry ({j}, {a})", row.name)));
                }
            }
        }
        Ok(())
    }

    fn dense_diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_vars()];
        for &(i, j, v) in &self.quadratic {
            if i == j {
                d[i] += v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_uses_half_quadratic_form() {
        let mut p = ConvexProgram::new();
        let x = p.add_free_var("x");
        let y = p.add_free_var("y");
        p.add_quadratic(x, x, 2.0);
        p.add_quadratic(y, x, 1.0);
        p.add_linear(y, 3.0);
        p.constant = 1.0;
        // 0.5 (2 x^2 + 2 x y) + 3 y + 1
        assert_eq!(p.objective_value(&[1.0, 2.0]), 0.5 * (2.0 + 4.0) + 6.0 + 1.0);
        assert_eq!(
            p.quadratic,
            vec![(0, 1, 1.0), (0, 0, 2.0)].into_iter().rev().collect::<Vec<_>>()
        );
    }

    #[test]
    fn ge_rows_are_negated() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_ge("r", vec![(x, 2.0)], 1.0);
        assert_eq!(p.inequalities[0].coeffs, vec![(0, -2.0)]);
        assert_eq!(p.inequalities[0].rhs, -1.0);
    }

    #[test]
    fn validation_catches_crossed_bounds() {
        let mut p = ConvexProgram::new();
        p.add_var("x", 1.0, 0.0);
        assert!(p.validate().is_err());
    }
}
