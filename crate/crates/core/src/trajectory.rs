//! Time-indexed longitudinal trajectories and their CSV form.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of Euler steps covering a travel time, `ceil(t_m / dt)`.
///
/// A relative slack of `1e-9` absorbs representation error so that e.g.
/// `18.0 / 0.1` yields 180 rather than 181.
pub fn horizon_steps(travel_time: f64, dt: f64) -> usize {
    let ratio = travel_time / dt;
    (ratio - 1e-9 * ratio.abs().max(1.0)).ceil().max(0.0) as usize
}

/// State and control samples on a uniform grid with step `dt`.
///
/// `x`, `v`, `a`, `u` hold `H + 1` samples; `jerk` holds `H` forward
/// differences, since `J_H` would need `a_{H+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub dt: T,
    pub x: Vec<T>,
    pub v: Vec<T>,
    pub a: Vec<T>,
    pub u: Vec<T>,
    pub jerk: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// All-zero trajectory with `horizon + 1` samples.
    pub fn zeros(horizon: usize, dt: T) -> Self {
        Self {
            dt,
            x: vec![T::zero(); horizon + 1],
            v: vec![T::zero(); horizon + 1],
            a: vec![T::zero(); horizon + 1],
            u: vec![T::zero(); horizon + 1],
            jerk: vec![T::zero(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    pub fn time(&self, i: usize) -> T {
        T::lit(i as f64) * self.dt
    }

    pub fn duration(&self) -> T {
        self.time(self.horizon())
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.x.len();
        if n == 0 {
            return Err(Error::Dimension("trajectory has no samples".into()));
        }
        if self.v.len() != n || self.a.len() != n || self.u.len() != n {
            return Err(Error::Dimension(format!(
                "x/v/a/u lengths {}/{}/{}/{} differ",
                n,
                self.v.len(),
                self.a.len(),
                self.u.len()
            )));
        }
        if self.jerk.len() + 1 != n {
            return Err(Error::Dimension(format!(
                "jerk has {} entries, expected {}",
                self.jerk.len(),
                n - 1
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::Dimension("non-positive step".into()));
        }
        Ok(())
    }

    /// Recomputes the jerk array from `a` by forward differences.
    pub fn refresh_jerk(&mut self) {
        self.jerk = self.a.windows(2).map(|w| (w[1] - w[0]) / self.dt).collect();
    }

    pub fn to_f64(&self) -> Trajectory<f64> {
        let cv = |xs: &[T]| xs.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        Trajectory {
            dt: self.dt.to_f64_lossy(),
            x: cv(&self.x),
            v: cv(&self.v),
            a: cv(&self.a),
            u: cv(&self.u),
            jerk: cv(&self.jerk),
        }
    }
}

/// Formats with nine significant digits, without trailing zeros.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    let mag = rounded.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// Writes `i,t,x,v,a,u,J` rows (plus `rate` when given). `J` is empty on
/// the last row.
pub fn write_csv<W: Write>(w: W, traj: &Trajectory<f64>, rate: Option<&[f64]>) -> Result<()> {
    traj.check_shape()?;
    let n = traj.x.len();
    if let Some(r) = rate {
        if r.len() != n && r.len() + 1 != n {
            return Err(Error::Dimension(format!(
                "rate column has {} entries for {} samples",
                r.len(),
                n
            )));
        }
    }
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["i", "t", "x", "v", "a", "u", "J"];
    if rate.is_some() {
        header.push("rate");
    }
    wr.write_record(&header)?;
    for i in 0..n {
        let mut rec = vec![
            i.to_string(),
            fmt_sig9(traj.time(i)),
            fmt_sig9(traj.x[i]),
            fmt_sig9(traj.v[i]),
            fmt_sig9(traj.a[i]),
            fmt_sig9(traj.u[i]),
            traj.jerk.get(i).map(|j| fmt_sig9(*j)).unwrap_or_default(),
        ];
        if let Some(r) = rate {
            rec.push(r.get(i).map(|v| fmt_sig9(*v)).unwrap_or_default());
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_csv`]. The step is taken from the
/// `t` column; an extra `rate` column is ignored.
pub fn read_csv<R: Read>(r: R) -> Result<Trajectory<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (ci, ct, cx, cv, ca, cu, cj) = (
        col("i")?,
        col("t")?,
        col("x")?,
        col("v")?,
        col("a")?,
        col("u")?,
        col("J")?,
    );
    let num = |s: &str, what: &str, row: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("row {row} column {what}: {e}")))
    };
    let mut t = Vec::new();
    let mut traj = Trajectory::<f64>::zeros(0, 1.0);
    traj.x.clear();
    traj.v.clear();
    traj.a.clear();
    traj.u.clear();
    let mut jerk = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let idx = num(&rec[ci], "i", row)? as usize;
        if idx != row {
            return Err(Error::Parse(format!("row {row} has index {idx}")));
        }
        t.push(num(&rec[ct], "t", row)?);
        traj.x.push(num(&rec[cx], "x", row)?);
        traj.v.push(num(&rec[cv], "v", row)?);
        traj.a.push(num(&rec[ca], "a", row)?);
        traj.u.push(num(&rec[cu], "u", row)?);
        let j = rec[cj].trim();
        if !j.is_empty() {
            jerk.push(num(j, "J", row)?);
        }
    }
    if t.len() < 2 {
        return Err(Error::Parse("trajectory needs at least two rows".into()));
    }
    traj.dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    traj.jerk = jerk;
    traj.check_shape()?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_rule_tolerates_representation_error() {
        assert_eq!(horizon_steps(18.0, 0.1), 180);
        assert_eq!(horizon_steps(18.05, 0.1), 181);
        assert_eq!(horizon_steps(0.3, 0.1), 3);
        assert_eq!(horizon_steps(19.7, 0.1), 197);
        assert_eq!(horizon_steps(30.0, 0.1), 300);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.1), "0.1");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(-123456.789012), "-123456.789");
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(2.5e-7), "2.5e-7");
    }

    #[test]
    fn csv_round_trip_preserves_nine_digits() {
        let mut tr = Trajectory::<f64>::zeros(3, 0.1);
        tr.x = vec![0.0, 0.8, 1.6, 2.4000001];
        tr.v = vec![8.0, 8.0, 8.0, 8.0];
        tr.a = vec![-0.1, 0.0, 0.05, 0.0];
        tr.u = vec![0.0, 0.1, 0.2, 0.0];
        tr.refresh_jerk();
        let mut buf = Vec::new();
        write_csv(&mut buf, &tr, None).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,t,x,v,a,u,J\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.horizon(), 3);
        for (p, q) in back.x.iter().zip(&tr.x) {
            assert!((p - q).abs() <= 1e-8 * q.abs().max(1.0));
        }
        assert!((back.dt - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rate_column_is_appended() {
        let tr = Trajectory::<f64>::zeros(2, 0.5);
        let mut buf = Vec::new();
        write_csv(&mut buf, &tr, Some(&[1.0, 2.0])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "i,t,x,v,a,u,J,rate");
        assert_eq!(lines[2], "1,0.5,0,0,0,0,0,2");
        assert_eq!(lines[3], "2,1,0,0,0,0,,");
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tr = Trajectory::<f64>::zeros(2, 0.1);
        tr.jerk.push(0.0);
        assert!(tr.check_shape().is_err());
    }
}
