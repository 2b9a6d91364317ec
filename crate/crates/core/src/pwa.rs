//! Secant over-approximation of the resistive deceleration on `[0, v_max]`.

use std::io::Write;

use crate::dynamics::ResistanceCoefficients;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::fmt_sig9;

/// `K` affine pieces `y_k(v) = slope[k] v + offset[k]`, each the secant of
/// `a_r` through adjacent knots `k dv` and `(k + 1) dv`.
#[derive(Clone, Debug, PartialEq)]
pub struct PwaSegments<T: Scalar> {
    pub v_max: T,
    pub dv: T,
    pub slope: Vec<T>,
    pub offset: Vec<T>,
}

impl<T: Scalar> PwaSegments<T> {
    pub fn len(&self) -> usize {
        self.slope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slope.is_empty()
    }

    pub fn knot(&self, k: usize) -> T {
        T::lit(k as f64) * self.dv
    }

    pub fn pieces(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.slope.iter().copied().zip(self.offset.iter().copied())
    }

    /// Pointwise maximum of the pieces, without a domain check.
    #[inline]
    pub fn eval_unchecked(&self, v: T) -> T {
        self.pieces()
            .map(|(b1, b2)| b1 * v + b2)
            .fold(T::neg_infinity(), T::max)
    }

    pub fn to_f64(&self) -> PwaSegments<f64> {
        PwaSegments {
            v_max: self.v_max.to_f64_lossy(),
            dv: self.dv.to_f64_lossy(),
            slope: self.slope.iter().map(|x| x.to_f64_lossy()).collect(),
            offset: self.offset.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }

    /// Writes `k,b1,b2` rows, `k` starting at 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,b1,b2")?;
        for (k, (b1, b2)) in self.pieces().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                k + 1,
                fmt_sig9(b1.to_f64_lossy()),
                fmt_sig9(b2.to_f64_lossy())
            )?;
        }
        Ok(())
    }
}

/// Builds the `K`-piece secant interpolant of `a_r` on `[0, v_max]`.
pub fn build_pwa<T: Scalar>(coeffs: &ResistanceCoefficients<T>, v_max: T, segments: usize) -> Result<PwaSegments<T>> {
    if segments < 1 {
        return Err(invalid("pwa.segments", "need at least one segment"));
    }
    if !(v_max > T::zero()) {
        return Err(invalid("pwa.v_max", "must be positive"));
    }
    if !(coeffs.d3 > T::zero()) {
        return Err(Error::NonConvexResistance(coeffs.d3.to_f64_lossy()));
    }
    let dv = v_max / T::lit(segments as f64);
    let mut slope = Vec::with_capacity(segments);
    let mut offset = Vec::with_capacity(segments);
    for k in 1..=segments {
        let lo = T::lit((k - 1) as f64) * dv;
        let hi = if k == segments { v_max } else { T::lit(k as f64) * dv };
        let b1 = (coeffs.eval(hi) - coeffs.eval(lo)) / (hi - lo);
        slope.push(b1);
        offset.push(coeffs.eval(lo) - b1 * lo);
    }
    Ok(PwaSegments {
        v_max,
        dv,
        slope,
        offset,
    })
}

/// Evaluates the approximation at `v` in `[0, v_max]`.
pub fn pwa_eval<T: Scalar>(seg: &PwaSegments<T>, v: T) -> Result<T> {
    if !(v >= T::zero() && v <= seg.v_max) {
        return Err(Error::OutOfDomain {
            value: v.to_f64_lossy(),
            lo: 0.0,
            hi: seg.v_max.to_f64_lossy(),
        });
    }
    Ok(seg.eval_unchecked(v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationError<T: Scalar> {
    pub max_abs: T,
    pub max_rel: T,
    /// `(v, pwa(v) - a_r(v))` per sample.
    pub samples: Vec<(T, T)>,
}

/// Samples `pwa - a_r` on a uniform grid of `samples` points.
pub fn approximation_error_report<T: Scalar>(
    seg: &PwaSegments<T>,
    coeffs: &ResistanceCoefficients<T>,
    samples: usize,
) -> Result<ApproximationError<T>> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let mut max_abs = T::zero();
    let mut max_rel = T::zero();
    let mut out = Vec::with_capacity(samples);
    let step = seg.v_max / T::lit((samples - 1) as f64);
    for s in 0..samples {
        let v = if s + 1 == samples {
            seg.v_max
        } else {
            T::lit(s as f64) * step
        };
        let exact = coeffs.eval(v);
        let err = seg.eval_unchecked(v) - exact;
        max_abs = max_abs.max(err.abs());
        if exact != T::zero() {
            max_rel = max_rel.max((err / exact).abs());
        }
        out.push((v, err));
    }
    Ok(ApproximationError {
        max_abs,
        max_rel,
        samples: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square() -> ResistanceCoefficients<f64> {
        ResistanceCoefficients::new(0.0, 0.0, 1.0).unwrap()
    }

    fn cpem() -> ResistanceCoefficients<f64> {
        ResistanceCoefficients::new(0.07851409125, 5.6289884e-4, 0.8001305088 / 3042.0).unwrap()
    }

    #[test]
    fn secants_of_v_squared() {
        let s = build_pwa(&square(), 2.0, 2).unwrap();
        assert_eq!(s.slope, vec![1.0, 3.0]);
        assert_eq!(s.offset, vec![0.0, -2.0]);
        assert_eq!(pwa_eval(&s, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn knots_are_exact() {
        let c = cpem();
        let s = build_pwa(&c, 15.0, 5).unwrap();
        for v in [0.0, 3.0, 6.0, 9.0, 12.0, 15.0] {
            assert_relative_eq!(pwa_eval(&s, v).unwrap(), c.eval(v), epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let s = build_pwa(&square(), 2.0, 2).unwrap();
        assert!(pwa_eval(&s, -0.1).is_err());
        assert!(pwa_eval(&s, 2.1).is_err());
        assert!(build_pwa(&square(), 2.0, 0).is_err());
    }

    #[test]
    fn single_secant_error_peaks_mid_interval() {
        // max_v (v - v^2) on [0, 1] is 1/4 at v = 1/2; with v_max = 2 the
        // secant is 2v and the gap 2v - v^2 peaks at 1
        let s = build_pwa(&square(), 1.0, 1).unwrap();
        let r = approximation_error_report(&s, &square(), 10_001).unwrap();
        assert_relative_eq!(r.max_abs, 0.25, epsilon = 1e-12);
        let s = build_pwa(&square(), 2.0, 1).unwrap();
        let r = approximation_error_report(&s, &square(), 10_001).unwrap();
        assert_relative_eq!(r.max_abs, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn affine_part_is_reproduced() {
        let c = ResistanceCoefficients::new(0.3, 0.02, 1e-15).unwrap();
        let s = build_pwa(&c, 15.0, 4).unwrap();
        let r = approximation_error_report(&s, &c, 1001).unwrap();
        assert!(r.max_abs < 1e-13);
    }

    #[test]
    fn fine_grid_relative_error() {
        let c = cpem();
        let s = build_pwa(&c, 15.0, 500).unwrap();
        let r = approximation_error_report(&s, &c, 10_000).unwrap();
        assert!(r.max_rel < 1e-4, "{}", r.max_rel);
        assert!(r.samples.iter().all(|&(_, e)| e >= -1e-12));
    }

    #[test]
    fn slopes_strictly_increase() {
        let s = build_pwa(&cpem(), 15.0, 50).unwrap();
        for w in s.slope.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn csv_dump() {
        let s = build_pwa(&square(), 2.0, 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,b1,b2\n1,1,0\n2,3,-2\n");
    }

    proptest! {
        #[test]
        fn over_approximates_and_refines(
            d1 in -0.5..0.5f64, d2 in 0.0..0.01f64, d3 in 1e-5..1e-2f64, k in 1usize..40,
        ) {
            let c = ResistanceCoefficients::new(d1, d2, d3).unwrap();
            let s = build_pwa(&c, 15.0, k).unwrap();
            let s2 = build_pwa(&c, 15.0, 2 * k).unwrap();
            let r = approximation_error_report(&s, &c, 2001).unwrap();
            let r2 = approximation_error_report(&s2, &c, 2001).unwrap();
            prop_assert!(r.samples.iter().all(|&(_, e)| e >= -1e-12));
            prop_assert!(r2.max_abs <= r.max_abs + 1e-15);
            for j in 0..k {
                let knot = s.knot(j + 1).min(15.0);
                let left = s.slope[j] * knot + s.offset[j];
                prop_assert!((left - c.eval(knot)).abs() <= 1e-12);
                if j + 1 < k {
                    let right = s.slope[j + 1] * knot + s.offset[j + 1];
                    prop_assert!((left - right).abs() <= 1e-12);
                }
            }
        }
    }
}
