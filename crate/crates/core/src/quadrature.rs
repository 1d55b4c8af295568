//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and infinite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("finite interval required"));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::NumericFailure("integrand is not finite".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::NumericFailure(format!(
                "quadrature did not converge (error estimate {error:e})"
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("at least one piece");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integral over `[a, ∞)` via the substitution `x = a + t/(1-t)`.
pub fn integrate_to_infinity(mut f: impl FnMut(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let y = f(a + t / s) / (s * s);
            if y.is_finite() {
                y
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Integral over the real line, split at the given break points (kinks).
pub fn integrate_real_line(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut pts: Vec<f64> = breaks.to_vec();
    if pts.is_empty() {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let parts = pts.len() + 1;
    let tol = abs_tol / parts as f64;
    let first = pts[0];
    let last = pts[pts.len() - 1];
    let mut total = integrate_to_infinity(|x| f(2.0 * first - x), first, tol, rel_tol)?;
    let right = integrate_to_infinity(&mut f, last, tol, rel_tol)?;
    total.value += right.value;
    total.error += right.error;
    for w in pts.windows(2) {
        let mid = integrate(&mut f, w[0], w[1], tol, rel_tol)?;
        total.value += mid.value;
        total.error += mid.error;
    }
    Ok(total)
}

/// Finite integral split at interior break points.
pub fn integrate_with_breaks(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let tol = abs_tol / (pts.len() - 1) as f64;
    let mut total = Integral { value: 0.0, error: 0.0 };
    for w in pts.windows(2) {
        let part = integrate(&mut f, w[0], w[1], tol, rel_tol)?;
        total.value += part.value;
        total.error += part.error;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_and_trig() {
        let r = integrate(|x| x * x, 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((r.value - 9.0).abs() < 1e-12);
        let r = integrate(f64::sin, 0.0, PI, 1e-12, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass_over_real_line() {
        let r = integrate_real_line(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt(), &[0.0], 1e-12, 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn kinks_at_break_points() {
        let r = integrate_with_breaks(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-13, 0.0).unwrap();
        assert!((r.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn divergent_integrand_is_reported() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-12, 0.0);
        assert!(matches!(r, Err(Error::NumericFailure(_))));
    }
}
