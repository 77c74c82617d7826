//! One-dimensional bracketed searches.

use crate::error::{Error, Result};

/// Result of a scalar search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`,
/// stopping when the bracket is narrower than `tol`.
pub fn golden_section_min<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::NoBracket(format!("invalid interval [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evals = 2;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    let (x, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok(Optimum {
        x,
        value,
        evaluations: evals,
    })
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
pub fn golden_section_max<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let o = golden_section_min(|x| f(x).map(|v| -v), a, b, tol)?;
    Ok(Optimum { value: -o.value, ..o })
}

/// Samples `f` at `n` uniform points and returns the sub-interval around
/// the smallest sample. Fails if the minimum sits on an end point.
pub fn scan_bracket<F>(mut f: F, a: f64, b: f64, n: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if n < 3 || !(a < b) {
        return Err(Error::NoBracket(format!("need n >= 3 and a < b, got n = {n}, [{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let v = f(a + i as f64 * h)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    if best.0 == 0 || best.0 == n - 1 {
        return Err(Error::NoBracket(format!(
            "minimum on the boundary of [{a}, {b}] (sample {} of {n})",
            best.0
        )));
    }
    Ok((a + (best.0 - 1) as f64 * h, a + (best.0 + 1) as f64 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finds_parabola_vertex() {
        let o = golden_section_min(|x| Ok((x - 1.3) * (x - 1.3) + 2.0), -4.0, 5.0, 1e-8).unwrap();
        assert!((o.x - 1.3).abs() < 1e-7);
        assert!((o.value - 2.0).abs() < 1e-12);
        let m = golden_section_max(|x| Ok((x).sin()), 0.0, 3.0, 1e-9).unwrap();
        assert!((m.x - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
    }

    #[test]
    fn bracket_rejects_monotone() {
        assert!(matches!(scan_bracket(|x| Ok(x), 0.0, 1.0, 11), Err(Error::NoBracket(_))));
        let (lo, hi) = scan_bracket(|x| Ok((x - 0.42).abs()), 0.0, 1.0, 11).unwrap();
        assert!(lo < 0.42 && 0.42 < hi);
    }

    proptest! {
        #[test]
        fn vertex_within_tolerance(v in -3.0..3.0f64, s in 0.1..10.0f64) {
            let o = golden_section_min(|x| Ok(s * (x - v).powi(2)), -5.0, 5.0, 1e-6).unwrap();
            prop_assert!((o.x - v).abs() < 1e-6);
        }
    }
}
