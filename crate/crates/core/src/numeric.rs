//! Small numeric helpers: continued fractions, least squares, quadrature.

use num_complex::Complex64;

pub type C64 = Complex64;

pub const fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// Best rational approximation `p/q` with `q ≤ max_den` from the continued
/// fraction of `x`; returned only when `|x - p/q| ≤ tol`.
pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol {
            return Some((h1 as i64, k1 as i64));
        }
        let frac = r - a;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    (k1 > 0 && (x - h1 as f64 / k1 as f64).abs() <= tol).then(|| (h1 as i64, k1 as i64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual divided by the range of the fitted values.
    pub relative_residual: f64,
    pub max_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0, f64::max);
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let relative_residual = if range > 0.0 { max_residual / range } else { 0.0 };
    Some(LinearFit {
        slope,
        intercept,
        relative_residual,
        max_residual,
    })
}

/// 16-point Gauss–Legendre nodes and weights on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// Integral of `f` over the real interval `[a, b]`, split into `pieces` panels.
pub fn gauss_legendre<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, pieces: usize) -> C64 {
    let h = (b - a) / pieces as f64;
    let mut acc = c64(0.0, 0.0);
    for k in 0..pieces {
        let lo = a + h * k as f64;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for &(x, w) in &GL16 {
            acc += (f(mid - half * x) + f(mid + half * x)) * (w * half);
        }
    }
    acc
}

/// Unwraps `new` to the branch of the argument closest to `prev`.
pub fn unwrap_angle(prev: f64, new: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    new + tau * ((prev - new) / tau).round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationalize_examples() {
        assert_eq!(rationalize(1.5, 64, 1e-9), Some((3, 2)));
        assert_eq!(rationalize(-0.2, 64, 1e-9), Some((-1, 5)));
        assert_eq!(rationalize(2f64.sqrt(), 64, 1e-9), None);
        assert_eq!(rationalize(311.0 / 99.0, 128, 1e-9), Some((311, 99)));
        assert_eq!(rationalize(311.0 / 99.0, 64, 1e-9), None);
    }

    #[test]
    fn quadrature_polynomial_exact() {
        let v = gauss_legendre(|t| c64(t.powi(7), t * t), 0.0, 2.0, 1);
        assert!((v.re - 32.0).abs() < 1e-12);
        assert!((v.im - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!(f.relative_residual < 1e-12);
    }
}
