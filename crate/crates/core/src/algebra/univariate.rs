//! Dense univariate polynomials over the Gaussian rationals, with exact gcd and numeric roots.

use num_complex::Complex64;

use super::gaussian::GaussianRational;
use crate::numeric::rationalize;

/// Coefficients low to high; no trailing zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UniPoly {
    coeffs: Vec<GaussianRational>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<GaussianRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_sparse<I: Iterator<Item = (u32, GaussianRational)>>(it: I) -> Self {
        let mut v: Vec<GaussianRational> = Vec::new();
        for (k, c) in it {
            let k = k as usize;
            if v.len() <= k {
                v.resize(k + 1, GaussianRational::zero());
            }
            v[k] += &c;
        }
        Self::new(v)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: GaussianRational) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[GaussianRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> Option<&GaussianRational> {
        self.coeffs.last()
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let z = GaussianRational::zero();
        Self::new(
            (0..n)
                .map(|k| {
                    let a = self.coeffs.get(k).unwrap_or(&z);
                    let b = o.coeffs.get(k).unwrap_or(&z);
                    a + b
                })
                .collect(),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coeffs.iter().map(|c| -c).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self::zero();
        }
        let mut v = vec![GaussianRational::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                v[i + j] += &(a * b);
            }
        }
        Self::new(v)
    }

    pub fn scale(&self, c: &GaussianRational) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn monic(&self) -> Self {
        match self.lead() {
            Some(l) => self.scale(&l.inv().expect("nonzero lead")),
            None => Self::zero(),
        }
    }

    /// Euclidean division over the field; panics on a zero divisor.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        let dd = d.degree().expect("division by zero polynomial");
        let inv = d.lead().unwrap().inv().unwrap();
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return (Self::zero(), self.clone());
        }
        let mut q = vec![GaussianRational::zero(); r.len() - dd];
        for k in (0..q.len()).rev() {
            let c = &r[k + dd] * &inv;
            if !c.is_zero() {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    let t = dc * &c;
                    r[k + j] -= &t;
                }
            }
            q[k] = c;
        }
        r.truncate(dd);
        (Self::new(q), Self::new(r))
    }

    pub fn divide_exact(&self, d: &Self) -> Option<Self> {
        let (q, r) = self.div_rem(d);
        r.is_zero().then_some(q)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * &GaussianRational::from_int(k as i64))
                .collect(),
        )
    }

    /// Monic gcd.
    pub fn gcd(&self, o: &Self) -> Self {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    pub fn squarefree(&self) -> Self {
        if self.degree().unwrap_or(0) == 0 {
            return self.monic();
        }
        let g = self.gcd(&self.derivative());
        self.divide_exact(&g).expect("gcd divides").monic()
    }

    pub fn eval_exact(&self, x: &GaussianRational) -> GaussianRational {
        let mut acc = GaussianRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.coeffs.iter().map(|c| c.to_c64()).collect()
    }

    /// Roots of the squarefree part. Exact roots are returned when a
    /// Gaussian-rational candidate with small height annihilates the polynomial.
    pub fn roots(&self) -> Vec<UniRoot> {
        let sq = self.squarefree();
        let c = sq.to_c64();
        let numeric = complex_roots(&c);
        numeric
            .into_iter()
            .map(|z| {
                let z = polish_root(&c, z);
                match exact_candidate(z).filter(|e| sq.eval_exact(e).is_zero()) {
                    Some(e) => UniRoot::Exact(e),
                    None => UniRoot::Numeric(z),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum UniRoot {
    Exact(GaussianRational),
    Numeric(Complex64),
}

impl UniRoot {
    pub fn value(&self) -> Complex64 {
        match self {
            UniRoot::Exact(e) => e.to_c64(),
            UniRoot::Numeric(z) => *z,
        }
    }
}

/// Gaussian-rational candidate near `z` with denominators up to 10⁶.
pub fn exact_candidate(z: Complex64) -> Option<GaussianRational> {
    let tol = 1e-9 * (1.0 + z.norm());
    let re = rationalize(z.re, 1_000_000, tol)?;
    let im = rationalize(z.im, 1_000_000, tol)?;
    Some(GaussianRational::from_parts(re, im))
}

pub fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn horner_d(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn polish_root(c: &[Complex64], mut z: Complex64) -> Complex64 {
    for _ in 0..8 {
        let (p, dp) = horner_d(c, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Aberth–Ehrlich simultaneous iteration. Coefficients low to high.
pub fn complex_roots(c: &[Complex64]) -> Vec<Complex64> {
    let n = match c.len() {
        0 | 1 => return Vec::new(),
        l => l - 1,
    };
    let lead = c[n];
    let monic: Vec<Complex64> = c.iter().map(|a| a / lead).collect();
    if n == 1 {
        return vec![-monic[0]];
    }
    // Cauchy bound for the initial circle.
    let r = 1.0 + monic[..n].iter().map(|a| a.norm()).fold(0.0, f64::max);
    let r0 = r.min(
        monic[..n]
            .iter()
            .enumerate()
            .map(|(k, a)| (a.norm() * n as f64).powf(1.0 / (n - k) as f64))
            .fold(0.0, f64::max)
            .max(1e-3),
    );
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(r0, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let (p, dp) = horner_d(&monic, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            z[k] -= w;
            moved = moved.max(w.norm() / (1.0 + z[k].norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(v: &[i64]) -> UniPoly {
        UniPoly::new(v.iter().map(|&c| GaussianRational::from_int(c)).collect())
    }

    #[test]
    fn gcd_and_squarefree() {
        // (x-1)^2 (x+2)
        let p = u(&[2, -3, 0, 1]);
        let sq = p.squarefree();
        assert_eq!(sq, u(&[-2, 1, 1]));
        assert_eq!(p.gcd(&u(&[-1, 1])), u(&[-1, 1]));
    }

    #[test]
    fn exact_roots_detected() {
        // (x - 1/2)(x + 3i)
        let a = UniPoly::new(vec![GaussianRational::from_ratio(-1, 2), GaussianRational::one()]);
        let b = UniPoly::new(vec![GaussianRational::from_parts((0, 1), (3, 1)), GaussianRational::one()]);
        let roots = a.mul(&b).roots();
        assert_eq!(roots.len(), 2);
        assert!(roots.iter().all(|r| matches!(r, UniRoot::Exact(_))));
    }

    #[test]
    fn irrational_roots_numeric() {
        let roots = u(&[-2, 0, 1]).roots();
        assert_eq!(roots.len(), 2);
        for r in roots {
            assert!(matches!(r, UniRoot::Numeric(_)));
            assert!((r.value().norm() - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn aberth_degree_eight() {
        // Roots of unity of order 8.
        let mut c = vec![Complex64::new(0.0, 0.0); 9];
        c[0] = Complex64::new(-1.0, 0.0);
        c[8] = Complex64::new(1.0, 0.0);
        let r = complex_roots(&c);
        for z in r {
            assert!((z.powu(8) - 1.0).norm() < 1e-12);
        }
    }
}
