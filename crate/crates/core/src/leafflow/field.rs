//! Leaf data consumed by the tracers: tangent field, `Ω₁(Y)`, and `ω`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::forms::CompiledForm;
use crate::numeric::{c64, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LeafError {
    #[error("evaluation near a pole at ({x}, {y})")]
    NearPole { x: C64, y: C64 },
    #[error("tangent field vanishes at ({x}, {y})")]
    Singular { x: C64, y: C64 },
    #[error("Ω₁(Y) = {value} is below tolerance at ({x}, {y}); saddle of the leafwise flow")]
    SaddleProximity { x: C64, y: C64, value: C64 },
}

/// A holomorphic foliation seen through its tangent field `Y` and the
/// contraction of `Ω₁` with `Y`.
pub trait LeafField: Sync {
    fn tangent(&self, p: [C64; 2]) -> [C64; 2];

    fn omega1_y(&self, p: [C64; 2]) -> Result<C64, LeafError>;

    /// `ω(v)` at `p`.
    fn omega(&self, p: [C64; 2], v: [C64; 2]) -> Result<C64, LeafError>;

    /// Change of a local first integral between two nearby points, when the
    /// model has one. Used to pull numerical drift back onto the leaf.
    fn integral_increment(&self, _from: [C64; 2], _to: [C64; 2]) -> Option<C64> {
        None
    }

    /// Moves `p` transversally so the first integral changes by `-drift`.
    fn correct(&self, p: [C64; 2], _drift: C64) -> [C64; 2] {
        p
    }

    /// `Ω₁(v)` for `v` tangent to the leaf at `p`.
    fn omega1_along(&self, p: [C64; 2], v: [C64; 2]) -> Result<C64, LeafError> {
        let y = self.tangent(p);
        let k = if y[0].norm() >= y[1].norm() { 0 } else { 1 };
        if y[k].norm() == 0.0 {
            return Err(LeafError::Singular { x: p[0], y: p[1] });
        }
        Ok(self.omega1_y(p)? * (v[k] / y[k]))
    }
}

fn pole(p: [C64; 2]) -> impl Fn(AlgebraError) -> LeafError {
    move |_| LeafError::NearPole { x: p[0], y: p[1] }
}

impl LeafField for CompiledForm {
    fn tangent(&self, p: [C64; 2]) -> [C64; 2] {
        CompiledForm::tangent(self, p[0], p[1])
    }

    fn omega1_y(&self, p: [C64; 2]) -> Result<C64, LeafError> {
        let y = CompiledForm::tangent(self, p[0], p[1]);
        self.omega1(p[0], p[1], y).map_err(pole(p))
    }

    fn omega(&self, p: [C64; 2], v: [C64; 2]) -> Result<C64, LeafError> {
        CompiledForm::omega(self, p[0], p[1], v).map_err(pole(p))
    }
}

/// Linear Siegel corner `ω = u^a v^b (λ₁ u dv + λ₂ v du)` with `λ₁, λ₂ > 0`.
///
/// The tangent field is `Y = λ₁ u ∂u − λ₂ v ∂v`, the first integral is
/// `u^{λ₂} v^{λ₁}`, and `Ω₁ = −(a+1) du/u − (b+1) dv/v`, so that
/// `Ω₁(Y) = −K` with `K = λ₁(1+a) − λ₂(1+b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiegelModel {
    pub lambda1: f64,
    pub lambda2: f64,
    pub a: i64,
    pub b: i64,
}

impl SiegelModel {
    pub fn new(lambda1: f64, lambda2: f64, a: i64, b: i64) -> Self {
        Self { lambda1, lambda2, a, b }
    }

    pub fn k(&self) -> f64 {
        self.lambda1 * (1 + self.a) as f64 - self.lambda2 * (1 + self.b) as f64
    }
}

impl LeafField for SiegelModel {
    fn tangent(&self, p: [C64; 2]) -> [C64; 2] {
        [p[0] * self.lambda1, -p[1] * self.lambda2]
    }

    fn omega1_y(&self, p: [C64; 2]) -> Result<C64, LeafError> {
        if p[0].norm() == 0.0 && p[1].norm() == 0.0 {
            return Err(LeafError::Singular { x: p[0], y: p[1] });
        }
        Ok(c64(-self.k(), 0.0))
    }

    fn omega(&self, p: [C64; 2], v: [C64; 2]) -> Result<C64, LeafError> {
        let (u, w) = (p[0], p[1]);
        if (self.a < 0 && u.norm() == 0.0) || (self.b < 0 && w.norm() == 0.0) {
            return Err(LeafError::NearPole { x: u, y: w });
        }
        let h = u.powi(self.a as i32) * w.powi(self.b as i32);
        Ok(h * (u * v[1] * self.lambda1 + w * v[0] * self.lambda2))
    }

    fn integral_increment(&self, from: [C64; 2], to: [C64; 2]) -> Option<C64> {
        Some((to[0] / from[0]).ln() * self.lambda2 + (to[1] / from[1]).ln() * self.lambda1)
    }

    fn correct(&self, p: [C64; 2], drift: C64) -> [C64; 2] {
        let n = self.lambda1 * self.lambda1 + self.lambda2 * self.lambda2;
        [
            p[0] * (-drift * (self.lambda2 / n)).exp(),
            p[1] * (-drift * (self.lambda1 / n)).exp(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siegel_model_matches_compiled_form() {
        // 2u dv + v du with a = b = 0.
        let w = crate::forms::MeromorphicOneForm::parse("2*x dy + y dx").unwrap();
        let cf = CompiledForm::from_form(&w).unwrap();
        let m = SiegelModel::new(2.0, 1.0, 0, 0);
        let p = [c64(0.7, 0.1), c64(0.2, -0.3)];
        let ratio_tangent = LeafField::tangent(&cf, p)[0] / m.tangent(p)[0];
        let ratio_second = LeafField::tangent(&cf, p)[1] / m.tangent(p)[1];
        assert!((ratio_tangent - ratio_second).norm() < 1e-14);
        let o_cf = cf.omega1_along(p, LeafField::tangent(&cf, p)).unwrap();
        let o_m = m.omega1_along(p, LeafField::tangent(&cf, p)).unwrap();
        assert!((o_cf - o_m).norm() < 1e-12);
    }
}
