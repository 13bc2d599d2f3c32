//! Computational kernels for singular holomorphic foliations on planar charts.
//!
//! The exact layer ([`algebra`], [`forms`], [`singularities`], [`blowup`]) works
//! over Gaussian rationals. The numeric layer ([`leafflow`], [`holonomy`],
//! [`dulac`], [`pseudogroup`]) works in double precision on compiled forms.

pub mod algebra;
pub mod blowup;
pub mod dulac;
pub mod forms;
pub mod holonomy;
pub mod leafflow;
pub mod numeric;
pub mod ode;
pub mod pseudogroup;
pub mod singularities;

pub use algebra::{BivariatePolynomial, GaussianRational, RationalFunction, Var};
pub use forms::{DivisorComponent, FoliatedFormRepresentative, MeromorphicOneForm};
pub use numeric::C64;
