#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

//! Curvature nondegeneracy analysis for Radon-like transforms.
//!
//! Given a polynomial incidence map φ(x,t), this crate extracts the trilinear
//! curvature functional Q from its mixed second derivatives, decides whether
//! the scaling point of the associated Newton-type diagram lies in the
//! intersection of convex hulls over orthonormal basis triples, and either
//! certifies nondegeneracy (convex weights over diagram points) or produces a
//! one-parameter-subgroup degeneracy witness verified by a decay check. Two
//! numerical harnesses corroborate verdicts: a Knapp-example incidence-ratio
//! blowup regression and the testing-integral estimator. A constructive
//! vector-field engine validates the geometric differential inequalities that
//! back the sufficiency half of the theory.

pub mod diagram;
pub mod error;
pub mod harness;
pub mod lp;
pub mod multilinear;
pub mod pipeline;
pub mod poly;
pub mod qcalc;
pub mod radonmap;
pub mod report;
pub mod vfields;

pub use error::{Error, Result};
