//! Numerical toolkit for C^n regularizations of planar Filippov systems near
//! visible tangencies of even multiplicity.
//!
//! The crate builds regularized fields Z_ε = (1+Φ(h/ε))/2·X⁺ + (1−Φ(h/ε))/2·X⁻,
//! integrates them with the stiff band |y| ≤ ε handled in fast variables,
//! computes critical and slow manifolds, the upper and lower transition maps,
//! blow-up chart constants and boundary limit cycles, and fits the scaling
//! laws those objects obey.

pub mod blowup;
pub mod cli;
pub mod cycles;
pub mod error;
pub mod field;
pub mod integrate;
pub mod regularize;
pub mod report;
pub mod scenarios;
pub mod transition;

pub use error::{Error, Result};
