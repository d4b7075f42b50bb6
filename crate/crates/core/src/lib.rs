//! Bound-state spectra of PT-symmetric infinite square wells on `(-1, 1)` carrying
//! pairs of imaginary point interactions `i xi delta(x - a) - i xi delta(x + a)`.
//!
//! The crate is `no_std` (it needs `alloc`). File IO, the command line and output
//! formatting live in the `ptwell` crate.
//!
//! Layout:
//!
//! * [`model`]: the potential ([`WellSpec`]), its text format, and the result records.
//! * [`secular`]: the `4L x 4L` matching system and its determinant.
//! * [`closed_form`]: explicit determinants for one and two deltas and the factorized
//!   conditions at rational positions.
//! * [`rootfind`]: real root scans, continuation in the coupling, exceptional points,
//!   robust/fragile classification.
//! * [`spectral`]: wave functions, PT symmetry and bilinear overlaps.
//! * [`fv`]: two-component (Feshbach-Villars) eigenpairs, truncated resolutions of the
//!   identity and the positive metric family.
//! * [`verify`]: cross-checks between the matrix and closed-form backends.

#![no_std]

extern crate alloc;

pub mod closed_form;
pub mod fv;
mod linalg;
pub mod model;
pub mod quadrature;
pub mod rootfind;
pub mod secular;
pub mod spectral;
pub mod verify;

pub use model::{
    parse_well_spec, validate, ContinuationTrace, ExceptionalPoint, LevelTag, RootRecord,
    TraceSample, TraceStatus, Violation, WellSpec,
};
pub use num_complex::Complex64;
