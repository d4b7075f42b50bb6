//! The homogeneous matching system of the piecewise-trigonometric ansatz and its
//! determinant.
//!
//! Unknowns are ordered `(mu, nu, gamma_1, delta_1, alpha_1, beta_1, ..., gamma_{L-1},
//! delta_{L-1}, alpha_{L-1}, beta_{L-1}, alpha_L, beta_L)`. Only the conditions at the
//! positive points `+a_l` are imposed: continuity of `psi` and the jump
//! `psi'(a+) - psi'(a-) = i xi psi(a)`, each split into its real and imaginary part. The
//! jump rows are divided by `kappa`, which makes the determinant dimensionless and equal
//! to minus the closed forms in [`crate::closed_form`].
//!
//! For complex `kappa` the "real" and "imaginary" parts are the analytic continuations of
//! the real-kappa split, so the determinant is an entire function with real Taylor
//! coefficients and complex roots come in conjugate pairs.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::closed_form;
use crate::linalg;
use crate::model::{validate, Violation, WellSpec};

/// Hard bound on `|kappa|` accepted by the assembly.
pub const KAPPA_LIMIT: f64 = 1e3;

const CALIBRATION_KAPPA: f64 = 0.37;
const CALIBRATION_TRIES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SecularError {
    #[error("kappa = 0 makes the ansatz degenerate")]
    ZeroKappa,
    #[error("|kappa| = {0} exceeds the supported bound {KAPPA_LIMIT}")]
    KappaTooLarge(f64),
    #[error("invalid well: {0}")]
    InvalidSpec(Violation),
    #[error("no usable calibration point found")]
    CalibrationFailed,
    #[error("closed-form backend supports at most two deltas, spec has {0}")]
    BackendUnsupported(usize),
}

/// The square `4L x 4L` matching matrix at one `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSystem {
    pub size: usize,
    /// Row-major entries.
    pub matrix: Vec<Complex64>,
}

impl MatchingSystem {
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.size + col]
    }

    /// The real matrix, valid when `kappa` is real (imaginary parts are exactly zero then).
    pub fn real_matrix(&self) -> Vec<f64> {
        self.matrix.iter().map(|z| z.re).collect()
    }
}

pub(crate) mod unknown {
    pub const MU: usize = 0;
    pub const NU: usize = 1;

    /// `(gamma, delta, alpha, beta)` column indices of shell `l < L` (1-based).
    pub fn inner(l: usize) -> (usize, usize, usize, usize) {
        let base = 2 + 4 * (l - 1);
        (base, base + 1, base + 2, base + 3)
    }

    /// `(alpha_L, beta_L)` column indices.
    pub fn outer(count: usize) -> (usize, usize) {
        (4 * count - 2, 4 * count - 1)
    }
}

fn check_kappa(kappa: Complex64) -> Result<(), SecularError> {
    let r = kappa.norm();
    if r == 0.0 {
        Err(SecularError::ZeroKappa)
    } else if r > KAPPA_LIMIT {
        Err(SecularError::KappaTooLarge(r))
    } else {
        Ok(())
    }
}

fn fill(positions: &[f64], couplings: &[f64], factor: f64, kappa: Complex64, m: &mut [Complex64]) {
    let count = positions.len();
    let n = 4 * count;
    m.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    let one = Complex64::new(1.0, 0.0);
    for l in 1..=count {
        let a = positions[l - 1];
        let s = if l < count { positions[l] } else { 1.0 };
        let t = couplings[l - 1] * factor / kappa;
        let sin_r = (kappa * (s - a)).sin();
        let cos_r = (kappa * (s - a)).cos();
        let (cr, ci, jr, ji) = (4 * (l - 1), 4 * (l - 1) + 1, 4 * (l - 1) + 2, 4 * (l - 1) + 3);
        let mut set = |row: usize, col: usize, v: Complex64| m[row * n + col] += v;

        // right-hand piece on (a_l, a_{l+1})
        let (alpha, beta) = if l < count {
            let (g, d, al, be) = unknown::inner(l);
            set(cr, g, cos_r);
            set(ci, d, cos_r);
            set(jr, g, sin_r);
            set(ji, d, sin_r);
            (al, be)
        } else {
            unknown::outer(count)
        };
        set(cr, alpha, sin_r);
        set(ci, beta, sin_r);
        set(jr, alpha, -cos_r);
        set(ji, beta, -cos_r);

        // left-hand piece, subtracted, plus the delta term -i xi psi(a)
        if l == 1 {
            let c = (kappa * a).cos();
            let sn = (kappa * a).sin();
            set(cr, unknown::MU, -c);
            set(ci, unknown::NU, -sn);
            set(jr, unknown::MU, sn);
            set(ji, unknown::NU, -c);
            set(jr, unknown::NU, t * sn);
            set(ji, unknown::MU, -t * c);
        } else {
            let (g, d, al, be) = unknown::inner(l - 1);
            set(cr, g, -one);
            set(ci, d, -one);
            set(jr, al, one);
            set(ji, be, one);
            set(jr, d, t);
            set(ji, g, -t);
        }
    }
}

/// Builds the matching system of `spec` at `kappa`.
pub fn assemble(spec: &WellSpec, kappa: Complex64) -> Result<MatchingSystem, SecularError> {
    if let Some(v) = validate(spec).into_iter().next() {
        return Err(SecularError::InvalidSpec(v));
    }
    check_kappa(kappa)?;
    let size = 4 * spec.count();
    let mut matrix = vec![Complex64::new(0.0, 0.0); size * size];
    fill(&spec.positions, &spec.couplings, 1.0, kappa, &mut matrix);
    Ok(MatchingSystem { size, matrix })
}

/// Determinant by partial pivoting; `1` for the empty system.
pub fn determinant(system: &MatchingSystem) -> Complex64 {
    linalg::determinant(system.size, &system.matrix)
}

fn half_sin2(kappa: Complex64) -> Complex64 {
    -(kappa * 2.0).sin() * 0.5
}

/// Which representation of the secular function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Matrix,
    ClosedForm,
}

/// The normalized secular function `D(kappa)` of one well, optionally with all couplings
/// multiplied by a common factor.
#[derive(Debug, Clone)]
pub struct Secular {
    spec: WellSpec,
    backend: Backend,
    calibration: f64,
}

impl Secular {
    pub fn new(spec: &WellSpec, backend: Backend) -> Result<Self, SecularError> {
        if let Some(v) = validate(spec).into_iter().next() {
            return Err(SecularError::InvalidSpec(v));
        }
        if backend == Backend::ClosedForm && spec.count() > 2 {
            return Err(SecularError::BackendUnsupported(spec.count()));
        }
        let calibration = match backend {
            Backend::Matrix => calibrate(spec)?,
            Backend::ClosedForm => 1.0,
        };
        Ok(Secular { spec: spec.clone(), backend, calibration })
    }

    pub fn matrix(spec: &WellSpec) -> Result<Self, SecularError> {
        Secular::new(spec, Backend::Matrix)
    }

    pub fn spec(&self) -> &WellSpec {
        &self.spec
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// The constant `c` with `det(system) = c * D(kappa)`.
    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    pub fn value(&self, kappa: Complex64) -> Complex64 {
        self.value_scaled(kappa, 1.0)
    }

    /// `D(kappa)` with every coupling multiplied by `factor`. Returns NaN outside
    /// `0 < |kappa| <= KAPPA_LIMIT`.
    pub fn value_scaled(&self, kappa: Complex64, factor: f64) -> Complex64 {
        if check_kappa(kappa).is_err() {
            return Complex64::new(f64::NAN, f64::NAN);
        }
        let p = &self.spec.positions;
        let x = &self.spec.couplings;
        match (self.backend, p.len()) {
            (_, 0) => half_sin2(kappa),
            (Backend::ClosedForm, 1) => closed_form::det_l1(kappa, p[0], x[0] * factor),
            (Backend::ClosedForm, _) => {
                closed_form::det_l2(kappa, p[0], p[1], x[0] * factor, x[1] * factor)
            }
            (Backend::Matrix, count) => {
                let n = 4 * count;
                let mut m = vec![Complex64::new(0.0, 0.0); n * n];
                fill(p, x, factor, kappa, &mut m);
                linalg::determinant(n, &m) / self.calibration
            }
        }
    }

    /// Real part of `D` at real `kappa` (the imaginary part vanishes identically there).
    pub fn real(&self, kappa: f64, factor: f64) -> f64 {
        self.value_scaled(Complex64::new(kappa, 0.0), factor).re
    }

    /// `dD/dkappa` by central differences, step `1e-7 max(1, |kappa|)`.
    pub fn derivative(&self, kappa: Complex64, factor: f64) -> Complex64 {
        let h = 1e-7 * kappa.norm().max(1.0);
        (self.value_scaled(kappa + h, factor) - self.value_scaled(kappa - h, factor)) / (2.0 * h)
    }
}

fn calibrate(spec: &WellSpec) -> Result<f64, SecularError> {
    let count = spec.count();
    if count == 0 {
        return Ok(1.0);
    }
    // Without a printed closed form the reference is the Hermitian limit -sin(2k)/2,
    // which does not depend on the positions.
    let reference = if count <= 2 { spec.clone() } else { spec.hermitian_limit() };
    let n = 4 * count;
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    let mut kappa = CALIBRATION_KAPPA;
    for _ in 0..CALIBRATION_TRIES {
        let k = Complex64::new(kappa, 0.0);
        let closed = match count {
            1 => closed_form::det_l1(k, spec.positions[0], spec.couplings[0]),
            2 => closed_form::det_l2(
                k,
                spec.positions[0],
                spec.positions[1],
                spec.couplings[0],
                spec.couplings[1],
            ),
            _ => half_sin2(k),
        };
        if closed.norm() >= 1e-8 {
            fill(&reference.positions, &reference.couplings, 1.0, k, &mut m);
            let det = linalg::determinant(n, &m);
            let c = (det / closed).re;
            if c.is_finite() && c != 0.0 {
                return Ok(c);
            }
        }
        kappa += 0.1;
    }
    Err(SecularError::CalibrationFailed)
}

/// `det(system) / c(spec)`, matching the closed forms for one and two deltas.
pub fn normalized_determinant(spec: &WellSpec, kappa: Complex64) -> Result<Complex64, SecularError> {
    check_kappa(kappa)?;
    Ok(Secular::matrix(spec)?.value(kappa))
}
