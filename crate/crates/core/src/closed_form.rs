//! Explicit secular determinants for one and two delta pairs, and the factorized
//! eigenvalue conditions at the rational positions `a = 1/2, 1/3, 2/3, 1/4`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::rootfind::bracket_roots;

/// `-1/2 { sin 2k + (xi^2/k^2) sin 2ka sin^2[k(1-a)] }`.
pub fn det_l1(kappa: Complex64, a: f64, xi: f64) -> Complex64 {
    let k2 = kappa * kappa;
    let s = (kappa * (1.0 - a)).sin();
    -((kappa * 2.0).sin() + (kappa * (2.0 * a)).sin() * s * s * (xi * xi) / k2) * 0.5
}

/// Secular determinant of two delta pairs at `0 < a < b < 1`.
///
/// `D0 + D(xi1) + D(xi2) + D(xi1 xi2)` with
/// `D(xi1 xi2) = -{ (xi1 xi2/k^2) sin 2ka + (xi1^2 xi2^2/(2k^4)) sin 2ka sin^2[k(b-a)] } sin^2[k(1-b)]`.
/// The quartic term carries the factor `sin(2ka)/2`; the expansion of the matching
/// determinant (and of the transfer matrix across the four deltas) requires it.
pub fn det_l2(kappa: Complex64, a: f64, b: f64, xi1: f64, xi2: f64) -> Complex64 {
    let k2 = kappa * kappa;
    let s2a = (kappa * (2.0 * a)).sin();
    let s1a = (kappa * (1.0 - a)).sin();
    let s1b = (kappa * (1.0 - b)).sin();
    let sba = (kappa * (b - a)).sin();
    let d0 = -(kappa * 2.0).sin() * 0.5;
    let d1 = -s2a * s1a * s1a * (xi1 * xi1) / (k2 * 2.0);
    let d2 = -(kappa * (2.0 * b)).sin() * s1b * s1b * (xi2 * xi2) / (k2 * 2.0);
    let cross = -(s2a * (xi1 * xi2) / k2 + s2a * sba * sba * (xi1 * xi1 * xi2 * xi2) / (k2 * k2 * 2.0))
        * s1b
        * s1b;
    d0 + d1 + d2 + cross
}

/// Delta positions whose single-pair determinant factorizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RationalPosition {
    Half,
    Third,
    TwoThirds,
    Quarter,
}

impl RationalPosition {
    pub const ALL: [RationalPosition; 4] = [
        RationalPosition::Half,
        RationalPosition::Third,
        RationalPosition::TwoThirds,
        RationalPosition::Quarter,
    ];

    pub fn value(self) -> f64 {
        match self {
            RationalPosition::Half => 0.5,
            RationalPosition::Third => 1.0 / 3.0,
            RationalPosition::TwoThirds => 2.0 / 3.0,
            RationalPosition::Quarter => 0.25,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RationalPosition::Half => "1/2",
            RationalPosition::Third => "1/3",
            RationalPosition::TwoThirds => "2/3",
            RationalPosition::Quarter => "1/4",
        }
    }

    /// Spacing of the coupling-independent roots `kappa = m * spacing`.
    pub fn exact_spacing(self) -> f64 {
        match self {
            RationalPosition::Half => PI,
            RationalPosition::Third | RationalPosition::TwoThirds => 1.5 * PI,
            RationalPosition::Quarter => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// `kappa = m * spacing`, independent of the coupling.
    ExactRoots,
    /// A trigonometric equation, stored multiplied through by its denominator.
    Transcendental,
    /// Quadratic in `X = cos(2 kappa / 3)`.
    QuadraticInX,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("kappa = 0 is excluded")]
    ZeroKappa,
}

/// One factor of the factorized single-pair determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCondition {
    pub position: RationalPosition,
    pub xi: f64,
    pub kind: ConditionKind,
}

impl ReducedCondition {
    pub fn description(&self) -> &'static str {
        use ConditionKind::*;
        use RationalPosition::*;
        match (self.position, self.kind) {
            (Half, ExactRoots) => "sin k = 0, k = m pi",
            (Third | TwoThirds, ExactRoots) => "sin(2k/3) = 0, k = 3 m pi / 2",
            (Quarter, ExactRoots) => "sin(k/2) = 0, k = 2 m pi",
            (Half, _) => "(xi^2 - 4k^2) cos k - xi^2 = 0",
            (Third, _) => "(xi^2 - 4k^2) cos(4k/3) - (xi^2 + 2k^2) = 0",
            (TwoThirds, _) => "(4k^2 - xi^2) X^2 + xi^2 X - k^2 = 0, X = cos(2k/3)",
            (Quarter, _) => "D(k; 1/4, xi) / sin(k/2) = 0 (deflated numerically)",
        }
    }

    /// The signed, pole-free function whose zeros are this condition's roots.
    pub fn signed(&self, kappa: f64) -> f64 {
        let xi2 = self.xi * self.xi;
        let k2 = kappa * kappa;
        match (self.position, self.kind) {
            (p, ConditionKind::ExactRoots) => libm::sin(PI * kappa / p.exact_spacing()),
            (RationalPosition::Half, _) => (xi2 - 4.0 * k2) * libm::cos(kappa) - xi2,
            (RationalPosition::Third, _) => {
                (xi2 - 4.0 * k2) * libm::cos(4.0 * kappa / 3.0) - (xi2 + 2.0 * k2)
            }
            (RationalPosition::TwoThirds, _) => {
                let x = libm::cos(2.0 * kappa / 3.0);
                (4.0 * k2 - xi2) * x * x + xi2 * x - k2
            }
            (RationalPosition::Quarter, _) => quarter_deflated(kappa, self.xi),
        }
    }

    /// `|signed(kappa)|`.
    pub fn residual(&self, kappa: f64) -> Result<f64, ClosedFormError> {
        if kappa == 0.0 {
            return Err(ClosedFormError::ZeroKappa);
        }
        Ok(libm::fabs(self.signed(kappa)))
    }

    /// All roots in `(0, kappa_max]`, ascending.
    pub fn roots(&self, kappa_max: f64) -> Vec<f64> {
        match self.kind {
            ConditionKind::ExactRoots => {
                let s = self.position.exact_spacing();
                (1..).map(|m| m as f64 * s).take_while(|&k| k <= kappa_max).collect()
            }
            _ => bracket_roots(|k| self.signed(k), 1e-3, kappa_max, PI / 200.0, 1e-14),
        }
    }
}

/// `D(k; 1/4, xi) / sin(k/2)`. Near the removable zeros `k = 2 m pi` the quotient is
/// evaluated as its mean over a circle of radius 0.25 in the complex plane, which is
/// exact for an analytic function up to the trapezoid error `(0.25 / 4 pi)^16`.
fn quarter_deflated(kappa: f64, xi: f64) -> f64 {
    let q = |k: Complex64| det_l1(k, 0.25, xi) / (k * 0.5).sin();
    if libm::fabs(libm::sin(kappa / 2.0)) > 0.05 {
        return q(Complex64::new(kappa, 0.0)).re;
    }
    const NODES: usize = 16;
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..NODES {
        let theta = 2.0 * PI * (j as f64 + 0.5) / NODES as f64;
        sum += q(Complex64::new(kappa, 0.0) + Complex64::from_polar(0.25, theta));
    }
    (sum / NODES as f64).re
}

/// The factors of `det_l1(kappa, a, xi)` at a rational `a`.
pub fn reduced_conditions(position: RationalPosition, xi: f64) -> Vec<ReducedCondition> {
    let other = match position {
        RationalPosition::TwoThirds => ConditionKind::QuadraticInX,
        _ => ConditionKind::Transcendental,
    };
    alloc::vec![
        ReducedCondition { position, xi, kind: other },
        ReducedCondition { position, xi, kind: ConditionKind::ExactRoots },
    ]
}
