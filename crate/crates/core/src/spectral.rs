//! Eigenfunctions at real roots: coefficients from the nullspace of the matching system,
//! piecewise evaluation, and the bilinear overlaps `rho`.
//!
//! On `x >= 0` the pieces are `mu cos(kx) + i nu sin(kx)` on `[0, a_1)` and
//! `c_l cos k(e - x) + s_l sin k(e - x)` on `(a_l, e)` with `e` the next point (or the
//! wall), `c_l = gamma_l + i delta_l`, `s_l = alpha_l + i beta_l` and `c_L = 0`. On `x < 0`
//! the same pieces appear with conjugated complex coefficients and `x -> -x`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg;
use crate::model::{validate, RootRecord, WellSpec};
use crate::quadrature::GaussLegendre;
use crate::secular::{assemble, unknown, SecularError, KAPPA_LIMIT};

/// Relative pivot size below which the matching matrix counts as singular.
pub const SINGULAR_PIVOT: f64 = 1e-7;
/// Gauss-Legendre nodes per segment between consecutive breakpoints.
pub const NODES_PER_SEGMENT: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("kappa = {kappa} is not a root (relative pivot {pivot:e})")]
    NotARoot { kappa: f64, pivot: f64 },
    #[error("x = {0} lies outside [-1, 1]")]
    OutOfDomain(f64),
    #[error("eigenfunctions belong to different wells")]
    SpecMismatch,
    #[error(transparent)]
    Secular(#[from] SecularError),
}

/// Coefficients in the unknown order of the matching system:
/// `(mu, nu, gamma_1, delta_1, alpha_1, beta_1, ..., alpha_L, beta_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    values: Vec<f64>,
}

/// `(gamma, delta, alpha, beta)` of an inner shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CoefficientVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn mu(&self) -> f64 {
        self.values[unknown::MU]
    }

    pub fn nu(&self) -> f64 {
        self.values[unknown::NU]
    }

    /// Number of deltas `L`.
    pub fn count(&self) -> usize {
        self.values.len() / 4
    }

    /// Shell `l` (1-based). The outermost shell has `gamma = delta = 0`.
    pub fn shell(&self, l: usize) -> Shell {
        let count = self.count();
        assert!(l >= 1 && l <= count, "shell index out of range");
        if l == count {
            let (a, b) = unknown::outer(count);
            Shell { gamma: 0.0, delta: 0.0, alpha: self.values[a], beta: self.values[b] }
        } else {
            let (g, d, a, b) = unknown::inner(l);
            Shell {
                gamma: self.values[g],
                delta: self.values[d],
                alpha: self.values[a],
                beta: self.values[b],
            }
        }
    }
}

/// Nullspace of the matching system at a root, scaled so that `mu = 1`, or `nu = 1` when
/// `mu` vanishes. The flag reports a second small pivot (a near two-dimensional nullspace).
pub fn nullspace_coefficients(
    spec: &WellSpec,
    kappa: f64,
) -> Result<(CoefficientVector, bool), SpectralError> {
    if let Some(v) = validate(spec).into_iter().next() {
        return Err(SecularError::InvalidSpec(v).into());
    }
    if kappa == 0.0 {
        return Err(SecularError::ZeroKappa.into());
    }
    if !(kappa.abs() <= KAPPA_LIMIT) {
        return Err(SecularError::KappaTooLarge(kappa.abs()).into());
    }
    if spec.count() == 0 {
        let d = 0.5 * libm::sin(2.0 * kappa);
        if d.abs() > SINGULAR_PIVOT {
            return Err(SpectralError::NotARoot { kappa, pivot: d.abs() });
        }
        let values = if libm::cos(kappa).abs() < libm::sin(kappa).abs() {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        };
        return Ok((CoefficientVector { values }, false));
    }
    let system = assemble(spec, Complex64::new(kappa, 0.0))?;
    let nv = linalg::null_vector(system.size, &system.real_matrix());
    let pivot = nv.smallest_pivot / nv.scale;
    if pivot > SINGULAR_PIVOT {
        return Err(SpectralError::NotARoot { kappa, pivot });
    }
    let degenerate = nv.second_smallest_pivot / nv.scale < SINGULAR_PIVOT;
    let mut values = nv.vector;
    let big = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    values.iter_mut().for_each(|v| *v /= big);
    let norm = if values[unknown::MU].abs() > 1e-8 { values[unknown::MU] } else { values[unknown::NU] };
    values.iter_mut().for_each(|v| *v /= norm);
    Ok((CoefficientVector { values }, degenerate))
}

/// A bound state at a real root together with its overlap `rho = int psi^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction {
    pub kappa: f64,
    pub spec: WellSpec,
    pub coefficients: CoefficientVector,
    pub rho: f64,
    /// Imaginary part of `int psi^2`, zero up to round-off for a PT-symmetric state.
    pub rho_imag: f64,
    pub degenerate: bool,
}

impl Eigenfunction {
    pub fn new(spec: &WellSpec, kappa: f64) -> Result<Self, SpectralError> {
        let (coefficients, degenerate) = nullspace_coefficients(spec, kappa)?;
        let mut f = Eigenfunction {
            kappa,
            spec: spec.clone(),
            coefficients,
            rho: 0.0,
            rho_imag: 0.0,
            degenerate,
        };
        let r = overlap(&f, &f)?;
        f.rho = r.re;
        f.rho_imag = r.im;
        Ok(f)
    }

    pub fn from_root(spec: &WellSpec, root: &RootRecord) -> Result<Self, SpectralError> {
        Eigenfunction::new(spec, root.kappa)
    }

    /// Index of the piece containing `|x|`: 0 for the centre, `l` for `(a_l, a_{l+1})`.
    /// At a breakpoint `from_below` picks the inner piece.
    fn piece(&self, r: f64, from_below: bool) -> usize {
        self.spec
            .positions
            .iter()
            .filter(|&&a| if from_below { a < r } else { a <= r })
            .count()
    }

    /// `(psi, psi')` of piece `l` at `x`.
    fn branch(&self, l: usize, x: f64) -> (Complex64, Complex64) {
        let k = self.kappa;
        let i = Complex64::i();
        if l == 0 {
            let (s, c) = (libm::sin(k * x), libm::cos(k * x));
            let (mu, nu) = (self.coefficients.mu(), self.coefficients.nu());
            return (mu * c + i * nu * s, k * (-mu * s + i * nu * c));
        }
        let sh = self.coefficients.shell(l);
        let e = self.spec.positions.get(l).copied().unwrap_or(1.0);
        let mut c = Complex64::new(sh.gamma, sh.delta);
        let mut s = Complex64::new(sh.alpha, sh.beta);
        if x >= 0.0 {
            let (sn, cs) = (libm::sin(k * (e - x)), libm::cos(k * (e - x)));
            (c * cs + s * sn, k * (c * sn - s * cs))
        } else {
            c = c.conj();
            s = s.conj();
            let (sn, cs) = (libm::sin(k * (e + x)), libm::cos(k * (e + x)));
            (c * cs + s * sn, k * (-c * sn + s * cs))
        }
    }

    fn check(x: f64) -> Result<(), SpectralError> {
        if (-1.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(SpectralError::OutOfDomain(x))
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<Complex64, SpectralError> {
        Self::check(x)?;
        Ok(self.branch(self.piece(x.abs(), false), x).0)
    }

    /// One-sided derivatives `(psi'(x-), psi'(x+))`; equal away from the deltas.
    pub fn derivative_limits(&self, x: f64) -> Result<(Complex64, Complex64), SpectralError> {
        Self::check(x)?;
        let (inner, outer) = (self.piece(x.abs(), true), self.piece(x.abs(), false));
        let (below, above) = if x >= 0.0 { (inner, outer) } else { (outer, inner) };
        Ok((self.branch(below, x).1, self.branch(above, x).1))
    }

    /// Largest violation of continuity and of `psi'(p+) - psi'(p-) = g psi(p)` with
    /// `g = i xi` at `+a` and `-i xi` at `-a`, jumps divided by `kappa`, on
    /// the positive and/or negative half.
    pub fn matching_residual(&self, positive: bool, negative: bool) -> f64 {
        let mut worst = 0.0_f64;
        for (l, (&a, &xi)) in self.spec.positions.iter().zip(&self.spec.couplings).enumerate() {
            for (p, g, on) in [(a, xi, positive), (-a, -xi, negative)] {
                if !on {
                    continue;
                }
                let (lo, hi) = if p > 0.0 { (l, l + 1) } else { (l + 1, l) };
                let (v_lo, d_lo) = self.branch(lo, p);
                let (v_hi, d_hi) = self.branch(hi, p);
                worst = worst.max((v_hi - v_lo).norm());
                let jump = d_hi - d_lo - Complex64::new(0.0, g) * v_lo;
                worst = worst.max(jump.norm() / self.kappa);
            }
        }
        worst
    }

    /// Breakpoints `-1 < -a_L < ... < a_L < 1`.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![-1.0];
        b.extend(self.spec.positions.iter().rev().map(|a| -a));
        b.extend(self.spec.positions.iter().copied());
        b.push(1.0);
        b
    }
}

fn integrate(
    f: &Eigenfunction,
    integrand: impl Fn(f64) -> Result<Complex64, SpectralError>,
) -> Result<Complex64, SpectralError> {
    let gl = GaussLegendre::new(NODES_PER_SEGMENT);
    let mut sum = Complex64::new(0.0, 0.0);
    for seg in f.breakpoints().windows(2) {
        for (x, w) in gl.on(seg[0], seg[1]) {
            sum += integrand(x)? * w;
        }
    }
    Ok(sum)
}

/// The bilinear integral `int psi_m psi_n dx`.
pub fn overlap(m: &Eigenfunction, n: &Eigenfunction) -> Result<Complex64, SpectralError> {
    if m.spec != n.spec {
        return Err(SpectralError::SpecMismatch);
    }
    integrate(m, |x| Ok(m.evaluate(x)? * n.evaluate(x)?))
}

/// Real part of [`overlap`]; the imaginary part vanishes by PT symmetry.
pub fn overlap_rho(m: &Eigenfunction, n: &Eigenfunction) -> Result<f64, SpectralError> {
    overlap(m, n).map(|z| z.re)
}

/// The conjugated pairing `int conj(L_n(x)) psi_m(x) dx` with the left eigenfunction
/// `L_n(x) = psi_n(-x)`.
pub fn left_pairing(n: &Eigenfunction, m: &Eigenfunction) -> Result<Complex64, SpectralError> {
    if m.spec != n.spec {
        return Err(SpectralError::SpecMismatch);
    }
    integrate(m, |x| Ok(n.evaluate(-x)?.conj() * m.evaluate(x)?))
}
