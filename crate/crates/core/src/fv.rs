//! Two-component eigenpairs `E = tau kappa_n`, their biorthogonal pairing, truncated
//! resolutions of the identity and the positive metric family built from them.
//!
//! Kets are sampled on a grid of `(-1, 1)`. A two-component vector stores the upper
//! component followed by the lower one. Inner products carry the quadrature weights:
//! `<u|v> = sum_i w_i conj(u_i) v_i` summed over both components.
//!
//! The right vector of `(n, tau)` is `(tau kappa D_n; D_n)` with `D_n = psi_n`, the left
//! vector is `(L_n; tau kappa L_n)` with `L_n(x) = psi_n(-x)`, and their pairing is
//! `mu = 2 tau kappa rho`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{RootRecord, WellSpec};
use crate::quadrature::GaussLegendre;
use crate::spectral::{Eigenfunction, SpectralError};

/// Pairs whose `|rho|` falls below this are excluded as too close to a coalescence.
pub const DEGENERATE_RHO: f64 = 1e-10;
pub const MIN_GRID: usize = 64;
const PANEL: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FvError {
    #[error("grid size {0} is below the minimum of 64")]
    GridTooSmall(usize),
    #[error("weight {index} is not positive")]
    NonPositiveWeight { index: usize },
    #[error("truncation {requested} exceeds the {available} available levels")]
    TruncationTooLarge { requested: usize, available: usize },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Uniform interior points with trapezoid weights.
    Uniform,
    /// Composite Gauss-Legendre panels between the kinks at `+-a_l`.
    Adapted,
}

/// Sample points of `(-1, 1)` with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRepresentation {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: GridKind,
    pub size: usize,
}

impl GridRepresentation {
    /// `m - 1` interior points of spacing `2/m`; the trapezoid end weights multiply zero.
    pub fn uniform(m: usize) -> Result<Self, FvError> {
        if m < MIN_GRID {
            return Err(FvError::GridTooSmall(m));
        }
        let h = 2.0 / m as f64;
        let points = (1..m).map(|i| -1.0 + h * i as f64).collect();
        Ok(GridRepresentation { points, weights: vec![h; m - 1], kind: GridKind::Uniform, size: m })
    }

    /// About `m` Gauss-Legendre nodes in 16-node panels that never straddle a kink.
    pub fn adapted(spec: &WellSpec, m: usize) -> Result<Self, FvError> {
        if m < MIN_GRID {
            return Err(FvError::GridTooSmall(m));
        }
        let gl = GaussLegendre::new(PANEL);
        let mut cuts = vec![-1.0];
        cuts.extend(spec.positions.iter().rev().map(|a| -a));
        cuts.extend(spec.positions.iter().copied());
        cuts.push(1.0);
        let (mut points, mut weights) = (Vec::new(), Vec::new());
        for seg in cuts.windows(2) {
            let len = seg[1] - seg[0];
            let panels = libm::ceil(m as f64 * len / (2.0 * PANEL as f64)).max(1.0) as usize;
            let h = len / panels as f64;
            for p in 0..panels {
                let lo = seg[0] + h * p as f64;
                let hi = if p + 1 == panels { seg[1] } else { lo + h };
                for (x, w) in gl.on(lo, hi) {
                    points.push(x);
                    weights.push(w);
                }
            }
        }
        Ok(GridRepresentation { points, weights, kind: GridKind::Adapted, size: m })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights[i % self.points.len()]
    }

    /// Conjugated weighted pairing of two two-component vectors.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        debug_assert_eq!(u.len(), 2 * self.len());
        u.iter().zip(v).enumerate().map(|(i, (a, b))| a.conj() * b * self.weight(i)).sum()
    }

    pub fn norm(&self, v: &[Complex64]) -> f64 {
        libm::sqrt(self.inner(v, v).re.max(0.0))
    }

    /// `(phi_k; phi_k)` with the square-well mode `phi_k(x) = sin(k pi (x + 1) / 2)`.
    pub fn square_well_trial(&self, k: usize) -> Vec<Complex64> {
        let q = k as f64 * core::f64::consts::FRAC_PI_2;
        let phi: Vec<Complex64> =
            self.points.iter().map(|&x| Complex64::new(libm::sin(q * (x + 1.0)), 0.0)).collect();
        let mut v = phi.clone();
        v.extend(phi);
        v
    }
}

/// One two-component eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct FvEigenpair {
    /// Index of the root it was built from.
    pub level: usize,
    pub kappa: f64,
    /// `+1` or `-1`.
    pub sign: f64,
    pub right: Vec<Complex64>,
    pub left: Vec<Complex64>,
    /// `<<left|right>` on the grid.
    pub mu: Complex64,
    pub rho: f64,
}

impl FvEigenpair {
    pub fn energy(&self) -> f64 {
        self.sign * self.kappa
    }

    /// `2 tau kappa rho` from the quadrature overlap.
    pub fn mu_from_rho(&self) -> f64 {
        2.0 * self.energy() * self.rho
    }
}

/// Eigenpairs ordered by root, `tau = +1` before `tau = -1`, on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenpairSet {
    pub grid: GridRepresentation,
    pub pairs: Vec<FvEigenpair>,
    /// `(level, rho)` of roots left out because `|rho| < 1e-10`.
    pub excluded: Vec<(usize, f64)>,
}

pub fn build_eigenpairs(
    spec: &WellSpec,
    roots: &[RootRecord],
    grid: &GridRepresentation,
) -> Result<EigenpairSet, FvError> {
    let mut pairs = Vec::with_capacity(2 * roots.len());
    let mut excluded = Vec::new();
    for root in roots {
        let f = Eigenfunction::from_root(spec, root)?;
        if f.rho.abs() < DEGENERATE_RHO {
            excluded.push((root.index, f.rho));
            continue;
        }
        let d: Vec<Complex64> = grid.points.iter().map(|&x| f.evaluate(x)).collect::<Result<_, _>>()?;
        let l: Vec<Complex64> = grid.points.iter().map(|&x| f.evaluate(-x)).collect::<Result<_, _>>()?;
        for sign in [1.0, -1.0] {
            let e = sign * f.kappa;
            let right: Vec<Complex64> = d.iter().map(|v| v * e).chain(d.iter().copied()).collect();
            let left: Vec<Complex64> = l.iter().copied().chain(l.iter().map(|v| v * e)).collect();
            let mu = grid.inner(&left, &right);
            pairs.push(FvEigenpair { level: root.index, kappa: f.kappa, sign, right, left, mu, rho: f.rho });
        }
    }
    Ok(EigenpairSet { grid: grid.clone(), pairs, excluded })
}

impl EigenpairSet {
    /// Number of distinct levels.
    pub fn levels(&self) -> usize {
        self.pairs.len() / 2
    }

    /// The `2n` pairs of the lowest `n` levels.
    pub fn truncated(&self, n: usize) -> Result<&[FvEigenpair], FvError> {
        if n > self.levels() {
            return Err(FvError::TruncationTooLarge { requested: n, available: self.levels() });
        }
        Ok(&self.pairs[..2 * n])
    }

    /// The truncated resolution of the identity `sum |n> (1/mu) <<n|`.
    pub fn projector(&self, n: usize) -> Result<LowRankOperator, FvError> {
        let terms = self
            .truncated(n)?
            .iter()
            .map(|p| Term { ket: p.right.clone(), coef: p.mu.inv(), bra: p.left.clone() })
            .collect();
        Ok(LowRankOperator { terms })
    }

    /// The truncated spectral representation `sum |n> (tau kappa / mu) <<n|`.
    pub fn hamiltonian(&self, n: usize) -> Result<LowRankOperator, FvError> {
        let terms = self
            .truncated(n)?
            .iter()
            .map(|p| Term { ket: p.right.clone(), coef: p.mu.inv() * p.energy(), bra: p.left.clone() })
            .collect();
        Ok(LowRankOperator { terms })
    }

    /// `||P_n t - t|| / ||t||`.
    pub fn identity_defect(&self, n: usize, trial: &[Complex64]) -> Result<f64, FvError> {
        let p = self.projector(n)?.apply(&self.grid, trial);
        let diff: Vec<Complex64> = p.iter().zip(trial).map(|(a, b)| a - b).collect();
        Ok(self.grid.norm(&diff) / self.grid.norm(trial))
    }
}

/// `sum_k ket_k coef_k <bra_k|.>` with the weighted pairing of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankOperator {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub ket: Vec<Complex64>,
    pub coef: Complex64,
    pub bra: Vec<Complex64>,
}

impl LowRankOperator {
    pub fn apply(&self, grid: &GridRepresentation, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for t in &self.terms {
            let c = t.coef * grid.inner(&t.bra, v);
            for (o, k) in out.iter_mut().zip(&t.ket) {
                *o += k * c;
            }
        }
        out
    }

    /// The adjoint with respect to the weighted pairing.
    pub fn adjoint(&self) -> LowRankOperator {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { ket: t.bra.clone(), coef: t.coef.conj(), bra: t.ket.clone() })
            .collect();
        LowRankOperator { terms }
    }

    pub fn scaled(&self, factor: f64) -> LowRankOperator {
        let terms =
            self.terms.iter().map(|t| Term { coef: t.coef * factor, ..t.clone() }).collect();
        LowRankOperator { terms }
    }

    /// Row-major dense matrix acting on plain sample vectors.
    pub fn to_dense(&self, grid: &GridRepresentation) -> Vec<Complex64> {
        let n = 2 * grid.len();
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for t in &self.terms {
            for i in 0..n {
                let k = t.ket[i] * t.coef;
                if k == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    m[i * n + j] += k * t.bra[j].conj() * grid.weight(j);
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Unit,
    InverseMuSquared,
    Custom,
}

/// Positive weights `omega_n^(+)`, `omega_n^(-)` of the lowest `truncation` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub truncation: usize,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub scheme: WeightScheme,
}

impl MetricSpec {
    pub fn unit(truncation: usize) -> Self {
        MetricSpec {
            truncation,
            plus: vec![1.0; truncation],
            minus: vec![1.0; truncation],
            scheme: WeightScheme::Unit,
        }
    }

    /// `omega = 1/|mu|^2`, which makes every physical norm of an eigenvector one.
    pub fn inverse_mu_squared(set: &EigenpairSet, truncation: usize) -> Result<Self, FvError> {
        let pairs = set.truncated(truncation)?;
        let w = |sign: f64| pairs.iter().filter(|p| p.sign == sign).map(|p| 1.0 / p.mu.norm_sqr()).collect();
        Ok(MetricSpec { truncation, plus: w(1.0), minus: w(-1.0), scheme: WeightScheme::InverseMuSquared })
    }

    pub fn custom(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self, FvError> {
        if plus.len() != minus.len() {
            return Err(FvError::WeightCount { expected: plus.len(), got: minus.len() });
        }
        let spec = MetricSpec { truncation: plus.len(), plus, minus, scheme: WeightScheme::Custom };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), FvError> {
        for (k, w) in self.plus.iter().chain(&self.minus).enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(FvError::NonPositiveWeight { index: k });
            }
        }
        for got in [self.plus.len(), self.minus.len()] {
            if got != self.truncation {
                return Err(FvError::WeightCount { expected: self.truncation, got });
            }
        }
        Ok(())
    }

    pub fn weight(&self, level_rank: usize, sign: f64) -> f64 {
        if sign > 0.0 {
            self.plus[level_rank]
        } else {
            self.minus[level_rank]
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MetricSpec {
            truncation: self.truncation,
            plus: self.plus.iter().map(|w| w * factor).collect(),
            minus: self.minus.iter().map(|w| w * factor).collect(),
            scheme: WeightScheme::Custom,
        }
    }
}

/// `Theta = sum |n>> omega <<n|` from left vectors, its inverse on the span
/// `sum |n> 1/(omega |mu|^2) <n|` from right vectors, and the operator norm of `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub spec: MetricSpec,
    pub theta: LowRankOperator,
    pub theta_inv: LowRankOperator,
    pub norm: f64,
}

pub fn build_metric(set: &EigenpairSet, mspec: &MetricSpec) -> Result<Metric, FvError> {
    mspec.check()?;
    let pairs = set.truncated(mspec.truncation)?;
    let omega: Vec<f64> = pairs.iter().enumerate().map(|(i, p)| mspec.weight(i / 2, p.sign)).collect();
    let theta = LowRankOperator {
        terms: pairs
            .iter()
            .zip(&omega)
            .map(|(p, &w)| Term { ket: p.left.clone(), coef: Complex64::new(w, 0.0), bra: p.left.clone() })
            .collect(),
    };
    let theta_inv = LowRankOperator {
        terms: pairs
            .iter()
            .zip(&omega)
            .map(|(p, &w)| Term {
                ket: p.right.clone(),
                coef: Complex64::new(1.0 / (w * p.mu.norm_sqr()), 0.0),
                bra: p.right.clone(),
            })
            .collect(),
    };
    let k = pairs.len();
    let g = DMatrix::from_fn(k, k, |i, j| {
        set.grid.inner(&pairs[i].left, &pairs[j].left) * libm::sqrt(omega[i] * omega[j])
    });
    let norm = max_eigenvalue(g);
    Ok(Metric { spec: mspec.clone(), theta, theta_inv, norm })
}

fn hermitian_eigenvalues(m: DMatrix<Complex64>) -> Vec<f64> {
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

fn max_eigenvalue(m: DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `(v1, v2)_Theta = <v1|Theta v2>`.
pub fn physical_product(
    grid: &GridRepresentation,
    metric: &Metric,
    v1: &[Complex64],
    v2: &[Complex64],
) -> Complex64 {
    grid.inner(v1, &metric.theta.apply(grid, v2))
}

/// `||(Theta H_N - H_N^dagger Theta) t|| / (||Theta|| ||H_N t||)`.
pub fn quasi_hermiticity_residual(
    set: &EigenpairSet,
    metric: &Metric,
    trial: &[Complex64],
) -> Result<f64, FvError> {
    let g = &set.grid;
    let h = set.hamiltonian(metric.spec.truncation)?;
    let ht = h.apply(g, trial);
    let a = metric.theta.apply(g, &ht);
    let b = h.adjoint().apply(g, &metric.theta.apply(g, trial));
    let diff: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(g.norm(&diff) / (metric.norm * g.norm(&ht)))
}

/// Matrix of physical products among all included right vectors.
pub fn product_gram(set: &EigenpairSet, metric: &Metric) -> Result<Vec<Vec<Complex64>>, FvError> {
    let pairs = set.truncated(metric.spec.truncation)?;
    let g = &set.grid;
    let images: Vec<Vec<Complex64>> = pairs.iter().map(|p| metric.theta.apply(g, &p.right)).collect();
    Ok(pairs.iter().map(|p| images.iter().map(|img| g.inner(&p.right, img)).collect()).collect())
}

pub fn product_gram_min_eigenvalue(set: &EigenpairSet, metric: &Metric) -> Result<f64, FvError> {
    let gram = product_gram(set, metric)?;
    let k = gram.len();
    let m = DMatrix::from_fn(k, k, |i, j| gram[i][j]);
    Ok(hermitian_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min))
}

/// `M_cd = <c|Theta|d> / (conj(mu_c) mu_d)`, which should equal `omega_c delta_cd`.
pub fn recovered_weights(set: &EigenpairSet, metric: &Metric) -> Result<Vec<Vec<Complex64>>, FvError> {
    let pairs = set.truncated(metric.spec.truncation)?;
    let gram = product_gram(set, metric)?;
    Ok(gram
        .iter()
        .enumerate()
        .map(|(c, row)| row.iter().enumerate().map(|(d, v)| v / (pairs[c].mu.conj() * pairs[d].mu)).collect())
        .collect())
}
