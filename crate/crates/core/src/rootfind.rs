//! Real roots of the secular function, their continuation in the coupling strength,
//! exceptional points where two real levels coalesce, and the robust/fragile split.
//!
//! Sweeps scale every coupling of a well by one factor. The sweep coordinate `xi` is the
//! largest coupling magnitude, so for a single delta pair it is the coupling itself.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    ContinuationTrace, ExceptionalPoint, LevelTag, RootRecord, TraceSample, TraceStatus, WellSpec,
};
use crate::secular::{Secular, SecularError, KAPPA_LIMIT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootfindError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Secular(#[from] SecularError),
    #[error("levels {0} and {1} do not coalesce in the searched range")]
    NoCoalescence(usize, usize),
}

/// Grid scan over `kappa` and the tolerances of root refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub step: f64,
    pub refine_tol: f64,
    pub residual_tol: f64,
}

impl ScanConfig {
    pub fn up_to(kappa_max: f64) -> Self {
        ScanConfig {
            kappa_min: 1e-3,
            kappa_max,
            step: PI / 40.0,
            refine_tol: 1e-12,
            residual_tol: 1e-10,
        }
    }

    /// Enough range for the lowest `levels` square-well levels plus a margin.
    pub fn for_levels(levels: usize) -> Self {
        ScanConfig::up_to(levels as f64 * FRAC_PI_2 + FRAC_PI_4)
    }

    pub fn check(&self) -> Result<(), RootfindError> {
        if !(self.kappa_min > 0.0) {
            return Err(RootfindError::InvalidConfig("kappa_min must be positive"));
        }
        if !(self.kappa_max > self.kappa_min && self.kappa_max <= KAPPA_LIMIT) {
            return Err(RootfindError::InvalidConfig("need kappa_min < kappa_max <= 1e3"));
        }
        if !(self.step > 0.0 && self.step < FRAC_PI_4) {
            return Err(RootfindError::InvalidConfig("step must lie in (0, pi/4)"));
        }
        if !(self.refine_tol > 0.0 && self.residual_tol > 0.0) {
            return Err(RootfindError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }
}

/// The coupling sweep `xi_from ..= xi_to` sampled at `steps` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub xi_from: f64,
    pub xi_to: f64,
    pub steps: usize,
    pub collision_delta: f64,
    pub ep_tol: f64,
}

impl SweepConfig {
    pub fn new(xi_from: f64, xi_to: f64, steps: usize) -> Self {
        SweepConfig { xi_from, xi_to, steps, collision_delta: 1e-3, ep_tol: 1e-8 }
    }

    pub fn check(&self) -> Result<(), RootfindError> {
        if !(self.xi_from >= 0.0 && self.xi_to > self.xi_from && self.xi_to.is_finite()) {
            return Err(RootfindError::InvalidConfig("need 0 <= xi_from < xi_to"));
        }
        if self.steps < 2 {
            return Err(RootfindError::InvalidConfig("a sweep needs at least two samples"));
        }
        if !(self.collision_delta > 0.0 && self.ep_tol > 0.0) {
            return Err(RootfindError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }

    pub fn sample(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.xi_to
        } else {
            self.xi_from + (self.xi_to - self.xi_from) * i as f64 / (self.steps - 1) as f64
        }
    }
}

// ---------------------------------------------------------------------------------------
// one-dimensional kernels

/// Brent's method on a sign-changing bracket; iterates to machine precision or `tol`,
/// whichever is tighter in practice.
pub fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.min(1e-15 * b.abs().max(1.0));
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

/// Golden-section minimization of `g` on `[a, b]`.
fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - R * (b - a);
    let mut x2 = a + R * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..90 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
        if g1 < g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - R * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + R * (b - a);
            g2 = g(x2);
        }
    }
    if g1 < g2 {
        (x1, g1)
    } else {
        (x2, g2)
    }
}

/// How a grid minimum of `|f|` that shows no sign change is judged.
#[derive(Clone, Copy)]
enum Touch {
    /// Accept a double root when the refined `|f|` is below this value.
    Absolute(f64),
    /// Accept when the refined `|f|` is below this fraction of the neighbouring values.
    Relative(f64),
}

/// Roots of `f` from sampled values: sign changes are refined by Brent, grid minima of
/// `|f|` by golden section (yielding a pair of roots if the minimum crosses zero, or a
/// double root if it touches zero).
fn scan_sampled(
    f: &impl Fn(f64) -> f64,
    grid: &[f64],
    values: &[f64],
    tol: f64,
    touch: Touch,
) -> Vec<f64> {
    let mut roots = Vec::new();
    let n = grid.len();
    for i in 0..n {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        }
        if i + 1 < n && values[i] * values[i + 1] < 0.0 {
            roots.push(bisect_to_ulp(f, grid[i], grid[i + 1], brent(f, grid[i], grid[i + 1], tol), tol));
        }
        if i > 0 && i + 1 < n {
            let (l, m, r) = (values[i - 1], values[i], values[i + 1]);
            let same = (l > 0.0 && m > 0.0 && r > 0.0) || (l < 0.0 && m < 0.0 && r < 0.0);
            if same && m.abs() <= l.abs() && m.abs() <= r.abs() {
                let s = m.signum();
                let (x, gmin) = golden_min(|x| s * f(x), grid[i - 1], grid[i + 1]);
                if gmin < 0.0 {
                    roots.push(bisect_to_ulp(f, grid[i - 1], x, brent(f, grid[i - 1], x, tol), tol));
                    roots.push(bisect_to_ulp(f, x, grid[i + 1], brent(f, x, grid[i + 1], tol), tol));
                } else {
                    let accept = match touch {
                        Touch::Absolute(t) => gmin <= t,
                        Touch::Relative(t) => gmin <= t * l.abs().max(r.abs()),
                    };
                    if accept {
                        roots.push(x);
                    }
                }
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1.0));
    roots
}

/// Narrows the sign change around a root `k` of `f` in `[a, b]` to adjacent floats and
/// returns the one with the smaller `|f|`.
fn bisect_to_ulp(f: &impl Fn(f64) -> f64, a: f64, b: f64, k: f64, tol: f64) -> f64 {
    let w = 2.0 * tol + 4.0 * f64::EPSILON * k.abs();
    let (mut lo, mut hi) = ((k - w).max(a), (k + w).min(b));
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return k;
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm * flo < 0.0 {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    if flo.abs() <= fhi.abs() {
        lo
    } else {
        hi
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = libm::floor((hi - lo) / step) as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if g.last().is_some_and(|&x| hi - x > 1e-12 * step) {
        g.push(hi);
    }
    g
}

/// All roots of a real function on `[lo, hi]` located from a grid of spacing `step`.
pub fn bracket_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64, tol: f64) -> Vec<f64> {
    let g = grid(lo, hi, step);
    let v: Vec<f64> = g.iter().map(|&x| f(x)).collect();
    scan_sampled(&f, &g, &v, tol, Touch::Relative(1e-9))
}

// ---------------------------------------------------------------------------------------
// Newton iterations on the secular function

fn coupling_factor(spec: &WellSpec, xi: f64) -> f64 {
    let scale = spec.coupling_scale();
    if scale > 0.0 {
        xi / scale
    } else {
        0.0
    }
}

/// `D(kappa; xi)` with the sweep coordinate `xi` mapped onto the well's couplings.
#[derive(Clone, Copy)]
struct Family<'a> {
    det: &'a Secular,
}

impl Family<'_> {
    fn at(&self, kappa: Complex64, xi: f64) -> Complex64 {
        self.det.value_scaled(kappa, coupling_factor(self.det.spec(), xi))
    }

    fn real(&self, kappa: f64, xi: f64) -> f64 {
        self.at(Complex64::new(kappa, 0.0), xi).re
    }

    fn d_kappa(&self, kappa: Complex64, xi: f64, rel: f64) -> Complex64 {
        let h = rel * kappa.norm().max(1.0);
        (self.at(kappa + h, xi) - self.at(kappa - h, xi)) / (2.0 * h)
    }

    fn d_xi(&self, kappa: Complex64, xi: f64) -> Complex64 {
        let h = 1e-6 * xi.abs().max(1.0);
        (self.at(kappa, xi + h) - self.at(kappa, xi - h)) / (2.0 * h)
    }

    /// `dkappa/dxi` along a simple root.
    fn slope(&self, kappa: Complex64, xi: f64) -> Complex64 {
        let dk = self.d_kappa(kappa, xi, 1e-7);
        if dk.norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s = -self.d_xi(kappa, xi) / dk;
        if s.re.is_finite() && s.im.is_finite() {
            s
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// Damped Newton on `D(., xi)` from `z0`; derivative by central differences.
fn newton(fam: Family<'_>, z0: Complex64, xi: f64, residual_tol: f64) -> Option<Complex64> {
    let mut z = z0;
    let mut fz = fam.at(z, xi);
    for _ in 0..100 {
        if !(fz.re.is_finite() && fz.im.is_finite()) {
            return None;
        }
        let dz = fam.d_kappa(z, xi, 1e-7);
        if dz.norm() == 0.0 {
            break;
        }
        let mut step = -fz / dz;
        let mut accepted = false;
        for _ in 0..20 {
            let zn = z + step;
            let fzn = fam.at(zn, xi);
            if fzn.norm() < fz.norm() || fzn.norm() == 0.0 {
                z = zn;
                fz = fzn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let small = step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0);
        if !accepted || small || fz.norm() == 0.0 {
            break;
        }
    }
    (fz.norm() < residual_tol).then_some(z)
}

fn newton_real(fam: Family<'_>, x0: f64, xi: f64, residual_tol: f64) -> Option<f64> {
    newton(fam, Complex64::new(x0, 0.0), xi, residual_tol).map(|z| z.re)
}

/// Newton refinement of a real root of `det` from `guess` (all couplings as in the spec).
pub fn refine_root(det: &Secular, guess: f64, config: &ScanConfig) -> Option<f64> {
    let fam = Family { det };
    newton_real(fam, guess, det.spec().coupling_scale(), config.residual_tol)
}

// ---------------------------------------------------------------------------------------
// real root scans

/// Real roots of the matrix-backed secular function in `[kappa_min, kappa_max]`.
pub fn find_real_roots(spec: &WellSpec, config: &ScanConfig) -> Result<Vec<RootRecord>, RootfindError> {
    find_real_roots_with(&Secular::matrix(spec)?, config)
}

pub fn find_real_roots_with(det: &Secular, config: &ScanConfig) -> Result<Vec<RootRecord>, RootfindError> {
    config.check()?;
    let cells = scan_cells(config);
    Ok(number_roots(find_real_roots_in(det, config, 0..cells)))
}

/// Number of grid cells of a scan; chunks of `0..scan_cells` can be searched independently
/// with [`find_real_roots_in`] and merged with [`number_roots`].
pub fn scan_cells(config: &ScanConfig) -> usize {
    grid(config.kappa_min, config.kappa_max, config.step).len() - 1
}

/// Roots whose bracketing cell lies in `cells`. Indices are provisional.
pub fn find_real_roots_in(
    det: &Secular,
    config: &ScanConfig,
    cells: core::ops::Range<usize>,
) -> Vec<RootRecord> {
    let full = grid(config.kappa_min, config.kappa_max, config.step);
    let total = full.len() - 1;
    let end = cells.end.min(total);
    if cells.start >= end {
        return Vec::new();
    }
    // one extra point on each side so that minima at chunk edges are visible
    let lo = cells.start.saturating_sub(1);
    let hi = (end + 1).min(total);
    let (start, stop) = (full[cells.start], full[end]);
    let last_chunk = end == total;
    let mut g = full[lo..=hi].to_vec();
    if last_chunk {
        // a root sitting on kappa_max may bracket just outside it
        g.push(stop + config.step);
    }
    let f = |k: f64| det.real(k, 1.0);
    let v: Vec<f64> = g.iter().map(|&k| f(k)).collect();
    let edge = stop + config.refine_tol.max(4.0 * f64::EPSILON * stop);
    scan_sampled(&f, &g, &v, config.refine_tol, Touch::Absolute(config.residual_tol))
        .into_iter()
        .filter(|&k| k >= start && (k < stop || (last_chunk && k <= edge)))
        .map(|kappa| RootRecord {
            index: 0,
            kappa,
            residual: f(kappa).abs(),
            tag: LevelTag::Unclassified,
        })
        .filter(|r| r.residual < config.residual_tol)
        .collect()
}

/// Sorts, removes duplicates from chunk seams and assigns ordinal indices `1, 2, ...`.
pub fn number_roots(mut roots: Vec<RootRecord>) -> Vec<RootRecord> {
    roots.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    roots.dedup_by(|a, b| (a.kappa - b.kappa).abs() <= 1e-11 * b.kappa.max(1.0));
    for (i, r) in roots.iter_mut().enumerate() {
        r.index = i + 1;
    }
    roots
}

/// Relabels roots with their level index from a continuation that starts at zero coupling.
/// If any root cannot be matched to a real trace, all roots keep their ordinal index.
pub fn label_by_continuation(det: &Secular, roots: &mut [RootRecord], config: &ScanConfig) {
    let xi = det.spec().coupling_scale();
    if xi == 0.0 || roots.is_empty() {
        return;
    }
    let top = roots.iter().fold(0.0_f64, |m, r| m.max(r.kappa));
    let scan = ScanConfig { kappa_max: (top + 4.0 * PI).min(KAPPA_LIMIT), ..*config };
    let steps = (libm::ceil(xi / 0.05) as usize + 1).max(2);
    let Ok(run) = continue_levels_with(det, &SweepConfig::new(0.0, xi, steps), &scan) else {
        return;
    };
    let mut labels = Vec::with_capacity(roots.len());
    for r in roots.iter() {
        let hit = run.traces.iter().find(|t| {
            t.lost_at.is_none()
                && t.samples.last().is_some_and(|s| {
                    s.status == TraceStatus::Real && (s.kappa.re - r.kappa).abs() < 1e-7
                })
        });
        match hit {
            Some(t) => labels.push(t.level),
            // a partial relabelling could collide with ordinal indices
            None => return,
        }
    }
    for (r, l) in roots.iter_mut().zip(labels) {
        r.index = l;
    }
}

// ---------------------------------------------------------------------------------------
// continuation

/// Traces of every level plus the exceptional points met on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub traces: Vec<ContinuationTrace>,
    pub exceptional_points: Vec<ExceptionalPoint>,
}

#[derive(Clone, Copy)]
struct RealLevel {
    level: usize,
    kappa: f64,
    slope: f64,
}

#[derive(Clone, Copy)]
struct ComplexPair {
    /// Level carrying `Im kappa > 0`; `lower` carries the conjugate.
    upper: usize,
    lower: usize,
    xi: f64,
    z: Complex64,
    slope: Complex64,
    /// `(kappa_c, c)` with `(kappa - kappa_c)^2 ~ c (xi - xi_c)` right after the coalescence.
    seed: Option<(f64, Complex64)>,
}

enum Event {
    Coalesced(ExceptionalPoint),
    Lost(usize, f64),
}

struct Tracker<'a> {
    fam: Family<'a>,
    scan: ScanConfig,
    sweep: SweepConfig,
    xi: f64,
    real: Vec<RealLevel>,
    pairs: Vec<ComplexPair>,
}

const MIN_STEP: f64 = 1e-9;
const PROBE: f64 = 1e-4;

impl<'a> Tracker<'a> {
    fn window_roots(&self, lo: f64, hi: f64, xi: f64) -> Vec<f64> {
        let fam = self.fam;
        let f = |k: f64| fam.real(k, xi);
        let step = (hi - lo) / 400.0;
        let g = grid(lo, hi, step);
        let v: Vec<f64> = g.iter().map(|&k| f(k)).collect();
        scan_sampled(&f, &g, &v, self.scan.refine_tol, Touch::Absolute(self.scan.residual_tol))
    }

    /// Window around levels `i < j` (indices into `self.real`, sorted by kappa) that stays
    /// clear of the other real levels.
    fn pair_window(&self, i: usize, j: usize) -> (f64, f64) {
        let (a, b) = (self.real[i].kappa, self.real[j].kappa);
        let w = 0.5 * (b - a) + 20.0 * self.sweep.collision_delta;
        let mut lo = (a - w).max(self.scan.kappa_min * 0.5);
        let mut hi = (b + w).min(KAPPA_LIMIT);
        for (k, other) in self.real.iter().enumerate() {
            if k == i || k == j {
                continue;
            }
            if other.kappa <= a {
                lo = lo.max(0.5 * (other.kappa + a));
            } else if other.kappa >= b {
                hi = hi.min(0.5 * (other.kappa + b));
            }
        }
        (lo, hi)
    }

    /// Advances every real level from `self.xi` to `target`.
    fn march_real(&mut self, target: f64, events: &mut Vec<Event>) {
        let mut h = target - self.xi;
        while self.xi < target && !self.real.is_empty() {
            h = h.min(target - self.xi);
            let next = if h >= target - self.xi { target } else { self.xi + h };
            match self.try_step(next) {
                Ok(found) => {
                    self.commit_with(next, &found, &[]);
                    h *= 2.0;
                }
                Err(_) if next - self.xi > MIN_STEP * self.xi.max(1.0) => {
                    h = 0.5 * (next - self.xi);
                }
                Err(bad) => {
                    let (found, slopes) = self.resolve(next, &bad, events);
                    self.commit_with(next, &found, &slopes);
                }
            }
        }
        if self.real.is_empty() {
            self.xi = target;
        }
    }

    /// Newton from the linear prediction for every real level. Returns per-level roots or
    /// the set of indices that failed or collided.
    fn try_step(&self, next: f64) -> Result<Vec<Option<f64>>, Vec<usize>> {
        let dt = next - self.xi;
        let mut found = Vec::with_capacity(self.real.len());
        let mut bad = Vec::new();
        for (i, lv) in self.real.iter().enumerate() {
            let pred = lv.kappa + lv.slope * dt;
            let r = newton_real(self.fam, pred, next, self.scan.residual_tol)
                .filter(|r| (r - lv.kappa).abs() < FRAC_PI_4 && *r > 0.0);
            if r.is_none() {
                bad.push(i);
            }
            found.push(r);
        }
        // of two levels landing on one root, the one that strayed further from its
        // prediction is at fault
        let miss = |k: usize, r: f64| (r - (self.real[k].kappa + self.real[k].slope * dt)).abs();
        for i in 0..found.len() {
            for j in i + 1..found.len() {
                if let (Some(a), Some(b)) = (found[i], found[j]) {
                    if (a - b).abs() <= 1e-10 * a.abs().max(1.0) {
                        bad.push(if miss(i, a) >= miss(j, b) { i } else { j });
                    }
                }
            }
        }
        if bad.is_empty() {
            Ok(found)
        } else {
            bad.sort_unstable();
            bad.dedup();
            Err(bad)
        }
    }

    /// Handles a failure that persists at the minimum step: a crossing of two levels, a
    /// coalescence, or a level that cannot be followed.
    fn resolve(
        &mut self,
        next: f64,
        bad: &[usize],
        events: &mut Vec<Event>,
    ) -> (Vec<Option<f64>>, Vec<(usize, f64)>) {
        let dt = next - self.xi;
        let mut found: Vec<Option<f64>> = self
            .real
            .iter()
            .map(|lv| newton_real(self.fam, lv.kappa + lv.slope * dt, next, self.scan.residual_tol))
            .collect();
        let mut handled = vec![false; self.real.len()];
        let mut drop = vec![false; self.real.len()];
        let mut slopes: Vec<(usize, f64)> = Vec::new();
        for &p in bad {
            if handled[p] {
                continue;
            }
            // partner: an adjacent level; a pair that has left the real axis beats a
            // crossing, which beats a level that is merely nearest
            let probe = self.xi + PROBE.max(dt);
            let mut best: Option<(usize, usize, usize, f64)> = None;
            for q in [p.wrapping_sub(1), p + 1] {
                if q >= self.real.len() || drop[q] || (handled[q] && q != p) {
                    continue;
                }
                let (i, j) = if p < q { (p, q) } else { (q, p) };
                let (lo, hi) = self.pair_window(i, j);
                let count = self.window_roots(lo, hi, probe).len();
                let rank = match count {
                    0 => 0,
                    c if c >= 2 => 1,
                    _ => 2,
                };
                let gap = self.real[j].kappa - self.real[i].kappa;
                if best.is_none_or(|(_, _, r, g)| (rank, gap) < (r, g)) {
                    best = Some((i, j, rank, gap));
                }
            }
            let Some((i, j, _, _)) = best else {
                handled[p] = true;
                drop[p] = true;
                events.push(Event::Lost(self.real[p].level, self.xi));
                continue;
            };
            handled[i] = true;
            handled[j] = true;
            let (lo, hi) = self.pair_window(i, j);
            let mut roots = self.window_roots(lo, hi, probe);
            if roots.len() >= 2 {
                // the two levels pass each other or approach without merging
                let pi = self.real[i].kappa + self.real[i].slope * (probe - self.xi);
                let pj = self.real[j].kappa + self.real[j].slope * (probe - self.xi);
                roots.sort_by(|a, b| {
                    let da = (a - pi).abs().min((a - pj).abs());
                    let db = (b - pi).abs().min((b - pj).abs());
                    da.total_cmp(&db)
                });
                roots.truncate(2);
                roots.sort_by(f64::total_cmp);
                let (ri, rj) = if pi <= pj { (roots[0], roots[1]) } else { (roots[1], roots[0]) };
                let here = self.window_roots(lo, hi, next);
                for (k, r_probe) in [(i, ri), (j, rj)] {
                    let r_here = found[k].filter(|_| !bad.contains(&k)).or_else(|| {
                        here.iter()
                            .copied()
                            .min_by(|a, b| (a - r_probe).abs().total_cmp(&(b - r_probe).abs()))
                    });
                    match r_here {
                        Some(r) => {
                            found[k] = Some(r);
                            let s = (r_probe - r) / (probe - next).max(MIN_STEP);
                            slopes.push((self.real[k].level, s));
                        }
                        None => {
                            drop[k] = true;
                            events.push(Event::Lost(self.real[k].level, self.xi));
                        }
                    }
                }
            } else if roots.is_empty() {
                let ep = self.locate_coalescence(i, j, lo, hi, self.xi, probe);
                drop[i] = true;
                drop[j] = true;
                events.push(Event::Coalesced(ep));
            } else {
                for k in [i, j] {
                    if bad.contains(&k) {
                        drop[k] = true;
                        events.push(Event::Lost(self.real[k].level, self.xi));
                    }
                }
            }
        }
        // anything else that failed without being part of a pair
        for (k, f) in found.iter().enumerate() {
            if f.is_none() && !drop[k] {
                drop[k] = true;
                events.push(Event::Lost(self.real[k].level, self.xi));
            }
        }
        let mut kept = Vec::new();
        let mut kept_found = Vec::new();
        for (k, lv) in self.real.iter().enumerate() {
            if !drop[k] {
                kept.push(*lv);
                kept_found.push(found[k]);
            }
        }
        self.real = kept;
        (kept_found, slopes)
    }

    fn commit_with(&mut self, next: f64, found: &[Option<f64>], slopes: &[(usize, f64)]) {
        for (lv, r) in self.real.iter_mut().zip(found) {
            let Some(k) = *r else { continue };
            lv.kappa = k;
            lv.slope = match slopes.iter().find(|(level, _)| *level == lv.level) {
                Some(&(_, s)) => s,
                None => self.fam.slope(Complex64::new(k, 0.0), next).re,
            };
        }
        self.real.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
        self.xi = next;
    }

    /// Two real roots near each other at `xi_lo` and none at `xi_hi`: bisect on the root
    /// count, then polish `(D, dD/dkappa) = 0` by Newton in `(kappa, xi)`.
    fn locate_coalescence(
        &self,
        i: usize,
        j: usize,
        lo: f64,
        hi: f64,
        mut xi_lo: f64,
        mut xi_hi: f64,
    ) -> ExceptionalPoint {
        let pair = (self.real[i].level.min(self.real[j].level), self.real[i].level.max(self.real[j].level));
        let (mut wlo, mut whi) = (lo, hi);
        for _ in 0..200 {
            if xi_hi - xi_lo <= 1e-13 * xi_hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (xi_lo + xi_hi);
            let r = self.window_roots(wlo, whi, mid);
            if r.len() >= 2 {
                xi_lo = mid;
                // keep the window tight around the closing pair
                let (a, b) = (r[0], r[r.len() - 1]);
                let w = (b - a) + 1e-6;
                wlo = wlo.max(a - w);
                whi = whi.min(b + w);
            } else {
                xi_hi = mid;
            }
        }
        let fam = self.fam;
        let r = self.window_roots(wlo, whi, xi_lo);
        let s = fam.real(0.5 * (wlo + whi), xi_hi).signum();
        let (a, b) = if r.len() >= 2 { (r[0], r[r.len() - 1]) } else { (wlo, whi) };
        let (kappa_b, _) = golden_min(|k| s * fam.real(k, xi_lo), a, b);
        let xi_b = xi_lo;
        let mut best = (kappa_b, xi_b, ep_residuals(fam, kappa_b, xi_b));
        if let Some((k, x)) = ep_newton(fam, kappa_b, xi_b) {
            let res = ep_residuals(fam, k, x);
            let near = (x - xi_b).abs() < 1e-6 * xi_b.max(1.0) && (k - kappa_b).abs() < 1e-3;
            if near && res.0.max(res.1) <= best.2 .0.max(best.2 .1) {
                best = (k, x, res);
            }
        }
        ExceptionalPoint { xi_c: best.1, kappa_c: best.0, pair, residuals: best.2 }
    }

    /// Advances complex pairs to `target`.
    fn march_pairs(&mut self, target: f64, events: &mut Vec<Event>) {
        let mut kept = Vec::new();
        let pairs = core::mem::take(&mut self.pairs);
        for mut p in pairs {
            if self.advance_pair(&mut p, target) {
                kept.push(p);
            } else {
                events.push(Event::Lost(p.upper, p.xi));
                events.push(Event::Lost(p.lower, p.xi));
            }
        }
        self.pairs = kept;
    }

    fn advance_pair(&self, p: &mut ComplexPair, target: f64) -> bool {
        let tol = self.scan.residual_tol;
        let mut h = target - p.xi;
        while p.xi < target {
            h = h.min(target - p.xi);
            let next = if h >= target - p.xi { target } else { p.xi + h };
            let dt = next - p.xi;
            let guess = match p.seed {
                Some((kc, c)) => {
                    let mut g = Complex64::new(kc, 0.0) + (c * dt).sqrt();
                    if g.im < 1e-9 {
                        g = Complex64::new(kc, 1e-3);
                    }
                    if g.im < 0.0 {
                        g = g.conj();
                    }
                    g
                }
                None => p.z + p.slope * dt,
            };
            let r = newton(self.fam, guess, next, tol)
                .filter(|r| r.im > 1e-6 && (r - p.z).norm() < FRAC_PI_4);
            match r {
                Some(z) => {
                    p.z = z;
                    p.xi = next;
                    p.seed = None;
                    p.slope = self.fam.slope(z, next);
                    h *= 2.0;
                }
                None if dt > MIN_STEP * p.xi.max(1.0) => h = 0.5 * dt,
                None => return false,
            }
        }
        true
    }
}

fn ep_residuals(fam: Family<'_>, kappa: f64, xi: f64) -> (f64, f64) {
    let k = Complex64::new(kappa, 0.0);
    (fam.at(k, xi).norm(), fam.d_kappa(k, xi, 1e-5).norm())
}

/// Newton on `F = (D, dD/dkappa)` over `(kappa, xi)` with a central-difference Jacobian.
fn ep_newton(fam: Family<'_>, mut kappa: f64, mut xi: f64) -> Option<(f64, f64)> {
    let f = |k: f64, x: f64| -> (f64, f64) {
        let kc = Complex64::new(k, 0.0);
        (fam.at(kc, x).re, fam.d_kappa(kc, x, 1e-5).re)
    };
    for _ in 0..40 {
        let (f1, f2) = f(kappa, xi);
        if !(f1.is_finite() && f2.is_finite()) {
            return None;
        }
        let hk = 1e-6 * kappa.abs().max(1.0);
        let hx = 1e-6 * xi.abs().max(1.0);
        let (a1, a2) = f(kappa + hk, xi);
        let (b1, b2) = f(kappa - hk, xi);
        let (c1, c2) = f(kappa, xi + hx);
        let (d1, d2) = f(kappa, xi - hx);
        let j11 = (a1 - b1) / (2.0 * hk);
        let j21 = (a2 - b2) / (2.0 * hk);
        let j12 = (c1 - d1) / (2.0 * hx);
        let j22 = (c2 - d2) / (2.0 * hx);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dk = -(j22 * f1 - j12 * f2) / det;
        let dx = -(-j21 * f1 + j11 * f2) / det;
        kappa += dk;
        xi += dx;
        if dk.abs() < 1e-14 * kappa.abs().max(1.0) && dx.abs() < 1e-14 * xi.abs().max(1.0) {
            return Some((kappa, xi));
        }
    }
    Some((kappa, xi))
}

/// Continues every level whose zero-coupling value `n pi / 2` lies below `scan.kappa_max`
/// through the sweep. Samples are recorded at the sweep points; a level that coalesces gets
/// one `Merged` sample at the coalescence in place of the first sample after it, and
/// complex samples afterwards (`Im kappa > 0` on the lower level index of the pair).
pub fn continue_levels(
    spec: &WellSpec,
    sweep: &SweepConfig,
    scan: &ScanConfig,
) -> Result<Continuation, RootfindError> {
    continue_levels_with(&Secular::matrix(spec)?, sweep, scan)
}

pub fn continue_levels_with(
    det: &Secular,
    sweep: &SweepConfig,
    scan: &ScanConfig,
) -> Result<Continuation, RootfindError> {
    sweep.check()?;
    scan.check()?;
    let fam = Family { det };
    let count = libm::floor(scan.kappa_max / FRAC_PI_2) as usize;
    let mut real = Vec::with_capacity(count);
    for n in 1..=count {
        let k0 = n as f64 * FRAC_PI_2;
        if k0 >= scan.kappa_max {
            continue;
        }
        let kappa = newton_real(fam, k0, 0.0, scan.residual_tol).unwrap_or(k0);
        real.push(RealLevel { level: n, kappa, slope: fam.slope(Complex64::new(kappa, 0.0), 0.0).re });
    }
    let levels = real.len();
    let mut tracker = Tracker { fam, scan: *scan, sweep: *sweep, xi: 0.0, real, pairs: Vec::new() };
    let mut traces: Vec<ContinuationTrace> = (1..=levels)
        .map(|level| ContinuationTrace { level, samples: Vec::with_capacity(sweep.steps), partner: None, lost_at: None })
        .collect();
    let mut eps = Vec::new();
    let mut fresh: Vec<ExceptionalPoint> = Vec::new();
    for i in 0..sweep.steps {
        let target = sweep.sample(i);
        let mut events = Vec::new();
        tracker.march_pairs(target, &mut events);
        tracker.march_real(target, &mut events);
        fresh.clear();
        for ev in events {
            match ev {
                Event::Coalesced(ep) => {
                    let (a, b) = ep.pair;
                    traces[a - 1].partner = Some(b);
                    traces[b - 1].partner = Some(a);
                    let seed_c = {
                        let k = Complex64::new(ep.kappa_c, 0.0);
                        let dt = fam.d_xi(k, ep.xi_c);
                        let h = 1e-4 * ep.kappa_c.max(1.0);
                        let dkk = (fam.at(k + h, ep.xi_c) - 2.0 * fam.at(k, ep.xi_c) + fam.at(k - h, ep.xi_c)) / (h * h);
                        -2.0 * dt / dkk
                    };
                    tracker.pairs.push(ComplexPair {
                        upper: a,
                        lower: b,
                        xi: ep.xi_c,
                        z: Complex64::new(ep.kappa_c, 0.0),
                        slope: Complex64::new(0.0, 0.0),
                        seed: Some((ep.kappa_c, seed_c)),
                    });
                    fresh.push(ep);
                }
                Event::Lost(level, xi) => {
                    let t = &mut traces[level - 1];
                    if t.lost_at.is_none() {
                        t.lost_at = Some(xi);
                    }
                }
            }
        }
        for lv in &tracker.real {
            let t = &mut traces[lv.level - 1];
            if t.lost_at.is_none() {
                t.samples.push(TraceSample { xi: target, kappa: Complex64::new(lv.kappa, 0.0), status: TraceStatus::Real });
            }
        }
        for ep in &fresh {
            for level in [ep.pair.0, ep.pair.1] {
                let t = &mut traces[level - 1];
                if t.lost_at.is_none() {
                    t.samples.push(TraceSample { xi: ep.xi_c, kappa: Complex64::new(ep.kappa_c, 0.0), status: TraceStatus::Merged });
                }
            }
        }
        for p in &tracker.pairs {
            if p.seed.is_some() {
                continue;
            }
            for (level, z) in [(p.upper, p.z), (p.lower, p.z.conj())] {
                let t = &mut traces[level - 1];
                if t.lost_at.is_none() {
                    t.samples.push(TraceSample { xi: target, kappa: z, status: TraceStatus::Complex });
                }
            }
        }
        eps.append(&mut fresh);
    }
    Ok(Continuation { traces, exceptional_points: eps })
}

/// Exceptional point of levels `pair` near `(kappa_guess, xi_guess)`. The candidate from a
/// direct Newton solve is accepted only if continuation confirms that exactly these two
/// levels coalesce there; otherwise the coalescence found by continuation is returned.
pub fn find_exceptional_point(
    spec: &WellSpec,
    kappa_guess: f64,
    xi_guess: f64,
    pair: (usize, usize),
    sweep: &SweepConfig,
) -> Result<ExceptionalPoint, RootfindError> {
    let det = Secular::matrix(spec)?;
    let (n, m) = (pair.0.min(pair.1), pair.0.max(pair.1));
    if n == 0 || n == m {
        return Err(RootfindError::InvalidConfig("pair needs two distinct level indices"));
    }
    let scan = ScanConfig::for_levels(m + 4);
    let run = continue_levels_with(&det, sweep, &scan)?;
    let ep = run
        .exceptional_points
        .iter()
        .find(|e| e.pair == (n, m))
        .copied()
        .ok_or(RootfindError::NoCoalescence(n, m))?;
    let fam = Family { det: &det };
    if let Some((k, x)) = ep_newton(fam, kappa_guess, xi_guess) {
        let res = ep_residuals(fam, k, x);
        let agrees = (x - ep.xi_c).abs() < 1e-6 && (k - ep.kappa_c).abs() < 1e-6;
        if agrees && res.0.max(res.1) < sweep.ep_tol {
            return Ok(ExceptionalPoint { xi_c: x, kappa_c: k, pair: (n, m), residuals: res });
        }
    }
    Ok(ep)
}

/// Guard levels continued above the requested ones so that their partners are tracked.
pub const GUARD_LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelClass {
    pub level: usize,
    pub tag: LevelTag,
    pub xi_c: Option<f64>,
    pub partner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub xi_max: f64,
    pub levels: Vec<LevelClass>,
}

impl Classification {
    pub fn robust(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.iter().filter(|c| c.tag == LevelTag::Robust).map(|c| c.level)
    }

    pub fn fragile(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.iter().filter(|c| c.tag == LevelTag::Fragile).map(|c| c.level)
    }
}

/// Tags the lowest `levels` levels: fragile if they coalesce for some coupling up to
/// `xi_max`, robust if they stay real, unclassified if continuation lost them.
pub fn classify_levels(spec: &WellSpec, levels: usize, xi_max: f64) -> Result<Classification, RootfindError> {
    classify_levels_with(&Secular::matrix(spec)?, levels, xi_max)
}

pub fn classify_levels_with(det: &Secular, levels: usize, xi_max: f64) -> Result<Classification, RootfindError> {
    if levels == 0 {
        return Err(RootfindError::InvalidConfig("need at least one level"));
    }
    if !(xi_max > 0.0 && xi_max.is_finite()) {
        return Err(RootfindError::InvalidConfig("xi_max must be positive"));
    }
    let steps = (libm::ceil(xi_max / 0.05) as usize + 1).max(2);
    let scan = ScanConfig::for_levels(levels + GUARD_LEVELS);
    let run = if det.spec().coupling_scale() == 0.0 {
        None
    } else {
        Some(continue_levels_with(det, &SweepConfig::new(0.0, xi_max, steps), &scan)?)
    };
    let classes = (1..=levels)
        .map(|level| {
            let Some(run) = &run else {
                return LevelClass { level, tag: LevelTag::Robust, xi_c: None, partner: None };
            };
            let t = &run.traces[level - 1];
            match t.merged_sample() {
                Some(s) => LevelClass { level, tag: LevelTag::Fragile, xi_c: Some(s.xi), partner: t.partner },
                None if t.is_lost() => LevelClass { level, tag: LevelTag::Unclassified, xi_c: None, partner: None },
                None => LevelClass { level, tag: LevelTag::Robust, xi_c: None, partner: None },
            }
        })
        .collect();
    Ok(Classification { xi_max, levels: classes })
}
