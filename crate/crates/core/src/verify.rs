//! Cross-checks between the matrix determinant, the closed forms, the factorized
//! conditions and the eigenfunctions, collected into a report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closed_form::{det_l1, det_l2, reduced_conditions, ConditionKind, RationalPosition};
use crate::model::WellSpec;
use crate::rootfind::{bracket_roots, find_real_roots_with, ScanConfig};
use crate::secular::Secular;
use crate::spectral::Eigenfunction;

pub const DEFAULT_SEED: u64 = 20240501;

pub const RATIO_TOL: f64 = 1e-9;
pub const REALITY_TOL: f64 = 1e-12;
pub const DEGENERATION_TOL: f64 = 1e-14;
pub const PT_REDUNDANCY_TOL: f64 = 1e-9;
pub const ROOT_SET_TOL: f64 = 1e-8;
pub const FLAT_ROOT_TOL: f64 = 1e-10;
/// Allowed deviation of `log10` of the continuity ratio from the quadratic value `-4`.
pub const CONTINUITY_LOG_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub worst: f64,
    pub threshold: f64,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    fn new(seed: u64) -> Self {
        VerificationReport { seed, checks: Vec::new() }
    }

    /// Records a measured check; NaN counts as a failure.
    fn measured(&mut self, name: String, worst: f64, threshold: f64, context: String) {
        let status = if worst <= threshold { CheckStatus::Pass } else { CheckStatus::Fail };
        debug_assert!(self.checks.iter().all(|c| c.name != name), "duplicate check {name}");
        self.checks.push(Check { name, status, worst, threshold, context });
    }

    fn skipped(&mut self, name: String, threshold: f64, context: String) {
        self.checks.push(Check { name, status: CheckStatus::Skipped, worst: 0.0, threshold, context });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn closed(spec: &WellSpec, k: Complex64, factor: f64) -> Option<Complex64> {
    let (p, x) = (&spec.positions, &spec.couplings);
    match p.len() {
        1 => Some(det_l1(k, p[0], x[0] * factor)),
        2 => Some(det_l2(k, p[0], p[1], x[0] * factor, x[1] * factor)),
        _ => None,
    }
}

/// Matrix against closed forms, reality, degeneration of two pairs into one, quadratic
/// approach to the Hermitian limit, and redundancy of the conditions at `-a_l`.
pub fn verify_determinants(spec: &WellSpec, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let det = match Secular::matrix(spec) {
        Ok(d) => d,
        Err(e) => {
            report.measured("assembly".into(), f64::INFINITY, 0.0, format!("{e}"));
            return report;
        }
    };
    let count = spec.count();
    let samples: Vec<f64> = (0..200).map(|_| rng.random_range(0.1..20.0)).collect();

    // ratio constancy
    if count == 1 || count == 2 {
        let mut worst = 0.0_f64;
        let mut used = 0;
        for &k in &samples {
            let kc = Complex64::new(k, 0.0);
            let c = closed(spec, kc, 1.0).unwrap_or_default();
            let m = det.value(kc);
            if c.norm() < 1e-6 || m.norm() < 1e-6 {
                continue;
            }
            used += 1;
            worst = worst.max((m / c - 1.0).norm());
        }
        report.measured("ratio_constancy".into(), worst, RATIO_TOL, format!("{used} kappa samples in (0.1, 20)"));
    } else {
        report.skipped("ratio_constancy".into(), RATIO_TOL, format!("no closed form for L = {count}"));
    }

    // reality on the real axis
    let worst = samples
        .iter()
        .map(|&k| {
            let v = det.value(Complex64::new(k, 0.0));
            v.im.abs() / (v.re.abs() + 1.0)
        })
        .fold(0.0, f64::max);
    report.measured("reality".into(), worst, REALITY_TOL, "200 kappa samples in (0.1, 20)".into());

    // degeneration of two pairs into one
    if count == 2 {
        let (a, b) = (spec.positions[0], spec.positions[1]);
        let (x1, x2) = (spec.couplings[0], spec.couplings[1]);
        let mut worst = 0.0_f64;
        for &k in samples.iter().take(100) {
            let kc = Complex64::new(k, 0.0);
            for (two, one) in [
                (det_l2(kc, a, b, x1, 0.0), det_l1(kc, a, x1)),
                (det_l2(kc, a, b, 0.0, x2), det_l1(kc, b, x2)),
            ] {
                worst = worst.max((two - one).norm() / one.norm().max(1e-300));
            }
        }
        report.measured("degeneration".into(), worst, DEGENERATION_TOL, format!("a = {a}, b = {b}"));
    } else {
        report.skipped("degeneration".into(), DEGENERATION_TOL, format!("needs L = 2, spec has L = {count}"));
    }

    // quadratic approach to the Hermitian limit
    if count >= 1 && spec.coupling_scale() > 0.0 {
        let scale = spec.coupling_scale();
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for &k in samples.iter().take(50) {
            let kc = Complex64::new(k, 0.0);
            let d0 = det.value_scaled(kc, 0.0);
            d1 += (det.value_scaled(kc, 1e-4 / scale) - d0).norm();
            d2 += (det.value_scaled(kc, 1e-6 / scale) - d0).norm();
        }
        let order = libm::log10(d2 / d1);
        report.measured(
            "hermitian_limit_continuity".into(),
            (order + 4.0).abs(),
            CONTINUITY_LOG_TOL,
            format!("log10 of the ratio of deviations at eps = 1e-6 and 1e-4 is {order:.4}"),
        );
    } else {
        report.skipped("hermitian_limit_continuity".into(), CONTINUITY_LOG_TOL, "no couplings".into());
    }

    // redundancy of the left-side conditions at the roots
    if count >= 1 {
        let scan = ScanConfig::up_to(10.0);
        let roots = find_real_roots_with(&det, &scan).unwrap_or_default();
        let mut worst = 0.0_f64;
        let mut used = 0;
        for r in &roots {
            if let Ok(f) = Eigenfunction::new(spec, r.kappa) {
                let scale = f.coefficients.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                worst = worst.max(f.matching_residual(false, true) / scale);
                used += 1;
            } else {
                worst = f64::INFINITY;
            }
        }
        if used > 0 {
            report.measured("pt_redundancy".into(), worst, PT_REDUNDANCY_TOL, format!("{used} roots below kappa = 10"));
        } else {
            report.skipped("pt_redundancy".into(), PT_REDUNDANCY_TOL, "no real roots below kappa = 10".into());
        }
    } else {
        report.skipped("pt_redundancy".into(), PT_REDUNDANCY_TOL, "no matching points".into());
    }
    report
}

/// Zeros of the one-pair determinant at `a = 1/2, 1/3, 2/3, 1/4` against the roots of
/// the factorized conditions, flatness of the exact roots in `xi`, and the shared exact
/// sequence of `1/3` and `2/3`.
pub fn verify_rational_a(xi_list: &[f64], kappa_max: f64) -> VerificationReport {
    let mut report = VerificationReport::new(0);
    let lo = 1e-3;
    for pos in RationalPosition::ALL {
        let a = pos.value();
        let mut flat = 0.0_f64;
        for &xi in xi_list {
            let det_roots = bracket_roots(|k| det_l1(Complex64::new(k, 0.0), a, xi).re, lo, kappa_max, PI / 200.0, 1e-14);
            let conds = reduced_conditions(pos, xi);
            let mut cond_roots: Vec<f64> = conds.iter().flat_map(|c| c.roots(kappa_max)).collect();
            cond_roots.sort_by(f64::total_cmp);
            // each determinant zero satisfies some factor, and each factor root is a zero
            let mut worst = 0.0_f64;
            for &k in &det_roots {
                let r = conds.iter().map(|c| c.residual(k).unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min);
                worst = worst.max(r);
            }
            for &k in cond_roots.iter().filter(|&&k| k > lo) {
                worst = worst.max(det_l1(Complex64::new(k, 0.0), a, xi).norm());
            }
            report.measured(
                format!("root_sets_{}_xi_{xi}", pos.label()),
                worst,
                ROOT_SET_TOL,
                format!("{} determinant roots, {} factor roots", det_roots.len(), cond_roots.len()),
            );
            for c in conds.iter().filter(|c| c.kind == ConditionKind::ExactRoots) {
                for k in c.roots(kappa_max) {
                    flat = flat.max(det_l1(Complex64::new(k, 0.0), a, xi).norm());
                }
            }
        }
        report.measured(
            format!("exact_roots_flat_{}", pos.label()),
            flat,
            FLAT_ROOT_TOL,
            format!("{} couplings", xi_list.len()),
        );
    }
    let exact = |p: RationalPosition| -> Vec<f64> {
        reduced_conditions(p, 1.0)
            .into_iter()
            .filter(|c| c.kind == ConditionKind::ExactRoots)
            .flat_map(|c| c.roots(kappa_max))
            .collect()
    };
    let (third, two) = (exact(RationalPosition::Third), exact(RationalPosition::TwoThirds));
    let shared = if third.len() == two.len() {
        third.iter().zip(&two).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    report.measured("shared_exact_roots_third".into(), shared, 0.0, format!("{} roots", third.len()));
    report
}

/// A reproducible random well with `count` deltas.
pub fn random_spec(rng: &mut impl Rng, count: usize) -> WellSpec {
    let mut positions: Vec<f64> = (0..count).map(|_| rng.random_range(0.05..0.95)).collect();
    positions.sort_by(f64::total_cmp);
    for i in 1..count {
        if positions[i] - positions[i - 1] < 0.02 {
            positions[i] = positions[i - 1] + 0.02;
        }
    }
    let couplings = (0..count).map(|_| rng.random_range(0.2..4.0)).collect();
    WellSpec::new(positions, couplings).expect("positions kept inside (0, 1)")
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
