//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported but do not fail the target unless `ACCEPTANCE_STRICT=1`,
//! so that the remaining test targets of the workspace still run.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use ptwell_core::closed_form::{det_l1, det_l2, RationalPosition};
use ptwell_core::fv::{
    build_eigenpairs, build_metric, product_gram_min_eigenvalue, quasi_hermiticity_residual,
    GridRepresentation, MetricSpec,
};
use ptwell_core::rootfind::{
    continue_levels, find_exceptional_point, find_real_roots, find_real_roots_with, ScanConfig,
    SweepConfig, GUARD_LEVELS,
};
use ptwell_core::secular::{Backend, Secular};
use ptwell_core::spectral::{overlap, Eigenfunction};
use ptwell_core::verify::{random_spec, seeded_rng, verify_rational_a, CheckStatus, DEFAULT_SEED};
use ptwell_core::{Complex64, TraceStatus, WellSpec};
use rand::Rng;

type Verdict = Result<String, String>;
type Criterion = Box<dyn Fn(&Path) -> Verdict>;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Criterion)> = vec![
        ("square-well limit", Box::new(square_well_limit)),
        ("closed-form equivalence", Box::new(|_| closed_form_equivalence())),
        ("two-pair degeneration", Box::new(|_| degeneration())),
        ("exact robust roots", Box::new(|_| exact_robust_roots())),
        ("rational-a factorization", Box::new(|_| rational_factorization())),
        ("perturbative law", Box::new(|_| perturbative_law())),
        ("fragility patterns", Box::new(fragility_patterns)),
        ("exceptional points", Box::new(|_| exceptional_points())),
        ("biorthogonality and overlaps", Box::new(|_| biorthogonality())),
        ("two-component layer", Box::new(|_| two_component_layer())),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let verdict = check(dir.path());
        let (label, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {label} {title}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(args: &[&str], threads: &str) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_ptwell"))
        .args(args)
        .env("PTWELL_THREADS", threads)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).expect("spec file written");
    p.to_string_lossy().into_owned()
}

fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(bytes)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn single(a: f64, xi: f64) -> WellSpec {
    WellSpec::single(a, xi).expect("valid position")
}

fn square_well_limit(dir: &Path) -> Verdict {
    let spec = write_spec(dir, "empty.spec", "# no deltas\n");
    let kmax = (20.0 * PI).to_string();
    let (code, out) = cli(&["spectrum", &spec, "--kmax", &kmax], "0");
    if code != 0 {
        return Err(format!("exit code {code}"));
    }
    let rows = csv_rows(&out);
    let mut worst = 0.0_f64;
    for (i, r) in rows.iter().enumerate() {
        let k: f64 = r[1].parse().map_err(|_| format!("bad kappa {:?}", r[1]))?;
        worst = worst.max((k - (i + 1) as f64 * PI / 2.0).abs());
    }
    ensure(rows.len() == 40 && worst < 1e-10, format!("{} roots, max |kappa - n pi/2| = {worst:.2e}", rows.len()))
}

fn root_set_gap(spec: &WellSpec, kmax: f64) -> Result<f64, String> {
    let scan = ScanConfig::up_to(kmax);
    let roots = |b| {
        let det = Secular::new(spec, b).map_err(|e| e.to_string())?;
        find_real_roots_with(&det, &scan).map_err(|e| e.to_string())
    };
    let m = roots(Backend::Matrix)?;
    let c = roots(Backend::ClosedForm)?;
    if m.len() != c.len() {
        return Err(format!("{spec:?}: {} matrix roots vs {} closed-form roots", m.len(), c.len()));
    }
    Ok(m.iter().zip(&c).map(|(x, y)| (x.kappa - y.kappa).abs()).fold(0.0, f64::max))
}

fn closed_form_equivalence() -> Verdict {
    let mut rng = seeded_rng(DEFAULT_SEED);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let spec = single(rng.random_range(0.05..0.95), rng.random_range(0.0..=10.0));
        worst = worst.max(root_set_gap(&spec, 10.0 * PI)?);
    }
    for _ in 0..10 {
        let spec = random_spec(&mut rng, 2);
        worst = worst.max(root_set_gap(&spec, 10.0 * PI)?);
    }
    ensure(worst < 1e-8, format!("20 wells, max pairwise root gap {worst:.2e}"))
}

fn degeneration() -> Verdict {
    let mut rng = seeded_rng(DEFAULT_SEED + 1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let k = Complex64::new(rng.random_range(0.1..20.0), 0.0);
        let (p, q): (f64, f64) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        let (a, b) = (p.min(q), p.max(q).max(p.min(q) + 1e-3));
        let xi = rng.random_range(0.0..10.0);
        let one = det_l1(k, a, xi);
        let two = det_l2(k, a, b, xi, 0.0);
        worst = worst.max((two - one).norm() / one.norm().max(f64::MIN_POSITIVE));
    }
    ensure(worst < 1e-14, format!("100 samples, max relative difference {worst:.2e}"))
}

fn exact_robust_roots() -> Verdict {
    let mut worst_res = 0.0_f64;
    let mut worst_flat = 0.0_f64;
    let mut missing = Vec::new();
    for pos in RationalPosition::ALL {
        let a = pos.value();
        let spacing = pos.exact_spacing();
        let exact: Vec<f64> = (1..=5).map(|m| m as f64 * spacing).collect();
        for xi in [0.5, 2.0, 10.0, 40.0] {
            let roots = find_real_roots(&single(a, xi), &ScanConfig::up_to(5.0 * spacing + 1.0)).map_err(|e| e.to_string())?;
            for &k in &exact {
                match roots.iter().find(|r| (r.kappa - k).abs() < 1e-8) {
                    Some(r) => worst_res = worst_res.max(r.residual),
                    None => missing.push(format!("{}@{xi}:{k:.6}", pos.label())),
                }
            }
        }
        let top = exact.iter().map(|k| (2.0 * k / PI).round() as usize).max().unwrap_or(1);
        let run = continue_levels(&single(a, 1.0), &SweepConfig::new(0.0, 40.0, 401), &ScanConfig::for_levels(top + GUARD_LEVELS))
            .map_err(|e| e.to_string())?;
        for &k in &exact {
            let n = (2.0 * k / PI).round() as usize;
            let trace = &run.traces[n - 1];
            if trace.samples.len() != 401 || trace.samples.iter().any(|s| s.status != TraceStatus::Real) {
                missing.push(format!("{} trace {n} not real throughout", pos.label()));
                continue;
            }
            for s in &trace.samples {
                worst_flat = worst_flat.max((s.kappa - Complex64::new(k, 0.0)).norm());
            }
        }
    }
    let detail = format!("max residual {worst_res:.2e}, max trace drift {worst_flat:.2e}, missing {missing:?}");
    ensure(missing.is_empty() && worst_res < 1e-10 && worst_flat < 1e-10, detail)
}

fn rational_factorization() -> Verdict {
    let report = verify_rational_a(&[0.0, 1.0, 5.0], 8.0 * PI);
    let sets: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("root_sets_")).collect();
    let worst = sets.iter().map(|c| c.worst).fold(0.0, f64::max);
    let ok = sets.len() == 12 && sets.iter().all(|c| c.status == CheckStatus::Pass);
    ensure(ok, format!("{} position/coupling cases, worst mismatch {worst:.2e}", sets.len()))
}

fn root_near(spec: &WellSpec, guess: f64) -> Result<f64, String> {
    let cfg = ScanConfig { kappa_min: guess - 0.25, ..ScanConfig::up_to(guess + 0.25) };
    find_real_roots(spec, &cfg)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.kappa)
        .min_by(|x, y| (x - guess).abs().total_cmp(&(y - guess).abs()))
        .ok_or_else(|| format!("no root near {guess}"))
}

/// Least-squares fit of `y = c1 u + c2 u^2`.
fn fit_two(u: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&u, &y) in u.iter().zip(y) {
        s11 += u * u;
        s12 += u * u * u;
        s22 += u * u * u * u;
        t1 += u * y;
        t2 += u * u * y;
    }
    let det = s11 * s22 - s12 * s12;
    ((t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det)
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

fn perturbative_law() -> Verdict {
    let xis: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 9.0)).collect();
    let u: Vec<f64> = xis.iter().map(|x| x * x).collect();
    let mut shifts = Vec::new();
    for &xi in &xis {
        shifts.push(root_near(&single(0.5, xi), PI / 2.0)? - PI / 2.0);
    }
    let (c, _) = fit_two(&u, &shifts);
    let coef_err = (c * PI * PI - 1.0).abs();

    let mut rng = seeded_rng(DEFAULT_SEED + 2);
    let a = rng.random_range(0.05..0.95);
    let logs: Vec<f64> = xis.iter().map(|x| x.ln()).collect();
    let mut slopes = Vec::new();
    let mut magnitudes = Vec::new();
    for n in 2..=8 {
        let k0 = n as f64 * PI / 2.0;
        let mut d = Vec::new();
        for &xi in &xis {
            d.push((root_near(&single(a, xi), k0)? - k0).abs().ln());
        }
        slopes.push(slope(&logs, &d));
        magnitudes.push(d[d.len() - 1].exp());
    }
    let slope_err = slopes.iter().map(|s| (s - 2.0).abs()).fold(0.0, f64::max);
    let monotone = magnitudes.windows(2).all(|w| w[1] < w[0]);
    let detail = format!(
        "a=1/2 coefficient x pi^2 = {:.6}; a={a:.4} slopes {:?}; |shift| at xi=0.1 for n=2..8 {:?} ({})",
        c * PI * PI,
        slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
        magnitudes.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>(),
        if monotone { "decreasing" } else { "not decreasing in n" },
    );
    ensure(coef_err < 0.01 && slope_err <= 0.05 && monotone, detail)
}

fn fragility_patterns(dir: &Path) -> Verdict {
    let cases = [("1/2", 0.5, 6, "FRFRFR"), ("1/3", 1.0 / 3.0, 6, "FFRFFR"), ("1/4", 0.25, 11, "FFRRRFFRRRF")];
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, a, levels, expected) in cases {
        let spec = write_spec(dir, "pattern.spec", &format!("delta {a:.17} 1\n"));
        let (code, out) = cli(&["classify", &spec, "--levels", &levels.to_string(), "--xi-max", "40"], "0");
        let got: String = csv_rows(&out).iter().map(|r| r[1].clone()).collect();
        let hit = code == 0 && got == expected;
        ok &= hit;
        lines.push(format!("a={label} {got} (expected {expected})"));
    }
    ensure(ok, lines.join("; "))
}

/// Coupling and momentum of the first coalescence at `a = 1/2` from a sign scan of the
/// non-exact factor `(xi^2 - 4 kappa^2) cos kappa - xi^2` on a 2000 x 2000 grid, refined by
/// maximizing the implicit `xi^2(kappa)` between the two vanishing roots.
fn grid_oracle() -> Option<(f64, f64)> {
    let g = |k: f64, x: f64| (x * x - 4.0 * k * k) * k.cos() - x * x;
    let ks: Vec<f64> = (0..2000).map(|i| 0.05 + 6.0 * i as f64 / 1999.0).collect();
    let roots_at = |x: f64| -> Vec<f64> {
        ks.windows(2).filter(|w| g(w[0], x) * g(w[1], x) < 0.0).map(|w| 0.5 * (w[0] + w[1])).collect()
    };
    let mut prev = roots_at(0.0);
    for j in 1..2000 {
        let x = 10.0 * j as f64 / 1999.0;
        let cur = roots_at(x);
        if cur.len() + 2 <= prev.len() {
            for w in prev.windows(2) {
                if !cur.iter().any(|&k| k > w[0] - 0.05 && k < w[1] + 0.05) {
                    let xi2 = |k: f64| -4.0 * k * k * k.cos() / (1.0 - k.cos());
                    let (mut lo, mut hi) = (w[0] - 0.05, w[1] + 0.05);
                    let r = 0.5 * (5f64.sqrt() - 1.0);
                    while hi - lo > 1e-13 {
                        let (m1, m2) = (hi - r * (hi - lo), lo + r * (hi - lo));
                        if xi2(m1) < xi2(m2) {
                            lo = m1;
                        } else {
                            hi = m2;
                        }
                    }
                    let k = 0.5 * (lo + hi);
                    return Some((xi2(k).sqrt(), k));
                }
            }
        }
        prev = cur;
    }
    None
}

fn exceptional_points() -> Verdict {
    let (xi_o, k_o) = grid_oracle().ok_or("grid scan found no coalescence")?;
    let spec = single(0.5, 1.0);
    let ep = find_exceptional_point(&spec, 3.9, 5.0, (1, 3), &SweepConfig::new(0.0, 6.0, 121))
        .map_err(|e| e.to_string())?;
    let det = Secular::matrix(&single(0.5, ep.xi_c)).map_err(|e| e.to_string())?;
    let kc = Complex64::new(ep.kappa_c, 0.0);
    let (d, dk) = (det.value(kc).norm(), det.derivative(kc, 1.0).norm());
    let beyond = ep.xi_c + 1e-3;
    // starts below every coalescence, with steps finer than the 1e-3 offset
    let run = continue_levels(&spec, &SweepConfig::new(4.9, beyond, 201), &ScanConfig::for_levels(3 + GUARD_LEVELS))
        .map_err(|e| e.to_string())?;
    let (l1, l3) = (run.traces[0].samples.last().copied(), run.traces[2].samples.last().copied());
    let pair = match (l1, l3) {
        (Some(p), Some(q)) if p.status == TraceStatus::Complex && q.status == TraceStatus::Complex => Some((p.kappa, q.kappa)),
        _ => None,
    };
    let (conj, im) = pair.map_or((f64::INFINITY, 0.0), |(p, q)| ((p - q.conj()).norm(), p.im.abs()));
    let detail = format!(
        "xi_c {:.12} vs oracle {xi_o:.12} (kappa_c {:.10} vs {k_o:.10}); |D| {d:.1e}, |dD/dk| {dk:.1e}; \
         at xi_c+1e-3 conjugate gap {conj:.1e}, |Im kappa| {im:.3e}",
        ep.xi_c, ep.kappa_c
    );
    ensure((ep.xi_c - xi_o).abs() < 1e-6 && d < 1e-8 && dk < 1e-8 && conj < 1e-9 && im > 0.0, detail)
}

fn lowest_functions(spec: &WellSpec, n: usize) -> Result<Vec<Eigenfunction>, String> {
    let roots = find_real_roots(spec, &ScanConfig::for_levels(n + 2)).map_err(|e| e.to_string())?;
    roots.iter().take(n).map(|r| Eigenfunction::from_root(spec, r).map_err(|e| e.to_string())).collect()
}

fn biorthogonality() -> Verdict {
    let fs = lowest_functions(&single(0.5, 1.0), 8)?;
    let mut off = 0.0_f64;
    for (i, m) in fs.iter().enumerate() {
        for n in &fs[i + 1..] {
            off = off.max(overlap(m, n).map_err(|e| e.to_string())?.norm());
        }
    }
    let free = lowest_functions(&single(0.5, 0.0), 8)?;
    let mut delta = 0.0_f64;
    for (i, m) in free.iter().enumerate() {
        for (j, n) in free.iter().enumerate() {
            let o = overlap(m, n).map_err(|e| e.to_string())?.norm();
            delta = delta.max(if i == j { (o - 1.0).abs() } else { o });
        }
    }
    let spec = single(0.5, 1.0);
    let run = continue_levels(&spec, &SweepConfig::new(0.0, 5.2, 521), &ScanConfig::for_levels(3 + GUARD_LEVELS))
        .map_err(|e| e.to_string())?;
    let mut monotone = true;
    let mut tails = Vec::new();
    for level in [1, 3] {
        let samples = &run.traces[level - 1].samples;
        let Some(m) = samples.iter().position(|s| s.status == TraceStatus::Merged) else {
            return Err(format!("level {level} does not merge below xi = 5.2"));
        };
        if m < 5 {
            return Err(format!("level {level} merges after only {m} samples"));
        }
        let mut rho = Vec::new();
        for s in &samples[m - 5..m] {
            rho.push(Eigenfunction::new(&single(0.5, s.xi), s.kappa.re).map_err(|e| e.to_string())?.rho);
        }
        monotone &= rho.windows(2).all(|w| w[1].abs() < w[0].abs());
        tails.push(format!("{level}: {}", rho.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" ")));
    }
    let detail = format!(
        "off-diagonal overlaps {off:.1e}, free-well |<m|n>| - delta {delta:.1e}, rho before merging [{}]",
        tails.join("; ")
    );
    ensure(off < 1e-8 && delta < 1e-12 && monotone, detail)
}

fn two_component_layer() -> Verdict {
    let spec = single(0.5, 1.0);
    let grid = GridRepresentation::adapted(&spec, 1024).map_err(|e| e.to_string())?;
    let roots = find_real_roots(&spec, &ScanConfig::for_levels(18)).map_err(|e| e.to_string())?;
    let set = build_eigenpairs(&spec, &roots[..16], &grid).map_err(|e| e.to_string())?;
    let mu_err = set
        .pairs
        .iter()
        .map(|p| (p.mu - Complex64::new(p.mu_from_rho(), 0.0)).norm() / p.mu.norm().max(1.0))
        .fold(0.0, f64::max);

    let mode = grid.square_well_trial(1);
    let mut defects = Vec::new();
    for n in [4, 8, 16] {
        defects.push(set.identity_defect(n, &mode).map_err(|e| e.to_string())?);
    }
    let shrinking = defects.windows(2).all(|w| w[1] < w[0]);

    let n = 8;
    let mut rng = seeded_rng(DEFAULT_SEED + 3);
    let mut specs = vec![MetricSpec::unit(n), MetricSpec::inverse_mu_squared(&set, n).map_err(|e| e.to_string())?];
    for _ in 0..5 {
        let plus = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let minus = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        specs.push(MetricSpec::custom(plus, minus).map_err(|e| e.to_string())?);
    }
    let trials: Vec<Vec<Complex64>> = (0..10)
        .map(|_| {
            let mut v = vec![Complex64::new(0.0, 0.0); grid.len() * 2];
            for p in &set.pairs[..2 * n] {
                let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                for (x, r) in v.iter_mut().zip(&p.right) {
                    *x += c * r;
                }
            }
            v
        })
        .collect();
    let mut min_eig = f64::INFINITY;
    let mut qh = 0.0_f64;
    for ms in &specs {
        let m = build_metric(&set, ms).map_err(|e| e.to_string())?;
        min_eig = min_eig.min(product_gram_min_eigenvalue(&set, &m).map_err(|e| e.to_string())?);
        for t in &trials {
            qh = qh.max(quasi_hermiticity_residual(&set, &m, t).map_err(|e| e.to_string())?);
        }
    }
    let detail = format!(
        "mu error {mu_err:.1e}; identity defects N=4,8,16 {:?}; min Gram eigenvalue over 7 schemes {min_eig:.3e}; \
         quasi-Hermiticity residual {qh:.1e}",
        defects.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()
    );
    ensure(mu_err < 1e-9 && shrinking && min_eig > 0.0 && qh < 1e-8, detail)
}

fn determinism(dir: &Path) -> Verdict {
    let spec = write_spec(dir, "det.spec", "delta 0.3 1.2\ndelta 0.7 2.5\n");
    let verify = ["verify", spec.as_str(), "--seed", "7"];
    let sweep = ["sweep", spec.as_str(), "--xi-to", "8", "--steps", "81", "--levels", "6"];
    let mut same = Vec::new();
    for args in [&verify[..], &sweep[..]] {
        let runs: Vec<_> = ["1", "1", "4"].iter().map(|t| cli(args, t)).collect();
        same.push(runs.iter().all(|r| r == &runs[0]) && !runs[0].1.is_empty());
    }
    ensure(same.iter().all(|&s| s), format!("verify identical {}, sweep identical {} (1, 1, 4 threads)", same[0], same[1]))
}
