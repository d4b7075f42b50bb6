//! The six subcommands. Each returns the full output document.

use std::path::Path;

use ptwell_core::fv::{
    build_eigenpairs, build_metric, product_gram_min_eigenvalue, quasi_hermiticity_residual,
    EigenpairSet, GridRepresentation, MetricSpec,
};
use ptwell_core::rootfind::{
    classify_levels, continue_levels, find_real_roots_in, label_by_continuation, number_roots,
    scan_cells, ScanConfig, SweepConfig, GUARD_LEVELS,
};
use ptwell_core::secular::{Backend, Secular, SecularError};
use ptwell_core::spectral::Eigenfunction;
use ptwell_core::verify::verify_determinants;
use ptwell_core::{parse_well_spec, Complex64, RootRecord, TraceStatus, WellSpec};
use rayon::prelude::*;
use serde_json::json;

use crate::output::{num, Table};
use crate::{
    BackendArg, ClassifyArgs, CliError, Command, MetricArgs, OmegaArg, Outcome, SpectrumArgs,
    SweepArgs, VerifyArgs, WavefunctionArgs,
};

const CHUNK: usize = 64;

pub fn execute(command: &Command, provenance: &str) -> Result<Outcome, CliError> {
    match command {
        Command::Spectrum(a) => spectrum(a, provenance),
        Command::Sweep(a) => sweep(a, provenance),
        Command::Classify(a) => classify(a, provenance),
        Command::Metric(a) => metric(a, provenance),
        Command::Verify(a) => verify(a, provenance),
        Command::Wavefunction(a) => wavefunction(a, provenance),
    }
}

pub fn read_spec(path: &Path) -> Result<WellSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_well_spec(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn secular(spec: &WellSpec, backend: Backend) -> Result<Secular, CliError> {
    Secular::new(spec, backend).map_err(|e| match e {
        SecularError::BackendUnsupported(_) => CliError::Unsupported(e.to_string()),
        other => input(other),
    })
}

/// Real roots labelled by continuation from zero coupling, scanned in parallel chunks.
pub fn labeled_roots(det: &Secular, scan: &ScanConfig) -> Result<Vec<RootRecord>, CliError> {
    scan.check().map_err(input)?;
    let cells = scan_cells(scan);
    let starts: Vec<usize> = (0..cells).step_by(CHUNK).collect();
    let parts: Vec<Vec<RootRecord>> = starts
        .par_iter()
        .map(|&c| find_real_roots_in(det, scan, c..(c + CHUNK).min(cells)))
        .collect();
    let mut roots = number_roots(parts.into_iter().flatten().collect());
    label_by_continuation(det, &mut roots, scan);
    Ok(roots)
}

fn outcome(text: String, out: &Option<std::path::PathBuf>) -> Outcome {
    Outcome { text, out: out.clone(), error: None }
}

fn spectrum(a: &SpectrumArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    let backend = match a.backend {
        BackendArg::Matrix => Backend::Matrix,
        BackendArg::Closed => Backend::ClosedForm,
    };
    let det = secular(&spec, backend)?;
    let roots = labeled_roots(&det, &ScanConfig::up_to(a.kmax))?;
    let mut t = Table::new(&["n", "kappa", "epsilon", "residual"]);
    for r in &roots {
        t.push(vec![r.index.to_string(), num(r.kappa), num(r.epsilon()), num(r.residual)]);
    }
    Ok(outcome(t.render(provenance), &a.out))
}

fn sweep(a: &SweepArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    if a.levels == 0 {
        return Err(CliError::Input("--levels must be at least 1".into()));
    }
    let cfg = SweepConfig::new(a.xi_from, a.xi_to, a.steps);
    cfg.check().map_err(input)?;
    let scan = ScanConfig::for_levels(a.levels + GUARD_LEVELS);
    let run = continue_levels(&spec, &cfg, &scan).map_err(input)?;
    let mut t = Table::new(&["level", "xi", "kappa_re", "kappa_im", "status"]);
    for trace in run.traces.iter().take(a.levels) {
        for s in &trace.samples {
            let status = match s.status {
                TraceStatus::Real => "real",
                TraceStatus::Merged => "merged",
                TraceStatus::Complex => "complex",
            };
            t.push(vec![trace.level.to_string(), num(s.xi), num(s.kappa.re), num(s.kappa.im), status.into()]);
        }
        for i in trace.samples.len()..cfg.steps {
            t.push(vec![trace.level.to_string(), num(cfg.sample(i)), String::new(), String::new(), "lost".into()]);
        }
    }
    Ok(outcome(t.render(provenance), &a.out))
}

fn classify(a: &ClassifyArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    let c = classify_levels(&spec, a.levels, a.xi_max).map_err(input)?;
    let mut t = Table::new(&["n", "tag", "xi_c"]);
    for l in &c.levels {
        t.push(vec![l.level.to_string(), l.tag.letter().to_string(), l.xi_c.map(num).unwrap_or_default()]);
    }
    Ok(outcome(t.render(provenance), &a.out))
}

/// Eigenpairs of the lowest `wanted` usable levels, built per root in parallel.
fn eigenpairs(spec: &WellSpec, wanted: usize, grid: &GridRepresentation) -> Result<EigenpairSet, CliError> {
    let det = secular(spec, Backend::Matrix)?;
    let scan = ScanConfig::for_levels(2 * wanted + GUARD_LEVELS);
    let roots = labeled_roots(&det, &scan)?;
    let sets: Vec<EigenpairSet> = roots
        .par_iter()
        .map(|r| build_eigenpairs(spec, std::slice::from_ref(r), grid))
        .collect::<Result<_, _>>()
        .map_err(input)?;
    let mut all = EigenpairSet { grid: grid.clone(), pairs: Vec::new(), excluded: Vec::new() };
    for s in sets {
        if all.pairs.len() < 2 * wanted {
            all.pairs.extend(s.pairs);
        }
        all.excluded.extend(s.excluded);
    }
    Ok(all)
}

fn metric(a: &MetricArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    if a.trunc < 2 {
        return Err(CliError::Input("--trunc must be at least 2".into()));
    }
    let grid = GridRepresentation::adapted(&spec, a.grid).map_err(input)?;
    let set = eigenpairs(&spec, a.trunc, &grid)?;
    for (level, rho) in &set.excluded {
        eprintln!("ptwell: level {level} excluded, rho = {rho:e}");
    }
    let n = set.levels().min(a.trunc);
    if n < 2 {
        return Err(CliError::Degenerate(format!("only {n} usable levels")));
    }
    let mspec = match a.omega {
        OmegaArg::Unit => MetricSpec::unit(n),
        OmegaArg::InvMu2 => MetricSpec::inverse_mu_squared(&set, n).map_err(input)?,
    };
    let m = build_metric(&set, &mspec).map_err(input)?;
    let min_eig = product_gram_min_eigenvalue(&set, &m).map_err(input)?;
    let projector = set.projector(n).map_err(input)?;
    let mut trials: Vec<Vec<Complex64>> = set.pairs[..2 * n].iter().map(|p| p.right.clone()).collect();
    for k in 1..=3 {
        trials.push(projector.apply(&grid, &grid.square_well_trial(k)));
    }
    let mut qh = 0.0_f64;
    for t in &trials {
        qh = qh.max(quasi_hermiticity_residual(&set, &m, t).map_err(input)?);
    }
    let mode = grid.square_well_trial(1);
    let defects = [(n / 2).max(1), n]
        .iter()
        .map(|&k| set.identity_defect(k, &mode))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(input)?;
    let pairs = &set.pairs[..2 * n];
    let doc = json!({
        "provenance": provenance,
        "truncation": n,
        "grid": a.grid,
        "omega": match a.omega { OmegaArg::Unit => "unit", OmegaArg::InvMu2 => "inv-mu2" },
        "min_eigenvalue_of_product_gram": min_eig,
        "quasi_hermiticity_residual_max": qh,
        "identity_defects": defects,
        "mu": pairs.iter().map(|p| p.mu.re).collect::<Vec<_>>(),
        "rho": pairs.iter().step_by(2).map(|p| p.rho).collect::<Vec<_>>(),
        "levels": pairs.iter().step_by(2).map(|p| p.level).collect::<Vec<_>>(),
        "excluded_levels": set.excluded.iter().map(|e| e.0).collect::<Vec<_>>(),
    });
    Ok(outcome(format!("{}\n", serde_json::to_string_pretty(&doc).map_err(input)?), &a.out))
}

fn verify(a: &VerifyArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    let report = verify_determinants(&spec, a.seed);
    let checks: Vec<_> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "status": c.status.label(),
                "worst": c.worst,
                "threshold": c.threshold,
                "context": c.context,
            })
        })
        .collect();
    let doc = json!({
        "provenance": provenance,
        "seed": report.seed,
        "passed": report.passed(),
        "checks": checks,
    });
    let mut o = outcome(format!("{}\n", serde_json::to_string_pretty(&doc).map_err(input)?), &a.out);
    if !report.passed() {
        o.error = Some(CliError::Failed);
    }
    Ok(o)
}

fn wavefunction(a: &WavefunctionArgs, provenance: &str) -> Result<Outcome, CliError> {
    let spec = read_spec(&a.specfile)?;
    if a.samples < 2 {
        return Err(CliError::Input("--samples must be at least 2".into()));
    }
    if a.level == 0 {
        return Err(CliError::Input("--level counts from 1".into()));
    }
    let det = secular(&spec, Backend::Matrix)?;
    let roots = labeled_roots(&det, &ScanConfig::for_levels(a.level + GUARD_LEVELS))?;
    let root = roots
        .iter()
        .find(|r| r.index == a.level)
        .ok_or_else(|| CliError::Input(format!("level {} has no real root for this well", a.level)))?;
    let f = Eigenfunction::from_root(&spec, root).map_err(input)?;
    let last = (a.samples - 1) as f64;
    let mut t = Table::new(&["x", "psi_re", "psi_im"]);
    for i in 0..a.samples {
        // symmetric about 0 so that the rows at x and -x pair up exactly
        let x = (2.0 * i as f64 - last) / last;
        let v = if x.abs() == 1.0 { Complex64::new(0.0, 0.0) } else { f.evaluate(x).map_err(input)? };
        t.push(vec![num(x), num(v.re), num(v.im)]);
    }
    Ok(outcome(t.render(provenance), &a.out))
}
