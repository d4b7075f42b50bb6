//! The potential, its line-based text format, and the records produced by the solvers.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Positions `a_l` and real couplings `xi_l` of the delta pairs inside the well `(-1, 1)`.
///
/// Each entry stands for `i xi_l delta(x - a_l) - i xi_l delta(x + a_l)`. The fields are
/// public so that invalid specs can be represented and reported by [`validate`]; use
/// [`WellSpec::new`] or [`parse_well_spec`] to get a checked value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WellSpec {
    pub positions: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl WellSpec {
    pub fn new(positions: Vec<f64>, couplings: Vec<f64>) -> Result<Self, Violation> {
        let spec = WellSpec { positions, couplings };
        match validate(&spec).into_iter().next() {
            Some(v) => Err(v),
            None => Ok(spec),
        }
    }

    /// The bare square well.
    pub fn pure() -> Self {
        WellSpec::default()
    }

    /// One delta pair at `+-a` with coupling `xi`.
    pub fn single(a: f64, xi: f64) -> Result<Self, Violation> {
        WellSpec::new(alloc::vec![a], alloc::vec![xi])
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// Largest coupling magnitude; the reference scale of a coupling sweep.
    pub fn coupling_scale(&self) -> f64 {
        self.couplings.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Same positions, couplings multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> WellSpec {
        WellSpec {
            positions: self.positions.clone(),
            couplings: self.couplings.iter().map(|x| x * factor).collect(),
        }
    }

    /// Same positions with every coupling set to zero.
    pub fn hermitian_limit(&self) -> WellSpec {
        self.scaled(0.0)
    }
}

/// Renders the spec-file format accepted by [`parse_well_spec`].
impl fmt::Display for WellSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "domain -1 1")?;
        for (a, xi) in self.positions.iter().zip(&self.couplings) {
            writeln!(f, "delta {a:?} {xi:?}")?;
        }
        Ok(())
    }
}

/// One broken [`WellSpec`] invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("{positions} positions but {couplings} couplings")]
    LengthMismatch { positions: usize, couplings: usize },
    #[error("position {index} = {value} is outside (0, 1)")]
    PositionOutOfRange { index: usize, value: f64 },
    #[error("position {index} = {value} does not exceed the previous position")]
    NonIncreasing { index: usize, value: f64 },
    #[error("coupling {index} = {value} is not finite")]
    NonFiniteCoupling { index: usize, value: f64 },
}

/// Lists every violated invariant; empty iff the spec is usable.
pub fn validate(spec: &WellSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.positions.len() != spec.couplings.len() {
        out.push(Violation::LengthMismatch {
            positions: spec.positions.len(),
            couplings: spec.couplings.len(),
        });
    }
    for (index, &value) in spec.positions.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            out.push(Violation::PositionOutOfRange { index, value });
        }
        if index > 0 && !(value > spec.positions[index - 1]) {
            out.push(Violation::NonIncreasing { index, value });
        }
    }
    for (index, &value) in spec.couplings.iter().enumerate() {
        if !value.is_finite() {
            out.push(Violation::NonFiniteCoupling { index, value });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed: {text}")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: only `domain -1 1` is supported")]
    BadDomain { line: usize },
    #[error("line {line}: {violation}")]
    BadPosition { line: usize, violation: Violation },
    #[error("line {line}: cannot read `{token}` as a finite real")]
    BadNumber { line: usize, token: String },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::MalformedLine { line, .. }
            | ParseError::BadDomain { line }
            | ParseError::BadPosition { line, .. }
            | ParseError::BadNumber { line, .. } => *line,
        }
    }
}

fn number(token: &str, line: usize) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseError::BadNumber { line, token: token.into() })
}

/// Parses the potential-spec text format.
///
/// ```text
/// # comment
/// domain -1 1        (optional, must precede every delta line)
/// delta 0.25 1.5
/// delta 0.5  -2e0
/// ```
pub fn parse_well_spec(text: &str) -> Result<WellSpec, ParseError> {
    let mut spec = WellSpec::default();
    let mut seen_directive = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let malformed = || ParseError::MalformedLine { line, text: raw.trim().into() };
        match tokens.as_slice() {
            [] => continue,
            ["domain", rest @ ..] => {
                if seen_directive || rest.len() != 2 {
                    return Err(malformed());
                }
                let lo = number(rest[0], line)?;
                let hi = number(rest[1], line)?;
                if lo != -1.0 || hi != 1.0 {
                    return Err(ParseError::BadDomain { line });
                }
            }
            ["delta", a, xi] => {
                let a = number(a, line)?;
                let xi = number(xi, line)?;
                let index = spec.positions.len();
                if !(a > 0.0 && a < 1.0) {
                    return Err(ParseError::BadPosition {
                        line,
                        violation: Violation::PositionOutOfRange { index, value: a },
                    });
                }
                if spec.positions.last().is_some_and(|&prev| !(a > prev)) {
                    return Err(ParseError::BadPosition {
                        line,
                        violation: Violation::NonIncreasing { index, value: a },
                    });
                }
                spec.positions.push(a);
                spec.couplings.push(xi);
            }
            _ => return Err(malformed()),
        }
        seen_directive = true;
    }
    Ok(spec)
}

/// Robust/fragile label of a level over a searched coupling range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelTag {
    Robust,
    Fragile,
    Unclassified,
}

impl LevelTag {
    pub fn letter(self) -> char {
        match self {
            LevelTag::Robust => 'R',
            LevelTag::Fragile => 'F',
            LevelTag::Unclassified => 'U',
        }
    }
}

/// A verified real bound-state momentum `kappa_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootRecord {
    /// Level label, 1-based; `kappa_n -> n pi / 2` as the couplings vanish.
    pub index: usize,
    pub kappa: f64,
    /// `|D(kappa)|` of the normalized secular determinant.
    pub residual: f64,
    pub tag: LevelTag,
}

impl RootRecord {
    /// Squared energy `epsilon = kappa^2`.
    pub fn epsilon(&self) -> f64 {
        self.kappa * self.kappa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    Real,
    /// The exceptional point itself; the sample's `xi` is the critical coupling.
    Merged,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub xi: f64,
    pub kappa: Complex64,
    pub status: TraceStatus,
}

/// The path `kappa_n(xi)` of one level over a coupling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTrace {
    pub level: usize,
    pub samples: Vec<TraceSample>,
    /// Level merged with this one at the exceptional point, if any.
    pub partner: Option<usize>,
    /// Coupling at which the level could no longer be followed; samples stop there.
    pub lost_at: Option<f64>,
}

impl ContinuationTrace {
    pub fn merged_sample(&self) -> Option<&TraceSample> {
        self.samples.iter().find(|s| s.status == TraceStatus::Merged)
    }

    pub fn is_lost(&self) -> bool {
        self.lost_at.is_some()
    }
}

/// A coalescence of two real levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceptionalPoint {
    pub xi_c: f64,
    pub kappa_c: f64,
    pub pair: (usize, usize),
    /// `|D|` and `|dD/dkappa|` at `(kappa_c, xi_c)`.
    pub residuals: (f64, f64),
}
