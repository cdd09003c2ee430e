//! Nonclassicality certificates from observed counts.
//!
//! A device pair passes when its observed quality index sits more than `z`
//! bootstrap standard errors below the best one-bit classical value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cstrategy::{self, optimize, ClassicalOptimum, ClassicalStrategy};
use crate::experiment::{bootstrap_stderr, estimate, Counts, DEFAULT_BOOTSTRAP};
use crate::game::{self, GameSpec};
use crate::qmath::ComplexMat2;

pub const DEFAULT_Z: f64 = 3.0;
/// Off-diagonal size below which operators count as diagonal in a basis.
pub const COMMUTE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("no counts for closed restaurant {0}")]
    EmptyRow(usize),
    #[error("unreadable counts: {0}")]
    BadCounts(String),
    #[error("invalid z {0}: must be finite and nonnegative")]
    BadZ(f64),
    #[error("classical baseline is for a different game")]
    BaselineMismatch,
    #[error("inputs are not of the {0} form")]
    NotApplicable(OracleKind),
    #[error(transparent)]
    Classical(#[from] cstrategy::ClassicalError),
    #[error(transparent)]
    Game(#[from] game::GameError),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub z: f64,
    pub bootstrap_seed: u64,
    pub bootstrap: usize,
    pub grid_step: f64,
    pub refine_rounds: u32,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            z: DEFAULT_Z,
            bootstrap_seed: 0,
            bootstrap: DEFAULT_BOOTSTRAP,
            grid_step: cstrategy::DEFAULT_GRID_STEP,
            refine_rounds: cstrategy::DEFAULT_REFINE_ROUNDS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Classical optimum with the grid it was found on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub eps_c: f64,
    pub grid_step: f64,
    pub refine_rounds: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub game: GameSpec,
    pub counts: Counts,
    pub options: CertifyOptions,
    pub eps_v: f64,
    pub eps_v_stderr: f64,
    pub classical: Baseline,
    pub margin: f64,
    /// (eps_c − eps_v)/stderr; absent when the standard error is zero.
    pub separation_sigmas: Option<f64>,
    pub verdict: Verdict,
}

impl Certificate {
    /// Recomputes the verdict from the embedded inputs and baseline.
    pub fn recheck(&self) -> Result<Certificate> {
        certify_against(&self.counts, &self.game, &self.options, self.classical)
    }
}

/// Accepts counts as JSON (`[[n11,n12,n13],…]`) or as CSV with header
/// `closed,visited,count`.
pub fn read_counts(text: &str) -> Result<Counts> {
    if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| CertifyError::BadCounts(e.to_string()))
    } else {
        Counts::from_csv(text).map_err(CertifyError::BadCounts)
    }
}

/// Runs the classical optimizer and certifies against it.
pub fn certify(counts: &Counts, spec: &GameSpec, opts: &CertifyOptions) -> Result<Certificate> {
    check_inputs(counts, opts)?;
    let opt = optimize(spec, opts.grid_step, opts.refine_rounds)?;
    certify_with_optimum(counts, spec, opts, &opt)
}

/// Certifies against a classical optimum computed earlier for the same game.
pub fn certify_with_optimum(
    counts: &Counts,
    spec: &GameSpec,
    opts: &CertifyOptions,
    opt: &ClassicalOptimum,
) -> Result<Certificate> {
    if opt.gamma != spec.gamma || opt.k1 != spec.k1 || opt.k2 != spec.k2 {
        return Err(CertifyError::BaselineMismatch);
    }
    let baseline = Baseline {
        eps_c: opt.eps_c,
        grid_step: opt.grid_step,
        refine_rounds: opt.refine_rounds,
    };
    certify_against(counts, spec, opts, baseline)
}

fn check_inputs(counts: &Counts, opts: &CertifyOptions) -> Result<()> {
    if let Some(x) = counts.row_totals().iter().position(|&n| n == 0) {
        return Err(CertifyError::EmptyRow(x + 1));
    }
    if !(opts.z >= 0.0 && opts.z.is_finite()) {
        return Err(CertifyError::BadZ(opts.z));
    }
    Ok(())
}

fn certify_against(
    counts: &Counts,
    spec: &GameSpec,
    opts: &CertifyOptions,
    classical: Baseline,
) -> Result<Certificate> {
    check_inputs(counts, opts)?;
    let spec = spec.validated()?;
    let (_, _, eps_v) = estimate(counts, &spec);
    let se = bootstrap_stderr(counts, &spec, opts.bootstrap_seed, opts.bootstrap);
    let margin = classical.eps_c - eps_v;
    let verdict = if eps_v + opts.z * se < classical.eps_c {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Certificate {
        game: spec,
        counts: *counts,
        options: *opts,
        eps_v,
        eps_v_stderr: se,
        classical,
        margin,
        separation_sigmas: (se > 0.0).then(|| margin / se),
        verdict,
    })
}

/// Restricted families whose statistics a one-bit strategy reproduces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// All encoded states are diagonal in one basis.
    OrthogonalEncoding,
    /// All effects are diagonal in one basis (a projective measurement
    /// followed by classical post-processing).
    ProjectiveDecoding,
}

impl std::fmt::Display for OracleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OracleKind::OrthogonalEncoding => "orthogonal-encoding",
            OracleKind::ProjectiveDecoding => "projective-decoding",
        })
    }
}

/// Basis (as a unitary whose columns are the basis vectors) diagonalizing
/// every operator, if one exists.
fn common_basis(ops: &[ComplexMat2; 3]) -> Option<ComplexMat2> {
    // the eigenbasis of the least degenerate operator is the only candidate
    let spread = |m: &ComplexMat2| {
        let (l, _) = m.eigh();
        l[1] - l[0]
    };
    let widest = ops
        .iter()
        .max_by(|a, b| spread(a).total_cmp(&spread(b)))
        .expect("three operators");
    let (_, v) = widest.eigh();
    let u = ComplexMat2::new(v[0][0], v[1][0], v[0][1], v[1][1]);
    let diagonal = ops.iter().all(|m| {
        let d = u.adjoint() * *m * u;
        d.get(0, 1).norm() <= COMMUTE_TOL && d.get(1, 0).norm() <= COMMUTE_TOL
    });
    diagonal.then_some(u)
}

fn normalized<const N: usize>(row: [f64; N]) -> [f64; N] {
    let c = row.map(|v| v.max(0.0));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}

/// One-bit strategy with the same visit matrix as the qubit states
/// `rho` measured with `effects`, when the pair lies in the declared
/// family: the bit is the outcome of measuring in the common eigenbasis.
pub fn classical_simulation_oracle(
    kind: OracleKind,
    rho: &[ComplexMat2; 3],
    effects: &[ComplexMat2; 3],
) -> Result<ClassicalStrategy> {
    let diagonal_set = match kind {
        OracleKind::OrthogonalEncoding => rho,
        OracleKind::ProjectiveDecoding => effects,
    };
    let u = common_basis(diagonal_set).ok_or(CertifyError::NotApplicable(kind))?;
    let in_basis = |m: &ComplexMat2, j: usize| (u.adjoint() * *m * u).get(j, j).re;
    let sender = rho.map(|r| normalized([in_basis(&r, 0), in_basis(&r, 1)]));
    let receiver = [0, 1].map(|j| normalized(effects.map(|m| in_basis(&m, j))));
    Ok(ClassicalStrategy::new(sender, receiver)?)
}
