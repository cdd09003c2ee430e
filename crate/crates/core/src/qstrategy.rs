//! Perfect qubit strategies: three encoding states and the weighted rank-1
//! POVM that never sends Bob to the closed restaurant.
//!
//! The canonical frame puts ψ₁ at the Bloch north pole, ψ₂ at polar angle θ₂
//! with negative x-component and ψ₃ at polar angle θ₃ with positive
//! x-component. Internally the solver works with the angle deficits
//!
//! ```text
//! d₁ = θ₂ + θ₃ − π,   d₂ = π − θ₂,   d₃ = π − θ₃,   d₁ + d₂ + d₃ = π
//! ```
//!
//! which turn the feasible triangle into a simplex and keep games close to
//! the hexagon boundary (where some dᵢ is tiny) numerically well resolved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    classical_boundary_distance, is_valid_game, probability_triple, quality_index, visiting_probs,
    GameError, GameSpec, VisitMatrix, UNIFORM,
};
use crate::qmath::{BlochVector, ComplexMat2, PureState, QmathError};

use std::f64::consts::PI;

/// Structural tolerance for completeness, weight sum and coplanarity.
pub const STRATEGY_TOL: f64 = 1e-9;
/// Smallest effect weight a synthesized strategy may carry.
pub const LAMBDA_MIN: f64 = 1e-8;
/// Quality index required from synthesis in the interior of the hexagon.
pub const SYNTH_TOL: f64 = 1e-9;
/// Quality index accepted for games on (or within 3e-7 of) the boundary.
pub const BOUNDARY_SYNTH_TOL: f64 = 1e-6;

// boundary targets are pulled this far towards the uniform game
const BOUNDARY_SHRINK: f64 = 1e-6;
const BOUNDARY_BAND: f64 = 3e-7;
const GRID: usize = 200;
const NEWTON_STARTS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid game {0:?}")]
    InvalidGame([f64; 3]),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("synthesis did not converge (residual {residual:e})")]
    ConvergenceFailure { residual: f64 },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, StrategyError>;

/// Polar angles (radians) of ψ₂ and ψ₃ in the canonical frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisAngles {
    pub theta2: f64,
    pub theta3: f64,
}

impl SynthesisAngles {
    pub fn new(theta2: f64, theta3: f64) -> Result<Self> {
        let inside = |t: f64| t.is_finite() && t > 0.0 && t < PI;
        if !inside(theta2) || !inside(theta3) {
            return Err(StrategyError::DegenerateGeometry(format!(
                "angles ({theta2}, {theta3}) outside (0, π)"
            )));
        }
        if theta2 + theta3 - PI <= 1e-9 {
            return Err(StrategyError::DegenerateGeometry(format!(
                "θ₂ + θ₃ = {} does not exceed π",
                theta2 + theta3
            )));
        }
        Ok(Self { theta2, theta3 })
    }

    fn denominator(&self) -> Result<f64> {
        let (t2, t3) = (self.theta2, self.theta3);
        let den = (t2 + t3).sin() - t2.sin() - t3.sin();
        if den.abs() < 1e-12 {
            return Err(StrategyError::DegenerateGeometry(format!(
                "weight denominator {den:e} vanishes"
            )));
        }
        Ok(den)
    }

    fn deficits(&self) -> [f64; 3] {
        [
            self.theta2 + self.theta3 - PI,
            PI - self.theta2,
            PI - self.theta3,
        ]
    }
}

/// Effect weights (α₁, α₂, α₃) completing the canonical encodings.
pub fn alphas_from_angles(ang: &SynthesisAngles) -> Result<[f64; 3]> {
    let (t2, t3) = (ang.theta2, ang.theta3);
    let den = ang.denominator()?;
    Ok([
        2.0 * (t2 + t3).sin() / den,
        -2.0 * t3.sin() / den,
        -2.0 * t2.sin() / den,
    ])
}

/// γ₁ = (1/3)·sin(θ₂+θ₃)·(2 − cos θ₂ − cos θ₃) / (sin(θ₂+θ₃) − sin θ₂ − sin θ₃)
pub fn gamma1_closed_form(ang: &SynthesisAngles) -> Result<f64> {
    let (t2, t3) = (ang.theta2, ang.theta3);
    let den = ang.denominator()?;
    Ok((t2 + t3).sin() * (2.0 - t2.cos() - t3.cos()) / (3.0 * den))
}

/// The canonical strategy for the given angles.
pub fn canonical_strategy(ang: &SynthesisAngles) -> Result<QuantumStrategy> {
    ang.denominator()?;
    strategy_from_deficits(ang.deficits())
}

/// Game won by the canonical strategy, evaluated with the Born rule under a
/// uniform closing prior.
pub fn gamma_from_angles(ang: &SynthesisAngles) -> Result<[f64; 3]> {
    let s = canonical_strategy(ang)?;
    Ok(visiting_probs(&born_visit_matrix(&s), &UNIFORM))
}

fn encodings_from_deficits(d: [f64; 3]) -> [BlochVector; 3] {
    [
        BlochVector::raw(0.0, 0.0, 1.0),
        BlochVector::raw(-d[1].sin(), 0.0, -d[1].cos()),
        BlochVector::raw(d[2].sin(), 0.0, -d[2].cos()),
    ]
}

fn weights_from_deficits(d: [f64; 3]) -> [f64; 3] {
    let s: [f64; 3] = d.map(f64::sin);
    let total = s[0] + s[1] + s[2];
    [2.0 * s[0] / total, 2.0 * s[2] / total, 2.0 * s[1] / total]
}

/// Closed-form γ for deficit coordinates; uses 1 − n_i·n_j = 2cos²(d_k/2).
fn gamma_from_deficits(d: [f64; 3]) -> [f64; 3] {
    let w = weights_from_deficits(d);
    let c = d.map(|v| (0.5 * v).cos().powi(2));
    // c[0] ↔ pair (2,3), c[1] ↔ pair (1,2), c[2] ↔ pair (1,3)
    [
        w[0] * (c[1] + c[2]) / 3.0,
        w[1] * (c[1] + c[0]) / 3.0,
        w[2] * (c[2] + c[0]) / 3.0,
    ]
}

fn strategy_from_deficits(d: [f64; 3]) -> Result<QuantumStrategy> {
    let enc = encodings_from_deficits(d);
    let encodings = [
        PureState::from_bloch(&enc[0])?,
        PureState::from_bloch(&enc[1])?,
        PureState::from_bloch(&enc[2])?,
    ];
    QuantumStrategy::new(encodings, weights_from_deficits(d))
}

/// Encoding states ψ_x and effects π_y = λ_y|ψ_y^⊥⟩⟨ψ_y^⊥|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategyJson", into = "StrategyJson")]
pub struct QuantumStrategy {
    encodings: [PureState; 3],
    weights: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct StrategyJson {
    encodings: [BlochVector; 3],
    weights: [f64; 3],
}

impl From<QuantumStrategy> for StrategyJson {
    fn from(s: QuantumStrategy) -> Self {
        StrategyJson {
            encodings: s.bloch_vectors(),
            weights: s.weights,
        }
    }
}

impl TryFrom<StrategyJson> for QuantumStrategy {
    type Error = StrategyError;
    fn try_from(j: StrategyJson) -> Result<Self> {
        QuantumStrategy::from_bloch(j.encodings, j.weights, STRATEGY_TOL)
    }
}

impl QuantumStrategy {
    /// Checked constructor at [`STRATEGY_TOL`].
    pub fn new(encodings: [PureState; 3], weights: [f64; 3]) -> Result<Self> {
        Self::with_tolerance(encodings, weights, STRATEGY_TOL)
    }

    /// Checked constructor with a caller-chosen tolerance, for measured or
    /// rounded data.
    pub fn with_tolerance(encodings: [PureState; 3], weights: [f64; 3], tol: f64) -> Result<Self> {
        let s = Self { encodings, weights };
        let r = s.residuals();
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(StrategyError::InvalidStrategy(format!(
                "weights must be positive, got {weights:?}"
            )));
        }
        if r.weight_sum > tol {
            return Err(StrategyError::InvalidStrategy(format!(
                "weights sum to {} instead of 2",
                weights.iter().sum::<f64>()
            )));
        }
        if r.completeness > tol {
            return Err(StrategyError::InvalidStrategy(format!(
                "effects do not sum to the identity (residual {:e})",
                r.completeness
            )));
        }
        if r.coplanarity > tol {
            return Err(StrategyError::InvalidStrategy(format!(
                "encodings are not coplanar (triple product {:e})",
                r.coplanarity
            )));
        }
        Ok(s)
    }

    /// Builds the encodings from (not necessarily unit) Bloch vectors.
    pub fn from_bloch(encodings: [BlochVector; 3], weights: [f64; 3], tol: f64) -> Result<Self> {
        let e = [
            PureState::from_bloch(&encodings[0])?,
            PureState::from_bloch(&encodings[1])?,
            PureState::from_bloch(&encodings[2])?,
        ];
        Self::with_tolerance(e, weights, tol)
    }

    /// No validation; only meant for diagnostics such as [`verify`].
    pub fn new_unchecked(encodings: [PureState; 3], weights: [f64; 3]) -> Self {
        Self { encodings, weights }
    }

    /// Mutually 120° encodings with equal weights 2/3.
    pub fn trine() -> Self {
        strategy_from_deficits([PI / 3.0; 3]).expect("trine is valid")
    }

    pub fn encodings(&self) -> &[PureState; 3] {
        &self.encodings
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn bloch_vectors(&self) -> [BlochVector; 3] {
        self.encodings.map(|e| e.bloch())
    }

    pub fn densities(&self) -> [ComplexMat2; 3] {
        self.encodings.map(|e| e.projector())
    }

    /// π_y = λ_y |ψ_y^⊥⟩⟨ψ_y^⊥|
    pub fn effects(&self) -> [ComplexMat2; 3] {
        let mut out = [ComplexMat2::zero(); 3];
        for (y, e) in out.iter_mut().enumerate() {
            *e = self.encodings[y]
                .orthogonal()
                .projector()
                .scale_re(self.weights[y]);
        }
        out
    }

    /// Relabels restaurants: restaurant `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        let mut encodings = self.encodings;
        let mut weights = self.weights;
        for i in 0..3 {
            encodings[perm[i]] = self.encodings[i];
            weights[perm[i]] = self.weights[i];
        }
        Self { encodings, weights }
    }

    fn residuals(&self) -> Residuals {
        let sum: ComplexMat2 = self.effects().into_iter().sum();
        let n = self.bloch_vectors();
        Residuals {
            completeness: (sum - ComplexMat2::identity()).operator_norm(),
            weight_sum: (self.weights.iter().sum::<f64>() - 2.0).abs(),
            coplanarity: n[0].dot(&n[1].cross(&n[2])).abs(),
        }
    }
}

struct Residuals {
    completeness: f64,
    weight_sum: f64,
    coplanarity: f64,
}

/// p(y|x) = Tr[π_y ρ_x]
pub fn born_visit_matrix(s: &QuantumStrategy) -> VisitMatrix {
    let effects = s.effects();
    let rho = s.densities();
    let mut rows = [[0.0; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            rows[x][y] = (effects[y] * rho[x]).trace().re;
        }
    }
    // rounding-level deviations from stochasticity are removed here;
    // anything larger means the strategy was not a POVM
    VisitMatrix::normalized(rows, 1e-6).unwrap_or_else(|_| raw_visit_matrix(rows))
}

fn raw_visit_matrix(rows: [[f64; 3]; 3]) -> VisitMatrix {
    // an unchecked strategy can produce any rows; renormalize them so that
    // diagnostics still have something to report
    let fixed = rows.map(|r| {
        let c = r.map(|v| v.max(0.0));
        let s: f64 = c.iter().sum();
        if s > 0.0 {
            c.map(|v| v / s)
        } else {
            [1.0 / 3.0; 3]
        }
    });
    VisitMatrix::normalized(fixed, 1e-9).expect("renormalized rows")
}

/// Finds a perfect qubit strategy for γ (uniform closing prior).
///
/// Games within 3e-7 of the classically winnable boundary are solved for a
/// target pulled 1e-6 towards the uniform game, so their quality index is
/// only guaranteed to be ≤ 1e-6.
pub fn synthesize(gamma: [f64; 3]) -> Result<QuantumStrategy> {
    let gamma = probability_triple(gamma).map_err(|_| StrategyError::InvalidGame(gamma))?;
    if !is_valid_game(&gamma) {
        return Err(StrategyError::InvalidGame(gamma));
    }
    let boundary = classical_boundary_distance(&gamma) < BOUNDARY_BAND;
    let target = if boundary {
        gamma.map(|g| (1.0 - BOUNDARY_SHRINK) * g + BOUNDARY_SHRINK / 3.0)
    } else {
        gamma
    };
    let d = solve_deficits(target)?;
    let strategy = strategy_from_deficits(d)?;
    if strategy.weights.iter().any(|w| *w < LAMBDA_MIN) {
        return Err(StrategyError::DegenerateGeometry(format!(
            "weights {:?} fall below {LAMBDA_MIN:e}",
            strategy.weights
        )));
    }
    let spec = GameSpec::standard(gamma)?;
    let eps = quality_index(&born_visit_matrix(&strategy), &spec);
    let tol = if boundary {
        BOUNDARY_SYNTH_TOL
    } else {
        SYNTH_TOL
    };
    if eps > tol {
        return Err(StrategyError::ConvergenceFailure { residual: eps });
    }
    Ok(strategy)
}

// Newton variables: u = (ln(d₂/d₁), ln(d₃/d₁))
fn deficits_from_u(u: [f64; 2]) -> [f64; 3] {
    let m = u[0].max(u[1]).max(0.0);
    let e = [(-m).exp(), (u[0] - m).exp(), (u[1] - m).exp()];
    let s = e[0] + e[1] + e[2];
    e.map(|v| PI * v / s)
}

fn u_from_deficits(d: [f64; 3]) -> [f64; 2] {
    [(d[1] / d[0]).ln(), (d[2] / d[0]).ln()]
}

fn solve_deficits(target: [f64; 3]) -> Result<[f64; 3]> {
    // the largest component is implied by the other two and is the worst
    // conditioned, so solve for the two smaller ones
    let big = (0..3)
        .max_by(|&a, &b| target[a].total_cmp(&target[b]))
        .unwrap_or(0);
    let idx: Vec<usize> = (0..3).filter(|&i| i != big).collect();
    let (i, j) = (idx[0], idx[1]);
    let f = |u: [f64; 2]| -> [f64; 2] {
        let g = gamma_from_deficits(deficits_from_u(u));
        [g[i] - target[i], g[j] - target[j]]
    };

    let mut starts: Vec<(f64, [f64; 2])> = Vec::new();
    let h = PI / GRID as f64;
    for a in 0..GRID {
        for b in 0..GRID {
            let d2 = (a as f64 + 0.5) * h;
            let d3 = (b as f64 + 0.5) * h;
            let d1 = PI - d2 - d3;
            if d1 <= 0.0 {
                continue;
            }
            let g = gamma_from_deficits([d1, d2, d3]);
            let r = (0..3).map(|k| (g[k] - target[k]).abs()).fold(0.0, f64::max);
            starts.push((r, u_from_deficits([d1, d2, d3])));
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = (f64::INFINITY, [0.0; 3]);
    for &(_, u0) in starts.iter().take(NEWTON_STARTS) {
        let u = newton(&f, u0);
        let d = deficits_from_u(u);
        let g = gamma_from_deficits(d);
        let r = (0..3).map(|k| (g[k] - target[k]).abs()).fold(0.0, f64::max);
        if r < best.0 {
            best = (r, d);
        }
        if best.0 <= 1e-13 {
            break;
        }
    }
    if best.0 > 1e-10 {
        return Err(StrategyError::ConvergenceFailure { residual: best.0 });
    }
    Ok(best.1)
}

fn newton(f: &impl Fn([f64; 2]) -> [f64; 2], mut u: [f64; 2]) -> [f64; 2] {
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut r = f(u);
    for _ in 0..200 {
        if norm(r) < 1e-15 {
            break;
        }
        let hs = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[k] += hs;
            dn[k] -= hs;
            let (fp, fm) = (f(up), f(dn));
            jac[0][k] = (fp[0] - fm[0]) / (2.0 * hs);
            jac[1][k] = (fp[1] - fm[1]) / (2.0 * hs);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let mut step = if det.abs() > 1e-300 {
            [
                -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
                -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
            ]
        } else {
            // gradient direction on a singular Jacobian
            [
                -(jac[0][0] * r[0] + jac[1][0] * r[1]),
                -(jac[0][1] * r[0] + jac[1][1] * r[1]),
            ]
        };
        let len = step[0].hypot(step[1]);
        if len > 2.0 {
            step = step.map(|s| s * 2.0 / len);
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = [u[0] + t * step[0], u[1] + t * step[1]];
            let rt = f(trial);
            if norm(rt) < norm(r) {
                u = trial;
                r = rt;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    u
}

/// Residuals of a strategy against a game, with an overall verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub completeness_residual: f64,
    pub weight_sum_residual: f64,
    pub coplanarity_residual: f64,
    pub h1_residual: f64,
    pub distribution_error: f64,
    pub quality_index: f64,
    pub pass: bool,
}

/// Tolerances used by [`verify`]. The distribution tolerance admits the
/// boundary synthesis accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyTolerances {
    pub structural: f64,
    pub distribution: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            structural: STRATEGY_TOL,
            distribution: BOUNDARY_SYNTH_TOL,
        }
    }
}

pub fn verify(s: &QuantumStrategy, gamma: [f64; 3]) -> VerifyReport {
    verify_with(s, gamma, VerifyTolerances::default())
}

pub fn verify_with(s: &QuantumStrategy, gamma: [f64; 3], tol: VerifyTolerances) -> VerifyReport {
    let r = s.residuals();
    let effects = s.effects();
    let rho = s.densities();
    let h1: f64 = (0..3).map(|x| (effects[x] * rho[x]).trace().re.abs()).sum();
    let v = born_visit_matrix(s);
    let p = visiting_probs(&v, &UNIFORM);
    let dist = (0..3).map(|y| (p[y] - gamma[y]).abs()).fold(0.0, f64::max);
    let eps = (h1 / 3.0).max(dist);
    let positive = s.weights.iter().all(|w| *w > 0.0);
    let pass = positive
        && r.completeness <= tol.structural
        && r.weight_sum <= tol.structural
        && r.coplanarity <= tol.structural
        && h1 <= tol.structural
        && dist <= tol.distribution;
    VerifyReport {
        completeness_residual: r.completeness,
        weight_sum_residual: r.weight_sum,
        coplanarity_residual: r.coplanarity,
        h1_residual: h1,
        distribution_error: dist,
        quality_index: eps,
        pass,
    }
}
