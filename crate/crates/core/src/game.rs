//! Three-restaurant games H³(γ₁, γ₂, γ₃): targets, visit matrices, the
//! quality index and the geometry of the game space.
//!
//! Restaurants are indexed 0, 1, 2 in code (1, 2, 3 in prose). A visit
//! matrix row is the closed restaurant `x`, a column the visited one `y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Geometric membership tolerance for hull and curve checks.
pub const GEOM_TOL: f64 = 1e-9;
/// User-supplied distributions off by at most this much are renormalized.
pub const RENORM_TOL: f64 = 1e-6;
/// Largest admissible γ component (the hexagon's facets).
pub const TWO_THIRDS: f64 = 2.0 / 3.0;

pub const UNIFORM: [f64; 3] = [1.0 / 3.0; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("not a probability vector: {0:?}")]
    NotProbability([f64; 3]),
    #[error("invalid game {0:?}: some γ exceeds 2/3")]
    OutsideHexagon([f64; 3]),
    #[error("penalty weights must be positive (k1 = {k1}, k2 = {k2})")]
    BadPenalty { k1: f64, k2: f64 },
    #[error("visit matrix row {row} is not a probability distribution: {values:?}")]
    NotStochastic { row: usize, values: [f64; 3] },
    #[error("curve parameter {0} outside [-1, 1]")]
    CurveRange(f64),
    #[error("γ = {gamma:?} is not on the selection curve (residual {residual:e})")]
    NotOnCurve { gamma: [f64; 3], residual: f64 },
}

pub type Result<T> = std::result::Result<T, GameError>;

/// Checks a user-supplied probability vector; renormalizes it when the sum
/// is off by no more than [`RENORM_TOL`].
pub fn probability_triple(p: [f64; 3]) -> Result<[f64; 3]> {
    if p.iter().any(|v| !v.is_finite() || *v < -GEOM_TOL) {
        return Err(GameError::NotProbability(p));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > RENORM_TOL {
        return Err(GameError::NotProbability(p));
    }
    if (s - 1.0).abs() > 1e-12 {
        log::warn!("renormalizing distribution {p:?} (sum {s})");
    }
    Ok(p.map(|v| v.max(0.0) / s))
}

/// Target distribution plus penalty weights: one H³ game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub gamma: [f64; 3],
    pub k1: f64,
    pub k2: f64,
    #[serde(default = "uniform_prior")]
    pub prior: [f64; 3],
}

fn uniform_prior() -> [f64; 3] {
    UNIFORM
}

impl GameSpec {
    pub fn new(gamma: [f64; 3], k1: f64, k2: f64, prior: [f64; 3]) -> Result<Self> {
        let gamma = probability_triple(gamma)?;
        let prior = probability_triple(prior)?;
        if !(k1 > 0.0 && k2 > 0.0 && k1.is_finite() && k2.is_finite()) {
            return Err(GameError::BadPenalty { k1, k2 });
        }
        Ok(Self {
            gamma,
            k1,
            k2,
            prior,
        })
    }

    /// Uniform closing prior with k₁ = 1/3 and k₂ = 1.
    pub fn standard(gamma: [f64; 3]) -> Result<Self> {
        Self::new(gamma, 1.0 / 3.0, 1.0, UNIFORM)
    }

    /// Re-validates a deserialized spec.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.gamma, self.k1, self.k2, self.prior)
    }

    pub fn has_uniform_prior(&self) -> bool {
        self.prior.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12)
    }
}

/// Row-stochastic 3x3 matrix of p(y|x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct VisitMatrix([[f64; 3]; 3]);

impl TryFrom<[[f64; 3]; 3]> for VisitMatrix {
    type Error = GameError;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        VisitMatrix::new(rows)
    }
}

impl From<VisitMatrix> for [[f64; 3]; 3] {
    fn from(v: VisitMatrix) -> Self {
        v.0
    }
}

impl VisitMatrix {
    /// Entries must lie in [0, 1] and rows must sum to 1, both within 1e-12.
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        for (row, values) in rows.iter().enumerate() {
            let s: f64 = values.iter().sum();
            let bad_entry = values
                .iter()
                .any(|v| !v.is_finite() || *v < -1e-12 || *v > 1.0 + 1e-12);
            if bad_entry || (s - 1.0).abs() > 1e-12 {
                return Err(GameError::NotStochastic {
                    row,
                    values: *values,
                });
            }
        }
        Ok(Self(rows))
    }

    /// Clamps tiny negatives and rescales each row to sum to one. Rows off by
    /// more than `tol` are rejected.
    pub fn normalized(rows: [[f64; 3]; 3], tol: f64) -> Result<Self> {
        let mut out = rows;
        for (row, values) in rows.iter().enumerate() {
            let s: f64 = values.iter().sum();
            if values.iter().any(|v| !v.is_finite() || *v < -tol) || (s - 1.0).abs() > tol {
                return Err(GameError::NotStochastic {
                    row,
                    values: *values,
                });
            }
            let clipped = values.map(|v| v.max(0.0));
            let cs: f64 = clipped.iter().sum();
            out[row] = clipped.map(|v| v / cs);
        }
        Ok(Self(out))
    }

    pub fn uniform() -> Self {
        Self([[1.0 / 3.0; 3]; 3])
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn get(&self, closed: usize, visited: usize) -> f64 {
        self.0[closed][visited]
    }

    /// Σ_x p(x|x)
    pub fn diagonal_sum(&self) -> f64 {
        (0..3).map(|i| self.0[i][i]).sum()
    }

    /// Relabels restaurants: restaurant `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        let mut out = [[0.0; 3]; 3];
        for x in 0..3 {
            for y in 0..3 {
                out[perm[x]][perm[y]] = self.0[x][y];
            }
        }
        Self(out)
    }
}

/// Applies a relabeling to a triple: entry `i` moves to `perm[i]`.
pub fn permute_triple(v: [f64; 3], perm: [usize; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[perm[i]] = v[i];
    }
    out
}

pub const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// γ lies in the convex hull of the permutations of (2/3, 1/3, 0).
pub fn is_valid_game(gamma: &[f64; 3]) -> bool {
    let s: f64 = gamma.iter().sum();
    gamma.iter().all(|g| g.is_finite() && *g >= -GEOM_TOL)
        && (s - 1.0).abs() <= GEOM_TOL
        && gamma.iter().all(|g| *g <= TWO_THIRDS + 1e-12)
}

/// Distance of γ from the classically winnable set {some γᵢ ∈ {0, 2/3}}.
pub fn classical_boundary_distance(gamma: &[f64; 3]) -> f64 {
    gamma
        .iter()
        .map(|g| g.abs().min((g - TWO_THIRDS).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// A one-bit strategy wins perfectly iff some γᵢ is 0 or 2/3.
pub fn classically_winnable(gamma: &[f64; 3], tol: f64) -> bool {
    classical_boundary_distance(gamma) <= tol
}

/// p_y = Σ_x p(y|x)·prior(x)
pub fn visiting_probs(v: &VisitMatrix, prior: &[f64; 3]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (x, row) in v.0.iter().enumerate() {
        for (y, val) in row.iter().enumerate() {
            p[y] += val * prior[x];
        }
    }
    p
}

/// ℰ = max{k₁·Σ_x p(x|x), k₂·max_y |γ_y − p_y|}
pub fn quality_index(v: &VisitMatrix, spec: &GameSpec) -> f64 {
    quality_from_parts(v.diagonal_sum(), &visiting_probs(v, &spec.prior), spec)
}

/// ℰ from a precomputed diagonal sum and visiting distribution.
pub fn quality_from_parts(diagonal_sum: f64, p: &[f64; 3], spec: &GameSpec) -> f64 {
    let dev = (0..3)
        .map(|y| (spec.gamma[y] - p[y]).abs())
        .fold(0.0, f64::max);
    (spec.k1 * diagonal_sum).max(spec.k2 * dev)
}

/// Squared statistical overlap F = (Σ_y √(γ_y p_y))².
pub fn statistical_overlap(gamma: &[f64; 3], p: &[f64; 3]) -> f64 {
    let s: f64 = gamma
        .iter()
        .zip(p)
        .map(|(g, q)| (g.max(0.0) * q.max(0.0)).sqrt())
        .sum();
    (s * s).min(1.0)
}

/// The eight deterministic visit matrices with zero diagonal.
pub fn extreme_visit_matrices() -> [VisitMatrix; 8] {
    const E: [[[f64; 3]; 3]; 8] = [
        [[0., 1., 0.], [1., 0., 0.], [1., 0., 0.]],
        [[0., 1., 0.], [1., 0., 0.], [0., 1., 0.]],
        [[0., 1., 0.], [0., 0., 1.], [0., 1., 0.]],
        [[0., 0., 1.], [0., 0., 1.], [0., 1., 0.]],
        [[0., 0., 1.], [1., 0., 0.], [1., 0., 0.]],
        [[0., 0., 1.], [0., 0., 1.], [1., 0., 0.]],
        [[0., 0., 1.], [1., 0., 0.], [0., 1., 0.]],
        [[0., 1., 0.], [0., 0., 1.], [1., 0., 0.]],
    ];
    E.map(VisitMatrix)
}

/// The six extreme γ vectors (vertices of the hexagon), in the order
/// produced by the first six extreme visit matrices.
pub fn extreme_gammas() -> [[f64; 3]; 6] {
    let (a, b) = (TWO_THIRDS, 1.0 / 3.0);
    [
        [a, b, 0.0],
        [b, a, 0.0],
        [0.0, a, b],
        [0.0, b, a],
        [a, 0.0, b],
        [b, 0.0, a],
    ]
}

/// Parameter of the one-dimensional family of games used in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CurveParam(f64);

impl CurveParam {
    pub fn new(a: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&a) {
            return Err(GameError::CurveRange(a));
        }
        Ok(Self(a))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Point of the selection curve Γ at parameter `a`.
pub fn curve_gamma(a: CurveParam) -> [f64; 3] {
    let a = a.0;
    let a2 = a * a;
    [
        (-a2 + a + 4.0) / (12.0 - 6.0 * a),
        2.0 * (a2 - 2.0) / (3.0 * (a2 - 4.0)),
        -(a2 + a - 4.0) / (6.0 * (a + 2.0)),
    ]
}

/// Inverts [`curve_gamma`] by bisection on the (increasing) first component.
pub fn curve_invert(gamma: &[f64; 3], tol: f64) -> Result<CurveParam> {
    let g1 = |a: f64| curve_gamma(CurveParam(a))[0];
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let target = gamma[0];
    let a = if target <= g1(lo) {
        lo
    } else if target >= g1(hi) {
        hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g1(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let img = curve_gamma(CurveParam(a));
    let residual = (0..3)
        .map(|i| (img[i] - gamma[i]).abs())
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(GameError::NotOnCurve {
            gamma: *gamma,
            residual,
        });
    }
    Ok(CurveParam(a))
}
