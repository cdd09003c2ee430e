//! Jones matrices for half- and quarter-wave plates and the QWP–HWP–QWP
//! gadget that realizes any single-qubit unitary up to global phase.
//!
//! Conventions (|0⟩ = |H⟩, |1⟩ = |V⟩, angles of the fast axis from H):
//!
//! ```text
//! HWP(θ) = [[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]
//! QWP(θ) = R(θ)·diag(1, i)·R(−θ),   R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]
//! ```
//!
//! A [`WavePlateTriple`] `(q1, h, q2)` is traversed by light in that order,
//! so the realized operator is `QWP(q2)·HWP(h)·QWP(q1)`. Its determinant is
//! exactly 1, which is why any U(2) matrix is matched only up to phase.

use serde::{Deserialize, Serialize};

use super::{ComplexMat2, QmathError, Result, C64, I, ONE, ZERO};

/// Angles (degrees) of the first QWP, the HWP and the second QWP, each kept
/// in [0, 360).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct WavePlateTriple {
    q1: f64,
    h: f64,
    q2: f64,
}

impl From<WavePlateTriple> for [f64; 3] {
    fn from(w: WavePlateTriple) -> Self {
        [w.q1, w.h, w.q2]
    }
}

impl TryFrom<[f64; 3]> for WavePlateTriple {
    type Error = QmathError;
    fn try_from(a: [f64; 3]) -> Result<Self> {
        WavePlateTriple::new(a[0], a[1], a[2])
    }
}

impl WavePlateTriple {
    pub fn new(q1: f64, h: f64, q2: f64) -> Result<Self> {
        if !(q1.is_finite() && h.is_finite() && q2.is_finite()) {
            return Err(QmathError::NonFinite("wave-plate angle"));
        }
        Ok(Self {
            q1: wrap_deg(q1),
            h: wrap_deg(h),
            q2: wrap_deg(q2),
        })
    }

    /// All plates at zero; realizes the identity.
    pub fn identity() -> Self {
        Self {
            q1: 0.0,
            h: 0.0,
            q2: 0.0,
        }
    }

    /// H ↔ V swap up to phase.
    pub fn bit_flip() -> Self {
        Self {
            q1: 0.0,
            h: 45.0,
            q2: 0.0,
        }
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.q1, self.h, self.q2]
    }

    /// Every angle shifted by the given offsets (degrees).
    pub fn perturbed(&self, d: [f64; 3]) -> Self {
        Self {
            q1: wrap_deg(self.q1 + d[0]),
            h: wrap_deg(self.h + d[1]),
            q2: wrap_deg(self.q2 + d[2]),
        }
    }

    /// Angles rounded to 4 decimals, the precision of the JSON format.
    pub fn rounded(&self) -> [f64; 3] {
        self.angles().map(|a| {
            let r = (a * 1e4).round() / 1e4;
            if r >= 360.0 {
                r - 360.0
            } else {
                r
            }
        })
    }
}

fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

fn hwp_rad(t: f64) -> ComplexMat2 {
    let (s, c) = (2.0 * t).sin_cos();
    ComplexMat2::real(c, s, s, -c)
}

fn qwp_rad(t: f64) -> ComplexMat2 {
    let (s, c) = t.sin_cos();
    let (c2, s2, cs) = (c * c, s * s, s * c);
    let off = C64::new(cs, -cs);
    ComplexMat2::new(C64::new(c2, s2), off, off, C64::new(s2, c2))
}

fn hwp_rad_deriv(t: f64) -> ComplexMat2 {
    let (s, c) = (2.0 * t).sin_cos();
    ComplexMat2::real(-2.0 * s, 2.0 * c, 2.0 * c, 2.0 * s)
}

fn qwp_rad_deriv(t: f64) -> ComplexMat2 {
    let (s, c) = (2.0 * t).sin_cos();
    let off = C64::new(c, -c);
    ComplexMat2::new(C64::new(-s, s), off, off, C64::new(s, -s))
}

/// Half-wave plate with fast axis at `deg` degrees from horizontal.
pub fn hwp(deg: f64) -> ComplexMat2 {
    hwp_rad(deg.to_radians())
}

/// Quarter-wave plate with fast axis at `deg` degrees from horizontal.
pub fn qwp(deg: f64) -> ComplexMat2 {
    qwp_rad(deg.to_radians())
}

/// `QWP(q2)·HWP(h)·QWP(q1)`: light meets `q1` first.
pub fn waveplates_to_unitary(w: &WavePlateTriple) -> ComplexMat2 {
    triple_rad([w.q1.to_radians(), w.h.to_radians(), w.q2.to_radians()])
}

fn triple_rad(t: [f64; 3]) -> ComplexMat2 {
    qwp_rad(t[2]) * hwp_rad(t[1]) * qwp_rad(t[0])
}

/// Finds plate angles with `waveplates_to_unitary(result) = e^{iφ}·u`.
///
/// A coarse scan over the fundamental domain seeds a Levenberg–Marquardt
/// solve of `u − e^{iφ}·W(θ) = 0` in the three angles and the phase.
pub fn unitary_to_waveplates(u: &ComplexMat2) -> Result<WavePlateTriple> {
    if !u.is_finite() {
        return Err(QmathError::NonFinite("unitary"));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(QmathError::NotUnitary(defect));
    }

    // plates are π-periodic in angle
    const N: usize = 6;
    let step = std::f64::consts::PI / N as f64;
    let mut starts = Vec::with_capacity(N * N * N);
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                let t = [i as f64 * step, j as f64 * step, k as f64 * step];
                starts.push((u.phase_distance(&triple_rad(t)), t));
            }
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = (f64::INFINITY, [0.0; 3]);
    for &(_, t0) in &starts {
        let (d, t) = polish(u, t0);
        if d < best.0 {
            best = (d, t);
        }
        if best.0 < 1e-12 {
            break;
        }
    }
    if best.0 >= 1e-9 {
        return Err(QmathError::NoConvergence(best.0));
    }
    let t = best.1;
    WavePlateTriple::new(t[0].to_degrees(), t[1].to_degrees(), t[2].to_degrees())
}

fn residual(u: &ComplexMat2, w: &ComplexMat2, phase: C64) -> [f64; 8] {
    let d = *u - w.scale(phase);
    let mut r = [0.0; 8];
    for (k, z) in d.m.iter().flatten().enumerate() {
        r[2 * k] = z.re;
        r[2 * k + 1] = z.im;
    }
    r
}

fn polish(u: &ComplexMat2, t0: [f64; 3]) -> (f64, [f64; 3]) {
    let mut p = [t0[0], t0[1], t0[2], 0.0];
    {
        let overlap = (triple_rad(t0).adjoint() * *u).trace();
        p[3] = overlap.arg();
    }
    let cost = |p: &[f64; 4]| -> f64 {
        let w = triple_rad([p[0], p[1], p[2]]);
        residual(u, &w, C64::from_polar(1.0, p[3]))
            .iter()
            .map(|x| x * x)
            .sum()
    };
    let mut c = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..200 {
        if c < 1e-28 {
            break;
        }
        let (q1, h, q2) = (qwp_rad(p[0]), hwp_rad(p[1]), qwp_rad(p[2]));
        let w = q2 * h * q1;
        let phase = C64::from_polar(1.0, p[3]);
        let r = residual(u, &w, phase);
        let derivs = [
            q2 * h * qwp_rad_deriv(p[0]),
            q2 * hwp_rad_deriv(p[1]) * q1,
            qwp_rad_deriv(p[2]) * h * q1,
            w.scale(I),
        ];
        // J[k][j] = ∂r_k/∂p_j, residual is u − e^{iφ}W
        let mut jac = [[0.0; 4]; 8];
        for (j, dm) in derivs.iter().enumerate() {
            let col = dm.scale(-phase);
            for (k, z) in col.m.iter().flatten().enumerate() {
                jac[2 * k][j] = z.re;
                jac[2 * k + 1][j] = z.im;
            }
        }
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                jtj[a][b] = (0..8).map(|k| jac[k][a] * jac[k][b]).sum();
            }
            jtr[a] = (0..8).map(|k| jac[k][a] * r[k]).sum();
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += mu * (jtj[a][a] + 1e-12);
            }
            let Some(delta) = solve4(m, jtr.map(|x| -x)) else {
                mu *= 10.0;
                continue;
            };
            let trial = [
                p[0] + delta[0],
                p[1] + delta[1],
                p[2] + delta[2],
                p[3] + delta[3],
            ];
            let ct = cost(&trial);
            if ct < c {
                p = trial;
                c = ct;
                mu = (mu * 0.1).max(1e-15);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let t = [p[0], p[1], p[2]];
    (u.phase_distance(&triple_rad(t)), t)
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// The Jones vector |H⟩.
pub fn horizontal() -> [C64; 2] {
    [ONE, ZERO]
}
