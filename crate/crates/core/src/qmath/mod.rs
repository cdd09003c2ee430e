//! Small-dimension complex linear algebra for a single qubit.
//!
//! Everything here is fixed at dimension two: 2x2 complex matrices, pure
//! states, Bloch vectors and density matrices, plus the Jones calculus used
//! to describe wave plates (see [`jones`]).

pub mod jones;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jones::{hwp, qwp, unitary_to_waveplates, waveplates_to_unitary, WavePlateTriple};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance on |b| beyond the unit sphere before a Bloch vector is rejected.
pub const BLOCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmathError {
    #[error("Bloch vector norm {0} exceeds 1 (unphysical)")]
    Unphysical(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("state vector has zero norm")]
    ZeroState,
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("matrix is not a density operator: {0}")]
    NotDensity(String),
    #[error("wave-plate decomposition did not converge (best distance {0:e})")]
    NoConvergence(f64),
}

pub type Result<T> = std::result::Result<T, QmathError>;

/// A 2x2 complex matrix stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMat2 {
    pub m: [[C64; 2]; 2],
}

impl fmt::Debug for ComplexMat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

impl ComplexMat2 {
    pub const fn new(a00: C64, a01: C64, a10: C64, a11: C64) -> Self {
        Self {
            m: [[a00, a01], [a10, a11]],
        }
    }

    pub fn real(a00: f64, a01: f64, a10: f64, a11: f64) -> Self {
        Self::new(a00.into(), a01.into(), a10.into(), a11.into())
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn diag(a: C64, b: C64) -> Self {
        Self::new(a, ZERO, ZERO, b)
    }

    /// |v⟩⟨w|
    pub fn outer(v: [C64; 2], w: [C64; 2]) -> Self {
        Self::new(
            v[0] * w[0].conj(),
            v[0] * w[1].conj(),
            v[1] * w[0].conj(),
            v[1] * w[1].conj(),
        )
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.m[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new(
            m[0][0].conj(),
            m[1][0].conj(),
            m[0][1].conj(),
            m[1][1].conj(),
        )
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let (vals, _) = (self.adjoint() * *self).eigh();
        vals[1].max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// ‖U†U − I‖_F
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self - Self::identity()).frobenius_norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (*self - self.adjoint()).frobenius_norm()
    }

    /// Expectation ⟨v|A|v⟩ (real part; exact for Hermitian A).
    pub fn expectation(&self, v: [C64; 2]) -> f64 {
        let av = self.apply(v);
        (v[0].conj() * av[0] + v[1].conj() * av[1]).re
    }

    /// Eigen-decomposition of a Hermitian matrix.
    ///
    /// Only the Hermitian part is used. Eigenvalues are returned ascending and
    /// the eigenvectors (normalized, orthogonal) in the same order.
    pub fn eigh(&self) -> ([f64; 2], [[C64; 2]; 2]) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = (self.m[0][1] + self.m[1][0].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let half = 0.5 * (a - d);
        let r = half.hypot(b.norm());
        let hi = mean + r;
        let lo = mean - r;
        let top = if b.norm() == 0.0 {
            if a >= d {
                [ONE, ZERO]
            } else {
                [ZERO, ONE]
            }
        } else if a >= d {
            // (λ − d, b̄) avoids cancellation when a ≥ d
            normalize([C64::new(half + r, 0.0), b.conj()])
        } else {
            normalize([b, C64::new(r - half, 0.0)])
        };
        let bottom = [-top[1].conj(), top[0].conj()];
        ([lo, hi], [bottom, top])
    }

    /// Phase-minimized Frobenius distance min_φ ‖self − e^{iφ}·other‖_F.
    pub fn phase_distance(&self, other: &Self) -> f64 {
        let overlap = (other.adjoint() * *self).trace();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        (*self - other.scale(phase)).frobenius_norm()
    }

    /// Plain Frobenius distance ‖self − other‖_F.
    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).frobenius_norm()
    }
}

impl Add for ComplexMat2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for ComplexMat2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] - b[0][0],
            a[0][1] - b[0][1],
            a[1][0] - b[1][0],
            a[1][1] - b[1][1],
        )
    }
}

impl Mul for ComplexMat2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl std::iter::Sum for ComplexMat2 {
    fn sum<It: Iterator<Item = Self>>(iter: It) -> Self {
        iter.fold(Self::zero(), |acc, m| acc + m)
    }
}

fn normalize(v: [C64; 2]) -> [C64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

/// A normalized qubit state in canonical gauge: the first amplitude with
/// nonzero modulus is real and non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState {
    c: [C64; 2],
}

impl PureState {
    /// Normalizes and gauge-fixes the given amplitudes.
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        if !(c0.re.is_finite() && c0.im.is_finite() && c1.re.is_finite() && c1.im.is_finite()) {
            return Err(QmathError::NonFinite("state amplitudes"));
        }
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if n == 0.0 {
            return Err(QmathError::ZeroState);
        }
        Ok(Self::canonical([c0 / n, c1 / n]))
    }

    fn canonical(c: [C64; 2]) -> Self {
        // gauge on the larger-modulus amplitude would be more stable, but the
        // convention is "first nonzero", so only tiny |c0| falls through
        let pivot = if c[0].norm() > 1e-300 { c[0] } else { c[1] };
        let phase = pivot.conj() / pivot.norm();
        let mut out = [c[0] * phase, c[1] * phase];
        if c[0].norm() > 1e-300 {
            out[0] = C64::new(out[0].norm(), 0.0);
        } else {
            out[0] = ZERO;
            out[1] = C64::new(out[1].norm(), 0.0);
        }
        Self { c: out }
    }

    pub fn zero() -> Self {
        Self { c: [ONE, ZERO] }
    }

    pub fn one() -> Self {
        Self { c: [ZERO, ONE] }
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        self.c
    }

    /// Pure state on the Bloch sphere pointing along `b` (normalized first).
    pub fn from_bloch(b: &BlochVector) -> Result<Self> {
        let n = b.norm();
        if n == 0.0 {
            return Err(QmathError::ZeroState);
        }
        let (x, y, z) = (b.x / n, b.y / n, b.z / n);
        let rho = x.hypot(y);
        let c0 = ((1.0 + z) * 0.5).max(0.0).sqrt();
        let s1 = ((1.0 - z) * 0.5).max(0.0).sqrt();
        let c1 = if rho == 0.0 {
            C64::new(s1, 0.0)
        } else {
            C64::new(x / rho, y / rho) * s1
        };
        if z < 0.0 && s1 > 0.0 {
            // recompute c0 from the transverse part to avoid 1+z cancellation
            let c0 = rho / (2.0 * s1);
            return Self::new(C64::new(c0, 0.0), c1);
        }
        Self::new(C64::new(c0, 0.0), c1)
    }

    pub fn bloch(&self) -> BlochVector {
        let cross = self.c[0].conj() * self.c[1];
        BlochVector {
            x: 2.0 * cross.re,
            y: 2.0 * cross.im,
            z: self.c[0].norm_sqr() - self.c[1].norm_sqr(),
        }
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &PureState) -> C64 {
        self.c[0].conj() * other.c[0] + self.c[1].conj() * other.c[1]
    }

    /// The state orthogonal to this one, in canonical gauge.
    pub fn orthogonal(&self) -> PureState {
        Self::canonical([-self.c[1].conj(), self.c[0].conj()])
    }

    pub fn projector(&self) -> ComplexMat2 {
        ComplexMat2::outer(self.c, self.c)
    }

    pub fn density(&self) -> DensityMat {
        DensityMat(self.projector())
    }

    /// A unitary whose first column is this state, i.e. U|0⟩ = |self⟩.
    pub fn preparation_unitary(&self) -> ComplexMat2 {
        let [a, b] = self.c;
        ComplexMat2::new(a, -b.conj(), b, a.conj())
    }
}

/// Real Bloch vector of a qubit state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", from = "[f64; 3]")]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<BlochVector> for [f64; 3] {
    fn from(b: BlochVector) -> Self {
        [b.x, b.y, b.z]
    }
}

impl From<[f64; 3]> for BlochVector {
    fn from(a: [f64; 3]) -> Self {
        BlochVector::raw(a[0], a[1], a[2])
    }
}

impl BlochVector {
    /// Checked constructor: rejects vectors outside the unit ball.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let b = Self::raw(x, y, z);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(QmathError::NonFinite("Bloch vector"));
        }
        let n = b.norm();
        if n > 1.0 + BLOCH_TOL {
            return Err(QmathError::Unphysical(n));
        }
        Ok(b)
    }

    pub const fn raw(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, o: &BlochVector) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &BlochVector) -> BlochVector {
        BlochVector::raw(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scaled(&self, s: f64) -> BlochVector {
        BlochVector::raw(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, o: &BlochVector) -> BlochVector {
        BlochVector::raw(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn neg(&self) -> BlochVector {
        self.scaled(-1.0)
    }

    /// Angle to another vector in degrees.
    pub fn angle_deg(&self, o: &BlochVector) -> f64 {
        let c = self.dot(o) / (self.norm() * o.norm());
        c.clamp(-1.0, 1.0).acos().to_degrees()
    }

    pub fn distance(&self, o: &BlochVector) -> f64 {
        self.add(&o.neg()).norm()
    }
}

/// A qubit density operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMat(ComplexMat2);

impl DensityMat {
    /// Validates hermiticity, unit trace and positivity to 1e-12.
    pub fn new(m: ComplexMat2) -> Result<Self> {
        const TOL: f64 = 1e-12;
        if !m.is_finite() {
            return Err(QmathError::NonFinite("density matrix"));
        }
        if m.hermiticity_defect() > TOL {
            return Err(QmathError::NotDensity("not Hermitian".into()));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
            return Err(QmathError::NotDensity(format!("trace {tr}")));
        }
        let (vals, _) = m.eigh();
        if vals[0] < -TOL {
            return Err(QmathError::NotDensity(format!("eigenvalue {}", vals[0])));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &ComplexMat2 {
        &self.0
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMat2::identity().scale_re(0.5))
    }

    /// (1 − ε)ρ + ε·I/2
    pub fn depolarized(&self, eps: f64) -> Self {
        Self(self.0.scale_re(1.0 - eps) + ComplexMat2::identity().scale_re(0.5 * eps))
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }
}

/// ρ = (I + b·σ)/2
pub fn bloch_to_density(b: &BlochVector) -> Result<DensityMat> {
    let b = BlochVector::new(b.x, b.y, b.z)?;
    Ok(DensityMat(ComplexMat2::new(
        C64::new(0.5 * (1.0 + b.z), 0.0),
        C64::new(0.5 * b.x, -0.5 * b.y),
        C64::new(0.5 * b.x, 0.5 * b.y),
        C64::new(0.5 * (1.0 - b.z), 0.0),
    )))
}

/// b_i = Tr(ρ σ_i)
pub fn density_to_bloch(rho: &DensityMat) -> BlochVector {
    let m = &rho.0.m;
    BlochVector::raw(
        (m[0][1] + m[1][0]).re,
        (m[1][0] - m[0][1]).im,
        (m[0][0] - m[1][1]).re,
    )
}

pub fn orthogonal_state(psi: &PureState) -> PureState {
    psi.orthogonal()
}

/// Bloch representation (weight, direction) of a positive semidefinite
/// operator A = (a₀·I + a·σ)/2.
pub fn operator_bloch(a: &ComplexMat2) -> (f64, BlochVector) {
    let m = &a.m;
    (
        (m[0][0] + m[1][1]).re,
        BlochVector::raw(
            (m[0][1] + m[1][0]).re,
            (m[1][0] - m[0][1]).im,
            (m[0][0] - m[1][1]).re,
        ),
    )
}
