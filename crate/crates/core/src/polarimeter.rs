//! Triangular polarimeter: a partially polarizing beam splitter (PPBS) that
//! transmits all H light and a fraction `f` of V light, followed by a
//! wave-plate stage and a PBS on each output arm.
//!
//! Light first passes `U4`. The transmitted arm then goes through `U2` and a
//! PBS onto detectors 0 (H) and 1 (V). The reflected arm goes through `U3`
//! and a PBS with one port on detector 2 and the other on a light dump.
//! With `D = diag(1, √f)` the detector effects are
//!
//! ```text
//! π₀ = U4†·D·U2†|0⟩⟨0|U2·D·U4
//! π₁ = U4†·D·U2†|1⟩⟨1|U2·D·U4
//! π₂ = (1 − f)·|⟨port|U3|1⟩|²·U4†|1⟩⟨1|U4
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{
    unitary_to_waveplates, waveplates_to_unitary, ComplexMat2, PureState, QmathError,
    WavePlateTriple, C64, ONE, ZERO,
};
use crate::qstrategy::QuantumStrategy;

pub const POVM_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarimeterError {
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("reflected effect weight {0} exceeds 1")]
    ReflectedWeight(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("the trivial POVM with an identity element needs no polarimeter")]
    TrivialPovm,
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, PolarimeterError>;

/// Which output of the reflected-arm PBS is terminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DumpPort {
    /// Detector 2 sees the H output of U3.
    #[default]
    ReflectedV,
    /// Detector 2 sees the V output of U3.
    ReflectedH,
}

/// Detector → outcome map (0-based outcome indices internally, restaurant
/// labels 1..=3 in JSON).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Routing([usize; 3]);

impl Routing {
    pub fn new(map: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &o in &map {
            if o > 2 || seen[o] {
                return Err(PolarimeterError::InvalidConfig(format!(
                    "routing {map:?} is not a bijection"
                )));
            }
            seen[o] = true;
        }
        Ok(Self(map))
    }

    /// Detector d reports outcome d.
    pub fn identity() -> Self {
        Self([0, 1, 2])
    }

    pub fn outcome(&self, detector: usize) -> usize {
        self.0[detector]
    }

    pub fn map(&self) -> [usize; 3] {
        self.0
    }
}

impl Default for Routing {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct RoutingJson {
    transmitted_h: usize,
    transmitted_v: usize,
    reflected: usize,
}

impl Serialize for Routing {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RoutingJson {
            transmitted_h: self.0[0] + 1,
            transmitted_v: self.0[1] + 1,
            reflected: self.0[2] + 1,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Routing {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = RoutingJson::deserialize(d)?;
        let labels = [j.transmitted_h, j.transmitted_v, j.reflected];
        if labels.iter().any(|&l| !(1..=3).contains(&l)) {
            return Err(serde::de::Error::custom("restaurant labels are 1, 2, 3"));
        }
        Routing::new(labels.map(|l| l - 1)).map_err(serde::de::Error::custom)
    }
}

/// PPBS split ratio, three wave-plate stages and the detector routing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarimeterConfig {
    pub f: f64,
    pub u2: WavePlateTriple,
    pub u3: WavePlateTriple,
    pub u4: WavePlateTriple,
    pub routing: Routing,
    pub dump: DumpPort,
}

#[derive(Serialize, Deserialize)]
struct ConfigJson {
    f: f64,
    u2: [f64; 3],
    u3: [f64; 3],
    u4: [f64; 3],
    routing: Routing,
    #[serde(default)]
    dump: DumpPort,
}

impl Serialize for PolarimeterConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConfigJson {
            f: self.f,
            u2: self.u2.rounded(),
            u3: self.u3.rounded(),
            u4: self.u4.rounded(),
            routing: self.routing,
            dump: self.dump,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolarimeterConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ConfigJson::deserialize(d)?;
        let t = |a: [f64; 3]| WavePlateTriple::try_from(a).map_err(serde::de::Error::custom);
        PolarimeterConfig::new(j.f, t(j.u2)?, t(j.u3)?, t(j.u4)?, j.routing, j.dump)
            .map_err(serde::de::Error::custom)
    }
}

impl PolarimeterConfig {
    pub fn new(
        f: f64,
        u2: WavePlateTriple,
        u3: WavePlateTriple,
        u4: WavePlateTriple,
        routing: Routing,
        dump: DumpPort,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&f) {
            return Err(PolarimeterError::InvalidConfig(format!(
                "split ratio {f} outside [0, 1]"
            )));
        }
        Ok(Self {
            f,
            u2,
            u3,
            u4,
            routing,
            dump,
        })
    }

    /// The same settings with every plate rotated by the given offsets
    /// (degrees), in the order u2, u3, u4.
    pub fn perturbed(&self, d: [[f64; 3]; 3]) -> Self {
        Self {
            u2: self.u2.perturbed(d[0]),
            u3: self.u3.perturbed(d[1]),
            u4: self.u4.perturbed(d[2]),
            ..*self
        }
    }
}

/// Effects of detectors 0, 1, 2 and of the dump, in that order.
pub fn detector_effects(cfg: &PolarimeterConfig) -> [ComplexMat2; 4] {
    let u2 = waveplates_to_unitary(&cfg.u2);
    let u3 = waveplates_to_unitary(&cfg.u3);
    let u4 = waveplates_to_unitary(&cfg.u4);
    let d = ComplexMat2::diag(ONE, C64::new(cfg.f.sqrt(), 0.0));
    let t = u2 * d * u4;
    let k0 = ComplexMat2::diag(ONE, ZERO);
    let k1 = ComplexMat2::diag(ZERO, ONE);
    let pi0 = t.adjoint() * k0 * t;
    let pi1 = t.adjoint() * k1 * t;
    let reflected = u4.adjoint() * k1 * u4;
    let (to_det, to_dump) = match cfg.dump {
        DumpPort::ReflectedV => (u3.get(0, 1).norm_sqr(), u3.get(1, 1).norm_sqr()),
        DumpPort::ReflectedH => (u3.get(1, 1).norm_sqr(), u3.get(0, 1).norm_sqr()),
    };
    let r = 1.0 - cfg.f;
    [
        pi0,
        pi1,
        reflected.scale_re(r * to_det),
        reflected.scale_re(r * to_dump),
    ]
}

/// Effects indexed by outcome (after routing); the dumped remainder is left
/// out.
pub fn forward_effects(cfg: &PolarimeterConfig) -> [ComplexMat2; 3] {
    let det = detector_effects(cfg);
    let mut out = [ComplexMat2::zero(); 3];
    for (d, e) in det.iter().take(3).enumerate() {
        out[cfg.routing.outcome(d)] = *e;
    }
    out
}

/// Three effects λ_i|φ_i⟩⟨φ_i| summing to the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank1Povm {
    weights: [f64; 3],
    directions: [PureState; 3],
}

impl Rank1Povm {
    /// Weights may be zero (an unused outcome); negative weights are rejected.
    pub fn new(weights: [f64; 3], directions: [PureState; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PolarimeterError::InvalidPovm(format!(
                "weights {weights:?} must be non-negative"
            )));
        }
        let p = Self {
            weights,
            directions,
        };
        let sum_w: f64 = weights.iter().sum();
        if (sum_w - 2.0).abs() > POVM_TOL {
            return Err(PolarimeterError::InvalidPovm(format!(
                "weights sum to {sum_w}"
            )));
        }
        let total: ComplexMat2 = p.effects().into_iter().sum();
        let defect = (total - ComplexMat2::identity()).operator_norm();
        if defect > POVM_TOL {
            return Err(PolarimeterError::InvalidPovm(format!(
                "effects miss the identity by {defect:e}"
            )));
        }
        Ok(p)
    }

    /// Decomposes effects of rank at most one.
    pub fn from_effects(effects: &[ComplexMat2; 3]) -> Result<Self> {
        let mut weights = [0.0; 3];
        let mut directions = [PureState::zero(); 3];
        for (i, e) in effects.iter().enumerate() {
            let (w, v) = rank1_part(e)?;
            weights[i] = w;
            directions[i] = v;
        }
        Self::new(weights, directions)
    }

    /// Decoding measurement of a qubit strategy, π_y = λ_y|ψ_y^⊥⟩⟨ψ_y^⊥|.
    pub fn from_strategy(s: &QuantumStrategy) -> Result<Self> {
        let dirs = s.encodings().map(|e| e.orthogonal());
        Self::new(s.weights(), dirs)
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn directions(&self) -> &[PureState; 3] {
        &self.directions
    }

    pub fn effects(&self) -> [ComplexMat2; 3] {
        let mut out = [ComplexMat2::zero(); 3];
        for (i, e) in out.iter_mut().enumerate() {
            *e = self.directions[i].projector().scale_re(self.weights[i]);
        }
        out
    }
}

fn rank1_part(e: &ComplexMat2) -> Result<(f64, PureState)> {
    if e.hermiticity_defect() > POVM_TOL {
        return Err(PolarimeterError::InvalidPovm(
            "effect is not Hermitian".into(),
        ));
    }
    let (vals, vecs) = e.eigh();
    if vals[0] < -POVM_TOL {
        return Err(PolarimeterError::InvalidPovm(format!(
            "effect has negative eigenvalue {}",
            vals[0]
        )));
    }
    if vals[0] > RANK_TOL {
        return Err(PolarimeterError::InvalidPovm(format!(
            "effect has rank 2 (eigenvalues {vals:?})"
        )));
    }
    let w = vals[1].max(0.0);
    let v = if w > 0.0 {
        PureState::new(vecs[1][0], vecs[1][1])?
    } else {
        PureState::zero()
    };
    Ok((w, v))
}

/// Compiles a rank-1 POVM, reflecting its lowest-weight effect.
pub fn compile(povm: &Rank1Povm) -> Result<PolarimeterConfig> {
    let w = povm.weights;
    let r = (0..3)
        .min_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    compile_reflecting(povm, r)
}

/// Compiles a rank-1 POVM with effect `r` on the reflected arm, which needs
/// λ_r ≤ 1. The remaining two effects go to detectors 0 and 1 in index order.
pub fn compile_reflecting(povm: &Rank1Povm, r: usize) -> Result<PolarimeterConfig> {
    let lam_r = povm.weights[r];
    if lam_r > 1.0 + POVM_TOL {
        return Err(PolarimeterError::ReflectedWeight(lam_r));
    }
    let f = (1.0 - lam_r).clamp(0.0, 1.0);
    let (a, b) = match r {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    // U4|φ_r⟩ = |1⟩ and U4|φ_r^⊥⟩ = |0⟩
    let phi = povm.directions[r].amplitudes();
    let perp = povm.directions[r].orthogonal().amplitudes();
    let u4 = ComplexMat2::new(perp[0].conj(), perp[1].conj(), phi[0].conj(), phi[1].conj());

    let eff = povm.effects();
    let a_rot = u4 * eff[a] * u4.adjoint();
    let u2 = if f > 1e-12 {
        let dinv = ComplexMat2::diag(ONE, C64::new(1.0 / f.sqrt(), 0.0));
        let proj = dinv * a_rot * dinv;
        let (_, vecs) = proj.eigh();
        let w0 = vecs[1];
        let w1 = [-w0[1].conj(), w0[0].conj()];
        ComplexMat2::new(w0[0].conj(), w0[1].conj(), w1[0].conj(), w1[1].conj())
    } else {
        // only H is transmitted; U2 splits it in the ratio of the two weights
        let share = a_rot.get(0, 0).re.clamp(0.0, 1.0);
        let (s, c) = ((1.0 - share).sqrt(), share.sqrt());
        ComplexMat2::real(c, -s, s, c)
    };

    let mut routing = [0; 3];
    routing[0] = a;
    routing[1] = b;
    routing[2] = r;
    let cfg = PolarimeterConfig::new(
        f,
        unitary_to_waveplates(&u2)?,
        WavePlateTriple::bit_flip(),
        unitary_to_waveplates(&u4)?,
        Routing::new(routing)?,
        DumpPort::ReflectedV,
    )?;
    let err = config_distance(&cfg, &eff);
    if err > POVM_TOL {
        return Err(PolarimeterError::InvalidPovm(format!(
            "compiled settings reproduce the effects only to {err:e}"
        )));
    }
    Ok(cfg)
}

/// Largest operator-norm deviation between forward effects and `target`.
pub fn config_distance(cfg: &PolarimeterConfig, target: &[ComplexMat2; 3]) -> f64 {
    forward_effects(cfg)
        .iter()
        .zip(target)
        .map(|(a, b)| (*a - *b).operator_norm())
        .fold(0.0, f64::max)
}

/// One component of a compiled mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureComponent {
    pub probability: f64,
    pub povm: Rank1Povm,
    pub config: PolarimeterConfig,
}

/// Realizes a three-outcome POVM of any rank as a probabilistic mixture of
/// rank-1 polarimeter settings.
///
/// Every rank-1 element has trace at most 1, so a POVM is such a mixture only
/// if each of its elements has trace at most 1; anything else needs a
/// deterministic component and is rejected with [`PolarimeterError::TrivialPovm`].
///
/// While two or more elements have rank 2, the projective POVM
/// {j: |v⟩⟨v|, k: |v^⊥⟩⟨v^⊥|} (v the top eigenvector of E_j) is removed with
/// the largest weight p that keeps every element positive and every trace of
/// the rescaled remainder (E − pB)/(1 − p) at most 1. Once a single rank-2
/// element is left, the remainder splits exactly into two rank-1 POVMs.
pub fn compile_general(effects: &[ComplexMat2; 3]) -> Result<Vec<MixtureComponent>> {
    let total: ComplexMat2 = effects.iter().copied().sum();
    let defect = (total - ComplexMat2::identity()).operator_norm();
    if defect > POVM_TOL {
        return Err(PolarimeterError::InvalidPovm(format!(
            "effects miss the identity by {defect:e}"
        )));
    }
    for e in effects {
        if e.hermiticity_defect() > POVM_TOL || e.eigh().0[0] < -POVM_TOL {
            return Err(PolarimeterError::InvalidPovm(
                "effect is not positive semidefinite".into(),
            ));
        }
    }
    if effects.iter().any(|e| e.trace().re > 1.0 + POVM_TOL) {
        return Err(PolarimeterError::TrivialPovm);
    }

    let mut rest = effects.map(|e| clean(&e));
    let mut left = 1.0;
    let mut pieces: Vec<(f64, Rank1Povm)> = Vec::new();
    for _ in 0..32 {
        let eig = rest.map(|e| e.eigh());
        let full: Vec<usize> = (0..3).filter(|&i| eig[i].0[0] > RANK_TOL).collect();
        match full.len() {
            0 => {
                pieces.push((left, Rank1Povm::from_effects(&rest)?));
                return finish(pieces);
            }
            1 => {
                for (p, povm) in split_single_full_rank(&rest, full[0])? {
                    pieces.push((left * p, povm));
                }
                return finish(pieces);
            }
            _ => {}
        }
        // pair two rank-2 elements; the element left out bounds p through
        // its trace, so leave out the smallest one
        let tr = rest.map(|e| e.trace().re);
        let l = (0..3)
            .filter(|&i| full.len() == 3 || !full.contains(&i))
            .min_by(|&a, &b| tr[a].total_cmp(&tr[b]).then(a.cmp(&b)))
            .unwrap_or(0);
        let (j, k) = match l {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let v = eig[j].1[1];
        let v_perp = [-v[1].conj(), v[0].conj()];
        let p = max_removable(&rest[j], v, &eig[j])
            .min(max_removable(&rest[k], v_perp, &eig[k]))
            .min(1.0 - tr[l])
            .clamp(0.0, 1.0);
        let mut b = [ComplexMat2::zero(); 3];
        b[j] = ComplexMat2::outer(v, v);
        b[k] = ComplexMat2::outer(v_perp, v_perp);
        pieces.push((left * p, Rank1Povm::from_effects(&b)?));
        if p >= 1.0 - 1e-12 {
            return finish(pieces);
        }
        for i in 0..3 {
            rest[i] = clean(&(rest[i] - b[i].scale_re(p)).scale_re(1.0 / (1.0 - p)));
        }
        left *= 1.0 - p;
    }
    Err(PolarimeterError::InvalidPovm(
        "decomposition did not terminate".into(),
    ))
}

/// Two rank-1 POVMs averaging to `e`, where only element `k` has rank 2.
///
/// With a_i, n_i the weights and Bloch directions of the two rank-1 elements
/// and c = a_j + a_l, every rank-1 POVM keeping those directions has weights
/// (x_j, x_l) with x_j + x_l + |x_j n_j + x_l n_l| = 2. On the line
/// x_j + x_l = c this has two solutions, and (a_j, a_l) lies between them.
fn split_single_full_rank(e: &[ComplexMat2; 3], k: usize) -> Result<Vec<(f64, Rank1Povm)>> {
    let (j, l) = match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (a_j, d_j) = rank1_part(&e[j])?;
    let (a_l, d_l) = rank1_part(&e[l])?;
    let (n_j, n_l) = (d_j.bloch(), d_l.bloch());
    let c = a_j + a_l;
    if c <= 0.0 {
        return Err(PolarimeterError::TrivialPovm);
    }
    let r = ((2.0 - c) / c).min(1.0);
    let d = n_j.add(&n_l.neg());
    let qa = d.dot(&d);
    let qb = 2.0 * n_l.dot(&d);
    let qc = 1.0 - r * r;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    if qa < 1e-15 {
        return Err(PolarimeterError::InvalidPovm(
            "rank-2 element with collinear partners".into(),
        ));
    }
    let t_lo = ((-qb - disc) / (2.0 * qa)).clamp(0.0, 1.0);
    let t_hi = ((-qb + disc) / (2.0 * qa)).clamp(0.0, 1.0);
    let t = (a_j / c).clamp(t_lo, t_hi);
    let mu = if t_hi - t_lo > 1e-15 {
        (t - t_lo) / (t_hi - t_lo)
    } else {
        1.0
    };
    let component = |tt: f64| -> Result<Rank1Povm> {
        let (x_j, x_l) = (c * tt, c * (1.0 - tt));
        let b_k = n_j.scaled(x_j).add(&n_l.scaled(x_l)).neg();
        let mut w = [0.0; 3];
        let mut dirs = [PureState::zero(); 3];
        w[j] = x_j;
        w[l] = x_l;
        dirs[j] = d_j;
        dirs[l] = d_l;
        let nk = b_k.norm();
        w[k] = 2.0 - x_j - x_l;
        if nk > 0.0 {
            dirs[k] = PureState::from_bloch(&b_k)?;
        }
        Rank1Povm::new(w, dirs)
    };
    let mut out = Vec::new();
    if mu > 1e-15 {
        out.push((mu, component(t_hi)?));
    }
    if mu < 1.0 - 1e-15 {
        out.push((1.0 - mu, component(t_lo)?));
    }
    Ok(out)
}

// largest p with E − p|v⟩⟨v| ⪰ 0
fn max_removable(e: &ComplexMat2, v: [C64; 2], eig: &([f64; 2], [[C64; 2]; 2])) -> f64 {
    if eig.0[0] > RANK_TOL {
        // p ≤ 1 / ⟨v|E⁻¹|v⟩
        let det = e.det().re;
        let inv = ComplexMat2::new(e.get(1, 1), -e.get(0, 1), -e.get(1, 0), e.get(0, 0))
            .scale_re(1.0 / det);
        1.0 / inv.expectation(v)
    } else {
        // rank 1: only its own direction can be removed
        let top = eig.1[1];
        let overlap = (top[0].conj() * v[0] + top[1].conj() * v[1]).norm_sqr();
        if overlap > 1.0 - 1e-12 {
            eig.0[1]
        } else {
            0.0
        }
    }
}

// drops eigenvalues that are rounding noise
fn clean(e: &ComplexMat2) -> ComplexMat2 {
    let (vals, vecs) = e.eigh();
    let mut out = ComplexMat2::zero();
    for i in 0..2 {
        if vals[i] > RANK_TOL {
            out = out + ComplexMat2::outer(vecs[i], vecs[i]).scale_re(vals[i]);
        }
    }
    out
}

fn finish(pieces: Vec<(f64, Rank1Povm)>) -> Result<Vec<MixtureComponent>> {
    pieces
        .into_iter()
        .filter(|(p, _)| *p > 1e-15)
        .map(|(probability, povm)| {
            Ok(MixtureComponent {
                probability,
                povm,
                config: compile(&povm)?,
            })
        })
        .collect()
}

/// Probability-weighted forward effects of a mixture.
pub fn mixture_effects(mix: &[MixtureComponent]) -> [ComplexMat2; 3] {
    let mut out = [ComplexMat2::zero(); 3];
    for c in mix {
        let e = forward_effects(&c.config);
        for i in 0..3 {
            out[i] = out[i] + e[i].scale_re(c.probability);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::qmath::BlochVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_direction(rng: &mut impl Rng) -> BlochVector {
        loop {
            let v = BlochVector::raw(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v.scaled(1.0 / n);
            }
        }
    }

    /// Random rank-1 three-outcome POVM: three unit vectors with a positive
    /// combination summing to zero, scaled to total weight 2.
    pub(crate) fn random_povm(rng: &mut impl Rng) -> Rank1Povm {
        loop {
            let a = random_direction(rng);
            let b = random_direction(rng);
            // third direction opposite a positive mix of the first two
            let (s, t) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
            let c = a.scaled(s).add(&b.scaled(t)).neg();
            let cn = c.norm();
            if cn < 1e-3 {
                continue;
            }
            // λ_a n_a + λ_b n_b + λ_c n_c = 0 with λ_c = cn·k, λ_a = s·k, λ_b = t·k
            let k = 2.0 / (s + t + cn);
            let weights = [s * k, t * k, cn * k];
            let dirs = [a, b, c.scaled(1.0 / cn)].map(|v| PureState::from_bloch(&v).unwrap());
            if let Ok(p) = Rank1Povm::new(weights, dirs) {
                return p;
            }
        }
    }

    fn trine() -> Rank1Povm {
        Rank1Povm::from_strategy(&QuantumStrategy::trine()).unwrap()
    }

    fn dist(a: &[ComplexMat2; 3], b: &[ComplexMat2; 3]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (*x - *y).operator_norm())
            .fold(0.0, f64::max)
    }

    fn plates(a: [f64; 3]) -> WavePlateTriple {
        WavePlateTriple::new(a[0], a[1], a[2]).unwrap()
    }

    #[test]
    fn full_transmission_is_a_pbs() {
        let id = WavePlateTriple::identity();
        let cfg =
            PolarimeterConfig::new(1.0, id, id, id, Routing::identity(), DumpPort::ReflectedV)
                .unwrap();
        let e = forward_effects(&cfg);
        assert!(e[0].distance(&ComplexMat2::diag(ONE, ZERO)) < 1e-15);
        assert!(e[1].distance(&ComplexMat2::diag(ZERO, ONE)) < 1e-15);
        assert!(e[2].frobenius_norm() < 1e-15);
    }

    #[test]
    fn full_reflection_of_v() {
        let id = WavePlateTriple::identity();
        let cfg = PolarimeterConfig::new(
            0.0,
            id,
            WavePlateTriple::bit_flip(),
            id,
            Routing::identity(),
            DumpPort::ReflectedV,
        )
        .unwrap();
        let e = detector_effects(&cfg);
        assert!(e[0].distance(&ComplexMat2::diag(ONE, ZERO)) < 1e-15);
        assert!(e[1].frobenius_norm() < 1e-15);
        assert!(e[2].distance(&ComplexMat2::diag(ZERO, ONE)) < 1e-15);
        assert!(e[3].frobenius_norm() < 1e-15);
    }

    #[test]
    fn trine_compiles_to_one_third() {
        let p = trine();
        let cfg = compile(&p).unwrap();
        assert!((cfg.f - 1.0 / 3.0).abs() < 1e-12);
        assert!(config_distance(&cfg, &p.effects()) < 1e-9);
        let e = forward_effects(&cfg);
        let (w, n): (Vec<f64>, Vec<BlochVector>) = e
            .iter()
            .map(crate::qmath::operator_bloch)
            .map(|(w, b)| (w, b.scaled(1.0 / w)))
            .unzip();
        for i in 0..3 {
            assert!((w[i] - 2.0 / 3.0).abs() < 1e-9);
            assert!((n[i].angle_deg(&n[(i + 1) % 3]) - 120.0).abs() < 1e-6);
        }
    }

    #[test]
    fn padded_projective_measurement() {
        let p = Rank1Povm::new(
            [1.0, 1.0, 0.0],
            [PureState::zero(), PureState::one(), PureState::zero()],
        )
        .unwrap();
        let cfg = compile(&p).unwrap();
        assert!((cfg.f - 1.0).abs() < 1e-15);
        assert!(config_distance(&cfg, &p.effects()) < 1e-9);
    }

    #[test]
    fn reflected_weight_one_uses_zero_split() {
        let p = Rank1Povm::new(
            [1.0, 1.0, 0.0],
            [PureState::zero(), PureState::one(), PureState::zero()],
        )
        .unwrap();
        let cfg = compile_reflecting(&p, 1).unwrap();
        assert_eq!(cfg.f, 0.0);
        assert!(config_distance(&cfg, &p.effects()) < 1e-9);
    }

    #[test]
    fn split_ratio_zero_with_partial_transmission() {
        // effects {a|0⟩⟨0|, (1−a)|0⟩⟨0|, |1⟩⟨1|}
        let a = 0.3;
        let p = Rank1Povm::new(
            [a, 1.0 - a, 1.0],
            [PureState::zero(), PureState::zero(), PureState::one()],
        )
        .unwrap();
        let cfg = compile_reflecting(&p, 2).unwrap();
        assert_eq!(cfg.f, 0.0);
        assert!(config_distance(&cfg, &p.effects()) < 1e-9);
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = random_povm(&mut rng);
            let cfg = compile(&p).unwrap();
            assert!(config_distance(&cfg, &p.effects()) < 1e-9);
            let w = p.weights();
            let lam_min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((cfg.f - (1.0 - lam_min)).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_effects_complete_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let cfg = PolarimeterConfig::new(
                rng.random_range(0.0..=1.0),
                plates([0; 3].map(|_| rng.random_range(0.0..180.0))),
                plates([0; 3].map(|_| rng.random_range(0.0..180.0))),
                plates([0; 3].map(|_| rng.random_range(0.0..180.0))),
                Routing::identity(),
                if rng.random_bool(0.5) {
                    DumpPort::ReflectedV
                } else {
                    DumpPort::ReflectedH
                },
            )
            .unwrap();
            let e = detector_effects(&cfg);
            let sum: ComplexMat2 = e.iter().copied().sum();
            assert!((sum - ComplexMat2::identity()).operator_norm() < 1e-9);
            for m in &e {
                assert!(m.eigh().0[0] > -1e-12);
            }
        }
    }

    #[test]
    fn recompiling_forward_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let cfg = PolarimeterConfig::new(
                rng.random_range(0.4..=1.0),
                plates([0; 3].map(|_| rng.random_range(0.0..180.0))),
                WavePlateTriple::bit_flip(),
                plates([0; 3].map(|_| rng.random_range(0.0..180.0))),
                Routing::identity(),
                DumpPort::ReflectedV,
            )
            .unwrap();
            let e = forward_effects(&cfg);
            let p = Rank1Povm::from_effects(&e).unwrap();
            let again = compile(&p).unwrap();
            assert!(config_distance(&again, &e) < 1e-9);
        }
    }

    #[test]
    fn compilation_is_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let p = random_povm(&mut rng);
            let w = waveplates_to_unitary(&plates([0; 3].map(|_| rng.random_range(0.0..180.0))));
            let dirs = p.directions().map(|d| {
                let v = w.apply(d.amplitudes());
                PureState::new(v[0], v[1]).unwrap()
            });
            let q = Rank1Povm::new(p.weights(), dirs).unwrap();
            let (c1, c2) = (compile(&p).unwrap(), compile(&q).unwrap());
            assert!((c1.f - c2.f).abs() < 1e-12);
            // U4' = Φ·U4·W† for a diagonal phase Φ
            let u4 = waveplates_to_unitary(&c1.u4) * w.adjoint();
            let u4q = waveplates_to_unitary(&c2.u4);
            let m = u4q * u4.adjoint();
            assert!(m.get(0, 1).norm() < 1e-9 && m.get(1, 0).norm() < 1e-9);
        }
    }

    #[test]
    fn general_rank1_is_single_component() {
        let p = trine();
        let mix = compile_general(&p.effects()).unwrap();
        assert_eq!(mix.len(), 1);
        assert!((mix[0].probability - 1.0).abs() < 1e-12);
        assert!(dist(&mixture_effects(&mix), &p.effects()) < 1e-8);
    }

    #[test]
    fn half_identity_pair() {
        let h = ComplexMat2::identity().scale_re(0.5);
        let e = [h, h, ComplexMat2::zero()];
        let mix = compile_general(&e).unwrap();
        assert_eq!(mix.len(), 2);
        for c in &mix {
            assert!((c.probability - 0.5).abs() < 1e-12);
            assert!((c.config.f - 1.0).abs() < 1e-12);
        }
        assert!(dist(&mixture_effects(&mix), &e) < 1e-8);
    }

    #[test]
    fn mixed_trine_and_random_mixtures() {
        let t = trine().effects();
        let noisy = t.map(|e| e.scale_re(0.8) + ComplexMat2::identity().scale_re(0.2 / 3.0));
        let mix = compile_general(&noisy).unwrap();
        assert!(dist(&mixture_effects(&mix), &noisy) < 1e-8);
        let total: f64 = mix.iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            // random convex mixture of rank-1 POVMs, an oracle for the target
            let n = rng.random_range(1..=3);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = probs.iter().sum();
            let mut target = [ComplexMat2::zero(); 3];
            for p in &probs {
                let e = random_povm(&mut rng).effects();
                for i in 0..3 {
                    target[i] = target[i] + e[i].scale_re(p / s);
                }
            }
            let mix = compile_general(&target).unwrap();
            assert!(dist(&mixture_effects(&mix), &target) < 1e-8);
        }
    }

    #[test]
    fn trivial_and_invalid_povms() {
        let e = [
            ComplexMat2::identity(),
            ComplexMat2::zero(),
            ComplexMat2::zero(),
        ];
        assert_eq!(compile_general(&e), Err(PolarimeterError::TrivialPovm));
        // a rank-2 element of trace 1.2 cannot come from rank-1 pieces
        let u = ComplexMat2::diag(ONE, ZERO);
        let w = ComplexMat2::diag(ZERO, ONE);
        let e = [
            ComplexMat2::identity().scale_re(0.6),
            u.scale_re(0.4),
            w.scale_re(0.4),
        ];
        assert_eq!(compile_general(&e), Err(PolarimeterError::TrivialPovm));
        let bad = [
            ComplexMat2::identity(),
            ComplexMat2::identity(),
            ComplexMat2::zero(),
        ];
        assert!(matches!(
            compile_general(&bad),
            Err(PolarimeterError::InvalidPovm(_))
        ));
        assert!(Rank1Povm::new([1.0, 1.0, 1.0], [PureState::zero(); 3]).is_err());
    }

    #[test]
    fn json_layout_and_rounding() {
        let cfg = compile(&trine()).unwrap();
        let v = serde_json::to_value(cfg).unwrap();
        // equal weights: the first effect is reflected
        assert_eq!(v["routing"]["reflected"], 1);
        for key in ["u2", "u3", "u4"] {
            for a in v[key].as_array().unwrap() {
                let x = a.as_f64().unwrap();
                assert!(((x * 1e4).round() - x * 1e4).abs() < 1e-6);
            }
        }
        let back: PolarimeterConfig = serde_json::from_value(v).unwrap();
        // 1e-4 degree rounding costs a few 1e-6 in the effects
        assert!(config_distance(&back, &trine().effects()) < 1e-5);
        let bad = r#"{"f":0.5,"u2":[0,0,0],"u3":[0,45,0],"u4":[0,0,0],"routing":{"transmitted_h":1,"transmitted_v":1,"reflected":3}}"#;
        assert!(serde_json::from_str::<PolarimeterConfig>(bad).is_err());
    }
}
