//! Seeded Monte-Carlo simulation of the prepare-and-measure experiment.
//!
//! Every shot draws from its own ChaCha8 stream keyed by `(seed, shot)`, so
//! the counts do not depend on how shots are split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{self, quality_from_parts, statistical_overlap, GameSpec, VisitMatrix, UNIFORM};
use crate::polarimeter::{self, compile, forward_effects, PolarimeterConfig, Rank1Povm};
use crate::qmath::{
    unitary_to_waveplates, waveplates_to_unitary, ComplexMat2, QmathError, WavePlateTriple, ONE,
    ZERO,
};
use crate::qstrategy::QuantumStrategy;

pub const DEFAULT_SHOTS: u64 = 4800;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Resolution of [`advantage_threshold`].
pub const THRESHOLD_TOL: f64 = 1e-6;

const CHUNK: u64 = 4096;
// bootstrap resamples use streams counted down from the top so they never
// meet the shot streams
const BOOTSTRAP_STREAM_BASE: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "no noise level gives an advantage (classical optimum {eps_c}, noiseless quantum {eps_q})"
    )]
    NoAdvantage { eps_c: f64, eps_q: f64 },
    #[error(transparent)]
    Game(#[from] game::GameError),
    #[error(transparent)]
    Polarimeter(#[from] polarimeter::PolarimeterError),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Depolarizing strength on the encoded states and Gaussian wave-plate
/// jitter (standard deviation in degrees, drawn afresh for every shot).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseJson")]
pub struct NoiseModel {
    pub depolarizing: f64,
    pub angle_jitter_deg: f64,
}

#[derive(Deserialize)]
struct NoiseJson {
    #[serde(default)]
    depolarizing: f64,
    #[serde(default)]
    angle_jitter_deg: f64,
}

impl TryFrom<NoiseJson> for NoiseModel {
    type Error = ExperimentError;
    fn try_from(j: NoiseJson) -> Result<Self> {
        NoiseModel::new(j.depolarizing, j.angle_jitter_deg)
    }
}

impl NoiseModel {
    pub fn new(depolarizing: f64, angle_jitter_deg: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&depolarizing) {
            return Err(ExperimentError::InvalidNoise(format!(
                "depolarizing strength {depolarizing} outside [0, 1]"
            )));
        }
        if !(angle_jitter_deg >= 0.0 && angle_jitter_deg.is_finite()) {
            return Err(ExperimentError::InvalidNoise(format!(
                "angle jitter {angle_jitter_deg} must be a finite nonnegative number"
            )));
        }
        Ok(Self {
            depolarizing,
            angle_jitter_deg,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            depolarizing: 0.0,
            angle_jitter_deg: 0.0,
        }
    }

    pub fn depolarizing(eps: f64) -> Result<Self> {
        Self::new(eps, 0.0)
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub shots: u64,
    pub seed: u64,
    /// Distribution the closed restaurant is drawn from.
    pub closure_prior: [f64; 3],
    /// Number of bootstrap resamples for the standard error of ℰ_Q.
    pub bootstrap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            shots: DEFAULT_SHOTS,
            seed: 0,
            closure_prior: UNIFORM,
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

impl ExperimentConfig {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        Self {
            shots,
            seed,
            ..Self::default()
        }
        .validated()
    }

    pub fn validated(mut self) -> Result<Self> {
        if self.shots == 0 {
            return Err(ExperimentError::InvalidConfig(
                "shots must be at least 1".into(),
            ));
        }
        self.closure_prior = game::probability_triple(self.closure_prior)?;
        Ok(self)
    }
}

/// Encoder wave plates acting on an H photon, followed by a polarimeter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalSetup {
    pub encoders: [WavePlateTriple; 3],
    pub polarimeter: PolarimeterConfig,
}

impl OpticalSetup {
    pub fn from_strategy(s: &QuantumStrategy) -> Result<Self> {
        let mut encoders = [WavePlateTriple::identity(); 3];
        for (e, psi) in encoders.iter_mut().zip(s.encodings()) {
            *e = unitary_to_waveplates(&psi.preparation_unitary())?;
        }
        let polarimeter = compile(&Rank1Povm::from_strategy(s)?)?;
        Ok(Self {
            encoders,
            polarimeter,
        })
    }

    /// Pure encoded states as density matrices.
    pub fn states(&self) -> [ComplexMat2; 3] {
        self.encoders.map(|w| {
            let v = waveplates_to_unitary(&w).apply([ONE, ZERO]);
            ComplexMat2::outer(v, v)
        })
    }

    pub fn effects(&self) -> [ComplexMat2; 3] {
        forward_effects(&self.polarimeter)
    }

    fn jittered<R: Rng>(&self, rng: &mut R, normal: &Normal<f64>) -> Self {
        let mut draw = || [0; 3].map(|_| normal.sample(rng));
        let encoders = self.encoders.map(|w| w.perturbed(draw()));
        let polarimeter = self.polarimeter.perturbed([draw(), draw(), draw()]);
        Self {
            encoders,
            polarimeter,
        }
    }
}

/// What produces the photons and measures them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Device {
    /// Exact states and effects of a qubit strategy; wave-plate jitter has
    /// nothing to act on.
    Ideal {
        strategy: QuantumStrategy,
    },
    Optical(OpticalSetup),
}

impl Device {
    pub fn ideal(strategy: QuantumStrategy) -> Self {
        Device::Ideal { strategy }
    }

    pub fn optical_from_strategy(s: &QuantumStrategy) -> Result<Self> {
        Ok(Device::Optical(OpticalSetup::from_strategy(s)?))
    }

    fn states_and_effects(&self) -> ([ComplexMat2; 3], [ComplexMat2; 3]) {
        match self {
            Device::Ideal { strategy } => (strategy.densities(), strategy.effects()),
            Device::Optical(o) => (o.states(), o.effects()),
        }
    }
}

/// Observed counts n(y|x), indexed `[closed][visited]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Counts(pub [[u64; 3]; 3]);

#[derive(Serialize, Deserialize)]
struct CountRecord {
    closed: usize,
    visited: usize,
    count: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> [u64; 3] {
        self.0.map(|r| r.iter().sum())
    }

    /// Row-normalized frequencies; rows without counts stay zero.
    pub fn frequencies(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (x, row) in self.0.iter().enumerate() {
            let n: u64 = row.iter().sum();
            if n > 0 {
                out[x] = row.map(|c| c as f64 / n as f64);
            }
        }
        out
    }

    /// CSV with header `closed,visited,count` and restaurant labels 1..=3.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for x in 0..3 {
            for y in 0..3 {
                w.serialize(CountRecord {
                    closed: x + 1,
                    visited: y + 1,
                    count: self.0[x][y],
                })
                .expect("writing to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv is utf-8")
    }

    /// Reads the CSV layout of [`Counts::to_csv`]; cells that are absent
    /// count as zero and repeated cells add up.
    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut c = [[0u64; 3]; 3];
        for rec in r.deserialize::<CountRecord>() {
            let rec = rec.map_err(|e| e.to_string())?;
            if !(1..=3).contains(&rec.closed) || !(1..=3).contains(&rec.visited) {
                return Err(format!(
                    "restaurant labels are 1, 2, 3 (got closed={}, visited={})",
                    rec.closed, rec.visited
                ));
            }
            c[rec.closed - 1][rec.visited - 1] += rec.count;
        }
        Ok(Counts(c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub shots: u64,
    pub noise: NoiseModel,
    pub closure_prior: [f64; 3],
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub counts: Counts,
    /// Estimated p(y|x); rows never sampled are zero.
    pub visit_matrix: [[f64; 3]; 3],
    pub p_hat: [f64; 3],
    pub overlap_f: f64,
    pub eps_q: f64,
    pub eps_q_stderr: f64,
    pub metadata: RunMetadata,
}

/// Estimated visiting distribution and quality index from counts. Rows
/// are weighted by the game's closing prior rather than by how often each
/// restaurant happened to be closed.
pub fn estimate(counts: &Counts, spec: &GameSpec) -> ([[f64; 3]; 3], [f64; 3], f64) {
    let v = counts.frequencies();
    let mut p = [0.0; 3];
    for (x, row) in v.iter().enumerate() {
        for y in 0..3 {
            p[y] += spec.prior[x] * row[y];
        }
    }
    let diag = v[0][0] + v[1][1] + v[2][2];
    (v, p, quality_from_parts(diag, &p, spec))
}

/// Runs `cfg.shots` photons through the device. Identical inputs give
/// bit-identical results regardless of the thread count.
pub fn simulate(
    spec: &GameSpec,
    device: &Device,
    noise: &NoiseModel,
    cfg: &ExperimentConfig,
) -> ExperimentResult {
    let counts = sample_counts(device, noise, cfg);
    let (visit_matrix, p_hat, eps_q) = estimate(&counts, spec);
    ExperimentResult {
        counts,
        visit_matrix,
        p_hat,
        overlap_f: statistical_overlap(&spec.gamma, &p_hat),
        eps_q,
        eps_q_stderr: bootstrap_stderr(&counts, spec, cfg.seed, cfg.bootstrap),
        metadata: RunMetadata {
            seed: cfg.seed,
            shots: cfg.shots,
            noise: *noise,
            closure_prior: cfg.closure_prior,
            bootstrap: cfg.bootstrap,
        },
    }
}

fn shot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(p: &[f64; 3], u: f64) -> usize {
    if u < p[0] {
        0
    } else if u < p[0] + p[1] {
        1
    } else {
        2
    }
}

/// Detection probabilities of a state, conditioned on the photon reaching
/// one of the three detectors.
fn postselected(effects: &[ComplexMat2; 3], rho: &ComplexMat2) -> [f64; 3] {
    let p = effects.map(|e| (e * *rho).trace().re.max(0.0));
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.map(|v| v / s)
    } else {
        [1.0 / 3.0; 3]
    }
}

fn depolarize(rho: &ComplexMat2, eps: f64) -> ComplexMat2 {
    rho.scale_re(1.0 - eps) + ComplexMat2::identity().scale_re(eps / 2.0)
}

fn rows_for(states: &[ComplexMat2; 3], effects: &[ComplexMat2; 3], eps: f64) -> [[f64; 3]; 3] {
    states.map(|rho| postselected(effects, &depolarize(&rho, eps)))
}

fn sample_counts(device: &Device, noise: &NoiseModel, cfg: &ExperimentConfig) -> Counts {
    let (states, effects) = device.states_and_effects();
    let fixed_rows = rows_for(&states, &effects, noise.depolarizing);
    match device {
        Device::Optical(o) if noise.angle_jitter_deg > 0.0 => {
            let normal = Normal::new(0.0, noise.angle_jitter_deg).expect("validated jitter");
            tally(cfg, |rng, x| {
                let j = o.jittered(rng, &normal);
                let rho = j.states()[x];
                postselected(&j.effects(), &depolarize(&rho, noise.depolarizing))
            })
        }
        _ => tally(cfg, |_, x| fixed_rows[x]),
    }
}

/// Counts drawn from a fixed visit matrix, with the same per-shot streams
/// as [`simulate`]; used for devices described only by their statistics.
pub fn sample_visit_matrix(v: &VisitMatrix, cfg: &ExperimentConfig) -> Counts {
    let rows = *v.rows();
    tally(cfg, |_, x| rows[x])
}

fn tally<F>(cfg: &ExperimentConfig, row: F) -> Counts
where
    F: Fn(&mut ChaCha8Rng, usize) -> [f64; 3] + Sync,
{
    let chunks = cfg.shots.div_ceil(CHUNK);
    let n = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut n = [[0u64; 3]; 3];
            for shot in c * CHUNK..((c + 1) * CHUNK).min(cfg.shots) {
                let mut rng = shot_rng(cfg.seed, shot);
                let x = draw(&cfg.closure_prior, rng.random());
                let p = row(&mut rng, x);
                n[x][draw(&p, rng.random())] += 1;
            }
            n
        })
        .reduce(
            || [[0u64; 3]; 3],
            |mut a, b| {
                for x in 0..3 {
                    for y in 0..3 {
                        a[x][y] += b[x][y];
                    }
                }
                a
            },
        );
    Counts(n)
}

/// Multinomial draw of `n` over nine cells via conditional binomials.
fn multinomial<R: Rng>(rng: &mut R, n: u64, p: &[f64; 9]) -> [u64; 9] {
    let mut out = [0u64; 9];
    let mut left = n;
    let mut mass = 1.0;
    for i in 0..8 {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let q = (p[i] / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q)
            .expect("probability in [0, 1]")
            .sample(rng);
        out[i] = k;
        left -= k;
        mass -= p[i];
    }
    out[8] = left;
    out
}

/// Standard deviation of ℰ over multinomial resamples of the observed
/// counts.
pub fn bootstrap_stderr(counts: &Counts, spec: &GameSpec, seed: u64, resamples: usize) -> f64 {
    let n = counts.total();
    if resamples < 2 || n == 0 {
        return 0.0;
    }
    let mut p = [0.0; 9];
    for (i, c) in counts.0.iter().flatten().enumerate() {
        p[i] = *c as f64 / n as f64;
    }
    let eps: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = shot_rng(seed, BOOTSTRAP_STREAM_BASE - b);
            let cells = multinomial(&mut rng, n, &p);
            let mut c = [[0u64; 3]; 3];
            for (i, k) in cells.iter().enumerate() {
                c[i / 3][i % 3] = *k;
            }
            estimate(&Counts(c), spec).2
        })
        .collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (eps.len() - 1) as f64;
    var.sqrt()
}

/// Infinite-shot visit matrix under depolarizing noise; jitter is ignored.
pub fn expected_visit_matrix(device: &Device, noise: &NoiseModel) -> VisitMatrix {
    let (states, effects) = device.states_and_effects();
    let rows = rows_for(&states, &effects, noise.depolarizing);
    VisitMatrix::normalized(rows, 1e-9).expect("post-selected rows are stochastic")
}

/// ℰ of the ideal device after depolarizing the encodings with strength ε.
pub fn quality_under_depolarizing(strategy: &QuantumStrategy, spec: &GameSpec, eps: f64) -> f64 {
    let v = expected_visit_matrix(
        &Device::ideal(*strategy),
        &NoiseModel {
            depolarizing: eps,
            angle_jitter_deg: 0.0,
        },
    );
    game::quality_index(&v, spec)
}

/// Slope of ℰ(ε) for a perfect strategy: max{k₁, k₂·max_y|λ_y/2 − γ_y|}.
pub fn depolarizing_slope(strategy: &QuantumStrategy, spec: &GameSpec) -> f64 {
    let w = strategy.weights();
    let dev = (0..3)
        .map(|y| (w[y] / 2.0 - spec.gamma[y]).abs())
        .fold(0.0, f64::max);
    spec.k1.max(spec.k2 * dev)
}

/// Largest depolarizing strength at which the strategy still beats the
/// classical optimum `eps_c`, to within [`THRESHOLD_TOL`].
pub fn advantage_threshold(spec: &GameSpec, strategy: &QuantumStrategy, eps_c: f64) -> Result<f64> {
    let q = |e: f64| quality_under_depolarizing(strategy, spec, e);
    let q0 = q(0.0);
    if q0.partial_cmp(&eps_c) != Some(std::cmp::Ordering::Less) {
        return Err(ExperimentError::NoAdvantage { eps_c, eps_q: q0 });
    }
    if q(1.0) < eps_c {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > THRESHOLD_TOL / 4.0 {
        let mid = 0.5 * (lo + hi);
        if q(mid) < eps_c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
