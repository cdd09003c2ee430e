//! One-bit classical strategies: exact constructions for winnable games and
//! the optimal classical quality index ℰ_C.
//!
//! For a fixed sender table the best receiver is a linear program in the six
//! receiver entries and ℰ; the sender is searched on a grid.

pub mod lp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{quality_index, GameError, GameSpec, VisitMatrix, TWO_THIRDS};
pub use lp::{simplex_min, LpError, LpProblem, LpSolution};

pub const TABLE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("γ = {0:?} cannot be won with one classical bit")]
    NotWinnable([f64; 3]),
    #[error("invalid {table} table: {detail}")]
    InvalidTable { table: &'static str, detail: String },
    #[error("grid step {0} outside (0, 0.5]")]
    BadGridStep(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Game(#[from] GameError),
}

pub type Result<T> = std::result::Result<T, ClassicalError>;

/// Sender table p^A(j|i) (rows: closed restaurant, columns: bit) and
/// receiver table p^B(k|j) (rows: bit, columns: visited restaurant).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TablesJson", into = "TablesJson")]
pub struct ClassicalStrategy {
    sender: [[f64; 2]; 3],
    receiver: [[f64; 3]; 2],
}

#[derive(Serialize, Deserialize)]
struct TablesJson {
    sender: [[f64; 2]; 3],
    receiver: [[f64; 3]; 2],
}

impl From<ClassicalStrategy> for TablesJson {
    fn from(c: ClassicalStrategy) -> Self {
        TablesJson {
            sender: c.sender,
            receiver: c.receiver,
        }
    }
}

impl TryFrom<TablesJson> for ClassicalStrategy {
    type Error = ClassicalError;
    fn try_from(j: TablesJson) -> Result<Self> {
        ClassicalStrategy::new(j.sender, j.receiver)
    }
}

fn check_rows<const N: usize>(rows: &[[f64; N]], table: &'static str) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let s: f64 = r.iter().sum();
        if r.iter()
            .any(|v| !v.is_finite() || *v < -TABLE_TOL || *v > 1.0 + TABLE_TOL)
            || (s - 1.0).abs() > TABLE_TOL
        {
            return Err(ClassicalError::InvalidTable {
                table,
                detail: format!("row {i} = {r:?}"),
            });
        }
    }
    Ok(())
}

impl ClassicalStrategy {
    pub fn new(sender: [[f64; 2]; 3], receiver: [[f64; 3]; 2]) -> Result<Self> {
        check_rows(&sender, "sender")?;
        check_rows(&receiver, "receiver")?;
        Ok(Self { sender, receiver })
    }

    /// Sender given by p^A(0|i) for each closed restaurant.
    pub fn from_bit0_probs(a: [f64; 3], receiver: [[f64; 3]; 2]) -> Result<Self> {
        Self::new(a.map(|p| [p, 1.0 - p]), receiver)
    }

    pub fn sender(&self) -> &[[f64; 2]; 3] {
        &self.sender
    }

    pub fn receiver(&self) -> &[[f64; 3]; 2] {
        &self.receiver
    }

    /// Relabels restaurants: restaurant `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        let mut sender = self.sender;
        let mut receiver = self.receiver;
        for i in 0..3 {
            sender[perm[i]] = self.sender[i];
            for j in 0..2 {
                receiver[j][perm[i]] = self.receiver[j][i];
            }
        }
        Self { sender, receiver }
    }

    /// Exchanges the meaning of the two messages.
    pub fn message_swapped(&self) -> Self {
        Self {
            sender: self.sender.map(|r| [r[1], r[0]]),
            receiver: [self.receiver[1], self.receiver[0]],
        }
    }
}

/// p(k|i) = Σ_j p^A(j|i)·p^B(k|j)
pub fn visit_matrix(cs: &ClassicalStrategy) -> VisitMatrix {
    let mut rows = [[0.0; 3]; 3];
    for (i, row) in rows.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = (0..2).map(|j| cs.sender[i][j] * cs.receiver[j][k]).sum();
        }
    }
    VisitMatrix::normalized(rows, 1e-9).expect("composition of stochastic tables")
}

/// A perfect one-bit strategy for a classically winnable game.
pub fn exact_winning_strategy(gamma: [f64; 3], tol: f64) -> Result<ClassicalStrategy> {
    let zero = (0..3).find(|&i| gamma[i].abs() <= tol);
    let full = (0..3).find(|&i| (gamma[i] - TWO_THIRDS).abs() <= tol);
    if let Some(i) = zero {
        // canonical labels: restaurant 0 is the one never targeted
        let perm = [i, (i + 1) % 3, (i + 2) % 3];
        let g1 = gamma[perm[1]];
        // closed 0 → bit 0 w.p. α, closed 1 → bit 1, closed 2 → bit 0;
        // bit 0 → visit 1, bit 1 → visit 2
        let alpha = (3.0 * g1 - 1.0).clamp(0.0, 1.0);
        let canon = ClassicalStrategy::new(
            [[alpha, 1.0 - alpha], [0.0, 1.0], [1.0, 0.0]],
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        )?;
        return Ok(canon.permuted(perm));
    }
    if let Some(i) = full {
        // restaurant 0 is visited whenever it is open
        let perm = [i, (i + 1) % 3, (i + 2) % 3];
        let q1 = (3.0 * gamma[perm[1]]).clamp(0.0, 1.0);
        let canon = ClassicalStrategy::new(
            [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]],
            [[1.0, 0.0, 0.0], [0.0, q1, 1.0 - q1]],
        )?;
        return Ok(canon.permuted(perm));
    }
    Err(ClassicalError::NotWinnable(gamma))
}

/// Best receiver and its ℰ for a fixed sender table.
///
/// A message that is never sent has its receiver row fixed to uniform.
pub fn inner_lp(sender: &[[f64; 2]; 3], spec: &GameSpec) -> Result<(f64, [[f64; 3]; 2])> {
    check_rows(sender, "sender")?;
    let used: Vec<usize> = (0..2)
        .filter(|&j| sender.iter().map(|r| r[j]).sum::<f64>() > 1e-15)
        .collect();
    // variables: r[j][k] for used j (3 each), then ℰ
    let nv = 3 * used.len() + 1;
    let e = nv - 1;
    let mut lp = LpProblem::new(nv);
    let mut c = vec![0.0; nv];
    c[e] = 1.0;
    lp = lp.minimize(c);

    let mut diag = vec![0.0; nv];
    let mut visit = vec![vec![0.0; nv]; 3];
    for (u, &j) in used.iter().enumerate() {
        for i in 0..3 {
            diag[3 * u + i] += spec.k1 * sender[i][j];
            for (k, row) in visit.iter_mut().enumerate() {
                row[3 * u + k] += spec.prior[i] * sender[i][j];
            }
        }
    }
    diag[e] = -1.0;
    lp = lp.le(diag, 0.0);
    for (k, row) in visit.iter().enumerate() {
        // k₂(p_k − γ_k) ≤ ℰ and k₂(γ_k − p_k) ≤ ℰ
        let mut up: Vec<f64> = row.iter().map(|v| spec.k2 * v).collect();
        up[e] = -1.0;
        let mut down: Vec<f64> = row.iter().map(|v| -spec.k2 * v).collect();
        down[e] = -1.0;
        lp = lp
            .le(up, spec.k2 * spec.gamma[k])
            .le(down, -spec.k2 * spec.gamma[k]);
    }
    for u in 0..used.len() {
        let mut row = vec![0.0; nv];
        row[3 * u..3 * u + 3].fill(1.0);
        lp = lp.eq(row, 1.0);
    }
    let sol = simplex_min(&lp)?;

    let mut receiver = [[1.0 / 3.0; 3]; 2];
    for (u, &j) in used.iter().enumerate() {
        let r = [sol.x[3 * u], sol.x[3 * u + 1], sol.x[3 * u + 2]].map(|v| v.max(0.0));
        let s: f64 = r.iter().sum();
        receiver[j] = r.map(|v| v / s);
    }
    Ok((sol.value, receiver))
}

/// Result of the classical search, in its JSON layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOptimum {
    pub gamma: [f64; 3],
    pub k1: f64,
    pub k2: f64,
    pub eps_c: f64,
    pub sender: [[f64; 2]; 3],
    pub receiver: [[f64; 3]; 2],
    pub grid_step: f64,
    pub refine_rounds: u32,
}

impl ClassicalOptimum {
    pub fn strategy(&self) -> Result<ClassicalStrategy> {
        ClassicalStrategy::new(self.sender, self.receiver)
    }
}

pub const DEFAULT_GRID_STEP: f64 = 0.02;
pub const DEFAULT_REFINE_ROUNDS: u32 = 3;

#[derive(Clone, Copy, Debug)]
struct Candidate {
    eps: f64,
    a: [f64; 3],
}

impl Candidate {
    // smaller ℰ first, then lexicographically smaller sender
    fn better_than(&self, other: &Candidate) -> bool {
        match self.eps.total_cmp(&other.eps) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                for k in 0..3 {
                    match self.a[k].total_cmp(&other.a[k]) {
                        std::cmp::Ordering::Less => return true,
                        std::cmp::Ordering::Greater => return false,
                        _ => {}
                    }
                }
                false
            }
        }
    }
}

fn pick(a: Candidate, b: Candidate) -> Candidate {
    if b.better_than(&a) {
        b
    } else {
        a
    }
}

fn evaluate(a: [f64; 3], spec: &GameSpec) -> Candidate {
    let sender = a.map(|p| [p, 1.0 - p]);
    let eps = inner_lp(&sender, spec).map_or(f64::INFINITY, |(e, _)| e);
    Candidate { eps, a }
}

/// Minimizes ℰ over senders p^A(0|i) ∈ {0, step, …, 1}³, then refines
/// `refine_rounds` times on a 5³ grid of half the previous step centred on
/// the incumbent.
pub fn optimize(spec: &GameSpec, grid_step: f64, refine_rounds: u32) -> Result<ClassicalOptimum> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(ClassicalError::BadGridStep(grid_step));
    }
    let spec = spec.validated()?;
    let n = (1.0 / grid_step).ceil() as usize;
    let value = |k: usize| (k as f64 * grid_step).min(1.0);
    // with an exact grid the message swap a ↦ 1 − a maps the grid onto itself,
    // so the first coordinate can be restricted to a ≤ 1/2
    let exact = ((n as f64) * grid_step - 1.0).abs() < 1e-9;
    let first_max = if exact { n / 2 } else { n };

    let start = Candidate {
        eps: f64::INFINITY,
        a: [f64::INFINITY; 3],
    };
    let mut best = (0..=first_max)
        .into_par_iter()
        .map(|i| {
            let mut local = start;
            for j in 0..=n {
                for k in 0..=n {
                    local = pick(local, evaluate([value(i), value(j), value(k)], &spec));
                }
            }
            local
        })
        .reduce(|| start, pick);

    let mut step = grid_step;
    for _ in 0..refine_rounds {
        step *= 0.5;
        let center = best.a;
        let mut points = Vec::with_capacity(125);
        for d0 in -2i32..=2 {
            for d1 in -2i32..=2 {
                for d2 in -2i32..=2 {
                    let a = [d0, d1, d2]
                        .iter()
                        .zip(center)
                        .map(|(d, c)| (c + *d as f64 * step).clamp(0.0, 1.0))
                        .collect::<Vec<_>>();
                    points.push([a[0], a[1], a[2]]);
                }
            }
        }
        best = points
            .into_par_iter()
            .map(|a| evaluate(a, &spec))
            .reduce(|| best, pick);
    }

    let sender = best.a.map(|p| [p, 1.0 - p]);
    let (_, receiver) = inner_lp(&sender, &spec)?;
    let strategy = ClassicalStrategy::new(sender, receiver)?;
    let eps_c = quality_index(&visit_matrix(&strategy), &spec);
    log::debug!(
        "classical optimum for {:?}: ℰ_C = {eps_c} at sender {:?}",
        spec.gamma,
        best.a
    );
    Ok(ClassicalOptimum {
        gamma: spec.gamma,
        k1: spec.k1,
        k2: spec.k2,
        eps_c,
        sender,
        receiver,
        grid_step,
        refine_rounds,
    })
}

/// ℰ_C with the default grid (step 0.02, three refinement rounds).
pub fn optimal_classical_quality(spec: &GameSpec) -> Result<ClassicalOptimum> {
    optimize(spec, DEFAULT_GRID_STEP, DEFAULT_REFINE_ROUNDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{permute_triple, PERMUTATIONS, UNIFORM};
    use proptest::prelude::*;

    fn spec(g: [f64; 3]) -> GameSpec {
        GameSpec::standard(g).unwrap()
    }

    #[test]
    fn constant_sender_and_receiver() {
        let cs = ClassicalStrategy::new([[1.0, 0.0]; 3], [[1.0, 0.0, 0.0]; 2]).unwrap();
        assert_eq!(visit_matrix(&cs).rows(), &[[1.0, 0.0, 0.0]; 3]);
        let u = ClassicalStrategy::new([[0.5, 0.5]; 3], [[1.0 / 3.0; 3]; 2]).unwrap();
        for r in visit_matrix(&u).rows() {
            assert!(r.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_gamma_construction_matrix() {
        // closed 1 → bit 0, closed 2 → bit 1, closed 3 → bit 0; 0 → visit 2, 1 → visit 3
        let cs = ClassicalStrategy::new(
            [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        )
        .unwrap();
        let v = visit_matrix(&cs);
        assert!((0..3).all(|x| v.get(x, 0) == 0.0));
        assert_eq!(v.diagonal_sum(), 0.0);
    }

    #[test]
    fn exact_strategies_win() {
        let alpha = 0.4;
        let cases = [
            [0.0, (1.0 + alpha) / 3.0, (2.0 - alpha) / 3.0],
            [2.0 / 3.0, 0.2, 2.0 / 15.0],
            [0.4, 0.0, 0.6],
            [0.5, 0.5, 0.0],
            [0.1, 2.0 / 3.0, 7.0 / 30.0],
            [0.25, 1.0 / 12.0, 2.0 / 3.0],
            [2.0 / 3.0, 1.0 / 3.0, 0.0],
        ];
        for g in cases {
            let cs = exact_winning_strategy(g, 1e-9).unwrap();
            let e = quality_index(&visit_matrix(&cs), &spec(g));
            assert!(e <= 1e-9, "{g:?}: {e}");
        }
        assert!(matches!(
            exact_winning_strategy(UNIFORM, 1e-9),
            Err(ClassicalError::NotWinnable(_))
        ));
    }

    #[test]
    fn inner_lp_zero_for_exact_sender() {
        for g in [[0.0, 0.45, 0.55], [2.0 / 3.0, 0.1, 7.0 / 30.0]] {
            let cs = exact_winning_strategy(g, 1e-9).unwrap();
            let (e, _) = inner_lp(cs.sender(), &spec(g)).unwrap();
            assert!(e.abs() < 1e-12);
        }
    }

    /// Best receiver by brute force over a grid of receiver tables.
    fn brute_force_inner(sender: &[[f64; 2]; 3], s: &GameSpec, n: usize) -> f64 {
        let mut rows = Vec::new();
        for a in 0..=n {
            for b in 0..=(n - a) {
                rows.push([
                    a as f64 / n as f64,
                    b as f64 / n as f64,
                    (n - a - b) as f64 / n as f64,
                ]);
            }
        }
        let mut best = f64::INFINITY;
        for r0 in &rows {
            for r1 in &rows {
                let cs = ClassicalStrategy::new(*sender, [*r0, *r1]).unwrap();
                best = best.min(quality_index(&visit_matrix(&cs), s));
            }
        }
        best
    }

    #[test]
    fn constant_sender_on_uniform_game() {
        let sender = [[1.0, 0.0]; 3];
        let (e, r) = inner_lp(&sender, &spec(UNIFORM)).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r[1], [1.0 / 3.0; 3]);
        let brute = brute_force_inner(&sender, &spec(UNIFORM), 30);
        assert!((brute - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inner_lp_matches_brute_force_and_recomputation() {
        let senders = [
            [[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]],
            [[1.0, 0.0], [0.0, 1.0], [0.3, 0.7]],
            [[0.6, 0.4], [0.6, 0.4], [0.1, 0.9]],
        ];
        let g = [0.45, 0.3, 0.25];
        for sender in senders {
            let (e, r) = inner_lp(&sender, &spec(g)).unwrap();
            let cs = ClassicalStrategy::new(sender, r).unwrap();
            let re = quality_index(&visit_matrix(&cs), &spec(g));
            assert!((e - re).abs() < 1e-9);
            // the grid brute force can only be worse, and not by much
            let brute = brute_force_inner(&sender, &spec(g), 20);
            assert!(brute >= e - 1e-12 && brute - e < 0.03, "{e} vs {brute}");
        }
    }

    #[test]
    fn optimize_winnable_game_is_zero() {
        let o = optimize(&spec([2.0 / 3.0, 1.0 / 3.0, 0.0]), 0.1, 1).unwrap();
        assert!(o.eps_c < 1e-9);
    }

    #[test]
    fn optimize_uniform_game() {
        let o = optimize(&spec(UNIFORM), 0.05, 3).unwrap();
        let cs = o.strategy().unwrap();
        let re = quality_index(&visit_matrix(&cs), &spec(UNIFORM));
        assert!((re - o.eps_c).abs() < 1e-12);
        assert!(o.eps_c > 0.05 && o.eps_c < 0.1, "{}", o.eps_c);
    }

    #[test]
    fn optimize_json_layout() {
        let o = optimize(&spec([0.4, 0.35, 0.25]), 0.1, 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&o).unwrap();
        for key in [
            "gamma",
            "k1",
            "k2",
            "eps_c",
            "sender",
            "receiver",
            "grid_step",
            "refine_rounds",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: ClassicalOptimum = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn outer_minimum_is_lower_envelope() {
        let s = spec([0.45, 0.3, 0.25]);
        let o = optimize(&s, 0.1, 0).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                for k in 0..=10 {
                    let a = [i, j, k].map(|v| v as f64 / 10.0);
                    let (e, _) = inner_lp(&a.map(|p| [p, 1.0 - p]), &s).unwrap();
                    assert!(e >= o.eps_c - 1e-9);
                }
            }
        }
    }

    #[test]
    fn penalty_monotonicity() {
        let g = [0.45, 0.3, 0.25];
        let base = optimize(&spec(g), 0.1, 1).unwrap().eps_c;
        let more_k1 = optimize(&GameSpec::new(g, 0.5, 1.0, UNIFORM).unwrap(), 0.1, 1)
            .unwrap()
            .eps_c;
        let more_k2 = optimize(&GameSpec::new(g, 1.0 / 3.0, 2.0, UNIFORM).unwrap(), 0.1, 1)
            .unwrap()
            .eps_c;
        assert!(more_k1 >= base - 1e-12 && more_k2 >= base - 1e-12);
    }

    #[test]
    fn permutation_invariance_of_classical_value() {
        let g = [0.45, 0.3, 0.25];
        let base = optimize(&spec(g), 0.05, 2).unwrap().eps_c;
        for perm in PERMUTATIONS {
            let e = optimize(&spec(permute_triple(g, perm)), 0.05, 2)
                .unwrap()
                .eps_c;
            assert!((e - base).abs() < 2e-3, "{perm:?}: {e} vs {base}");
        }
    }

    #[test]
    fn bad_grid_step_rejected() {
        assert!(optimize(&spec(UNIFORM), 0.0, 0).is_err());
        assert!(optimize(&spec(UNIFORM), 0.7, 0).is_err());
    }

    fn arb_table() -> impl Strategy<Value = ClassicalStrategy> {
        (
            proptest::array::uniform3(0.0f64..=1.0),
            proptest::array::uniform2(proptest::array::uniform3(0.01f64..1.0)),
        )
            .prop_map(|(a, r)| {
                let receiver = r.map(|row| {
                    let s: f64 = row.iter().sum();
                    let mut out = row.map(|v| v / s);
                    out[2] = 1.0 - out[0] - out[1];
                    out
                });
                ClassicalStrategy::from_bit0_probs(a, receiver).unwrap()
            })
    }

    proptest! {
        #[test]
        fn message_swap_leaves_quality_unchanged(cs in arb_table()) {
            let s = spec([0.4, 0.35, 0.25]);
            let a = quality_index(&visit_matrix(&cs), &s);
            let b = quality_index(&visit_matrix(&cs.message_swapped()), &s);
            prop_assert!((a - b).abs() < 1e-14);
            let (ea, _) = inner_lp(cs.sender(), &s).unwrap();
            let (eb, _) = inner_lp(cs.message_swapped().sender(), &s).unwrap();
            prop_assert!((ea - eb).abs() < 1e-9);
        }

        #[test]
        fn inner_lp_never_beaten_by_given_receiver(cs in arb_table()) {
            let s = spec([0.5, 0.3, 0.2]);
            let (e, _) = inner_lp(cs.sender(), &s).unwrap();
            prop_assert!(e <= quality_index(&visit_matrix(&cs), &s) + 1e-9);
        }
    }
}
