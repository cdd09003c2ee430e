//! Published reference values for the ten experimental games, shipped as
//! `data/published_tables.json`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::game::GameSpec;
use crate::qmath::{BlochVector, PureState};
use crate::qstrategy::QuantumStrategy;

const RAW: &str = include_str!("../data/published_tables.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub note: String,
    pub version: u32,
    pub k1: f64,
    pub k2: f64,
    /// Reflected-arm wave plates, shared by all games.
    pub u3_angles_deg: [f64; 3],
    pub games: Vec<ReferenceGame>,
}

/// One row of each table, merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGame {
    pub game: usize,
    pub gamma: [f64; 3],
    pub p_noisy: [f64; 3],
    pub eps_q_ideal: f64,
    pub eps_q_noisy: f64,
    pub eps_c: f64,
    /// Bloch vectors as printed (three decimals, not exactly unit length).
    pub encodings: [[f64; 3]; 3],
    pub encoder_angles_deg: [[f64; 3]; 3],
    pub mo_weights: [f64; 3],
    pub u2_angles_deg: [f64; 3],
}

pub fn reference_data() -> &'static ReferenceData {
    static DATA: OnceLock<ReferenceData> = OnceLock::new();
    DATA.get_or_init(|| serde_json::from_str(RAW).expect("embedded reference data parses"))
}

impl ReferenceGame {
    pub fn spec(&self) -> GameSpec {
        let r = reference_data();
        GameSpec::new(self.gamma, r.k1, r.k2, crate::game::UNIFORM).expect("reference γ is valid")
    }

    pub fn bloch_vectors(&self) -> [BlochVector; 3] {
        self.encodings.map(|[x, y, z]| BlochVector::raw(x, y, z))
    }

    /// The printed strategy: encodings normalized onto the sphere, effects
    /// λ_j|ψ_j^⊥⟩⟨ψ_j^⊥| with the printed weights. Rounding means it is only
    /// approximately a POVM.
    pub fn table_strategy(&self) -> QuantumStrategy {
        let states = self
            .bloch_vectors()
            .map(|b| PureState::from_bloch(&b).expect("nonzero Bloch vector"));
        QuantumStrategy::new_unchecked(states, self.mo_weights)
    }

    /// Angles between the encoded Bloch vectors, pairs (1,2), (2,3), (1,3).
    pub fn pairwise_angles_deg(&self) -> [f64; 3] {
        let n = self.bloch_vectors();
        [(0, 1), (1, 2), (0, 2)].map(|(i, j)| n[i].angle_deg(&n[j]))
    }
}
