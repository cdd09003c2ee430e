//! Qubit versus classical-bit communication in the three-restaurant game.

#![allow(clippy::needless_range_loop)]

pub mod certify;
pub mod cstrategy;
pub mod experiment;
pub mod game;
pub mod polarimeter;
pub mod qmath;
pub mod qstrategy;
pub mod reference;
pub mod repro;
