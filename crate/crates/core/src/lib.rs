//! Numerical laboratory for decay of correlations in nonuniformly expanding
//! semiflows: induced maps, Young towers, truncation, twisted transfer
//! operators, renewal sequences and periodic-orbit tests.

pub mod acceptance;
pub mod error;
pub mod fit;
pub mod maps;
pub mod periodic;
pub mod quadrature;
pub mod roof;
pub mod scalar;
pub mod suspension;
pub mod tower;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MapModel64 = maps::MapModel<f64>;
pub type InducedMap64 = maps::InducedMap<f64>;
pub type MapModel32 = maps::MapModel<f32>;
pub type InducedMap32 = maps::InducedMap<f32>;
pub type Tower64 = tower::Tower<f64>;
pub type TruncatedTower64 = tower::TruncatedTower<f64>;
