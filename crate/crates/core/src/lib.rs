//! Relational-network outfit compatibility: a set scorer over precomputed
//! item features, its visual-semantic variant, training with Adam, and the
//! compatibility / fill-in-the-blank evaluation protocols.

pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod train;
