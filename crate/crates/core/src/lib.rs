//! Joint embedding, action and prediction agent: a causal transformer over
//! interleaved egocentric image tokens and body-pose action tokens, trained
//! against an EMA observer, plus the synthetic world and evaluation protocols
//! used to exercise it.

pub mod backbone;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod objectives;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod train;
pub mod world;

pub use error::{CoreError, Result};
