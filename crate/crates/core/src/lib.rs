//! Witness-overlap similarity treated as an information-theoretic system.
//!
//! * [`witness`]: witness sets and distributions, entropy, overlap and the
//!   overlap/mutual-information relations.
//! * [`encoder`]: seeded hash families, OR-encoded binary codes and the
//!   collision-expectation model.
//! * [`channel`]: the hash channel, KL-divergence capacity and required code
//!   length.
//! * [`ranking`]: planted-gap datasets, top-k retrieval, error-rate estimation
//!   and minimal code-length search.
//! * [`bounds`]: binary entropy, ranking rate-distortion, the converse bound
//!   and scaling regressions.
//! * [`experiment`]: sweep configuration, execution and CSV/JSON output.
//! * [`acceptance`]: the end-to-end verification criteria.

pub mod acceptance;
pub mod bounds;
pub mod channel;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod ranking;
pub mod seed;
pub mod witness;

pub use error::{Result, RewaError};
