//! Aligning class-name embeddings with visual prototypes for few-shot
//! classification.
//!
//! The pipeline:
//!
//! 1. [`data`] loads class-name embeddings, frozen image features, the
//!    image → class assignment and the base/val/novel split.
//! 2. [`cem`] fits CCA or CCA with de-whitening between the name embeddings
//!    and the global class prototypes, giving projections `A` and `B`.
//! 3. [`scoring`] scores a query against each class of an episode: negative
//!    squared distance to the visual prototype, optionally plus `λ` times a
//!    cosine against a textual prototype ([`mapnet`] output or `nA`).
//! 4. [`episodes`] samples N-way K-shot tasks and reports mean accuracy with a
//!    95% confidence interval.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix `f64`.

pub mod analysis;
pub mod cem;
pub mod data;
pub mod episodes;
pub mod error;
pub mod linalg;
pub mod mapnet;
pub mod prototypes;
pub mod scalar;
pub mod scoring;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type Mat = linalg::Matrix<f64>;
pub type Projection = cem::ProjectionPair<f64>;
pub type Net = mapnet::MapNet<f64>;
pub type Prototypes = prototypes::PrototypeSet<f64>;
