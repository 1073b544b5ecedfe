//! Multiple imputation for cluster analysis of incomplete continuous data.
//!
//! The crate is organised along the stages of an imputation-based clustering
//! pipeline:
//!
//! - [`rand_dist`]: seeded draws from the distributions the samplers need.
//! - [`gmm`]: Gaussian mixture fitting, discriminant scoring and conditional draws.
//! - [`mechanisms`]: incomplete datasets and MCAR/MAR amputation.
//! - [`impute_jm`] and [`impute_fcs`]: joint-modelling and fully-conditional
//!   imputation engines.
//! - [`clustering`]: mixture, k-means, PAM and Ward clustering.
//! - [`pooling`]: consensus partitions, instability, ARI and choice of `K`.
//! - [`harness`]: simulation models, experiment runner and CSV formats.

pub mod clustering;
pub mod engine;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod impute_fcs;
pub mod impute_jm;
pub mod linalg;
pub mod mechanisms;
pub mod pooling;
pub mod rand_dist;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rand_dist::{ChainRng, RngSeed};
