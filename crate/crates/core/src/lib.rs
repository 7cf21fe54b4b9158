//! Reconstruction of orbital-angular-momentum (OAM) superposition states from
//! intensity images.
//!
//! The crate simulates Laguerre-Gauss intensity profiles ([`optics`]), encodes
//! qudit states as generalized Gell-Mann Bloch vectors ([`statespace`]),
//! compresses images with principal component analysis ([`reduce`]) and maps
//! the compressed images to Bloch vectors with a linear or extra-trees
//! regressor ([`regress`]). [`pipeline`] ties these together: dataset
//! generation, two-image training, fidelity evaluation and the analyses used
//! to study the intensity conjugation degeneracy.

pub mod container;
pub mod error;
pub mod optics;
pub mod pipeline;
pub mod reduce;
pub mod regress;
pub mod statespace;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Crate version recorded in every written artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
