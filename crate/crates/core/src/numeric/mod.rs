//! Dense linear algebra, seeded randomness, reverse-mode differentiation and
//! optimizers.

pub mod linalg;
pub mod matrix;
pub mod optim;
pub mod rng;
pub mod tape;

pub use linalg::{sqrtm_psd, sym_eig, SymEig};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig};
pub use rng::RngStream;
pub use tape::{Gradients, NodeId, Tape};
