//! Protograph batched network codes: construction, density evolution and
//! decoding.

pub mod error;
pub mod gf;
pub mod io;
pub mod codec;
pub mod de;
pub mod network;
pub mod optimizer;
pub mod protograph;
pub mod sim;

pub use error::{Error, Result};
pub use gf::{FieldSpec, Gf, GfMatrix};
pub use network::{DistFamily, LineNetworkSpec, RankDistribution};
pub use protograph::{LiftedCode, Protomatrix, PuncturingVector};
