//! Random spanning forests on weighted directed graphs, the coarse-graining
//! they induce, and intertwining wavelets built on top.
//!
//! * [`graph`]: networks, generators, invariant measures and norms.
//! * [`oracle`]: exact determinantal and spectral formulas.
//! * [`sampler`]: Wilson's algorithm and Monte-Carlo estimators.
//! * [`coarse`]: trace processes, linking operators, intertwining diagnostics.
//! * [`wavelets`]: one-level filter bank, pyramids, compression, stability bounds.
//! * [`io`]: edge lists, signals, PGM images, forests.

pub mod coarse;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod sampler;
pub mod tol;
pub mod wavelets;

pub use coarse::{LinkOperator, LinkSource, ReducedNetwork};
pub use error::{Error, Result};
pub use graph::{Edge, Exponent, Measure, Network, NetworkOptions};
pub use sampler::{MRootsSample, RootedForest, SampleStats};
pub use wavelets::{Pyramid, PyramidConfig};
