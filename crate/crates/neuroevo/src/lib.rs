//! Neuroevolution toolkit: trains fixed-topology tanh networks with
//! Differential Evolution and CMA-ES, with optional symmetry breaking of the
//! hidden-layer parameter space, plus a benchmark harness with statistical
//! reporting.

pub mod data;
pub mod error;
pub mod evolve;
pub mod harness;
pub mod mat;
pub mod net;
pub mod stats;
pub mod symmetry;

pub use error::{Error, Result};
pub use net::{Layout, OutputMode, ParamVector, Topology};
