//! Graph information bottleneck: recognise a compact, label-informative
//! subgraph of an input graph by bi-level optimisation of a classification
//! loss, a Donsker–Varadhan mutual-information estimate and a connectivity
//! penalty.

pub mod case_study;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod gnn;
pub mod graph_io;
pub mod mi;
pub mod optim;
pub mod rng;
pub mod subgraph;
pub mod tensor;
pub mod trainer;

pub use error::{GibError, Result};
pub use tensor::{Gradients, Tape, Tensor, Var};
