//! Phases of matrices and MIMO LTI systems, phase-based synchronization
//! analysis for heterogeneous multi-agent networks, and controller synthesis.

pub mod analysis;
pub mod error;
pub mod io;
pub mod linalg;
pub mod ltisys;
pub mod netgraph;
pub mod phasecore;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::{CMatrix, RMatrix};
