//! Maximal displacement of subcritical branching random walks on the integers:
//! exact tail tables, first-passage generating functions, Monte Carlo
//! estimators and the diagnostics that compare them.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod model;
pub mod roots;
pub mod simulate;
pub mod modelfile;
pub mod builtin;

pub use error::{BrwError, Result};
pub use model::{JumpDistribution, MeanMode, Mode, ModelSpec, OffspringDistribution};
