//! Stratified Monte Carlo sampling and sort-then-stratify simulation of
//! Markov chains.
//!
//! * [`sampling`]: MC, SMC, Latin hypercube and Sudoku point sets.
//! * [`integration`]: indicator estimates, exact references and variance bounds.
//! * [`chain`]: parallel chain simulation with nested relabeling.
//! * [`finance`]: European and geometric Asian call chains with closed forms.
//! * [`bench`]: replication harness, order fits and CSV output.

pub mod bench;
pub mod chain;
pub mod error;
pub mod finance;
pub mod integration;
pub mod rng;
pub mod sampling;

pub use bench::{ConvergenceReport, Experiment, ExperimentConfig};
pub use chain::{Ensemble, FnModel, MarkovModel, MultiIndex};
pub use error::{Error, Result};
pub use finance::{GbmParams, OptionSpec, OptionStyle};
pub use integration::{EstimateResult, HyperInterval, IndicatorDomain, Subgraph};
pub use rng::{SeededStream, Substreams};
pub use sampling::{PointSet, SamplerKind, SudokuBijections};
