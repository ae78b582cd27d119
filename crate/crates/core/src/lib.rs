//! Mesh-free solver for linear PDEs based on random feature bases.
//!
//! The solver approximates the solution as a partition-of-unity blend of
//! per-subdomain random feature expansions and determines the output
//! coefficients from one dense least-squares system. Two pipelines are
//! provided:
//!
//! * the **weak** pipeline pairs the residual against windowed-sine test
//!   functions per subdomain, so solutions with kinks or jumps (weak
//!   solutions) are admissible;
//! * the **strong** pipeline is the classical collocation baseline that
//!   enforces the PDE pointwise.
//!
//! Five built-in benchmark problems with closed-form weak references live in
//! [`problems`]; the `wrfm` binary in the companion CLI crate drives runs,
//! sweeps and self-validation from config files.

pub mod assembly;
pub mod basis;
pub mod config;
pub mod error;
pub mod geometry;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod testfn;
pub mod validate;

pub use assembly::{AssembledSystem, CategoryWeights, RescaleMode, RowCategory, RowTag};
pub use basis::{Activation, GlobalModel, PartitionOfUnity, PouKind, RandomFeature, SubdomainBasis};
pub use config::{ConfigFile, Pipeline, ResolvedConfig};
pub use error::{Error, Result};
pub use geometry::{AxisBox, Decomposition, Domain, Exclusion, InterfaceFace, Subdomain};
pub use problems::{builtin, MetricsReport, ProblemSpec, SweepRow};
pub use quadrature::TensorRule;
pub use solver::{least_squares, run_problem, run_sweep, solve_problem, SolveReport};
pub use testfn::{LinearOperator, TestFunction, TestSet, WindowFunction};
