//! Time-division energy beamforming for multi-receiver wireless power
//! transfer with nonlinear (sigmoid) energy harvesters.
//!
//! The crate is split into the harvester curve ([`eh_model`]), channel
//! generation ([`channel`]), the convex solvers ([`solver_kernels`]), the
//! transmission schemes built on them ([`schemes`]) and the Monte Carlo
//! experiment driver ([`harness`]).

pub mod channel;
pub mod eh_model;
pub mod error;
pub mod harness;
pub(crate) mod linalg;
pub mod schemes;
pub mod solver_kernels;

pub use channel::{ChannelModelParams, ChannelSet};
pub use eh_model::EhParams;
pub use error::{Error, Result};
pub use harness::ScenarioConfig;
pub use linalg::CMat;
pub use schemes::{AlgorithmSettings, InitStrategy, ReportStatus, Schedule, SchemeKind, Slot, SolveReport};
pub use solver_kernels::{Covariance, SolverCertificate, SolverStatus, SolverTolerances};
