//! Sparse polynomial chaos surrogates via compressed sensing and D-optimal
//! experimental design.
//!
//! The crate builds total-order Legendre/Hermite bases, draws candidate
//! pools by standard Monte Carlo or coherence-optimal MCMC sampling,
//! selects D-optimal designs with column-pivoted QR (optionally after an
//! SVD subset-selection step), and recovers sparse coefficient vectors with
//! subspace pursuit — including the sequential, design-adaptive DSP solver
//! that grows the experimental design one D-optimally chosen point at a
//! time under a fixed evaluation budget. An experiment harness reproduces
//! the strategy-comparison benchmarks at configurable scale.

pub mod basis;
pub mod design;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod models;
pub mod sampling;
pub mod solvers;

pub use basis::{BasisSpec, Family};
pub use design::{
    augment, det_ratio_check, phi_d, phi_d_normalized, rrqr_select, subset_select, Design,
    InfoMatrix,
};
pub use error::{Error, Result};
pub use harness::{
    aggregate, cdf_study, oracle_solution, relative_validation_error, CdfStudy, ConfigFile,
    Experiment, ExperimentConfig, ExperimentOutput, ExperimentReport, ModelSpec, RepRecord,
    Strategy,
};
pub use models::{
    duffing_qoi, ishigami, manufacture, wing_weight, ManufacturedProblem, PhysicalModel,
};
pub use sampling::{
    coherence, sample_coherence_optimal, sample_pool, sample_standard, McmcParams, RngStream,
    SamplePool, SamplingStrategy,
};
pub use solvers::{
    cross_validate_k, dsp, dsp_cv, lsa, subspace_pursuit, CandidateSet, CvParams, CvResult,
    PoolOracle, SparseSolution,
};
