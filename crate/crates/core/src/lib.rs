//! Symbolic regression by differentiable Cartesian Genetic Programming.
//!
//! Candidate expressions are CGP chromosomes whose ephemeral constants are
//! learned during evolution with one Newton step per generation, using exact
//! gradients and Hessians from a second-order dual-number algebra. A
//! multi-objective memetic strategy keeps a population that trades training
//! loss against expression complexity and reports its non-dominated front.
//!
//! Module map:
//!
//! * [`dual`] – `D2Scalar` and the kernel set
//! * [`cgp`] – chromosome encoding, active nodes, mutation, evaluation, infix
//! * [`loss`] – MSE, derivative report and the Newton step
//! * [`momes`] – non-dominated sorting, crowding, runs and multi-starts
//! * [`datasets`], [`baseline`], [`metrics`] – CSV ingestion, scaling, the
//!   linear reference model and evaluation metrics
//! * [`cli`] – the `momes` command-line tool

pub mod baseline;
pub mod cgp;
pub mod cli;
pub mod dataset;
pub mod datasets;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod momes;

pub use cgp::{CgpParams, ConstFormat, ConstInit, Genotype, Program};
pub use dataset::{Bounds, ColumnScaling, Dataset};
pub use dual::{D2Scalar, Kernel, KernelSet, Scalar};
pub use error::{Error, Result};
pub use loss::{loss_with_derivatives, mse_loss, newton_step, LossReport};
pub use momes::{
    multi_start, non_dominated_sort, run, FrontMember, Individual, MomesConfig, ParetoFront,
    RunLog,
};
