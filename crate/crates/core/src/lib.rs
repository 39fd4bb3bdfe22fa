//! Brownian hard balls with smooth pair and one-body interactions.
//!
//! The dynamics is the Skorohod-type SDE in which every pair of balls of
//! diameter `r` reflects off the other at contact. It is discretised on
//! dyadic grids: the drift is frozen over each step and the reflection is
//! computed by a projected Gauss-Seidel Skorohod solver that also records
//! per-pair local-time increments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod diagnostics;
pub mod error;
pub mod fcp;
pub mod geometry;
pub mod gibbs;
pub mod harness;
pub mod integrator;
pub mod io;
pub mod noise;
pub mod potentials;
pub mod skorohod;
pub mod trajectory;

pub use cluster::{detect_clusters, guard_check, localized_simulate, ClusterPartition, LocalizeOptions, LocalizedRun};
pub use error::{Error, Result};
pub use fcp::{fcp_certificate, verify_witness, FcpOutcome, FcpRefusal, FcpWitness};
pub use geometry::{contact_pairs, normal_direction, validate, BallConfiguration, Boundary, ContactPair};
pub use gibbs::{gibbs_sample, reversibility_test, GibbsSamplerConfig, ReversibilityReport};
pub use integrator::{refinement_study, simulate_ske_n, simulate_ske_n_with, uniqueness_probe, SimulationOptions};
pub use noise::DyadicBrownianPath;
pub use potentials::{lipschitz_bound, ruelle_check, FreePotential, PairPotential, Potentials, RuelleCertificate};
pub use skorohod::{solve_path, solve_step, ProjectionSettings, ReflectionLedger};
pub use trajectory::Trajectory;
