//! Numerical laboratory for slow-fast jump diffusions.
//!
//! The crate simulates a two-time-scale SDE pair driven by a compensated
//! Poisson random measure, estimates the averaged dynamics of the slow
//! variable, evaluates the entropy action functional of jump controls with
//! its skeleton paths and quasi-potential, and runs first-exit (Kramers)
//! experiments, plus a pure-jump tail-scale toy model. All randomness flows
//! through explicitly seeded ChaCha streams so every experiment is
//! reproducible independently of worker count.

/// Crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod action;
pub mod averaging;
pub mod domain;
pub mod error;
pub mod kramers;
pub mod levy;
pub mod msde;
pub mod ode;
pub mod prm;
pub mod quad;
pub mod report;
pub mod rng;
pub mod stats;
pub mod system;
pub mod toyldp;

pub use action::{
    entropy, potential_height, quasi_potential, rate_function, signed_band_cells,
    solve_skeleton, ActionResult, BoundaryScan, HorizonOutcome, OptConfig,
    QuasiPotentialResult, RateTarget, SkeletonPath,
};
pub use averaging::{
    abar_table, averaging_experiment, estimate_invariant, estimate_mixing, invariant_cf_check,
    solve_averaged_ode, AbarTable, AveragingExperimentConfig, CfPoint, Comparator, EpsOutcome,
    InvariantEstimate, MixingEstimate,
};
pub use domain::Domain;
pub use error::{Error, Result};
pub use kramers::{
    check_inward_drift, concentration_nondecreasing, exit_locus_histogram, kramers_regression,
    records_to_csv, run_exit_trials, EpsAggregate, ExitExperimentConfig, ExitRecord,
    KramersRegression, LocusBin, LocusHistogram,
};
pub use levy::{Annulus, LevyMeasureSpec, MarkSampler, MeasureFamily};
pub use msde::{
    frozen_block_length, AuxiliaryPair, AveragedSystem, PathPair, SeedLineage, SimEngine, SlowPath,
};
pub use prm::{ControlGrid, JumpEvent, JumpStream, MarkCell, Side};
pub use report::{NamedCheck, ValidationReport};
pub use rng::{stream_rng, Rng, StreamKind};
pub use system::{check_hypotheses, SystemCoefficients};
pub use toyldp::{
    big_jump_scale, big_jump_scale_csv, neglected_small_variance, reference_integrals,
    simulate_toy, single_jump_tail, small_jump_scale, small_jump_scale_csv, tail_csv, trials_csv,
    BigJumpScale, BigJumpScalePoint, ReferenceIntegrals, SmallJumpScale, SmallJumpScalePoint,
    TailPoint, ToyModelConfig, ToyTrial,
};
