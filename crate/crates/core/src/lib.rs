//! Corruption-averse advantage-weighted regression (CAWR) for offline RL.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: transitions, datasets, finite MDPs, behavior mixtures and the
//!   corrupted-dataset generator.
//! - [`approx`]: small differentiable approximators (MLP, linear, tabular).
//! - [`value`]: expectile value regression and TD regression of Q.
//! - [`loss`]: the robust policy-loss family (L2, L1, Huber, Flat, Skew).
//! - [`replay`]: advantage-based priorities, a sum tree and the dual-batch
//!   sampler.
//! - [`policy`]: advantage weights, the weighted robust regression objective
//!   and the training loop.
//! - [`oracle`]: exact reference computations used to verify closed forms and
//!   bounds on small problems. Never used by training.
//! - [`harness`]: configuration, dataset I/O, experiment orchestration and
//!   normalized scores.

// Negated comparisons are how NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod error;
pub mod harness;
pub mod loss;
pub mod mdp;
pub mod oracle;
pub mod par;
pub mod policy;
pub mod replay;
pub mod value;

pub use error::{Error, Result};
