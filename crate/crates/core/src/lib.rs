//! Gain-dependent error propagation for behavior-cloned policies running
//! under PD control.
//!
//! A policy's action error `ξ_t` enters the joint-space error dynamics scaled
//! by the stiffness gain, is propagated by the sampled closed loop, and shows
//! up as a position error `e_t`. This crate computes how the PD gains shape
//! that propagation:
//!
//! * [`dynamics`]: linearized error dynamics and exact zero-order-hold sampling.
//! * [`lyapunov`]: finite- and infinite-horizon proxy matrices.
//! * [`bounds`]: amplification index, sub-Gaussian tail and failure bounds.
//! * [`canonical`]: single-joint closed forms, the ordering index and the
//!   four-regime comparison.
//! * [`montecarlo`]: seeded ensemble simulation for empirical checks.
//! * [`experiments`]: end-to-end tables and figure data.
//! * [`cli`]: the `gainbound` command-line entry point.
//!
//! ```
//! use gainbound::dynamics::{discretize, GainSetting, PlantModel};
//! use gainbound::lyapunov::stationary_proxy;
//! use nalgebra::DMatrix;
//!
//! let plant = PlantModel::scalar(1.0, 0.02)?;
//! let co = discretize(&plant, &GainSetting::scalar(50.0, 40.0)?)?;
//! let su = discretize(&plant, &GainSetting::scalar(100.0, 20.0)?)?;
//! let sigma = DMatrix::identity(1, 1);
//! let x_co = stationary_proxy(&co, &sigma)?.x[(0, 0)];
//! let x_su = stationary_proxy(&su, &sigma)?.x[(0, 0)];
//! assert!(co.spectral_radius() > su.spectral_radius());
//! assert!(x_co < x_su / 3.9);
//! # Ok::<(), gainbound::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod canonical;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lyapunov;
pub mod montecarlo;
pub mod output;

pub use error::{Error, Result};
