//! Stochastic model of reflectance loss on concentrating-solar mirrors caused
//! by dust deposition.
//!
//! The crate is organised bottom-up:
//!
//! * [`optics`]: Mie efficiencies, phase functions and the optical weighting
//!   factor γ(D, φa) tabulated over particle diameter.
//! * [`dust`]: tri-modal log-normal prototype size distributions and their
//!   scaling to a measured mass concentration.
//! * [`deposition`]: deposition velocity, critical removal diameter and the
//!   area-loss kernel μ(w, T; hrz0).
//! * [`loss_model`]: reflectance, incidence factors and Gaussian moments of
//!   reflectance changes for the semi-physical and constant-mean variants.
//! * [`estimation`]: exact log-likelihood, Nelder–Mead maximisation and
//!   Fisher-information confidence intervals.
//! * [`daily_loss`]: daily dust-loading sums and daily-loss distributions.
//! * [`campaign_io`]: CSV/JSON ingestion and fit-dataset assembly.

pub mod campaign_io;
pub mod daily_loss;
pub mod deposition;
pub mod dust;
pub mod error;
pub mod estimation;
pub mod loss_model;
pub mod optics;
pub mod quadrature;

pub use error::{Error, Result};
