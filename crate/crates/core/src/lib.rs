//! Surrogate modeling of crash injury metrics.
//!
//! Crash simulations are expensive: a single sled run with a full human body
//! model takes hours. This crate trains an exact Gaussian-process surrogate on
//! a small campaign of such runs (two inputs: occupant torso angle and D-ring
//! height; two outputs: HIC15 and the peak T1 x-acceleration), refines it
//! where its own predictive variance says it is least certain, and then pushes
//! a large Latin-hypercube sample of the input space through the posterior
//! mean to report injury-metric distributions and risk statistics.
//!
//! The pieces, bottom to top:
//!
//! - [`campaign`]: the run ledger — case records, the bundled 27-run dataset,
//!   CSV ingest/export, and the design box that maps raw inputs to the unit
//!   square.
//! - [`gp`]: exact GP regression with a Matérn kernel — fitting by multi-start
//!   maximum likelihood, prediction with variance, marginal likelihood.
//! - [`adaptive`]: variance-ranked proposal of new simulation points, the
//!   accuracy gate against fresh runs, and the propose/evaluate/augment loop.
//! - [`uq`]: Latin hypercube sampling, posterior-mean pushforward, and
//!   distribution summaries (mean/std/mode/min/max and Value at Risk).

pub mod adaptive;
pub mod campaign;
pub mod gp;
pub mod uq;

pub use campaign::{DesignBox, InputPoint, Ledger, Metric, RunRecord};
pub use gp::{FitConfig, GpModel, Prediction};
