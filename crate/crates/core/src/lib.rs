//! Simulation and analysis of the direct measurement of an orbital-angular-momentum
//! (OAM) state vector through sequential weak (OAM) and strong (angular position)
//! measurements, read out with a polarization pointer.
//!
//! The crate is organised bottom-up:
//!
//! - [`state`]: OAM state vectors, the angular-position conjugate basis, test states.
//! - [`weak`]: the projector/pointer coupling, post-selection and weak-value extraction.
//! - [`detection`]: photon counting with shot noise and dark counts, multi-run averaging.
//! - [`analysis`]: renormalisation of weak-value scans and the model fits.
//! - [`io`]: CSV import/export of states, scans, count records and reconstructions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detection;
pub mod error;
pub mod io;
pub mod state;
pub mod weak;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
