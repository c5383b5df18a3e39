//! Scalar-diffraction model of a log-polar OAM mode sorter.
//!
//! A ring beam carrying `exp(i·ell·phi)` passes two refractive elements that map
//! azimuth onto a transverse coordinate, turning the helical phase into a tilt.
//! A lens then focuses each tilt to its own spot. An optional three-way fan-out
//! grating with a phase corrector lengthens the unwrapped strip and narrows the
//! spots, which reduces neighbour crosstalk.
//!
//! - [`field`]: sampled fields, ring-mode generation, free-space and lens transforms.
//! - [`sorter`]: element phases, the simulated chain and crosstalk.
//! - [`fanout`]: design and evaluation of the continuous-phase splitter.
//! - [`export`]: mask and crosstalk writers.
//! - [`misalign`]: synthetic defocus/tilt phases for the sorted modes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod fanout;
pub mod field;
pub mod misalign;
pub mod sorter;

pub use error::{Error, Result};
pub use fanout::{design_fanout, FanoutDesign, FanoutSpec};
pub use field::{lens_ft, make_oam_field, propagate, GridSpec, ScalarField};
pub use sorter::{crosstalk_matrix, CrosstalkReport, Sorter, SorterGeometry, SorterSetup};

pub use num_complex::Complex64 as C64;
