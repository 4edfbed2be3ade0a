//! Bispectral analysis toolkit.
//!
//! The crate estimates bispectra and bicoherence from a windowed complex
//! demodulation of the input, treats phase-amplitude coupling as one member of
//! a family of bispectral estimators with mixed narrow/broad windows, and
//! interprets the resulting planes (outside/inside regions, harmonic lattices,
//! time delays, AM vs FM peak phases).
//!
//! Modules:
//! - [`demod`]: filter bank design and the band × frame decomposition.
//! - [`polyspec`]: bispectral accumulation, normalization, bias correction,
//!   symmetry expansion, cross and k-mode variants, and a segmented-FFT
//!   reference estimator.
//! - [`pac`]: phase-power coherence and its bispectral counterpart.
//! - [`simgen`]: seedable synthetic signals.
//! - [`features`]: region scores, lattice detection, delay recovery.
//! - [`arrayfile`] and [`cli`]: file formats and the command-line front end.

pub mod arrayfile;
pub mod cli;
pub mod demod;
pub mod error;
pub mod features;
mod fft;
pub mod pac;
pub mod polyspec;
pub mod simgen;

pub use num_complex::Complex64;

pub use demod::{demodulate, design_bank, window_samples, BandSpec, Decomposition, Signal, WindowKind};
pub use error::{Error, Result};
pub use features::{FeatureReport, RegionPartition};
pub use pac::PacGrid;
pub use polyspec::{Bicoherence, BispecGrid, EstimatorKind, Normalization, Variant};
pub use simgen::SimRecipe;
