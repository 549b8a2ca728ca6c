//! Simulation and signal processing for an OFDM radar that observes its
//! scene through a reconfigurable intelligent surface (RIS) while a second
//! radar interferes through the same surface.
//!
//! The modules follow the processing chain:
//!
//! * [`scene`]: scenario description and derived OFDM numerology.
//! * [`waveform`]: steering vectors, RIS configurations and frame synthesis.
//! * [`doa`]: direction finding with a MUSIC variant that treats the RIS
//!   time slots as the virtual array.
//! * [`risopt`]: learning RIS phases that suppress the interferer, plus the
//!   convolution notch.
//! * [`rvmap`]: range-velocity maps, target extraction and error sweeps.

pub mod config;
pub mod doa;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod risopt;
pub mod rvmap;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};
