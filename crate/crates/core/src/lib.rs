//! Resonant quintic NLS on `R x T^d`: resonance sets, the resonant
//! nonlinearity, its Hamiltonian flow, and the diagnostics used to study
//! scattering and the cylinder approximation.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
#[doc(hidden)]
pub mod faults;
pub mod grid;
pub mod nonlinearity;
pub mod numerics;
pub mod random;
pub mod resonance;
pub mod verify;

pub use error::{Error, Result};
pub use faults::Faults;
pub use grid::{Grid1D, ModeLayout, NormSpec, SpectralField};
pub use resonance::{Dim, ModeIndex, ResonanceTable, ResonantTuple};
