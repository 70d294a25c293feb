//! Two-level open quantum system with amplitude decay and pure dephasing:
//! Liouvillian construction, spectrum, exceptional points, time evolution and
//! a simulated tomography pipeline.

pub mod lindblad;
pub mod linalg;
pub mod spectral;
pub mod ep;
pub mod dynamics;
pub mod expsim;

pub use lindblad::{build_liouvillian, DensityMatrix, Liouvillian4, ParamError, StateError, SystemParams, C64};
pub use spectral::{eigen_full, eigenvalues_closed_form, steady_state, SpectralError, Spectrum};
