//! Simulated measurement chain: instrument calibration, pulse tomography with
//! shot noise, and eigenvalue extraction from the measured time series.

pub mod calibration;
pub mod extraction;
pub mod fitting;
pub mod pipeline;
pub mod tomography;

pub use calibration::{calibrate_rate, CalibratedRate, CalibrationCurve, CalibrationError, CalibrationKind};
pub use extraction::{extract_eigenvalues, EigenvalueEstimate, ExtractionError, ExtractionOptions, ModeEstimate, OrderReduction};
pub use fitting::{dephasing_model, fit_dephasing_rabi, fit_exponential_decay, DecayFit, DephasingFit, FitError};
pub use tomography::{apply_rotation, reconstruct_state, rotation, simulate_measurement, tomography, Basis, PeEstimate, Reconstruction, Shots, TomographyResult};
pub use pipeline::{run_figure_pipeline, ExperimentRow, ObservableSet, PipelineConfig, PipelineError, PipelineOutput, RowFlags, TheoryRow};
