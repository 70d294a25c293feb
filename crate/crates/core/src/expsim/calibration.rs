//! Quadratic instrument-to-rate calibration curves.

use log::warn;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("{input} = {x} {unit} is outside the calibrated range [{lo}, {hi}] {unit}")]
    OutOfRange { input: &'static str, x: f64, lo: f64, hi: f64, unit: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationKind {
    /// Effective decay rate against repump laser power.
    DecayVsPower,
    /// Dephasing rate against injected noise amplitude.
    DephasingVsVpp,
}

/// rate = a·x² + b·x + c on a declared input range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCurve {
    pub kind: CalibrationKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub range: (f64, f64),
    pub input_unit: &'static str,
    pub output_unit: &'static str,
}

impl CalibrationCurve {
    /// γ₀ against laser power in µW. The range ends just below the vertex
    /// b/(2|a|) ≈ 10.1 µW, where the quadratic stops increasing.
    pub fn decay_vs_power() -> Self {
        Self {
            kind: CalibrationKind::DecayVsPower,
            a: -0.0643,
            b: 1.30,
            c: 0.244,
            range: (0.0, 10.0),
            input_unit: "uW",
            output_unit: "fit units",
        }
    }

    /// γ_φ against white-noise amplitude in Vpp.
    pub fn dephasing_vs_vpp() -> Self {
        Self {
            kind: CalibrationKind::DephasingVsVpp,
            a: 0.0882,
            b: 0.00940,
            c: -0.0201,
            range: (0.0, 5.0),
            input_unit: "Vpp",
            output_unit: "fit units",
        }
    }

    pub fn quadratic(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    fn input_name(&self) -> &'static str {
        match self.kind {
            CalibrationKind::DecayVsPower => "laser power",
            CalibrationKind::DephasingVsVpp => "noise amplitude",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedRate {
    pub rate: f64,
    /// The quadratic was negative at this setting and the rate was set to zero.
    pub clamped: bool,
}

pub fn calibrate_rate(curve: &CalibrationCurve, x: f64) -> Result<CalibratedRate, CalibrationError> {
    let (lo, hi) = curve.range;
    if !(x >= lo && x <= hi) {
        return Err(CalibrationError::OutOfRange { input: curve.input_name(), x, lo, hi, unit: curve.input_unit });
    }
    let raw = curve.quadratic(x);
    if raw < 0.0 {
        warn!("calibration quadratic is negative ({raw:.4}) at {x} {}; clamping rate to 0", curve.input_unit);
        return Ok(CalibratedRate { rate: 0.0, clamped: true });
    }
    Ok(CalibratedRate { rate: raw, clamped: false })
}
