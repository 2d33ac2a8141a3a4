//! Systematic-shift laws shared by the simulator (to inject) and the
//! analysis (to correct): electric quadrupole shift tied to the axial trap
//! frequency, and the quadratic Zeeman shift tied to the applied field.

use serde::{Deserialize, Serialize};

/// 40Ca+ ion mass: isotope atomic mass minus one electron, in kg.
pub const CA40_ION_MASS_KG: f64 = (39.962_590_863 - 5.485_799_090_7e-4) * 1.660_539_066_60e-27;
pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;

/// Calibration constants for the two corrected systematics.
///
/// The quadrupole law is `shift = quad_hz_per_v_mm2 * E'` with the field
/// gradient `E' = m omega_z^2 / e` from the axial confinement; the
/// quadratic Zeeman law is pinned by its value at the reference field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystematicsCalibration {
    /// Quadrupole sensitivity to the electric field gradient, Hz mm^2 / V.
    pub quad_hz_per_v_mm2: f64,
    /// Quadratic Zeeman shift at the reference field, Hz.
    pub zeeman_ref_shift_hz: f64,
    /// Reference magnetic field, gauss.
    pub zeeman_ref_field_g: f64,
}

impl Default for SystematicsCalibration {
    fn default() -> Self {
        Self {
            quad_hz_per_v_mm2: 4.0,
            zeeman_ref_shift_hz: 8.9,
            zeeman_ref_field_g: 3.930,
        }
    }
}

impl SystematicsCalibration {
    /// Quadratic Zeeman shift at field `b_g` (gauss), in Hz.
    pub fn zeeman_shift_hz(&self, b_g: f64) -> f64 {
        let r = b_g / self.zeeman_ref_field_g;
        self.zeeman_ref_shift_hz * r * r
    }

    /// Linearised Zeeman slope at `b_g`, in mHz per mG.
    pub fn zeeman_slope_mhz_per_mg(&self, b_g: f64) -> f64 {
        2.0 * self.zeeman_ref_shift_hz * b_g / (self.zeeman_ref_field_g * self.zeeman_ref_field_g)
    }

    /// Electric field gradient from the axial trap frequency, V/mm^2.
    pub fn efield_gradient_v_mm2(&self, f_axial_khz: f64) -> f64 {
        let omega = std::f64::consts::TAU * f_axial_khz * 1e3;
        CA40_ION_MASS_KG * omega * omega / ELEMENTARY_CHARGE_C * 1e-6
    }

    /// Quadrupole shift at the given axial frequency, Hz.
    pub fn quadrupole_shift_hz(&self, f_axial_khz: f64) -> f64 {
        self.quad_hz_per_v_mm2 * self.efield_gradient_v_mm2(f_axial_khz)
    }

    /// Linearised quadrupole slope at `f_axial_khz`, in mHz per kHz.
    pub fn quadrupole_slope_mhz_per_khz(&self, f_axial_khz: f64) -> f64 {
        // shift ~ f^2, so d(shift)/df = 2 shift / f; convert Hz/kHz -> mHz/kHz
        2.0 * self.quadrupole_shift_hz(f_axial_khz) / f_axial_khz * 1e3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn efield_gradient_at_operating_point() {
        let cal = SystematicsCalibration::default();
        assert_relative_eq!(cal.efield_gradient_v_mm2(210.0), 0.721, max_relative = 1e-3);
    }

    #[test]
    fn quadrupole_shift_at_operating_point() {
        let cal = SystematicsCalibration::default();
        assert_relative_eq!(cal.quadrupole_shift_hz(210.0), 2.884, max_relative = 1e-3);
    }

    #[test]
    fn quadrupole_slope_matches_calibration() {
        let cal = SystematicsCalibration::default();
        let slope = cal.quadrupole_slope_mhz_per_khz(210.0);
        assert!((slope - 27.5).abs() < 0.1, "slope = {slope}");
        // inside the measured 27 +/- 12 mHz/kHz window
        assert!(slope > 15.0 && slope < 39.0);
        // finite-difference cross-check of the analytic slope
        let fd = (cal.quadrupole_shift_hz(210.5) - cal.quadrupole_shift_hz(209.5)) * 1e3;
        assert_relative_eq!(slope, fd, max_relative = 1e-4);
    }

    #[test]
    fn zeeman_shift_and_slope() {
        let cal = SystematicsCalibration::default();
        assert_eq!(cal.zeeman_shift_hz(3.930), 8.9);
        let slope = cal.zeeman_slope_mhz_per_mg(3.930);
        assert!((slope - 4.5).abs() < 0.05, "slope = {slope}");
        // one more digit: 4.53 mHz/mG
        assert_relative_eq!(slope, 4.529, max_relative = 1e-3);
        // finite difference in mG
        let fd = (cal.zeeman_shift_hz(3.9305) - cal.zeeman_shift_hz(3.9295)) * 1e3;
        assert_relative_eq!(slope, fd, max_relative = 1e-6);
    }
}
