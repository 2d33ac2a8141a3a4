//! Sun-frame to laboratory-frame transformations.
//!
//! The Lorentz-violating tensor is specified in the Sun-centred
//! celestial-equatorial frame (SCCEF). The laboratory rides on a rotating,
//! orbiting Earth, so the lab-frame combination `C02 = c_jj - 3 c_zz`
//! (z = local vertical, the quantisation axis) picks up time dependence at
//! the sidereal and annual frequencies and their mixing products. This
//! module evaluates that observable directly and as a closed-form harmonic
//! decomposition.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sidereal day, 23.93 h in seconds.
pub const SIDEREAL_DAY_S: f64 = 23.93 * 3600.0;
/// Sidereal year in seconds.
pub const SIDEREAL_YEAR_S: f64 = 365.256363 * 86400.0;
/// Vernal equinox 2014 (2014-03-20T16:57:00Z) as Unix seconds; the default
/// zero point for the sidereal phase.
pub const VERNAL_EQUINOX_2014_UTC_S: f64 = 1_395_334_620.0;

/// Symmetric Lorentz-violation tensor in the SCCEF.
///
/// Only the ten independent components are stored; symmetry is structural.
/// Components are dimensionless and in physical applications of order
/// 1e-18, but no magnitude constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CTensorSccef {
    #[serde(rename = "c_TT", default)]
    pub c_tt: f64,
    #[serde(rename = "c_TX", default)]
    pub c_tx: f64,
    #[serde(rename = "c_TY", default)]
    pub c_ty: f64,
    #[serde(rename = "c_TZ", default)]
    pub c_tz: f64,
    #[serde(rename = "c_XX", default)]
    pub c_xx: f64,
    #[serde(rename = "c_YY", default)]
    pub c_yy: f64,
    #[serde(rename = "c_ZZ", default)]
    pub c_zz: f64,
    #[serde(rename = "c_XY", default)]
    pub c_xy: f64,
    #[serde(rename = "c_XZ", default)]
    pub c_xz: f64,
    #[serde(rename = "c_YZ", default)]
    pub c_yz: f64,
}

impl CTensorSccef {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Spatial 3x3 block.
    pub fn spatial(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.c_xx, self.c_xy, self.c_xz, //
            self.c_xy, self.c_yy, self.c_yz, //
            self.c_xz, self.c_yz, self.c_zz,
        )
    }

    /// Time-space components (c_TX, c_TY, c_TZ).
    pub fn time_space(&self) -> Vector3<f64> {
        Vector3::new(self.c_tx, self.c_ty, self.c_tz)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.c_tt, self.c_tx, self.c_ty, self.c_tz, self.c_xx, self.c_yy, self.c_zz,
            self.c_xy, self.c_xz, self.c_yz,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument(
                "c tensor components must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c_tt: k * self.c_tt,
            c_tx: k * self.c_tx,
            c_ty: k * self.c_ty,
            c_tz: k * self.c_tz,
            c_xx: k * self.c_xx,
            c_yy: k * self.c_yy,
            c_zz: k * self.c_zz,
            c_xy: k * self.c_xy,
            c_xz: k * self.c_xz,
            c_yz: k * self.c_yz,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            c_tt: self.c_tt + other.c_tt,
            c_tx: self.c_tx + other.c_tx,
            c_ty: self.c_ty + other.c_ty,
            c_tz: self.c_tz + other.c_tz,
            c_xx: self.c_xx + other.c_xx,
            c_yy: self.c_yy + other.c_yy,
            c_zz: self.c_zz + other.c_zz,
            c_xy: self.c_xy + other.c_xy,
            c_xz: self.c_xz + other.c_xz,
            c_yz: self.c_yz + other.c_yz,
        }
    }
}

/// Geometry and epoch constants of the experiment site and the Earth's
/// motion. All angles in radians, rates in rad/s, the epoch in Unix
/// seconds. The epoch is a configuration value so reproductions can rebase
/// the sidereal phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Colatitude of the laboratory.
    pub chi_rad: f64,
    /// Obliquity of the ecliptic.
    pub eta_rad: f64,
    /// Sidereal angular frequency of the Earth's rotation.
    pub omega_sidereal_rad_s: f64,
    /// Annual (orbital) sidereal angular frequency.
    pub omega_annual_rad_s: f64,
    /// Orbital boost magnitude v_orbit/c.
    pub beta_orbital: f64,
    /// Equatorial rotational boost magnitude; the lab speed is
    /// `beta_rotation * sin(chi)`.
    pub beta_rotation: f64,
    /// Reference epoch (vernal equinox) in Unix seconds.
    pub epoch_utc_s: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            chi_rad: 52.1_f64.to_radians(),
            eta_rad: 23.4_f64.to_radians(),
            omega_sidereal_rad_s: std::f64::consts::TAU / SIDEREAL_DAY_S,
            omega_annual_rad_s: std::f64::consts::TAU / SIDEREAL_YEAR_S,
            beta_orbital: 1.0e-4,
            beta_rotation: 1.5e-6,
            epoch_utc_s: VERNAL_EQUINOX_2014_UTC_S,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_rad > 0.0 && self.chi_rad < std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "colatitude chi must be in (0, pi), got {}",
                self.chi_rad
            )));
        }
        if !(self.omega_sidereal_rad_s > self.omega_annual_rad_s && self.omega_annual_rad_s > 0.0)
        {
            return Err(Error::Config(
                "require omega_sidereal > omega_annual > 0".into(),
            ));
        }
        if self.beta_rotation < 0.0 || self.beta_orbital < 0.0 || self.beta_orbital >= 0.01 {
            return Err(Error::Config(
                "boosts must satisfy 0 <= beta and beta_orbital << 1".into(),
            ));
        }
        if self.beta_rotation > self.beta_orbital {
            return Err(Error::Config(
                "beta_rotation must not exceed beta_orbital".into(),
            ));
        }
        if !self.epoch_utc_s.is_finite() {
            return Err(Error::Config("epoch must be finite".into()));
        }
        Ok(())
    }
}

/// Rotation mapping SCCEF spatial vectors onto the lab axes
/// (x East, y North, z up) at time `t_s` since the configured epoch.
///
/// Orthonormal with det = +1 for all times; period is one sidereal day.
pub fn rotation_to_lab(t_s: f64, cfg: &FrameConfig) -> Matrix3<f64> {
    let (swt, cwt) = (cfg.omega_sidereal_rad_s * t_s).sin_cos();
    let (schi, cchi) = cfg.chi_rad.sin_cos();
    Matrix3::new(
        -swt,
        cwt,
        0.0, //
        -cchi * cwt,
        -cchi * swt,
        schi, //
        schi * cwt,
        schi * swt,
        cchi,
    )
}

/// Laboratory boost in SCCEF components: an orbital term at the annual
/// frequency tilted by the obliquity, plus the Earth-rotation term at the
/// sidereal frequency scaled by `beta_rotation * sin(chi)`.
pub fn boost_vector(t_s: f64, cfg: &FrameConfig) -> Vector3<f64> {
    let (s_ann, c_ann) = (cfg.omega_annual_rad_s * t_s).sin_cos();
    let (s_sid, c_sid) = (cfg.omega_sidereal_rad_s * t_s).sin_cos();
    let (seta, ceta) = cfg.eta_rad.sin_cos();
    let bl = cfg.beta_rotation * cfg.chi_rad.sin();
    Vector3::new(
        -cfg.beta_orbital * seta * c_ann,
        cfg.beta_orbital * ceta * c_ann - bl * c_sid,
        -cfg.beta_orbital * s_ann + bl * s_sid,
    )
}

/// Lab-frame `C0^(2) = c_jj - 3 c_zz` at time `t_s` since the epoch.
///
/// The Lorentz transformation is the first-order boost composed with the
/// rotation; beta^2 terms are dropped. Linear in the tensor components.
pub fn c02_at(c: &CTensorSccef, t_s: f64, cfg: &FrameConfig) -> f64 {
    let cs = c.spatial();
    let ct = c.time_space();
    let r = rotation_to_lab(t_s, cfg);
    let beta = boost_vector(t_s, cfg);
    let r3 = r.row(2).transpose();
    let trace_lab = cs.trace() + 2.0 * beta.dot(&ct);
    let zz_lab = (r3.transpose() * cs * r3)[(0, 0)] + 2.0 * r3.dot(&beta) * r3.dot(&ct);
    trace_lab - 3.0 * zz_lab
}

/// One harmonic row of the decomposition of `C0^(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRow {
    pub label: String,
    /// Signed frequency in rad/s; differences like annual-sidereal are
    /// carried with their sign so reconstruction uses the row as-is.
    pub omega_rad_s: f64,
    pub c_amp: f64,
    pub s_amp: f64,
}

/// Harmonic decomposition of `C0^(2)(t)`: a constant offset plus
/// `sum_j C_j cos(w_j t) + S_j sin(w_j t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTable {
    pub offset: f64,
    pub rows: Vec<HarmonicRow>,
}

impl HarmonicTable {
    /// Evaluate the decomposition at time `t_s` since the epoch.
    pub fn reconstruct(&self, t_s: f64) -> f64 {
        let mut v = self.offset;
        for row in &self.rows {
            let (s, c) = (row.omega_rad_s * t_s).sin_cos();
            v += row.c_amp * c + row.s_amp * s;
        }
        v
    }

    pub fn row(&self, label: &str) -> Option<&HarmonicRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Closed-form harmonic amplitudes of `c02_at` for the given tensor and
/// geometry, exact to first order in the boosts.
///
/// Rows at twice the annual frequency are analytically zero (the boost
/// enters linearly) and are emitted as exact zeros. The rotational boost
/// contributes a third-sidereal-harmonic row, which is included so the
/// table reconstructs `c02_at` pointwise.
pub fn harmonic_table(c: &CTensorSccef, cfg: &FrameConfig) -> HarmonicTable {
    let (schi, cchi) = cfg.chi_rad.sin_cos();
    let s2chi = (2.0 * cfg.chi_rad).sin();
    let (seta, ceta) = cfg.eta_rad.sin_cos();
    let be = cfg.beta_orbital;
    let bl = cfg.beta_rotation;
    let w = cfg.omega_sidereal_rad_s;
    let ww = cfg.omega_annual_rad_s;
    let s2 = schi * schi;
    let c2 = cchi * cchi;

    let offset = (c.c_xx + c.c_yy + c.c_zz)
        - 1.5 * s2 * (c.c_xx + c.c_yy)
        - 3.0 * c2 * c.c_zz
        - 3.0 * bl * s2 * cchi * c.c_ty;

    let row = |label: &str, omega: f64, c_amp: f64, s_amp: f64| HarmonicRow {
        label: label.to_string(),
        omega_rad_s: omega,
        c_amp,
        s_amp,
    };

    let rows = vec![
        row(
            "sidereal",
            w,
            -3.0 * s2chi * c.c_xz + 0.5 * bl * schi * (3.0 * s2 - 4.0) * c.c_ty,
            -3.0 * s2chi * c.c_yz
                + 1.5 * bl * schi * s2 * c.c_tx
                + bl * schi * (2.0 - 6.0 * c2) * c.c_tz,
        ),
        row(
            "2xsidereal",
            2.0 * w,
            -1.5 * s2 * (c.c_xx - c.c_yy) + 3.0 * bl * s2 * cchi * c.c_ty,
            -3.0 * s2 * (c.c_xy + bl * cchi * (c.c_tx - c.c_tz)),
        ),
        row(
            "3xsidereal",
            3.0 * w,
            -1.5 * bl * schi * s2 * c.c_ty,
            1.5 * bl * schi * s2 * c.c_tx,
        ),
        row(
            "annual",
            ww,
            -be * (3.0 * c2 - 1.0) * (c.c_tx * seta - c.c_ty * ceta),
            2.0 * be * (3.0 * c2 - 1.0) * c.c_tz,
        ),
        row("2xannual", 2.0 * ww, 0.0, 0.0),
        row(
            "annual-sidereal",
            ww - w,
            1.5 * be * s2chi * (c.c_ty + c.c_tz * seta),
            1.5 * be * s2chi * (c.c_tx + c.c_tz * ceta),
        ),
        row(
            "annual+sidereal",
            ww + w,
            -1.5 * be * s2chi * (c.c_ty - c.c_tz * seta),
            1.5 * be * s2chi * (c.c_tx - c.c_tz * ceta),
        ),
        row("2xannual-sidereal", 2.0 * ww - w, 0.0, 0.0),
        row("2xannual+sidereal", 2.0 * ww + w, 0.0, 0.0),
        row(
            "annual-2xsidereal",
            ww - 2.0 * w,
            1.5 * be * s2 * (c.c_tx * seta + c.c_ty * ceta),
            1.5 * be * s2 * (c.c_tx * ceta - c.c_ty * seta),
        ),
        row(
            "annual+2xsidereal",
            ww + 2.0 * w,
            1.5 * be * s2 * (c.c_tx * seta + c.c_ty * ceta),
            -1.5 * be * s2 * (c.c_tx * ceta - c.c_ty * seta),
        ),
        row("2xannual-2xsidereal", 2.0 * (ww - w), 0.0, 0.0),
        row("2xannual+2xsidereal", 2.0 * (ww + w), 0.0, 0.0),
    ];

    HarmonicTable { offset, rows }
}
