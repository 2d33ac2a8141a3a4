//! Human-editable run configuration.
//!
//! Every physics constant is overridable from a TOML file; missing keys
//! fall back to the built-in operating-point defaults, so all commands run
//! without any config file at all. Angles are written in degrees and
//! timestamps as RFC 3339 strings (raw Unix seconds also accepted).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{CTensorSccef, FrameConfig, SIDEREAL_DAY_S, SIDEREAL_YEAR_S};
use crate::sensitivity::{pair_sensitivity, LevelLabel, LevelSpec};
use crate::simulator::{DriftSeries, GapWindow, RamseyConfig, Simulator, TruthModel};
use crate::systematics::SystematicsCalibration;

/// A timestamp that may be written as RFC 3339 or as Unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    UnixSeconds(f64),
    Rfc3339(String),
}

impl Timestamp {
    pub fn to_unix_s(&self) -> Result<f64> {
        match self {
            Timestamp::UnixSeconds(s) => Ok(*s),
            Timestamp::Rfc3339(text) => {
                let dt = chrono::DateTime::parse_from_rfc3339(text)
                    .map_err(|e| Error::Config(format!("bad timestamp '{text}': {e}")))?;
                Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameSection {
    pub chi_deg: f64,
    pub eta_deg: f64,
    pub sidereal_day_h: f64,
    pub sidereal_year_d: f64,
    pub beta_orbital: f64,
    pub beta_rotation: f64,
    pub epoch_utc: Timestamp,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self {
            chi_deg: 52.1,
            eta_deg: 23.4,
            sidereal_day_h: SIDEREAL_DAY_S / 3600.0,
            sidereal_year_d: SIDEREAL_YEAR_S / 86400.0,
            beta_orbital: 1.0e-4,
            beta_rotation: 1.5e-6,
            epoch_utc: Timestamp::Rfc3339("2014-03-20T16:57:00Z".into()),
        }
    }
}

impl FrameSection {
    pub fn build(&self) -> Result<FrameConfig> {
        let cfg = FrameConfig {
            chi_rad: self.chi_deg.to_radians(),
            eta_rad: self.eta_deg.to_radians(),
            omega_sidereal_rad_s: std::f64::consts::TAU / (self.sidereal_day_h * 3600.0),
            omega_annual_rad_s: std::f64::consts::TAU / (self.sidereal_year_d * 86400.0),
            beta_orbital: self.beta_orbital,
            beta_rotation: self.beta_rotation,
            epoch_utc_s: self.epoch_utc.to_unix_s()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Atomic level keys: `level.{label, J, t2_me_au, p2_me_au}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelSection {
    pub label: String,
    #[serde(rename = "J")]
    pub j: f64,
    pub t2_me_au: f64,
    pub p2_me_au: f64,
}

impl Default for LevelSection {
    fn default() -> Self {
        let d = LevelSpec::d5_2();
        Self {
            label: d.label.to_string(),
            j: d.j,
            t2_me_au: d.t2_me_au,
            p2_me_au: d.p2_me_au,
        }
    }
}

impl LevelSection {
    pub fn build(&self) -> Result<LevelSpec> {
        let label: LevelLabel = self.label.parse()?;
        let spec = LevelSpec {
            label,
            j: self.j,
            t2_me_au: self.t2_me_au,
            p2_me_au: self.p2_me_au,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RamseySection {
    pub t_short_s: f64,
    pub t_long_s: f64,
    pub n_cycles_per_signal: u64,
    pub block_period_s: f64,
    pub campaign_hours: f64,
    pub start_time_utc: Timestamp,
    pub contrast: f64,
    pub b_probe_sigma_mg: f64,
    pub f_axial_probe_every_blocks: u64,
    pub f_axial_probe_sigma_khz: f64,
    /// Gap windows in seconds relative to the campaign start.
    pub gaps_s: Vec<[f64; 2]>,
    pub noiseless: bool,
}

impl Default for RamseySection {
    fn default() -> Self {
        let d = RamseyConfig::default();
        Self {
            t_short_s: d.t_short_s,
            t_long_s: d.t_long_s,
            n_cycles_per_signal: d.n_cycles_per_signal,
            block_period_s: d.block_period_s,
            campaign_hours: d.campaign_duration_s / 3600.0,
            start_time_utc: Timestamp::Rfc3339("2014-04-19T03:00:00Z".into()),
            contrast: d.contrast,
            b_probe_sigma_mg: d.b_probe_sigma_mg,
            f_axial_probe_every_blocks: d.f_axial_probe_every_blocks,
            f_axial_probe_sigma_khz: d.f_axial_probe_sigma_khz,
            gaps_s: Vec::new(),
            noiseless: false,
        }
    }
}

impl RamseySection {
    pub fn build(&self) -> Result<RamseyConfig> {
        let cfg = RamseyConfig {
            t_short_s: self.t_short_s,
            t_long_s: self.t_long_s,
            n_cycles_per_signal: self.n_cycles_per_signal,
            block_period_s: self.block_period_s,
            campaign_duration_s: self.campaign_hours * 3600.0,
            start_time_utc_s: self.start_time_utc.to_unix_s()?,
            contrast: self.contrast,
            b_probe_sigma_mg: self.b_probe_sigma_mg,
            f_axial_probe_every_blocks: self.f_axial_probe_every_blocks.max(1),
            f_axial_probe_sigma_khz: self.f_axial_probe_sigma_khz,
            gaps: self
                .gaps_s
                .iter()
                .map(|g| GapWindow {
                    start_s: g[0],
                    end_s: g[1],
                })
                .collect(),
            noiseless: self.noiseless,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftSection {
    pub mean: f64,
    pub max_deviation: f64,
    pub periods_h: Vec<f64>,
}

impl DriftSection {
    fn new(mean: f64, max_deviation: f64, periods_h: &[f64]) -> Self {
        Self {
            mean,
            max_deviation,
            periods_h: periods_h.to_vec(),
        }
    }

    fn build(&self, rng: &mut impl rand::Rng) -> DriftSeries {
        let periods_s: Vec<f64> = self.periods_h.iter().map(|h| h * 3600.0).collect();
        DriftSeries::seeded(self.mean, self.max_deviation, &periods_s, rng)
    }
}

impl Default for DriftSection {
    fn default() -> Self {
        Self::new(0.0, 0.0, &[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSection {
    pub c_sccef: CTensorSccef,
    pub b_field_g: DriftSection,
    pub b_gradient_hz: DriftSection,
    pub f_axial_khz: DriftSection,
    pub ac_stark_hz: DriftSection,
    pub phi_offset_rad: DriftSection,
    pub readout_offset: DriftSection,
    /// Per-block white frequency noise in Hz; absent means "calibrate so
    /// the Allan deviation meets `allan_target_hz_sqrt_s`".
    pub white_noise_block_hz: Option<f64>,
    pub allan_target_hz_sqrt_s: f64,
}

impl Default for TruthSection {
    fn default() -> Self {
        Self {
            c_sccef: CTensorSccef::zero(),
            b_field_g: DriftSection::new(3.930, 1.0e-3, &[1.9, 3.4]),
            b_gradient_hz: DriftSection::new(100.0, 5.0, &[6.5]),
            f_axial_khz: DriftSection::new(210.0, 1.0, &[1.5, 2.6]),
            ac_stark_hz: DriftSection::new(0.120, 0.0012, &[5.0]),
            phi_offset_rad: DriftSection::new(0.0, 0.1, &[0.7, 1.6]),
            readout_offset: DriftSection::new(0.0, 0.02, &[0.9]),
            white_noise_block_hz: None,
            allan_target_hz_sqrt_s: 3.3,
        }
    }
}

impl TruthSection {
    /// Materialise drift phases from the seed. The white-noise term is
    /// filled in by [`RunConfig::build_simulator`] when left to calibrate.
    pub fn build(&self, seed: u64) -> TruthModel {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        TruthModel {
            c_sccef: self.c_sccef,
            b_field_g: self.b_field_g.build(&mut rng),
            b_gradient_hz: self.b_gradient_hz.build(&mut rng),
            f_axial_khz: self.f_axial_khz.build(&mut rng),
            ac_stark_hz: self.ac_stark_hz.build(&mut rng),
            phi_offset_rad: self.phi_offset_rad.build(&mut rng),
            readout_offset: self.readout_offset.build(&mut rng),
            white_noise_block_hz: self.white_noise_block_hz.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSection {
    pub bin_width_s: Option<f64>,
    pub outlier_k_sigma: f64,
    pub outlier_window: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = crate::analysis::AnalysisConfig::default();
        Self {
            bin_width_s: None,
            outlier_k_sigma: d.outlier_k_sigma,
            outlier_window: d.outlier_window,
        }
    }
}

impl AnalysisSection {
    /// Bin width: explicit value, or an hour capped at an eighth of the
    /// campaign so short runs still leave enough bins to fit.
    pub fn bin_width_for(&self, campaign_duration_s: f64) -> f64 {
        self.bin_width_s
            .unwrap_or_else(|| 3600.0_f64.min(campaign_duration_s / 8.0))
    }

    pub fn build(&self, campaign_duration_s: f64) -> crate::analysis::AnalysisConfig {
        crate::analysis::AnalysisConfig {
            bin_width_s: self.bin_width_for(campaign_duration_s),
            outlier_k_sigma: self.outlier_k_sigma,
            outlier_window: self.outlier_window,
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub blind: bool,
    pub output_dir: Option<String>,
    pub frame: FrameSection,
    pub level: LevelSection,
    pub ramsey: RamseySection,
    pub truth: TruthSection,
    pub analysis: AnalysisSection,
    pub calibration: SystematicsCalibration,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Assemble a simulator for the given seed, calibrating the white-noise
    /// term when the config leaves it automatic.
    pub fn build_simulator(&self, seed: u64) -> Result<Simulator> {
        let frame = self.frame.build()?;
        let level = self.level.build()?;
        let ramsey = self.ramsey.build()?;
        let mut truth = self.truth.build(seed);
        let pair = pair_sensitivity(&level)?;
        let mut sim = Simulator::new(ramsey, truth.clone(), frame, self.calibration, pair)?;
        if self.truth.white_noise_block_hz.is_none() {
            truth.white_noise_block_hz =
                sim.calibrated_white_noise_hz(self.truth.allan_target_hz_sqrt_s);
            sim.truth = truth;
        }
        Ok(sim)
    }
}

/// Parse a tensor file: TOML with any subset of the component keys
/// (`c_TT` .. `c_YZ`); missing components are zero.
pub fn read_c_tensor_file(path: &std::path::Path) -> Result<CTensorSccef> {
    let text = std::fs::read_to_string(path)?;
    let c: CTensorSccef =
        toml::from_str(&text).map_err(|e| Error::Schema(format!("c tensor file: {e}")))?;
    c.validate()?;
    Ok(c)
}

/// Parse command-line style component assignments like
/// `c_XZ=1e-18,c_XY=3e-18`.
pub fn parse_c_tensor_assignments(text: &str) -> Result<CTensorSccef> {
    let mut c = CTensorSccef::zero();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected name=value, got '{part}'")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad value in '{part}'")))?;
        let slot = match key.trim() {
            "c_TT" => &mut c.c_tt,
            "c_TX" => &mut c.c_tx,
            "c_TY" => &mut c.c_ty,
            "c_TZ" => &mut c.c_tz,
            "c_XX" => &mut c.c_xx,
            "c_YY" => &mut c.c_yy,
            "c_ZZ" => &mut c.c_zz,
            "c_XY" => &mut c.c_xy,
            "c_XZ" => &mut c.c_xz,
            "c_YZ" => &mut c.c_yz,
            "c_X-Y" | "c_XmY" => {
                // split the difference symmetrically across XX and YY
                c.c_xx += v / 2.0;
                c.c_yy -= v / 2.0;
                continue;
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown tensor component '{other}'"
                )))
            }
        };
        *slot = v;
    }
    Ok(c)
}
