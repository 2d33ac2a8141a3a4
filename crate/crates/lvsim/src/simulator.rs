//! Synthetic measurement campaign: randomized four-signal measurement
//! blocks, the laser-phase servo, long/short Ramsey differencing, L/R
//! state alternation, co-measured field and trap-frequency probes, and the
//! injected truth (Lorentz-violation signal plus drifting systematics).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{c02_at, CTensorSccef, FrameConfig};
use crate::iondynamics::{
    exact_probability_signal, sample_probability_with_rng, Handedness, SampledSignal,
};
use crate::systematics::SystematicsCalibration;

/// Default campaign start: 2014-04-19T03:00:00Z.
pub const DEFAULT_START_UTC_S: f64 = 1_397_876_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RamseyDuration {
    Short,
    Long,
}

impl RamseyDuration {
    pub const BOTH: [RamseyDuration; 2] = [RamseyDuration::Short, RamseyDuration::Long];

    pub fn index(self) -> usize {
        match self {
            RamseyDuration::Short => 0,
            RamseyDuration::Long => 1,
        }
    }
}

/// Timing and readout parameters of the measurement sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyConfig {
    pub t_short_s: f64,
    pub t_long_s: f64,
    /// Cycles per signal, split evenly between the two anti-phased laser
    /// settings used for offset cancellation.
    pub n_cycles_per_signal: u64,
    pub block_period_s: f64,
    pub campaign_duration_s: f64,
    pub start_time_utc_s: f64,
    /// Fringe contrast (the entangled fraction of the prepared mixture).
    pub contrast: f64,
    pub b_probe_sigma_mg: f64,
    pub f_axial_probe_every_blocks: u64,
    pub f_axial_probe_sigma_khz: f64,
    /// Dead windows (relative to the campaign start) during which no
    /// blocks are recorded.
    #[serde(default)]
    pub gaps: Vec<GapWindow>,
    /// Infinite-shot mode: replaces sampling with exact expectations.
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            t_short_s: 0.005,
            t_long_s: 0.100,
            n_cycles_per_signal: 200,
            block_period_s: 60.0,
            campaign_duration_s: 23.0 * 3600.0,
            start_time_utc_s: DEFAULT_START_UTC_S,
            contrast: 0.5,
            b_probe_sigma_mg: 0.05,
            f_axial_probe_every_blocks: 10,
            f_axial_probe_sigma_khz: 0.05,
            gaps: Vec::new(),
            noiseless: false,
        }
    }
}

impl RamseyConfig {
    pub fn effective_ramsey_s(&self) -> f64 {
        self.t_long_s - self.t_short_s
    }

    pub fn ramsey_duration_s(&self, d: RamseyDuration) -> f64 {
        match d {
            RamseyDuration::Short => self.t_short_s,
            RamseyDuration::Long => self.t_long_s,
        }
    }

    pub fn planned_blocks(&self) -> u64 {
        (self.campaign_duration_s / self.block_period_s).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_long_s > self.t_short_s && self.t_short_s > 0.0) {
            return Err(Error::Config("require t_long > t_short > 0".into()));
        }
        if self.n_cycles_per_signal < 2 || self.n_cycles_per_signal % 2 != 0 {
            return Err(Error::Config(
                "n_cycles_per_signal must be an even count >= 2".into(),
            ));
        }
        if self.block_period_s <= 0.0 || self.campaign_duration_s < self.block_period_s {
            return Err(Error::Config(
                "campaign must be at least one block long".into(),
            ));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::Config("contrast must be in (0, 1]".into()));
        }
        for g in &self.gaps {
            if !(g.end_s > g.start_s && g.start_s >= 0.0) {
                return Err(Error::Config("gap windows must have end > start >= 0".into()));
            }
        }
        Ok(())
    }

    fn in_gap(&self, t_rel_s: f64) -> bool {
        self.gaps
            .iter()
            .any(|g| t_rel_s >= g.start_s && t_rel_s < g.end_s)
    }
}

/// A bounded slowly-varying quantity: a mean plus a handful of sinusoidal
/// tones. The sum of tone amplitudes bounds the deviation by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub mean: f64,
    #[serde(default)]
    pub tones: Vec<DriftTone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftTone {
    pub amplitude: f64,
    pub period_s: f64,
    pub phase_rad: f64,
}

impl DriftSeries {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            tones: Vec::new(),
        }
    }

    /// Tones with the given periods, random phases, and amplitudes that
    /// split `max_deviation` evenly.
    pub fn seeded(mean: f64, max_deviation: f64, periods_s: &[f64], rng: &mut impl Rng) -> Self {
        let tones = if max_deviation == 0.0 || periods_s.is_empty() {
            Vec::new()
        } else {
            let amp = max_deviation / periods_s.len() as f64;
            periods_s
                .iter()
                .map(|&p| DriftTone {
                    amplitude: amp,
                    period_s: p,
                    phase_rad: rng.gen_range(0.0..std::f64::consts::TAU),
                })
                .collect()
        };
        Self { mean, tones }
    }

    pub fn value(&self, t_rel_s: f64) -> f64 {
        self.mean
            + self
                .tones
                .iter()
                .map(|tone| {
                    tone.amplitude
                        * (std::f64::consts::TAU * t_rel_s / tone.period_s + tone.phase_rad).sin()
                })
                .sum::<f64>()
    }

    pub fn max_deviation(&self) -> f64 {
        self.tones.iter().map(|t| t.amplitude.abs()).sum()
    }
}

/// Ground truth of a campaign: the hidden tensor plus the drifting
/// environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub c_sccef: CTensorSccef,
    /// Magnetic field, gauss.
    pub b_field_g: DriftSeries,
    /// L/R-antisymmetric linear-Zeeman gradient contribution, Hz.
    pub b_gradient_hz: DriftSeries,
    /// Axial trap frequency, kHz.
    pub f_axial_khz: DriftSeries,
    /// Differential ac Stark shift, Hz.
    pub ac_stark_hz: DriftSeries,
    /// Preparation phase offset, radians; common to the four signals.
    pub phi_offset_rad: DriftSeries,
    /// Readout-level signal offset (dimensionless, adds to the parity
    /// signal); cancelled by the anti-phased pair.
    pub readout_offset: DriftSeries,
    /// White frequency noise per block, Hz, applied to the two-ion
    /// splitting; calibrated so the extracted-frequency Allan deviation
    /// matches the target statistical floor.
    pub white_noise_block_hz: f64,
}

impl TruthModel {
    /// Default environment with seeded drift phases; `c` is the injected
    /// tensor. Deviations sit at their stated bounds: 1 mG field, 1 kHz
    /// axial, 1e-2 relative ac Stark.
    pub fn seeded(c: CTensorSccef, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let h = 3600.0;
        Self {
            c_sccef: c,
            b_field_g: DriftSeries::seeded(3.930, 1.0e-3, &[1.9 * h, 3.4 * h], &mut rng),
            b_gradient_hz: DriftSeries::seeded(100.0, 5.0, &[6.5 * h], &mut rng),
            f_axial_khz: DriftSeries::seeded(210.0, 1.0, &[1.5 * h, 2.6 * h], &mut rng),
            ac_stark_hz: DriftSeries::seeded(0.120, 0.0012, &[5.0 * h], &mut rng),
            phi_offset_rad: DriftSeries::seeded(0.0, 0.1, &[0.7 * h, 1.6 * h], &mut rng),
            readout_offset: DriftSeries::seeded(0.0, 0.02, &[0.9 * h], &mut rng),
            white_noise_block_hz: 0.354,
        }
    }

    /// Static environment at the nominal operating point (no drift, no
    /// extra noise), for closed-loop tests.
    pub fn static_nominal(c: CTensorSccef) -> Self {
        Self {
            c_sccef: c,
            b_field_g: DriftSeries::constant(3.930),
            b_gradient_hz: DriftSeries::constant(100.0),
            f_axial_khz: DriftSeries::constant(210.0),
            ac_stark_hz: DriftSeries::constant(0.120),
            phi_offset_rad: DriftSeries::constant(0.0),
            readout_offset: DriftSeries::constant(0.0),
            white_noise_block_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.c_sccef.validate()?;
        if self.white_noise_block_hz < 0.0 {
            return Err(Error::Config("white noise must be >= 0".into()));
        }
        if self.b_field_g.mean <= 0.0 || self.f_axial_khz.mean <= 0.0 {
            return Err(Error::Config(
                "field and axial frequency means must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Servo phase correction from an offset-cancelled signal sample:
/// `acos(s/A) - pi/2`, clamped into the fringe when projection noise
/// overshoots the amplitude (the flag records the clamp).
pub fn phase_correction(s: f64, amplitude: f64) -> Result<(f64, bool)> {
    if amplitude <= 0.0 {
        return Err(Error::InvalidArgument(
            "fringe amplitude must be positive".into(),
        ));
    }
    let ratio = s / amplitude;
    let clamped = ratio.abs() > 1.0;
    Ok((
        ratio.clamp(-1.0, 1.0).acos() - std::f64::consts::FRAC_PI_2,
        clamped,
    ))
}

/// Half-difference of the two anti-phased signals; removes any common
/// additive offset exactly.
pub fn offset_cancelled_signal(s_phi: f64, s_phi_plus_pi: f64) -> f64 {
    (s_phi - s_phi_plus_pi) / 2.0
}

/// One interrogated signal within a block.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalSlot {
    /// Phase correction applied to this signal's laser-phase register.
    pub delta_phi_rad: f64,
    /// Offset-cancelled signal estimate.
    pub s_hat: f64,
    /// Its standard error.
    pub sigma: f64,
    pub clamped: bool,
}

/// One measurement block: the four signals in randomized order plus the
/// co-measured probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub t_utc_s: f64,
    /// Indexed `[handedness][duration]`.
    pub slots: [[SignalSlot; 2]; 2],
    pub b_meas_mg: f64,
    pub f_axial_meas_khz: Option<f64>,
    pub acquisition_order: [(Handedness, RamseyDuration); 4],
}

impl BlockRecord {
    pub fn slot(&self, h: Handedness, d: RamseyDuration) -> &SignalSlot {
        &self.slots[h.index()][d.index()]
    }

    /// Clamp flags as a bitmask: bit 0 = L short, 1 = L long, 2 = R short,
    /// 3 = R long.
    pub fn clamp_mask(&self) -> u8 {
        let mut mask = 0u8;
        for h in Handedness::BOTH {
            for d in RamseyDuration::BOTH {
                if self.slot(h, d).clamped {
                    mask |= 1 << (2 * h.index() + d.index());
                }
            }
        }
        mask
    }

    pub fn any_clamped(&self) -> bool {
        self.clamp_mask() != 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignDataset {
    pub blocks: Vec<BlockRecord>,
}

/// Laser-phase registers, one per (state, duration) signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoState {
    pub phase_rad: [[f64; 2]; 2],
}

/// Campaign driver binding configuration, truth, geometry, calibration and
/// the two-ion sensitivity together.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub ramsey: RamseyConfig,
    pub truth: TruthModel,
    pub frame: FrameConfig,
    pub cal: SystematicsCalibration,
    /// Two-ion splitting sensitivity, Hz per unit C0^(2).
    pub pair_sensitivity_hz: f64,
}

impl Simulator {
    pub fn new(
        ramsey: RamseyConfig,
        truth: TruthModel,
        frame: FrameConfig,
        cal: SystematicsCalibration,
        pair_sensitivity_hz: f64,
    ) -> Result<Self> {
        ramsey.validate()?;
        truth.validate()?;
        frame.validate()?;
        let headroom = ramsey.contrast
            + truth.readout_offset.mean.abs()
            + truth.readout_offset.max_deviation();
        if headroom > 1.0 {
            return Err(Error::Config(format!(
                "contrast plus readout offset exceeds unit probability range ({headroom})"
            )));
        }
        Ok(Self {
            ramsey,
            truth,
            frame,
            cal,
            pair_sensitivity_hz,
        })
    }

    /// Systematic-only oscillation frequency at the nominal operating
    /// point; used to seed the servo registers, the way a line centre known
    /// from prior calibration would be.
    pub fn nominal_frequency_hz(&self, handedness: Handedness) -> f64 {
        self.cal.zeeman_shift_hz(self.truth.b_field_g.mean)
            + self.cal.quadrupole_shift_hz(self.truth.f_axial_khz.mean)
            + self.truth.ac_stark_hz.mean
            + handedness.gradient_sign() * self.truth.b_gradient_hz.mean
    }

    /// Instantaneous true two-ion oscillation frequency for one state.
    pub fn truth_frequency_hz(&self, t_utc_s: f64, handedness: Handedness) -> f64 {
        let t_rel = t_utc_s - self.ramsey.start_time_utc_s;
        let c02 = c02_at(
            &self.truth.c_sccef,
            t_utc_s - self.frame.epoch_utc_s,
            &self.frame,
        );
        self.pair_sensitivity_hz * c02
            + self.cal.zeeman_shift_hz(self.truth.b_field_g.value(t_rel))
            + self
                .cal
                .quadrupole_shift_hz(self.truth.f_axial_khz.value(t_rel))
            + self.truth.ac_stark_hz.value(t_rel)
            + handedness.gradient_sign() * self.truth.b_gradient_hz.value(t_rel)
    }

    pub fn init_servo(&self) -> ServoState {
        let mut phase = [[0.0; 2]; 2];
        for h in Handedness::BOTH {
            let f_nom = self.nominal_frequency_hz(h);
            for d in RamseyDuration::BOTH {
                phase[h.index()][d.index()] = std::f64::consts::TAU
                    * f_nom
                    * self.ramsey.ramsey_duration_s(d)
                    + self.truth.phi_offset_rad.mean
                    - std::f64::consts::FRAC_PI_2;
            }
        }
        ServoState { phase_rad: phase }
    }

    /// Analytic per-block projection-noise floor of the extracted
    /// L/R-averaged frequency, at the servo operating point.
    pub fn qpn_sigma_fbar_hz(&self) -> f64 {
        let sigma_phi =
            1.0 / (self.ramsey.contrast * (self.ramsey.n_cycles_per_signal as f64).sqrt());
        sigma_phi / (std::f64::consts::TAU * self.ramsey.effective_ramsey_s())
    }

    /// White-noise term that brings the per-block scatter up to an Allan
    /// level of `target_hz_sqrt_s / sqrt(tau)`.
    pub fn calibrated_white_noise_hz(&self, target_hz_sqrt_s: f64) -> f64 {
        let total = target_hz_sqrt_s / self.ramsey.block_period_s.sqrt();
        let qpn = self.qpn_sigma_fbar_hz();
        (total * total - qpn * qpn).max(0.0).sqrt()
    }

    /// Run one measurement block at planned index `block_index`, advancing
    /// the servo registers.
    pub fn run_block(
        &self,
        block_index: u64,
        servo: &mut ServoState,
        rng: &mut ChaCha12Rng,
    ) -> Result<BlockRecord> {
        let t_block = self.ramsey.start_time_utc_s + block_index as f64 * self.ramsey.block_period_s;
        let mut order = [
            (Handedness::L, RamseyDuration::Short),
            (Handedness::L, RamseyDuration::Long),
            (Handedness::R, RamseyDuration::Short),
            (Handedness::R, RamseyDuration::Long),
        ];
        order.shuffle(rng);

        let eps_hz = if self.ramsey.noiseless || self.truth.white_noise_block_hz == 0.0 {
            0.0
        } else {
            let z: f64 = rng.sample(StandardNormal);
            z * self.truth.white_noise_block_hz
        };

        let slot_dt = self.ramsey.block_period_s / 4.0;
        let half_cycles = self.ramsey.n_cycles_per_signal / 2;
        let mut slots = [[SignalSlot::default(); 2]; 2];

        for (i, &(h, d)) in order.iter().enumerate() {
            let t_meas = t_block + i as f64 * slot_dt;
            let t_rel = t_meas - self.ramsey.start_time_utc_s;
            let f_true = self.truth_frequency_hz(t_meas, h) + eps_hz;
            let phi_true = std::f64::consts::TAU * f_true * self.ramsey.ramsey_duration_s(d)
                + self.truth.phi_offset_rad.value(t_rel);
            let theta = phi_true - servo.phase_rad[h.index()][d.index()];
            let fringe = self.ramsey.contrast * theta.cos();
            let readout_offset = self.truth.readout_offset.value(t_rel);

            let sample = |p: f64, rng: &mut ChaCha12Rng| -> Result<SampledSignal> {
                if self.ramsey.noiseless {
                    exact_probability_signal(p, half_cycles)
                } else {
                    sample_probability_with_rng(p, half_cycles, rng)
                }
            };
            let s_plus = sample((1.0 + fringe + readout_offset) / 2.0, rng)?;
            let s_minus = sample((1.0 - fringe + readout_offset) / 2.0, rng)?;
            let s_eff = offset_cancelled_signal(s_plus.s_hat, s_minus.s_hat);
            let sigma_eff = 0.5 * (s_plus.sigma.powi(2) + s_minus.sigma.powi(2)).sqrt();
            let (dphi, clamped) = phase_correction(s_eff, self.ramsey.contrast)?;
            servo.phase_rad[h.index()][d.index()] += dphi;
            slots[h.index()][d.index()] = SignalSlot {
                delta_phi_rad: dphi,
                s_hat: s_eff,
                sigma: sigma_eff,
                clamped,
            };
        }

        let t_rel_block = t_block - self.ramsey.start_time_utc_s;
        let b_true_g = self.truth.b_field_g.value(t_rel_block);
        let b_meas_mg = if self.ramsey.noiseless {
            b_true_g * 1e3
        } else {
            let z: f64 = rng.sample(StandardNormal);
            b_true_g * 1e3 + z * self.ramsey.b_probe_sigma_mg
        };
        let f_axial_meas_khz = if block_index % self.ramsey.f_axial_probe_every_blocks == 0 {
            let truth = self.truth.f_axial_khz.value(t_rel_block);
            Some(if self.ramsey.noiseless {
                truth
            } else {
                let z: f64 = rng.sample(StandardNormal);
                truth + z * self.ramsey.f_axial_probe_sigma_khz
            })
        } else {
            None
        };

        Ok(BlockRecord {
            t_utc_s: t_block,
            slots,
            b_meas_mg,
            f_axial_meas_khz,
            acquisition_order: order,
        })
    }

    /// Run a full campaign. Output is a pure function of the simulator
    /// configuration and the seed; gap windows drop blocks without
    /// perturbing the noise stream of the surviving ones.
    pub fn run_campaign(&self, seed: u64) -> Result<CampaignDataset> {
        let n = self.ramsey.planned_blocks();
        let mut master = ChaCha12Rng::seed_from_u64(seed);
        let mut servo = self.init_servo();
        let mut blocks = Vec::with_capacity(n as usize);
        for idx in 0..n {
            let block_seed: u64 = master.gen();
            let t_rel = idx as f64 * self.ramsey.block_period_s;
            if self.ramsey.in_gap(t_rel) {
                continue;
            }
            let mut rng = ChaCha12Rng::seed_from_u64(block_seed);
            blocks.push(self.run_block(idx, &mut servo, &mut rng)?);
        }
        Ok(CampaignDataset { blocks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::{pair_sensitivity, LevelSpec};
    use approx::assert_relative_eq;

    fn sim_noiseless(truth: TruthModel) -> Simulator {
        let ramsey = RamseyConfig {
            noiseless: true,
            ..RamseyConfig::default()
        };
        Simulator::new(
            ramsey,
            truth,
            FrameConfig::default(),
            SystematicsCalibration::default(),
            pair_sensitivity(&LevelSpec::d5_2()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn phase_correction_examples() {
        let (z, f) = phase_correction(0.0, 0.5).unwrap();
        assert_eq!(z, 0.0);
        assert!(!f);
        let (v, f) = phase_correction(0.5, 0.5).unwrap();
        assert_relative_eq!(v, -std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert!(!f);
        let (v, f) = phase_correction(0.7, 0.5).unwrap();
        assert_relative_eq!(v, -std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert!(f);
        assert!(phase_correction(0.1, 0.0).is_err());
    }

    #[test]
    fn phase_correction_linearised_gain() {
        let amplitude = 0.5;
        let s = 0.01 * amplitude;
        let (v, _) = phase_correction(s, amplitude).unwrap();
        assert!((v + s / amplitude).abs() < (s / amplitude).powi(3));
    }

    #[test]
    fn offset_cancellation_identity() {
        assert_eq!(offset_cancelled_signal(0.3, 0.3), 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let c: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-10.0..10.0);
            let out = offset_cancelled_signal(a * c + b, -a * c + b);
            assert!((out - a * c).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_series_bounded() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let d = DriftSeries::seeded(210.0, 1.0, &[5400.0, 9360.0], &mut rng);
        assert_relative_eq!(d.max_deviation(), 1.0, epsilon = 1e-12);
        for i in 0..10_000 {
            let v = d.value(i as f64 * 9.0);
            assert!((v - 210.0).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn nominal_frequency_budget() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let fl = sim.nominal_frequency_hz(Handedness::L);
        let fr = sim.nominal_frequency_hz(Handedness::R);
        // 8.9 (Zeeman) + 2.884 (quadrupole) + 0.120 (Stark) for the average
        assert_relative_eq!((fl + fr) / 2.0, 11.904, max_relative = 1e-3);
        assert_relative_eq!(fl - fr, 200.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_antisymmetry_in_truth() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let t = sim.ramsey.start_time_utc_s + 1234.0;
        let fl = sim.truth_frequency_hz(t, Handedness::L);
        let fr = sim.truth_frequency_hz(t, Handedness::R);
        assert_relative_eq!(fl - fr, 200.0, epsilon = 1e-9);
        assert_relative_eq!((fl + fr) / 2.0, 11.904, max_relative = 1e-3);
    }

    #[test]
    fn lv_signal_amplitude_in_truth() {
        let c = CTensorSccef {
            c_xz: 1e-18,
            ..CTensorSccef::zero()
        };
        let sim = sim_noiseless(TruthModel::static_nominal(c));
        let sys = 11.904;
        let mut peak = 0.0_f64;
        for i in 0..2000 {
            let t = sim.ramsey.start_time_utc_s + i as f64 * 60.0;
            let fbar = (sim.truth_frequency_hz(t, Handedness::L)
                + sim.truth_frequency_hz(t, Handedness::R))
                / 2.0;
            peak = peak.max((fbar - sys).abs());
        }
        // pair sensitivity times the sidereal amplitude of C0^(2)
        assert_relative_eq!(peak, 0.0259, max_relative = 2e-2);
    }

    #[test]
    fn noiseless_static_servo_is_a_fixed_point() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let mut servo = sim.init_servo();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for idx in 0..5 {
            let rec = sim.run_block(idx, &mut servo, &mut rng).unwrap();
            for h in Handedness::BOTH {
                for d in RamseyDuration::BOTH {
                    assert!(
                        rec.slot(h, d).delta_phi_rad.abs() < 1e-9,
                        "block {idx} correction {}",
                        rec.slot(h, d).delta_phi_rad
                    );
                }
            }
        }
    }

    #[test]
    fn servo_converges_after_one_block() {
        // a constant frequency offset unknown to the servo seed
        let mut truth = TruthModel::static_nominal(CTensorSccef::zero());
        truth.ac_stark_hz = DriftSeries::constant(0.120 + 0.3);
        let sim = sim_noiseless(truth);
        // registers seeded from the nominal (0.120) point
        let mut sim_nominal = sim.clone();
        sim_nominal.truth.ac_stark_hz = DriftSeries::constant(0.120);
        let mut servo = sim_nominal.init_servo();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let first = sim.run_block(0, &mut servo, &mut rng).unwrap();
        let dphi_long = first.slot(Handedness::L, RamseyDuration::Long).delta_phi_rad;
        assert_relative_eq!(
            dphi_long,
            std::f64::consts::TAU * 0.1 * 0.3,
            max_relative = 1e-9
        );
        let second = sim.run_block(1, &mut servo, &mut rng).unwrap();
        for h in Handedness::BOTH {
            for d in RamseyDuration::BOTH {
                assert!(second.slot(h, d).delta_phi_rad.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn frequency_step_appears_in_phase_difference() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let mut servo = sim.init_servo();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        sim.run_block(0, &mut servo, &mut rng).unwrap();
        // inject a step by switching to a truth with +0.25 Hz
        let mut stepped = sim.clone();
        stepped.truth.ac_stark_hz = DriftSeries::constant(0.120 + 0.25);
        let rec = stepped.run_block(1, &mut servo, &mut rng).unwrap();
        for h in Handedness::BOTH {
            let d = rec.slot(h, RamseyDuration::Long).delta_phi_rad
                - rec.slot(h, RamseyDuration::Short).delta_phi_rad;
            assert_relative_eq!(
                d,
                std::f64::consts::TAU * 0.095 * 0.25,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn campaign_block_count_and_determinism() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let a = sim.run_campaign(42).unwrap();
        assert_eq!(a.blocks.len(), 1380);
        let b = sim.run_campaign(42).unwrap();
        assert_eq!(a, b);
        let c = sim.run_campaign(43).unwrap();
        assert_eq!(c.blocks.len(), 1380);
    }

    #[test]
    fn campaign_with_noise_is_deterministic_too() {
        let mut ramsey = RamseyConfig::default();
        ramsey.campaign_duration_s = 2.0 * 3600.0;
        let truth = TruthModel::seeded(CTensorSccef::zero(), 7);
        let sim = Simulator::new(
            ramsey,
            truth,
            FrameConfig::default(),
            SystematicsCalibration::default(),
            pair_sensitivity(&LevelSpec::d5_2()).unwrap(),
        )
        .unwrap();
        assert_eq!(sim.run_campaign(7).unwrap(), sim.run_campaign(7).unwrap());
    }

    #[test]
    fn gaps_drop_blocks() {
        let mut ramsey = RamseyConfig {
            noiseless: true,
            ..RamseyConfig::default()
        };
        ramsey.gaps = vec![GapWindow {
            start_s: 3600.0,
            end_s: 7200.0,
        }];
        let sim = Simulator::new(
            ramsey,
            TruthModel::static_nominal(CTensorSccef::zero()),
            FrameConfig::default(),
            SystematicsCalibration::default(),
            pair_sensitivity(&LevelSpec::d5_2()).unwrap(),
        )
        .unwrap();
        let data = sim.run_campaign(1).unwrap();
        assert_eq!(data.blocks.len(), 1380 - 60);
        // no block timestamp falls inside the gap
        for b in &data.blocks {
            let rel = b.t_utc_s - sim.ramsey.start_time_utc_s;
            assert!(!(3600.0..7200.0).contains(&rel));
        }
    }

    #[test]
    fn qpn_floor_value_at_defaults() {
        let sim = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        assert_relative_eq!(sim.qpn_sigma_fbar_hz(), 0.2369, max_relative = 1e-3);
        // and the calibration for the 3.3 Hz sqrt(s) target
        let w = sim.calibrated_white_noise_hz(3.3);
        assert_relative_eq!(w, 0.354, max_relative = 3e-3);
    }

    #[test]
    fn readout_offset_does_not_shift_extraction() {
        // identical campaigns except for a large drifting readout offset;
        // corrections must match to rounding because the anti-phased pair
        // removes the offset exactly in the noiseless limit
        let base = sim_noiseless(TruthModel::static_nominal(CTensorSccef::zero()));
        let mut offset = base.clone();
        offset.truth.readout_offset = DriftSeries {
            mean: 0.0,
            tones: vec![DriftTone {
                amplitude: 0.3,
                period_s: 1800.0,
                phase_rad: 0.4,
            }],
        };
        let a = base.run_campaign(3).unwrap();
        let b = offset.run_campaign(3).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            for h in Handedness::BOTH {
                for d in RamseyDuration::BOTH {
                    assert!(
                        (x.slot(h, d).delta_phi_rad - y.slot(h, d).delta_phi_rad).abs() < 1e-12
                    );
                }
            }
        }
    }
}
