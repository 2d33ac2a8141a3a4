//! Two-ion decoherence-free state dynamics at the parity-signal level.
//!
//! All downstream observables depend only on the parity expectation of the
//! entangled component, so the state is modelled as an oscillating signal
//! with a contrast set by the entangled fraction, an exponential coherence
//! decay, and projection-noise sampling of a finite number of cycles.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two mirrored entangled states is being interrogated. The
/// linear-Zeeman gradient term enters the two with opposite signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handedness {
    L,
    R,
}

impl Handedness {
    pub const BOTH: [Handedness; 2] = [Handedness::L, Handedness::R];

    /// Sign of the gradient contribution: +1 for L, -1 for R.
    pub fn gradient_sign(self) -> f64 {
        match self {
            Handedness::L => 1.0,
            Handedness::R => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Handedness::L => 0,
            Handedness::R => 1,
        }
    }
}

impl std::fmt::Display for Handedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Handedness::L => write!(f, "L"),
            Handedness::R => write!(f, "R"),
        }
    }
}

/// Preparation of the mixed state containing the decoherence-free
/// entangled component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfsStateSpec {
    pub handedness: Handedness,
    /// Probability that a prepared pair is in the oscillating entangled
    /// component; the non-oscillating remainder dilutes the fringe, so this
    /// is also the maximum fringe contrast.
    pub entangled_fraction: f64,
    /// Preparation phase offset, radians.
    pub phi_r: f64,
}

impl DfsStateSpec {
    pub fn new(handedness: Handedness) -> Self {
        Self {
            handedness,
            entangled_fraction: 0.5,
            phi_r: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.entangled_fraction) {
            return Err(Error::Config(format!(
                "entangled_fraction must be in [0,1], got {}",
                self.entangled_fraction
            )));
        }
        Ok(())
    }
}

/// Damped Ramsey fringe `A exp(-t/tau) cos(2 pi f t + phi0 + phi_laser) + B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    pub amplitude: f64,
    pub offset: f64,
    pub frequency_hz: f64,
    pub phase_offset_rad: f64,
    pub decay_tau_s: f64,
}

impl Default for FringeModel {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            offset: 0.0,
            frequency_hz: 164.9,
            phase_offset_rad: 0.0,
            decay_tau_s: 0.155,
        }
    }
}

/// Ideal entangled-state parity `cos(2 pi f t + phi)`.
pub fn parity_expectation(delta_e_over_h_hz: f64, t_s: f64, phi_rad: f64) -> f64 {
    (std::f64::consts::TAU * delta_e_over_h_hz * t_s + phi_rad).cos()
}

/// Fringe signal with coherence decay and a level offset.
pub fn fringe_signal(model: &FringeModel, t_s: f64, phi_laser_rad: f64) -> f64 {
    model.amplitude
        * (-t_s / model.decay_tau_s).exp()
        * (std::f64::consts::TAU * model.frequency_hz * t_s
            + model.phase_offset_rad
            + phi_laser_rad)
            .cos()
        + model.offset
}

/// A projection-noise realisation of one signal: the estimate and its
/// standard error, both in parity-signal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledSignal {
    pub s_hat: f64,
    pub sigma: f64,
}

/// Sample `n_cycles` projective readouts of a parity signal with the given
/// ideal value and fringe contrast.
///
/// Each cycle is a Bernoulli trial with success probability
/// `(1 + contrast * p_ideal) / 2`; the estimate is mapped back to the
/// [-1, 1] signal range, which makes it unbiased for
/// `contrast * p_ideal`.
pub fn sample_signal_with_rng(
    p_ideal: f64,
    contrast: f64,
    n_cycles: u64,
    rng: &mut impl Rng,
) -> Result<SampledSignal> {
    sample_probability_with_rng((1.0 + contrast * p_ideal) / 2.0, n_cycles, rng)
}

/// Seeded convenience wrapper around [`sample_signal_with_rng`];
/// deterministic for a given seed.
pub fn sample_signal(
    p_ideal: f64,
    contrast: f64,
    n_cycles: u64,
    seed: u64,
) -> Result<SampledSignal> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_signal_with_rng(p_ideal, contrast, n_cycles, &mut rng)
}

/// Lowest-level sampler: binomial draw at an explicit success probability.
/// The simulator uses this directly so it can fold a readout-level offset
/// into the probability.
pub fn sample_probability_with_rng(
    p_success: f64,
    n_cycles: u64,
    rng: &mut impl Rng,
) -> Result<SampledSignal> {
    if n_cycles == 0 {
        return Err(Error::InvalidArgument("need at least one cycle".into()));
    }
    if !(0.0..=1.0).contains(&p_success) {
        return Err(Error::InvalidArgument(format!(
            "success probability {p_success} outside [0,1]"
        )));
    }
    let k = Binomial::new(n_cycles, p_success)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng);
    let n = n_cycles as f64;
    let p_hat = k as f64 / n;
    // sigma from a lightly regularised p so degenerate draws keep a
    // nonzero error bar
    let p_reg = (k as f64 + 0.5) / (n + 1.0);
    Ok(SampledSignal {
        s_hat: 2.0 * p_hat - 1.0,
        sigma: 2.0 * (p_reg * (1.0 - p_reg) / n).sqrt(),
    })
}

/// Noise-free limit of [`sample_probability_with_rng`]: the exact
/// expectation with the would-be standard error attached.
pub fn exact_probability_signal(p_success: f64, n_cycles: u64) -> Result<SampledSignal> {
    if !(0.0..=1.0).contains(&p_success) {
        return Err(Error::InvalidArgument(format!(
            "success probability {p_success} outside [0,1]"
        )));
    }
    let n = n_cycles.max(1) as f64;
    Ok(SampledSignal {
        s_hat: 2.0 * p_success - 1.0,
        sigma: 2.0 * (p_success * (1.0 - p_success) / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parity_initial_value_and_antiperiodicity() {
        assert_eq!(parity_expectation(164.9, 0.0, 0.0), 1.0);
        for i in 0..50 {
            let t = i as f64 * 1.3e-4;
            let a = parity_expectation(164.9, t, 0.4);
            let b = parity_expectation(164.9, t, 0.4 + std::f64::consts::PI);
            assert_relative_eq!(a, -b, epsilon = 1e-12);
        }
    }

    #[test]
    fn parity_period() {
        let f = 164.9;
        let period = 1.0 / f;
        assert_relative_eq!(period, 6.064e-3, max_relative = 1e-4);
        for i in 0..20 {
            let t = i as f64 * 7.7e-4;
            assert_relative_eq!(
                parity_expectation(f, t, 0.2),
                parity_expectation(f, t + period, 0.2),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn parity_bounded() {
        for i in 0..1000 {
            let p = parity_expectation(164.9, i as f64 * 1e-4, 1.1);
            assert!((-1.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn fringe_reduces_to_parity_without_decay() {
        let model = FringeModel {
            amplitude: 0.5,
            offset: 0.0,
            frequency_hz: 164.9,
            phase_offset_rad: 0.3,
            decay_tau_s: f64::INFINITY,
        };
        for i in 0..100 {
            let t = i as f64 * 3.3e-4;
            assert_relative_eq!(
                fringe_signal(&model, t, 0.1),
                0.5 * parity_expectation(164.9, t, 0.3 + 0.1),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fringe_envelope_at_tau() {
        let model = FringeModel {
            phase_offset_rad: 0.0,
            ..FringeModel::default()
        };
        // pick a time equal to tau, compare against the undamped fringe
        let t = model.decay_tau_s;
        let undamped = model.amplitude
            * (std::f64::consts::TAU * model.frequency_hz * t).cos();
        assert_relative_eq!(
            fringe_signal(&model, t, 0.0),
            undamped / std::f64::consts::E,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sample_signal_deterministic() {
        let a = sample_signal(0.3, 0.5, 200, 99).unwrap();
        let b = sample_signal(0.3, 0.5, 200, 99).unwrap();
        assert_eq!(a, b);
        // and streams are bit-identical
        use rand::SeedableRng;
        let mut r1 = ChaCha12Rng::seed_from_u64(5);
        let mut r2 = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = sample_signal_with_rng(0.1, 0.5, 100, &mut r1).unwrap();
            let y = sample_signal_with_rng(0.1, 0.5, 100, &mut r2).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn sample_signal_rejects_invalid_probability() {
        assert!(sample_signal(1.5, 1.0, 100, 0).is_err());
        assert!(sample_signal(0.5, 0.5, 0, 0).is_err());
    }

    #[test]
    fn sample_signal_sigma_at_half() {
        // p_ideal = 0: every draw sits at p = 1/2, the estimate maps through
        // s = 2p-1 so its standard error is 2*sqrt(p q / n) = 1/sqrt(n)
        let s = sample_signal(0.0, 0.5, 200, 1).unwrap();
        assert_relative_eq!(s.sigma, 1.0 / (200.0_f64).sqrt(), max_relative = 0.15);
    }

    #[test]
    fn sample_signal_unbiased() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for &(p_ideal, contrast) in &[(0.0, 0.5), (0.4, 0.5), (-0.8, 0.9), (1.0, 0.3)] {
            let n = 200u64;
            let reps = 10_000;
            let mut mean = 0.0;
            for _ in 0..reps {
                mean += sample_signal_with_rng(p_ideal, contrast, n, &mut rng)
                    .unwrap()
                    .s_hat;
            }
            mean /= reps as f64;
            let p = (1.0 + contrast * p_ideal) / 2.0;
            let se = 2.0 * (p * (1.0 - p) / n as f64).sqrt() / (reps as f64).sqrt();
            assert!(
                (mean - contrast * p_ideal).abs() < 4.0 * se + 1e-12,
                "bias at p_ideal={p_ideal}, contrast={contrast}: mean={mean}"
            );
        }
    }

    #[test]
    fn sample_signal_zero_contrast() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut mean = 0.0;
        let reps = 5000;
        for _ in 0..reps {
            mean += sample_signal_with_rng(0.7, 0.0, 400, &mut rng).unwrap().s_hat;
        }
        mean /= reps as f64;
        assert!(mean.abs() < 4.0 / (400.0 * reps as f64).sqrt());
        // sigma shrinks as 1/sqrt(n)
        let s1 = sample_signal(0.7, 0.0, 100, 3).unwrap().sigma;
        let s2 = sample_signal(0.7, 0.0, 10_000, 3).unwrap().sigma;
        assert_relative_eq!(s1 / s2, 10.0, max_relative = 0.3);
    }

    #[test]
    fn sample_signal_saturates_at_unit_probability() {
        let s = sample_signal(1.0, 1.0, 1_000_000, 8).unwrap();
        assert_eq!(s.s_hat, 1.0);
    }

    /// Generate Fig-2c-like fringe data and refit it with an independent
    /// profile-likelihood grid search; the frequency must come back within
    /// 0.1 Hz and the decay constant within 17 ms.
    #[test]
    fn fringe_generate_and_refit() {
        use rand::SeedableRng;
        let truth = FringeModel {
            amplitude: 0.5,
            offset: 0.0,
            frequency_hz: 164.9,
            phase_offset_rad: 0.35,
            decay_tau_s: 0.155,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n_points = 80;
        let t_max = 0.36;
        let cycles = 200u64;
        let mut data = Vec::new();
        for i in 0..n_points {
            let t = t_max * (i as f64 + 0.5) / n_points as f64;
            let s = fringe_signal(&truth, t, 0.0);
            let p = (1.0 + s) / 2.0;
            let draw = sample_probability_with_rng(p, cycles, &mut rng).unwrap();
            data.push((t, draw.s_hat));
        }

        // profile fit: for fixed (f, tau) the model is linear in
        // (a cos, b sin, offset); grid then refine
        let sse = |f: f64, tau: f64| -> f64 {
            let mut ata = [[0.0f64; 3]; 3];
            let mut aty = [0.0f64; 3];
            for &(t, y) in &data {
                let e = (-t / tau).exp();
                let (s, c) = (std::f64::consts::TAU * f * t).sin_cos();
                let row = [e * c, e * s, 1.0];
                for i in 0..3 {
                    for j in 0..3 {
                        ata[i][j] += row[i] * row[j];
                    }
                    aty[i] += row[i] * y;
                }
            }
            // 3x3 solve by elimination
            let mut m = ata;
            let mut v = aty;
            for col in 0..3 {
                let piv = m[col][col];
                for j in 0..3 {
                    m[col][j] /= piv;
                }
                v[col] /= piv;
                for row in 0..3 {
                    if row != col {
                        let k = m[row][col];
                        for j in 0..3 {
                            m[row][j] -= k * m[col][j];
                        }
                        v[row] -= k * v[col];
                    }
                }
            }
            data.iter()
                .map(|&(t, y)| {
                    let e = (-t / tau).exp();
                    let (s, c) = (std::f64::consts::TAU * f * t).sin_cos();
                    let model = v[0] * e * c + v[1] * e * s + v[2];
                    (y - model).powi(2)
                })
                .sum()
        };

        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut f = 160.0;
        while f <= 170.0 {
            let mut tau = 0.05;
            while tau <= 0.50 {
                let v = sse(f, tau);
                if v < best.0 {
                    best = (v, f, tau);
                }
                tau *= 1.05;
            }
            f += 0.02;
        }
        // local refinement
        let (mut bf, mut btau) = (best.1, best.2);
        let mut step_f = 0.02;
        let mut step_tau = btau * 0.05;
        for _ in 0..40 {
            let mut improved = false;
            for (df, dtau) in [
                (step_f, 0.0),
                (-step_f, 0.0),
                (0.0, step_tau),
                (0.0, -step_tau),
            ] {
                let cand = sse(bf + df, (btau + dtau).max(0.01));
                if cand < best.0 {
                    best.0 = cand;
                    bf += df;
                    btau = (btau + dtau).max(0.01);
                    improved = true;
                }
            }
            if !improved {
                step_f /= 2.0;
                step_tau /= 2.0;
            }
        }

        assert!(
            (bf - truth.frequency_hz).abs() < 0.1,
            "recovered f = {bf}"
        );
        assert!(
            (btau - truth.decay_tau_s).abs() < 0.017,
            "recovered tau = {btau}"
        );
    }
}
