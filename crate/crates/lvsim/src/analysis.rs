//! From raw block records to bounds: frequency extraction, systematic
//! corrections, hourly binning, the weighted sidereal fit, uncorrelated
//! tensor combinations, Allan deviation, and the corrections-only
//! false-signal check.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FrameConfig;
use crate::iondynamics::Handedness;
use crate::simulator::{BlockRecord, RamseyConfig, RamseyDuration};
use crate::systematics::SystematicsCalibration;

/// Parameter order of the sidereal fit: offset, then the cos/sin pairs at
/// the first and second harmonics.
pub const PARAM_NAMES: [&str; 5] = ["offset", "A", "B", "C", "D"];

/// Per-block extracted frequency before corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawBlockFrequency {
    pub t_utc_s: f64,
    pub f_l_hz: f64,
    pub f_r_hz: f64,
    pub f_bar_hz: f64,
    /// Projection-noise floor of `f_bar` (analytic, at the servo
    /// operating point).
    pub sigma_hz: f64,
    pub clamped: bool,
    pub b_meas_mg: Option<f64>,
    pub f_axial_meas_khz: Option<f64>,
}

/// A corrected frequency point ready for binning and fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub t_utc_s: f64,
    pub f_bar_hz: f64,
    pub sigma_hz: f64,
    pub zeeman_correction_hz: f64,
    pub quadrupole_correction_hz: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    MissingBField,
    NoAxialReference,
    ClampedOutlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub block_index: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub points: Vec<FrequencyPoint>,
    pub dropped: Vec<DropRecord>,
}

/// Knobs of the analysis pipeline; the defaults mirror the measurement
/// procedure (60-minute bins, loose outlier gate on clamp-flagged blocks).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub bin_width_s: f64,
    pub outlier_k_sigma: f64,
    pub outlier_window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width_s: 3600.0,
            outlier_k_sigma: 5.0,
            outlier_window: 101,
        }
    }
}

/// Per-handedness and averaged frequencies from the long/short phase
/// differencing.
///
/// The servo registers are the cumulative sums of the recorded corrections,
/// so the per-block total phase (register plus current correction) carries
/// only that block's measurement noise; differencing long minus short over
/// the effective Ramsey time inverts it to a frequency. The unknown initial
/// register values contribute a constant, absorbed later by the fit offset.
pub fn block_frequencies(
    records: &[BlockRecord],
    cfg: &RamseyConfig,
) -> Result<Vec<RawBlockFrequency>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no blocks in dataset".into()));
    }
    let dt = cfg.effective_ramsey_s();
    if dt <= 0.0 {
        return Err(Error::Config("effective Ramsey duration must be > 0".into()));
    }
    let sigma_phi = 1.0 / (cfg.contrast * (cfg.n_cycles_per_signal as f64).sqrt());
    let sigma_fbar = sigma_phi / (std::f64::consts::TAU * dt);

    let mut cum = [[0.0f64; 2]; 2];
    let mut out = Vec::with_capacity(records.len());
    let mut last_t = f64::NEG_INFINITY;
    for rec in records {
        if rec.t_utc_s < last_t {
            return Err(Error::Schema("block timestamps must be non-decreasing".into()));
        }
        last_t = rec.t_utc_s;
        for h in Handedness::BOTH {
            for d in RamseyDuration::BOTH {
                cum[h.index()][d.index()] += rec.slot(h, d).delta_phi_rad;
            }
        }
        let f_of = |h: Handedness| {
            (cum[h.index()][RamseyDuration::Long.index()]
                - cum[h.index()][RamseyDuration::Short.index()])
                / (std::f64::consts::TAU * dt)
        };
        let f_l = f_of(Handedness::L);
        let f_r = f_of(Handedness::R);
        out.push(RawBlockFrequency {
            t_utc_s: rec.t_utc_s,
            f_l_hz: f_l,
            f_r_hz: f_r,
            f_bar_hz: (f_l + f_r) / 2.0,
            sigma_hz: sigma_fbar,
            clamped: rec.any_clamped(),
            b_meas_mg: if rec.b_meas_mg.is_finite() {
                Some(rec.b_meas_mg)
            } else {
                None
            },
            f_axial_meas_khz: rec.f_axial_meas_khz,
        });
    }
    Ok(out)
}

/// Subtract the quadratic Zeeman and electric quadrupole shifts evaluated
/// at the co-measured field and axial frequency.
pub fn apply_corrections(
    raw: &RawBlockFrequency,
    b_meas_g: f64,
    f_axial_khz: f64,
    cal: &SystematicsCalibration,
) -> FrequencyPoint {
    let zeeman = cal.zeeman_shift_hz(b_meas_g);
    let quad = cal.quadrupole_shift_hz(f_axial_khz);
    FrequencyPoint {
        t_utc_s: raw.t_utc_s,
        f_bar_hz: raw.f_bar_hz - zeeman - quad,
        sigma_hz: raw.sigma_hz,
        zeeman_correction_hz: zeeman,
        quadrupole_correction_hz: quad,
        clamped: raw.clamped,
    }
}

/// Full preparation pipeline: extraction, corrections with
/// last-observation-carried-forward axial values, and the outlier gate on
/// clamp-flagged blocks.
pub fn prepare_series(
    records: &[BlockRecord],
    cfg: &RamseyConfig,
    cal: &SystematicsCalibration,
    analysis: &AnalysisConfig,
) -> Result<PreparedSeries> {
    let raw = block_frequencies(records, cfg)?;
    let mut dropped = Vec::new();
    let mut points = Vec::with_capacity(raw.len());
    let mut f_axial_locf: Option<f64> = None;
    for (i, r) in raw.iter().enumerate() {
        if let Some(fa) = r.f_axial_meas_khz {
            f_axial_locf = Some(fa);
        }
        let Some(b_mg) = r.b_meas_mg else {
            dropped.push(DropRecord {
                block_index: i,
                reason: DropReason::MissingBField,
            });
            continue;
        };
        let Some(fa) = f_axial_locf else {
            dropped.push(DropRecord {
                block_index: i,
                reason: DropReason::NoAxialReference,
            });
            continue;
        };
        points.push((i, apply_corrections(r, b_mg * 1e-3, fa, cal)));
    }

    // Loose outlier gate: clamp-flagged blocks are kept unless they sit far
    // from the running median of the corrected series.
    let values: Vec<f64> = points.iter().map(|(_, p)| p.f_bar_hz).collect();
    let sigma_robust = mad_sigma(&values);
    let medians = running_median(&values, analysis.outlier_window);
    let mut kept = Vec::with_capacity(points.len());
    for (j, (i, p)) in points.into_iter().enumerate() {
        if p.clamped
            && sigma_robust > 0.0
            && (p.f_bar_hz - medians[j]).abs() > analysis.outlier_k_sigma * sigma_robust
        {
            dropped.push(DropRecord {
                block_index: i,
                reason: DropReason::ClampedOutlier,
            });
        } else {
            kept.push(p);
        }
    }
    Ok(PreparedSeries {
        points: kept,
        dropped,
    })
}

fn mad_sigma(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let med = median(values);
    let devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median(&devs)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn running_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            median(&values[lo..hi])
        })
        .collect()
}

/// One binned data point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedPoint {
    pub t_utc_s: f64,
    pub value: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Bin a series into fixed windows; the bin error is the standard error of
/// the in-bin scatter, and bins with fewer than two points are skipped.
pub fn bin_series(points: &[FrequencyPoint], width_s: f64) -> Result<Vec<BinnedPoint>> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to bin".into()));
    }
    if width_s <= 0.0 {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let t0 = points[0].t_utc_s;
    let mut bins: Vec<Vec<&FrequencyPoint>> = Vec::new();
    for p in points {
        let idx = ((p.t_utc_s - t0) / width_s).floor() as usize;
        if bins.len() <= idx {
            bins.resize_with(idx + 1, Vec::new);
        }
        bins[idx].push(p);
    }
    let mut out = Vec::new();
    for bin in bins.iter().filter(|b| b.len() >= 2) {
        let n = bin.len() as f64;
        let mean_t = bin.iter().map(|p| p.t_utc_s).sum::<f64>() / n;
        let mean_f = bin.iter().map(|p| p.f_bar_hz).sum::<f64>() / n;
        let var = bin
            .iter()
            .map(|p| (p.f_bar_hz - mean_f).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        out.push(BinnedPoint {
            t_utc_s: mean_t,
            value: mean_f,
            sigma: (var / n).sqrt(),
            n: bin.len(),
        });
    }
    Ok(out)
}

/// A generic weighted point for the sidereal fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub t_utc_s: f64,
    pub value: f64,
    pub sigma: f64,
}

impl From<&BinnedPoint> for FitPoint {
    fn from(b: &BinnedPoint) -> Self {
        FitPoint {
            t_utc_s: b.t_utc_s,
            value: b.value,
            sigma: b.sigma,
        }
    }
}

/// Weighted least-squares fit result for
/// `offset + A cos(wT) + B sin(wT) + C cos(2wT) + D sin(2wT)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// (offset, A, B, C, D) in the units of the fitted series.
    pub params: [f64; 5],
    pub covariance: [[f64; 5]; 5],
    pub chi2_reduced: f64,
    pub n_points: usize,
}

impl FitResult {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn sigmas(&self) -> [f64; 5] {
        [
            self.sigma(0),
            self.sigma(1),
            self.sigma(2),
            self.sigma(3),
            self.sigma(4),
        ]
    }

    /// |A|, |B|, |C|, |D| without the offset.
    pub fn harmonic_amplitudes(&self) -> [f64; 4] {
        [
            self.params[1].abs(),
            self.params[2].abs(),
            self.params[3].abs(),
            self.params[4].abs(),
        ]
    }
}

fn design_row(t_since_epoch: f64, omega: f64) -> [f64; 5] {
    let (s1, c1) = (omega * t_since_epoch).sin_cos();
    let (s2, c2) = (2.0 * omega * t_since_epoch).sin_cos();
    [1.0, c1, s1, c2, s2]
}

/// Weighted least squares of the two-harmonic sidereal model, with time
/// measured from the configured equinox epoch. Solved by QR of the
/// whitened design; the parameter covariance is `(X^T W X)^{-1}`.
pub fn fit_sidereal(points: &[FitPoint], epoch_utc_s: f64, omega_rad_s: f64) -> Result<FitResult> {
    let n = points.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!(
            "sidereal fit needs at least 6 points, got {n}"
        )));
    }
    for p in points {
        if !(p.sigma > 0.0) || !p.value.is_finite() {
            return Err(Error::InvalidArgument(
                "fit points need finite values and positive sigmas".into(),
            ));
        }
    }
    let mut x = DMatrix::zeros(n, 5);
    let mut y = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let w = 1.0 / p.sigma;
        let row = design_row(p.t_utc_s - epoch_utc_s, omega_rad_s);
        for (j, r) in row.iter().enumerate() {
            x[(i, j)] = r * w;
        }
        y[i] = p.value * w;
    }
    let qr = x.qr();
    let r = qr.r();
    let max_diag = (0..5).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..5).any(|i| r[(i, i)].abs() < 1e-12 * max_diag.max(1e-300)) {
        return Err(Error::Numerical(
            "rank-deficient design matrix in sidereal fit".into(),
        ));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("QR solve failed in sidereal fit".into()))?;

    let rtr = r.transpose() * &r;
    let cov = rtr
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular normal matrix in sidereal fit".into()))?;

    let mut chi2 = 0.0;
    for p in points {
        let row = design_row(p.t_utc_s - epoch_utc_s, omega_rad_s);
        let model: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        chi2 += ((p.value - model) / p.sigma).powi(2);
    }
    let dof = (n - 5) as f64;

    let mut params = [0.0; 5];
    let mut covariance = [[0.0; 5]; 5];
    for i in 0..5 {
        params[i] = beta[i];
        for j in 0..5 {
            covariance[i][j] = cov[(i, j)];
        }
    }
    Ok(FitResult {
        params,
        covariance,
        chi2_reduced: chi2 / dof,
        n_points: n,
    })
}

/// Conservative error scaling: multiply the covariance by chi2_reduced when
/// it exceeds one (sigmas scale by sqrt(chi2_reduced)), identity otherwise.
pub fn scale_uncertainties(fit: &FitResult) -> FitResult {
    let scale = fit.chi2_reduced.max(1.0);
    let mut out = fit.clone();
    for row in out.covariance.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    out
}

/// One uncorrelated combination of the four anisotropy components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CCombination {
    /// Unit coefficient vector over (c_X-Y, c_XY, c_XZ, c_YZ).
    pub vector: [f64; 4],
    pub value: f64,
    pub sigma: f64,
}

/// Tensor-component estimates and the uncorrelated combinations from
/// diagonalising the fit covariance mapped into c-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CBounds {
    /// (c_X-Y, c_XY, c_XZ, c_YZ) point estimates.
    pub c_hat: [f64; 4],
    /// Their marginal 1-sigma uncertainties.
    pub c_sigma: [f64; 4],
    pub combos: Vec<CCombination>,
}

/// Map the fitted amplitudes to tensor components and report orthonormal
/// uncorrelated combinations.
///
/// The amplitude-to-component factors follow from the sidereal rows of the
/// harmonic decomposition: A and B see `-3 sin(2 chi)` times c_XZ and c_YZ,
/// C sees `-(3/2) sin^2(chi)` times c_X-Y, and D sees `-3 sin^2(chi)` times
/// c_XY, all multiplied by the two-ion sensitivity.
pub fn c_bounds(fit: &FitResult, pair_sensitivity_hz: f64, frame: &FrameConfig) -> Result<CBounds> {
    if pair_sensitivity_hz == 0.0 {
        return Err(Error::InvalidArgument("pair sensitivity must be nonzero".into()));
    }
    let s2chi = (2.0 * frame.chi_rad).sin();
    let s2 = frame.chi_rad.sin().powi(2);
    let k_xz = pair_sensitivity_hz * (-3.0 * s2chi);
    let k_yz = k_xz;
    let k_xmy = pair_sensitivity_hz * (-1.5 * s2);
    let k_xy = pair_sensitivity_hz * (-3.0 * s2);
    if k_xz == 0.0 || k_xmy == 0.0 {
        return Err(Error::Numerical(
            "degenerate geometry: sidereal amplitudes carry no tensor sensitivity".into(),
        ));
    }

    // component order: (c_X-Y, c_XY, c_XZ, c_YZ); amplitude order (A,B,C,D)
    let c_hat = [
        fit.params[3] / k_xmy,
        fit.params[4] / k_xy,
        fit.params[1] / k_xz,
        fit.params[2] / k_yz,
    ];
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0,       0.0,       1.0 / k_xmy, 0.0,
        0.0,       0.0,       0.0,         1.0 / k_xy,
        1.0 / k_xz, 0.0,      0.0,         0.0,
        0.0,       1.0 / k_yz, 0.0,        0.0,
    );
    let mut amp_cov = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            amp_cov[(i, j)] = fit.covariance[i + 1][j + 1];
        }
    }
    if amp_cov.determinant().abs() < 1e-300 {
        return Err(Error::Numerical("singular fit covariance".into()));
    }
    let c_cov = m * amp_cov * m.transpose();
    let c_sigma = [
        c_cov[(0, 0)].max(0.0).sqrt(),
        c_cov[(1, 1)].max(0.0).sqrt(),
        c_cov[(2, 2)].max(0.0).sqrt(),
        c_cov[(3, 3)].max(0.0).sqrt(),
    ];

    let eig = SymmetricEigen::new(c_cov);
    let mut combos: Vec<CCombination> = (0..4)
        .map(|k| {
            let v: Vector4<f64> = eig.eigenvectors.column(k).into();
            let value = v.dot(&Vector4::from(c_hat));
            CCombination {
                vector: [v[0], v[1], v[2], v[3]],
                value,
                sigma: eig.eigenvalues[k].max(0.0).sqrt(),
            }
        })
        .collect();
    combos.sort_by(|a, b| a.sigma.partial_cmp(&b.sigma).unwrap());
    Ok(CBounds {
        c_hat,
        c_sigma,
        combos,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    pub tau_s: f64,
    pub sigma_f_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanSeries {
    pub points: Vec<AllanPoint>,
}

/// Overlapping Allan deviation of a frequency series sampled at `tau0_s`,
/// over octave-spaced averaging times up to a quarter of the record.
pub fn overlapping_allan(values: &[f64], tau0_s: f64) -> Result<AllanSeries> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InsufficientData(
            "allan deviation needs at least 4 points".into(),
        ));
    }
    if tau0_s <= 0.0 {
        return Err(Error::InvalidArgument("tau0 must be positive".into()));
    }
    // prefix sums for O(1) window averages
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let window = |j: usize, m: usize| prefix[j + m] - prefix[j];

    let mut points = Vec::new();
    let mut m = 1usize;
    while m <= n / 4 {
        let terms = n - 2 * m + 1;
        let mut acc = 0.0;
        for j in 0..terms {
            // d is the difference of adjacent m-sample sums, i.e. m times the
            // difference of adjacent m-sample means
            let d = window(j + m, m) - window(j, m);
            acc += d * d;
        }
        let sigma_f_hz = (acc / (2.0 * (m as f64).powi(4) * terms as f64)).sqrt();
        points.push(AllanPoint {
            tau_s: m as f64 * tau0_s,
            sigma_f_hz,
        });
        m *= 2;
    }
    Ok(AllanSeries { points })
}

/// Allan deviation of a frequency-point series, inferring the base cadence
/// from the median spacing. The series must be near-uniform; short gaps are
/// tolerated by treating samples as contiguous.
pub fn allan_from_points(points: &[FrequencyPoint]) -> Result<AllanSeries> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(
            "allan deviation needs at least 4 points".into(),
        ));
    }
    let mut dts: Vec<f64> = points
        .windows(2)
        .map(|w| w[1].t_utc_s - w[0].t_utc_s)
        .collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tau0 = dts[dts.len() / 2];
    if !(tau0 > 0.0) {
        return Err(Error::Schema("series cadence must be positive".into()));
    }
    let values: Vec<f64> = points.iter().map(|p| p.f_bar_hz).collect();
    overlapping_allan(&values, tau0)
}

/// Log-log characterisation of an Allan series: the free-slope power-law
/// exponent and the amplitude `a` of the fixed-slope model `a / sqrt(tau)`.
pub fn allan_white_noise_fit(series: &AllanSeries) -> Result<(f64, f64)> {
    if series.points.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two allan points".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|p| p.sigma_f_hz > 0.0)
        .map(|p| (p.tau_s.ln(), p.sigma_f_hz.ln()))
        .collect();
    if logs.len() < 2 {
        return Err(Error::Numerical("allan series is degenerate".into()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let amplitude = logs
        .iter()
        .map(|p| p.1 + 0.5 * p.0)
        .sum::<f64>()
        / n;
    Ok((amplitude.exp(), slope))
}

/// Sidereal fits of the two correction series themselves: if the
/// corrections carry no power at the fit harmonics, skipping them could
/// not have faked a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionsFalseSignal {
    pub zeeman: FitResult,
    pub quadrupole: FitResult,
}

pub fn corrections_false_signal(
    points: &[FrequencyPoint],
    epoch_utc_s: f64,
    omega_rad_s: f64,
) -> Result<CorrectionsFalseSignal> {
    let series = |select: fn(&FrequencyPoint) -> f64| -> Vec<FitPoint> {
        points
            .iter()
            .map(|p| FitPoint {
                t_utc_s: p.t_utc_s,
                value: select(p),
                sigma: 1.0,
            })
            .collect()
    };
    Ok(CorrectionsFalseSignal {
        zeeman: fit_sidereal(&series(|p| p.zeeman_correction_hz), epoch_utc_s, omega_rad_s)?,
        quadrupole: fit_sidereal(
            &series(|p| p.quadrupole_correction_hz),
            epoch_utc_s,
            omega_rad_s,
        )?,
    })
}
