//! File formats: the per-block campaign CSV, its metadata sidecar, and the
//! analysis output documents.
//!
//! The CSV schema is one row per measurement block:
//! `t_utc_s, dphi_{l,r}_{short,long}_rad (x4), s_hat_{l,r}_{short,long} (x4),
//! b_meas_mg, f_axial_meas_khz (may be empty), clamp_flags`.
//! `clamp_flags` is a bitmask: bit 0 = L short, 1 = L long, 2 = R short,
//! 3 = R long.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{AllanSeries, CBounds, CorrectionsFalseSignal, FitResult};
use crate::error::{Error, Result};
use crate::frames::{CTensorSccef, FrameConfig, HarmonicTable};
use crate::iondynamics::Handedness;
use crate::simulator::{
    BlockRecord, CampaignDataset, DriftSeries, RamseyConfig, RamseyDuration, SignalSlot,
    TruthModel,
};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t_utc_s: f64,
    dphi_l_short_rad: f64,
    dphi_l_long_rad: f64,
    dphi_r_short_rad: f64,
    dphi_r_long_rad: f64,
    s_hat_l_short: f64,
    s_hat_l_long: f64,
    s_hat_r_short: f64,
    s_hat_r_long: f64,
    b_meas_mg: f64,
    f_axial_meas_khz: Option<f64>,
    clamp_flags: u8,
}

impl CsvRow {
    fn from_record(rec: &BlockRecord) -> Self {
        let s = |h: Handedness, d: RamseyDuration| rec.slot(h, d);
        CsvRow {
            t_utc_s: rec.t_utc_s,
            dphi_l_short_rad: s(Handedness::L, RamseyDuration::Short).delta_phi_rad,
            dphi_l_long_rad: s(Handedness::L, RamseyDuration::Long).delta_phi_rad,
            dphi_r_short_rad: s(Handedness::R, RamseyDuration::Short).delta_phi_rad,
            dphi_r_long_rad: s(Handedness::R, RamseyDuration::Long).delta_phi_rad,
            s_hat_l_short: s(Handedness::L, RamseyDuration::Short).s_hat,
            s_hat_l_long: s(Handedness::L, RamseyDuration::Long).s_hat,
            s_hat_r_short: s(Handedness::R, RamseyDuration::Short).s_hat,
            s_hat_r_long: s(Handedness::R, RamseyDuration::Long).s_hat,
            b_meas_mg: rec.b_meas_mg,
            f_axial_meas_khz: rec.f_axial_meas_khz,
            clamp_flags: rec.clamp_mask(),
        }
    }

    fn into_record(self) -> Result<BlockRecord> {
        if self.clamp_flags > 0b1111 {
            return Err(Error::Schema(format!(
                "clamp_flags {} out of range",
                self.clamp_flags
            )));
        }
        let mut slots = [[SignalSlot::default(); 2]; 2];
        let assign = |slots: &mut [[SignalSlot; 2]; 2],
                      h: Handedness,
                      d: RamseyDuration,
                      dphi: f64,
                      s_hat: f64,
                      flags: u8| {
            slots[h.index()][d.index()] = SignalSlot {
                delta_phi_rad: dphi,
                s_hat,
                sigma: 0.0,
                clamped: flags & (1 << (2 * h.index() + d.index())) != 0,
            };
        };
        assign(
            &mut slots,
            Handedness::L,
            RamseyDuration::Short,
            self.dphi_l_short_rad,
            self.s_hat_l_short,
            self.clamp_flags,
        );
        assign(
            &mut slots,
            Handedness::L,
            RamseyDuration::Long,
            self.dphi_l_long_rad,
            self.s_hat_l_long,
            self.clamp_flags,
        );
        assign(
            &mut slots,
            Handedness::R,
            RamseyDuration::Short,
            self.dphi_r_short_rad,
            self.s_hat_r_short,
            self.clamp_flags,
        );
        assign(
            &mut slots,
            Handedness::R,
            RamseyDuration::Long,
            self.dphi_r_long_rad,
            self.s_hat_r_long,
            self.clamp_flags,
        );
        Ok(BlockRecord {
            t_utc_s: self.t_utc_s,
            slots,
            b_meas_mg: self.b_meas_mg,
            f_axial_meas_khz: self.f_axial_meas_khz,
            // acquisition order is not part of the file schema
            acquisition_order: [
                (Handedness::L, RamseyDuration::Short),
                (Handedness::L, RamseyDuration::Long),
                (Handedness::R, RamseyDuration::Short),
                (Handedness::R, RamseyDuration::Long),
            ],
        })
    }
}

pub fn write_dataset_csv<W: Write>(writer: W, dataset: &CampaignDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in &dataset.blocks {
        w.serialize(CsvRow::from_record(rec))
            .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<CampaignDataset> {
    let mut r = csv::Reader::from_reader(reader);
    {
        let headers = r.headers().map_err(|e| Error::Schema(e.to_string()))?;
        let expected = [
            "t_utc_s",
            "dphi_l_short_rad",
            "dphi_l_long_rad",
            "dphi_r_short_rad",
            "dphi_r_long_rad",
            "s_hat_l_short",
            "s_hat_l_long",
            "s_hat_r_short",
            "s_hat_r_long",
            "b_meas_mg",
            "f_axial_meas_khz",
            "clamp_flags",
        ];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Schema(format!(
                "unexpected CSV header: got [{}]",
                got.join(", ")
            )));
        }
    }
    let mut blocks = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("row {}: {e}", i + 2)))?;
        blocks.push(row.into_record()?);
    }
    if blocks.is_empty() {
        return Err(Error::InsufficientData("dataset has no rows".into()));
    }
    Ok(CampaignDataset { blocks })
}

pub fn write_dataset_csv_file(path: &Path, dataset: &CampaignDataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset_csv(std::io::BufWriter::new(file), dataset)
}

pub fn read_dataset_csv_file(path: &Path) -> Result<CampaignDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset_csv(std::io::BufReader::new(file))
}

/// Environment summary stored alongside a dataset. In blind mode the
/// injected tensor is withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub c_sccef: Option<CTensorSccef>,
    pub b_field_g: DriftSeries,
    pub b_gradient_hz: DriftSeries,
    pub f_axial_khz: DriftSeries,
    pub ac_stark_hz: DriftSeries,
    pub phi_offset_rad: DriftSeries,
    pub readout_offset: DriftSeries,
    pub white_noise_block_hz: f64,
}

impl TruthSummary {
    pub fn from_truth(truth: &TruthModel, blind: bool) -> Self {
        Self {
            c_sccef: if blind { None } else { Some(truth.c_sccef) },
            b_field_g: truth.b_field_g.clone(),
            b_gradient_hz: truth.b_gradient_hz.clone(),
            f_axial_khz: truth.f_axial_khz.clone(),
            ac_stark_hz: truth.ac_stark_hz.clone(),
            phi_offset_rad: truth.phi_offset_rad.clone(),
            readout_offset: truth.readout_offset.clone(),
            white_noise_block_hz: truth.white_noise_block_hz,
        }
    }
}

/// Sidecar describing how a dataset was produced; everything the analysis
/// needs to interpret the CSV without re-deriving conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub schema_version: u32,
    pub seed: u64,
    pub blind: bool,
    pub pair_sensitivity_hz: f64,
    pub frame: FrameConfig,
    pub ramsey: RamseyConfig,
    pub truth: TruthSummary,
}

pub fn write_metadata_file(path: &Path, meta: &DatasetMetadata) -> Result<()> {
    let s = toml::to_string_pretty(meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_metadata_file(path: &Path) -> Result<DatasetMetadata> {
    let s = std::fs::read_to_string(path)?;
    let meta: DatasetMetadata = toml::from_str(&s).map_err(|e| Error::Schema(e.to_string()))?;
    if meta.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported metadata schema version {}",
            meta.schema_version
        )));
    }
    Ok(meta)
}

/// Conventional sidecar path for a dataset CSV.
pub fn metadata_path_for(dataset_path: &Path) -> std::path::PathBuf {
    let mut name = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    name.push_str(".meta.toml");
    dataset_path.with_file_name(name)
}

pub fn write_harmonic_table_csv<W: Write>(mut writer: W, table: &HarmonicTable) -> Result<()> {
    writeln!(writer, "frequency_label,omega_rad_per_s,C_j,S_j")?;
    writeln!(writer, "offset,0,{},0", table.offset)?;
    for row in &table.rows {
        writeln!(
            writer,
            "{},{},{},{}",
            row.label, row.omega_rad_s, row.c_amp, row.s_amp
        )?;
    }
    Ok(())
}

pub fn write_allan_csv<W: Write>(mut writer: W, series: &AllanSeries) -> Result<()> {
    writeln!(writer, "tau_s,sigma_f_hz")?;
    for p in &series.points {
        writeln!(writer, "{},{}", p.tau_s, p.sigma_f_hz)?;
    }
    Ok(())
}

/// C0^(2) time series as CSV.
pub fn write_series_csv<W: Write>(mut writer: W, samples: &[(f64, f64)]) -> Result<()> {
    writeln!(writer, "t_s,c02")?;
    for (t, v) in samples {
        writeln!(writer, "{t},{v}")?;
    }
    Ok(())
}

/// The analysis output document: fit, bounds, stability and the
/// corrections-only cross-check in one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: ReportParams,
    pub sigmas: ReportParams,
    pub covariance: [[f64; 5]; 5],
    pub chi2_reduced: f64,
    pub n_bins: usize,
    pub n_blocks_used: usize,
    pub n_blocks_dropped: usize,
    pub combos: Vec<crate::analysis::CCombination>,
    pub c_components: CComponents,
    pub allan_white_level_hz_sqrt_s: Option<f64>,
    pub allan_slope: Option<f64>,
    pub corrections_zeeman_amplitudes_hz: [f64; 4],
    pub corrections_quadrupole_amplitudes_hz: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub offset: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ReportParams {
    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            offset: v[0],
            a: v[1],
            b: v[2],
            c: v[3],
            d: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CComponents {
    pub c_x_minus_y: ValueSigma,
    pub c_xy: ValueSigma,
    pub c_xz: ValueSigma,
    pub c_yz: ValueSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueSigma {
    pub value: f64,
    pub sigma: f64,
}

impl AnalysisReport {
    pub fn assemble(
        fit: &FitResult,
        bounds: &CBounds,
        n_bins: usize,
        n_blocks_used: usize,
        n_blocks_dropped: usize,
        allan_fit: Option<(f64, f64)>,
        false_signal: &CorrectionsFalseSignal,
    ) -> Self {
        let vs = |i: usize| ValueSigma {
            value: bounds.c_hat[i],
            sigma: bounds.c_sigma[i],
        };
        Self {
            params: ReportParams::from_array(fit.params),
            sigmas: ReportParams::from_array(fit.sigmas()),
            covariance: fit.covariance,
            chi2_reduced: fit.chi2_reduced,
            n_bins,
            n_blocks_used,
            n_blocks_dropped,
            combos: bounds.combos.clone(),
            c_components: CComponents {
                c_x_minus_y: vs(0),
                c_xy: vs(1),
                c_xz: vs(2),
                c_yz: vs(3),
            },
            allan_white_level_hz_sqrt_s: allan_fit.map(|(a, _)| a),
            allan_slope: allan_fit.map(|(_, s)| s),
            corrections_zeeman_amplitudes_hz: false_signal.zeeman.harmonic_amplitudes(),
            corrections_quadrupole_amplitudes_hz: false_signal
                .quadrupole
                .harmonic_amplitudes(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::CTensorSccef;
    use crate::sensitivity::{pair_sensitivity, LevelSpec};
    use crate::simulator::{RamseyConfig, Simulator, TruthModel};
    use crate::systematics::SystematicsCalibration;

    fn small_campaign(seed: u64) -> CampaignDataset {
        let ramsey = RamseyConfig {
            campaign_duration_s: 1800.0,
            ..RamseyConfig::default()
        };
        let sim = Simulator::new(
            ramsey,
            TruthModel::seeded(CTensorSccef::zero(), seed),
            FrameConfig::default(),
            SystematicsCalibration::default(),
            pair_sensitivity(&LevelSpec::d5_2()).unwrap(),
        )
        .unwrap();
        sim.run_campaign(seed).unwrap()
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let data = small_campaign(11);
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &data).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back.blocks.len(), data.blocks.len());
        for (a, b) in data.blocks.iter().zip(&back.blocks) {
            assert_eq!(a.t_utc_s, b.t_utc_s);
            assert_eq!(a.b_meas_mg, b.b_meas_mg);
            assert_eq!(a.f_axial_meas_khz, b.f_axial_meas_khz);
            assert_eq!(a.clamp_mask(), b.clamp_mask());
            for h in Handedness::BOTH {
                for d in RamseyDuration::BOTH {
                    assert_eq!(a.slot(h, d).delta_phi_rad, b.slot(h, d).delta_phi_rad);
                    assert_eq!(a.slot(h, d).s_hat, b.slot(h, d).s_hat);
                }
            }
        }
        // second serialisation is byte-identical
        let mut buf2 = Vec::new();
        write_dataset_csv(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "time,stuff\n1,2\n";
        match read_dataset_csv(text.as_bytes()) {
            Err(Error::Schema(_)) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_malformed_row() {
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &small_campaign(3)).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("not,a,valid,row\n");
        assert!(matches!(
            read_dataset_csv(text.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_axial_field_is_none() {
        let data = small_campaign(5);
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // cadence 10: most rows end with an empty axial field
        let empty_axial = text
            .lines()
            .skip(1)
            .filter(|l| l.rsplit(',').nth(1) == Some(""))
            .count();
        assert!(empty_axial > 0);
        let back = read_dataset_csv(text.as_bytes()).unwrap();
        assert!(back.blocks.iter().any(|b| b.f_axial_meas_khz.is_none()));
        assert!(back.blocks.iter().any(|b| b.f_axial_meas_khz.is_some()));
    }

    #[test]
    fn metadata_round_trip_and_blinding() {
        let truth = TruthModel::seeded(
            CTensorSccef {
                c_xz: 1e-18,
                ..CTensorSccef::zero()
            },
            9,
        );
        let dir = std::env::temp_dir().join("lvsim_meta_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dataset.meta.toml");
        let meta = DatasetMetadata {
            schema_version: DATASET_SCHEMA_VERSION,
            seed: 9,
            blind: false,
            pair_sensitivity_hz: -8.9e15,
            frame: FrameConfig::default(),
            ramsey: RamseyConfig::default(),
            truth: TruthSummary::from_truth(&truth, false),
        };
        write_metadata_file(&path, &meta).unwrap();
        let back = read_metadata_file(&path).unwrap();
        assert_eq!(back, meta);
        assert_eq!(back.truth.c_sccef.unwrap().c_xz, 1e-18);

        let blinded = TruthSummary::from_truth(&truth, true);
        assert!(blinded.c_sccef.is_none());
        let text = toml::to_string_pretty(&DatasetMetadata {
            truth: blinded,
            blind: true,
            ..meta
        })
        .unwrap();
        assert!(!text.contains("c_XZ"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn metadata_sidecar_path() {
        let p = metadata_path_for(Path::new("/tmp/out/dataset.csv"));
        assert_eq!(p, Path::new("/tmp/out/dataset.meta.toml"));
    }
}
