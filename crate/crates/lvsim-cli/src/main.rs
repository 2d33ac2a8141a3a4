//! `lvsim` command line: sensitivity reports, frame transforms, synthetic
//! campaigns, analysis, closure runs and Allan deviation.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lvsim::analysis::{
    allan_from_points, allan_white_noise_fit, bin_series, c_bounds, corrections_false_signal,
    fit_sidereal, prepare_series, scale_uncertainties, FitPoint,
};
use lvsim::config::{parse_c_tensor_assignments, read_c_tensor_file, RunConfig};
use lvsim::dataset::{
    metadata_path_for, read_dataset_csv_file, read_metadata_file, write_allan_csv,
    write_dataset_csv_file, write_harmonic_table_csv, write_metadata_file, write_series_csv,
    AnalysisReport, DatasetMetadata, TruthSummary, DATASET_SCHEMA_VERSION,
};
use lvsim::frames::{c02_at, harmonic_table};
use lvsim::sensitivity::{
    coefficients, pair_sensitivity, single_ion_q, LevelLabel, LevelSpec, D32_MJ2_REFERENCE_HZ,
};
use lvsim::Error;

#[derive(Parser)]
#[command(
    name = "lvsim",
    about = "Simulate and analyse a two-ion sidereal-modulation test of electron-dispersion isotropy",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// TOML run configuration; defaults cover every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for simulation-type commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Withhold the injected tensor from dataset metadata.
    #[arg(long, global = true)]
    blind: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Report energy-shift coefficients for an atomic level.
    Sensitivity {
        /// Level name: D5/2 or D3/2 (matrix elements overridable via
        /// [level] in the config file).
        #[arg(long)]
        level: String,
        /// Also print the two-ion pair sensitivity.
        #[arg(long)]
        pair: bool,
    },
    /// Transform a Sun-frame tensor into the lab-frame observable.
    Transform {
        /// TOML file with tensor components (c_TT .. c_YZ).
        #[arg(long = "c-file")]
        c_file: PathBuf,
        /// Emit the harmonic-amplitude table (CSV).
        #[arg(long, conflicts_with = "series")]
        table: bool,
        /// Emit a sampled time series (CSV).
        #[arg(long)]
        series: bool,
        /// Series length in days.
        #[arg(long, default_value_t = 2.0)]
        days: f64,
        /// Series sampling step in seconds.
        #[arg(long, default_value_t = 600.0)]
        step_s: f64,
    },
    /// Generate a synthetic campaign dataset.
    Simulate {
        /// Campaign length in hours (overrides the config).
        #[arg(long)]
        hours: Option<f64>,
    },
    /// Analyse a dataset CSV: corrections, binning, sidereal fit, bounds,
    /// Allan deviation.
    Analyze {
        /// Dataset CSV (its .meta.toml sidecar is used when present).
        #[arg(long)]
        input: PathBuf,
        /// Bin width in seconds (default: an hour, shrunk for short runs).
        #[arg(long)]
        bin_width_s: Option<f64>,
    },
    /// One-shot inject-and-recover run: simulate with an injected tensor,
    /// analyse, and report per-component pulls.
    Closure {
        /// Injected components, e.g. "c_XZ=1e-18" or "c_XY=3e-18,c_YZ=1e-18".
        #[arg(long)]
        inject: String,
        /// Campaign length in hours (overrides the config).
        #[arg(long)]
        hours: Option<f64>,
    },
    /// Allan deviation of the extracted block frequencies of a dataset.
    Allan {
        #[arg(long)]
        input: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 3,
        Error::Schema(_) => 4,
        Error::InsufficientData(_) => 5,
        Error::Numerical(_) => 6,
        Error::Io(_) => 7,
        Error::InvalidArgument(_) => 8,
    }
}

fn class_for(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Schema(_) => "schema",
        Error::InsufficientData(_) => "insufficient-data",
        Error::Numerical(_) => "numerical",
        Error::Io(_) => "io",
        Error::InvalidArgument(_) => "invalid-argument",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}] {}", class_for(&err), err);
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_config(opts: &GlobalOpts) -> Result<RunConfig, Error> {
    match &opts.config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(opts: &GlobalOpts, cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn seed_of(opts: &GlobalOpts, cfg: &RunConfig) -> Result<u64, Error> {
    opts.seed.or(cfg.seed).ok_or_else(|| {
        Error::InvalidArgument("a seed is required: pass --seed or set `seed` in the config".into())
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Sensitivity { level, pair } => cmd_sensitivity(&cfg, &level, pair),
        Command::Transform {
            c_file,
            table,
            series,
            days,
            step_s,
        } => cmd_transform(&cli.global, &cfg, &c_file, table, series, days, step_s),
        Command::Simulate { hours } => cmd_simulate(&cli.global, &cfg, hours),
        Command::Analyze { input, bin_width_s } => {
            cmd_analyze(&cli.global, &cfg, &input, bin_width_s)
        }
        Command::Closure { inject, hours } => cmd_closure(&cli.global, &cfg, &inject, hours),
        Command::Allan { input } => cmd_allan(&cli.global, &cfg, &input),
    }
}

fn cmd_sensitivity(cfg: &RunConfig, level_arg: &str, pair: bool) -> Result<(), Error> {
    let label: LevelLabel = level_arg.parse()?;
    // config-level matrix elements apply when they describe the same level
    let configured = cfg.level.build()?;
    let level = if configured.label == label {
        configured
    } else {
        LevelSpec::preset(label)
    };
    let co = coefficients(&level)?;
    println!("level {}  (J = {})", level.label, level.j);
    println!(
        "matrix elements: <J||T(2)||J> = {} a.u., <p^2> = {} a.u. (au->Hz = {:.5e})",
        level.t2_me_au, level.p2_me_au, co.au_to_hz
    );
    println!("tensor coefficients per unit C0^(2):");
    println!("  constant term: {:+.4e} Hz", co.const_hz);
    println!("  m_J^2 term:    {:+.4e} Hz", co.mj2_hz);
    if level.label == LevelLabel::D3_2 {
        println!(
            "  warning: computed m_J^2 coefficient ({:+.3e} Hz) differs from the tabulated \
             reference ({:+.3e} Hz); both are reported, the computed value is used",
            co.mj2_hz, D32_MJ2_REFERENCE_HZ
        );
    }
    if level.label == LevelLabel::D5_2 {
        println!(
            "single-ion |5/2|-|1/2| sensitivity Q: {:+.4e} Hz",
            single_ion_q(&level)?
        );
    }
    if pair {
        println!(
            "two-ion pair sensitivity: {:+.4e} Hz per unit C0^(2)",
            pair_sensitivity(&level)?
        );
    }
    Ok(())
}

fn open_out_file(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>, Error> {
    Ok(std::io::BufWriter::new(std::fs::File::create(
        dir.join(name),
    )?))
}

fn cmd_transform(
    global: &GlobalOpts,
    cfg: &RunConfig,
    c_file: &Path,
    table: bool,
    series: bool,
    days: f64,
    step_s: f64,
) -> Result<(), Error> {
    if !table && !series {
        return Err(Error::InvalidArgument(
            "pass --table or --series to choose the output".into(),
        ));
    }
    let c = read_c_tensor_file(c_file)?;
    let frame = cfg.frame.build()?;
    let stdout = std::io::stdout();
    if table {
        let t = harmonic_table(&c, &frame);
        if let Some(dir) = &global.out {
            std::fs::create_dir_all(dir)?;
            let mut w = open_out_file(dir, "harmonics.csv")?;
            write_harmonic_table_csv(&mut w, &t)?;
            w.flush()?;
            println!("wrote {}", dir.join("harmonics.csv").display());
        } else {
            write_harmonic_table_csv(stdout.lock(), &t)?;
        }
    } else {
        if step_s <= 0.0 || days <= 0.0 {
            return Err(Error::InvalidArgument(
                "series needs positive --days and --step-s".into(),
            ));
        }
        let n = (days * 86400.0 / step_s).floor() as usize;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let t = i as f64 * step_s;
                (t, c02_at(&c, t, &frame))
            })
            .collect();
        if let Some(dir) = &global.out {
            std::fs::create_dir_all(dir)?;
            let mut w = open_out_file(dir, "c02_series.csv")?;
            write_series_csv(&mut w, &samples)?;
            w.flush()?;
            println!("wrote {}", dir.join("c02_series.csv").display());
        } else {
            write_series_csv(stdout.lock(), &samples)?;
        }
    }
    Ok(())
}

fn cmd_simulate(global: &GlobalOpts, cfg: &RunConfig, hours: Option<f64>) -> Result<(), Error> {
    let mut cfg = cfg.clone();
    if let Some(h) = hours {
        cfg.ramsey.campaign_hours = h;
    }
    let seed = seed_of(global, &cfg)?;
    let blind = global.blind || cfg.blind;
    let sim = cfg.build_simulator(seed)?;
    let dataset = sim.run_campaign(seed)?;
    let dir = out_dir(global, &cfg)?;
    let csv_path = dir.join("dataset.csv");
    write_dataset_csv_file(&csv_path, &dataset)?;
    let meta = DatasetMetadata {
        schema_version: DATASET_SCHEMA_VERSION,
        seed,
        blind,
        pair_sensitivity_hz: sim.pair_sensitivity_hz,
        frame: sim.frame,
        ramsey: sim.ramsey.clone(),
        truth: TruthSummary::from_truth(&sim.truth, blind),
    };
    write_metadata_file(&metadata_path_for(&csv_path), &meta)?;
    println!(
        "wrote {} ({} blocks) and {}",
        csv_path.display(),
        dataset.blocks.len(),
        metadata_path_for(&csv_path).display()
    );
    Ok(())
}

struct AnalysisOutput {
    report: AnalysisReport,
    allan: lvsim::analysis::AllanSeries,
    bounds: lvsim::analysis::CBounds,
    fit: lvsim::analysis::FitResult,
}

fn analyze_dataset(
    cfg: &RunConfig,
    dataset: &lvsim::simulator::CampaignDataset,
    meta: Option<&DatasetMetadata>,
    bin_width_s: Option<f64>,
) -> Result<AnalysisOutput, Error> {
    let frame = meta.map(|m| m.frame).unwrap_or(cfg.frame.build()?);
    let ramsey = match meta {
        Some(m) => m.ramsey.clone(),
        None => cfg.ramsey.build()?,
    };
    let pair = match meta {
        Some(m) => m.pair_sensitivity_hz,
        None => pair_sensitivity(&cfg.level.build()?)?,
    };
    let duration = ramsey.campaign_duration_s;
    let mut analysis_cfg = cfg.analysis.build(duration);
    if let Some(w) = bin_width_s {
        analysis_cfg.bin_width_s = w;
    }

    let prepared = prepare_series(&dataset.blocks, &ramsey, &cfg.calibration, &analysis_cfg)?;
    let bins = bin_series(&prepared.points, analysis_cfg.bin_width_s)?;
    let fit_points: Vec<FitPoint> = bins.iter().map(FitPoint::from).collect();
    let fit = fit_sidereal(&fit_points, frame.epoch_utc_s, frame.omega_sidereal_rad_s)?;
    let scaled = scale_uncertainties(&fit);
    let bounds = c_bounds(&scaled, pair, &frame)?;
    let allan = allan_from_points(&prepared.points)?;
    let allan_fit = allan_white_noise_fit(&allan).ok();
    let false_signal =
        corrections_false_signal(&prepared.points, frame.epoch_utc_s, frame.omega_sidereal_rad_s)?;
    let report = AnalysisReport::assemble(
        &scaled,
        &bounds,
        bins.len(),
        prepared.points.len(),
        prepared.dropped.len(),
        allan_fit,
        &false_signal,
    );
    Ok(AnalysisOutput {
        report,
        allan,
        bounds,
        fit: scaled,
    })
}

fn cmd_analyze(
    global: &GlobalOpts,
    cfg: &RunConfig,
    input: &Path,
    bin_width_s: Option<f64>,
) -> Result<(), Error> {
    let dataset = read_dataset_csv_file(input)?;
    let meta_path = metadata_path_for(input);
    let meta = if meta_path.exists() {
        Some(read_metadata_file(&meta_path)?)
    } else {
        None
    };
    let out = analyze_dataset(cfg, &dataset, meta.as_ref(), bin_width_s)?;
    let dir = out_dir(global, cfg)?;
    std::fs::write(dir.join("analysis.json"), out.report.to_json()?)?;
    let mut w = open_out_file(&dir, "allan.csv")?;
    write_allan_csv(&mut w, &out.allan)?;
    w.flush()?;
    println!(
        "fit: offset {:+.4} Hz, A {:+.4e} Hz (sigma {:.2e}), B {:+.4e} Hz (sigma {:.2e}),",
        out.fit.params[0],
        out.fit.params[1],
        out.fit.sigma(1),
        out.fit.params[2],
        out.fit.sigma(2)
    );
    println!(
        "     C {:+.4e} Hz (sigma {:.2e}), D {:+.4e} Hz (sigma {:.2e}), chi2_red {:.3}",
        out.fit.params[3],
        out.fit.sigma(3),
        out.fit.params[4],
        out.fit.sigma(4),
        out.fit.chi2_reduced
    );
    for combo in &out.bounds.combos {
        println!(
            "combination [{:+.2} {:+.2} {:+.2} {:+.2}] . (c_X-Y, c_XY, c_XZ, c_YZ) = {:+.2e} +/- {:.2e}",
            combo.vector[0], combo.vector[1], combo.vector[2], combo.vector[3],
            combo.value, combo.sigma
        );
    }
    println!(
        "wrote {} and {}",
        dir.join("analysis.json").display(),
        dir.join("allan.csv").display()
    );
    Ok(())
}

fn cmd_closure(
    global: &GlobalOpts,
    cfg: &RunConfig,
    inject: &str,
    hours: Option<f64>,
) -> Result<(), Error> {
    let mut cfg = cfg.clone();
    if let Some(h) = hours {
        cfg.ramsey.campaign_hours = h;
    }
    let injected = parse_c_tensor_assignments(inject)?;
    cfg.truth.c_sccef = injected;
    let seed = seed_of(global, &cfg)?;
    let sim = cfg.build_simulator(seed)?;
    let dataset = sim.run_campaign(seed)?;
    let out = analyze_dataset(&cfg, &dataset, None, None)?;

    let truth_components = [
        injected.c_xx - injected.c_yy,
        injected.c_xy,
        injected.c_xz,
        injected.c_yz,
    ];
    let names = ["c_X-Y", "c_XY", "c_XZ", "c_YZ"];
    println!("closure run: seed {seed}, injected {inject}");
    let mut report = serde_json::Map::new();
    for i in 0..4 {
        let rec = out.bounds.c_hat[i];
        let sig = out.bounds.c_sigma[i];
        let pull = (rec - truth_components[i]) / sig;
        println!(
            "  {:>6}: truth {:+.3e}  recovered {:+.3e} +/- {:.3e}  pull {:+.2}",
            names[i], truth_components[i], rec, sig, pull
        );
        let mut entry = serde_json::Map::new();
        entry.insert("truth".into(), truth_components[i].into());
        entry.insert("recovered".into(), rec.into());
        entry.insert("sigma".into(), sig.into());
        entry.insert("pull".into(), pull.into());
        report.insert(names[i].into(), serde_json::Value::Object(entry));
    }
    let dir = out_dir(global, &cfg)?;
    std::fs::write(
        dir.join("closure.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(report))
            .map_err(|e| Error::Numerical(e.to_string()))?,
    )?;
    println!("wrote {}", dir.join("closure.json").display());
    Ok(())
}

fn cmd_allan(global: &GlobalOpts, cfg: &RunConfig, input: &Path) -> Result<(), Error> {
    let dataset = read_dataset_csv_file(input)?;
    let meta_path = metadata_path_for(input);
    let ramsey = if meta_path.exists() {
        read_metadata_file(&meta_path)?.ramsey
    } else {
        cfg.ramsey.build()?
    };
    let analysis_cfg = cfg.analysis.build(ramsey.campaign_duration_s);
    let prepared = prepare_series(&dataset.blocks, &ramsey, &cfg.calibration, &analysis_cfg)?;
    let series = allan_from_points(&prepared.points)?;
    let dir = out_dir(global, cfg)?;
    let mut w = open_out_file(&dir, "allan.csv")?;
    write_allan_csv(&mut w, &series)?;
    w.flush()?;
    if let Ok((level, slope)) = allan_white_noise_fit(&series) {
        println!(
            "allan: white-noise level {:.3} Hz*sqrt(s), log-log slope {:+.3}",
            level, slope
        );
    }
    println!("wrote {}", dir.join("allan.csv").display());
    Ok(())
}
