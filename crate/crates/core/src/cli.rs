//! Command-line front end of the `uwcap` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::acceptance::run_acceptance;
use crate::channel::DB_TO_LN;
use crate::config::{config_hash, default_config, parse_config, ConfigFile};
use crate::cutset::ergodic_capacity_mc;
use crate::error::{Error, Result};
use crate::mh::{random_mh_seeded, regular_mh_analytic, regular_mh_simulated, ThroughputReport};
use crate::output::{
    csv_string, json_string, ChannelRecord, CutsetRecord, FailureRecord, Format, MhRecord, Record, RunManifest, TableWriter,
};
use crate::rng::child_seed;
use crate::scaling::{loglog_fit_log2, run_sweep, sandwich_check, ScalingFit, SandwichReport, SweepConfig, SweepMode};
use crate::topology::{vertical_cut, Topology};

#[derive(Debug, Parser)]
#[command(name = "uwcap", version, about = "Capacity scaling of underwater acoustic networks")]
pub struct Cli {
    /// TOML configuration; the shipped tight-regime configuration if absent.
    #[arg(long, global = true, env = "UWCAP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `sweep.seed`.
    #[arg(long, global = true, env = "UWCAP_SEED")]
    pub seed: Option<u64>,
    /// Output directory. Tables go to stdout when absent, except for `sweep`.
    #[arg(long, global = true, env = "UWCAP_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv, env = "UWCAP_FORMAT")]
    pub format: FormatArg,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0, env = "UWCAP_THREADS")]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Regular,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Absorption, noise and attenuation tables.
    Channel(ChannelArgs),
    /// Cut-set capacity estimate and bounds for one network size.
    Cutset(CutsetArgs),
    /// Multi-hop throughput for one network size.
    Mh(MhArgs),
    /// Sweep over `sweep.n_list` with exponent fits.
    Sweep,
    /// Run the acceptance suite; exit 1 if any criterion fails.
    Check,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// Frequencies in kHz.
    #[arg(long = "f", value_delimiter = ',', required = true)]
    pub f: Vec<f64>,
    /// Distances in grid units.
    #[arg(long = "r", value_delimiter = ',', default_values_t = vec![1.0])]
    pub r: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CutsetArgs {
    #[arg(long)]
    pub n: usize,
    /// Frequency in kHz; taken from the schedule when absent.
    #[arg(long = "f")]
    pub f: Option<f64>,
    /// Monte Carlo trials; `sweep.trials` when absent.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MhArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = PlacementArg::Regular)]
    pub placement: PlacementArg,
    #[arg(long = "f")]
    pub f: Option<f64>,
    /// Simulation seeds; `sweep.trials` when absent.
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Parses arguments and runs, writing tables and reports to `out`; returns
/// the process exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("uwcap: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<SweepConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => default_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Channel(_) => "channel",
        Command::Cutset(_) => "cutset",
        Command::Mh(_) => "mh",
        Command::Sweep => "sweep",
        Command::Check => "check",
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure {} threads: {e}", cli.threads)))?;
    }
    let config = load_config(cli)?;
    let format = Format::from(cli.format);
    match &cli.command {
        Command::Channel(args) => {
            let rows = channel_rows(&config, args)?;
            emit_single(cli, &config, format, out, "channel", &rows)?;
            Ok(0)
        }
        Command::Cutset(args) => {
            let rows = vec![cutset_row(&config, args)?];
            emit_single(cli, &config, format, out, "cutset", &rows)?;
            Ok(0)
        }
        Command::Mh(args) => {
            let rows = mh_rows(&config, args)?;
            emit_single(cli, &config, format, out, "mh", &rows)?;
            Ok(0)
        }
        Command::Sweep => sweep(cli, &config, format, out),
        Command::Check => check(cli, &config, out),
    }
}

fn manifest(cli: &Cli, config: &SweepConfig, outputs: Vec<String>) -> RunManifest {
    RunManifest {
        config_hash: config_hash(config),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        outputs,
        config: ConfigFile::from_sweep_config(config),
    }
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit_single<R: Record>(
    cli: &Cli,
    config: &SweepConfig,
    format: Format,
    out: &mut dyn Write,
    name: &str,
    rows: &[R],
) -> Result<()> {
    match &cli.out {
        None => {
            let text = match format {
                Format::Csv => csv_string(rows),
                Format::Json => json_string(rows),
            };
            out.write_all(text.as_bytes()).map_err(stdout_error)
        }
        Some(dir) => {
            prepare_dir(dir)?;
            let file = format!("{name}.{}", format.extension());
            manifest(cli, config, vec![file.clone()]).write(&dir.join("manifest.json"))?;
            let mut w = TableWriter::<R>::create(&dir.join(&file), format)?;
            for r in rows {
                w.write(r)?;
            }
            w.finish()?;
            Ok(())
        }
    }
}

fn channel_rows(config: &SweepConfig, args: &ChannelArgs) -> Result<Vec<ChannelRecord>> {
    let p = &config.profile;
    let mut rows = Vec::new();
    for &f in &args.f {
        let db = p.absorption_db_per_km(f)?;
        let ln_a = p.absorption_ln_per_unit(f)?;
        let noise_db = p.noise_psd_ln(f)?.ln() / DB_TO_LN;
        for &r in &args.r {
            rows.push(ChannelRecord {
                f_khz: f,
                r,
                absorption_db_per_km: db,
                ln_a,
                noise_db,
                attenuation_ln: p.attenuation_ln(r, f)?.ln(),
            });
        }
    }
    Ok(rows)
}

fn frequency(config: &SweepConfig, n: usize, f: Option<f64>) -> f64 {
    f.unwrap_or_else(|| config.schedule.frequency(n))
}

fn cutset_row(config: &SweepConfig, args: &CutsetArgs) -> Result<CutsetRecord> {
    let op = config.profile.at(frequency(config, args.n, args.f))?;
    let cut = vertical_cut(&Topology::build_regular(args.n)?)?;
    let trials = args.trials.unwrap_or(config.trials);
    let seed = config.row_seed(args.n);
    let est = ergodic_capacity_mc(&cut, &op, config.power, trials, seed, config.memory_cap_bytes)?;
    Ok(CutsetRecord {
        n: args.n,
        f_khz: op.f_khz,
        ln_a: op.ln_a,
        ln_noise: op.ln_noise.ln(),
        alpha: op.alpha,
        sum_d_ln: est.sum_d_ln.ln(),
        mc_logdet_bits: est.mc_logdet_bits,
        trace_bound_bits: est.trace_bound_bits,
        sv_estimate: est.sv_estimate,
        trials: est.trials,
        seed,
    })
}

fn mh_record(r: &ThroughputReport, seed: u64) -> MhRecord {
    MhRecord {
        n: r.n,
        placement: r.placement.as_str().to_string(),
        f_khz: r.f_khz,
        mode: r.mode.as_str().to_string(),
        duty_ln: r.duty_ln.ln(),
        per_pair_rate_bits: r.per_pair_rate.exp(),
        active_sources: r.active_sources,
        total_bits: r.total.exp(),
        unroutable_fraction: r.unroutable_fraction(),
        seed,
        total_log2: r.total.log2(),
        max_hop_distance: r.max_hop_distance,
    }
}

fn mh_rows(config: &SweepConfig, args: &MhArgs) -> Result<Vec<MhRecord>> {
    let op = config.profile.at(frequency(config, args.n, args.f))?;
    let trials = args.trials.unwrap_or(config.trials);
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let row_seed = config.row_seed(args.n);
    let mut rows = Vec::new();
    match args.placement {
        PlacementArg::Regular => {
            rows.push(mh_record(&regular_mh_analytic(args.n, &op, config.power)?, row_seed));
            for t in 0..trials as u64 {
                let s = child_seed(row_seed, t);
                rows.push(mh_record(&regular_mh_simulated(args.n, &op, config.power, s)?, s));
            }
        }
        PlacementArg::Random => {
            for t in 0..trials as u64 {
                let s = child_seed(row_seed, t);
                rows.push(mh_record(&random_mh_seeded(args.n, &op, config.power, s)?, s));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    config_hash: String,
    rows: usize,
    failures: usize,
    fits: Vec<NamedFit>,
    sandwich: Option<SandwichReport>,
    sandwich_holds: Option<bool>,
}

#[derive(Debug, Serialize)]
struct NamedFit {
    metric: String,
    fit: ScalingFit,
}

fn sweep(cli: &Cli, config: &SweepConfig, format: Format, out: &mut dyn Write) -> Result<i32> {
    config.validate()?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("uwcap-out"));
    prepare_dir(&dir)?;
    let ext = format.extension();
    let names = [
        format!("cutset.{ext}"),
        format!("mh.{ext}"),
        format!("failures.{ext}"),
        "summary.json".to_string(),
    ];
    manifest(cli, config, names.to_vec()).write(&dir.join("manifest.json"))?;
    let mut cutset = TableWriter::<CutsetRecord>::create(&dir.join(&names[0]), format)?;
    let mut mh = TableWriter::<MhRecord>::create(&dir.join(&names[1]), format)?;
    let mut failures = TableWriter::<FailureRecord>::create(&dir.join(&names[2]), format)?;
    let table = run_sweep(config, |row| {
        eprintln!(
            "n = {:>5}  {:<15} {}",
            row.n,
            row.mode.as_str(),
            row.error.as_deref().unwrap_or("ok")
        );
        if let Some(r) = CutsetRecord::from_row(row) {
            cutset.write(&r)?;
        }
        if let Some(r) = MhRecord::from_row(row) {
            mh.write(&r)?;
        }
        if let Some(e) = &row.error {
            failures.write(&FailureRecord {
                n: row.n,
                mode: row.mode.as_str().to_string(),
                error: e.clone(),
            })?;
        }
        Ok(())
    })?;
    cutset.finish()?;
    mh.finish()?;
    failures.finish()?;

    let ln2 = std::f64::consts::LN_2;
    let mut fits = Vec::new();
    let mut fit = |metric: &str, pts: Vec<(f64, f64)>| {
        if let Ok(fit) = loglog_fit_log2(pts, Vec::new()) {
            fits.push(NamedFit {
                metric: metric.to_string(),
                fit,
            });
        }
    };
    let cut_rows: Vec<_> = table.rows_for(SweepMode::Cutset).collect();
    let pick = |g: &dyn Fn(&crate::scaling::ScalingRow) -> Option<f64>| -> Vec<(f64, f64)> {
        cut_rows.iter().filter_map(|r| g(r).map(|v| ((r.n as f64).log2(), v))).collect()
    };
    fit("sv_estimate", pick(&|r| r.cutset.as_ref().map(|c| c.sv_estimate.log2())));
    fit(
        "trace_bound_bits*aN",
        pick(&|r| r.cutset.as_ref().map(|c| c.trace_bound_bits.log2() + r.ln_a_noise() / ln2)),
    );
    fit(
        "mc_logdet_bits*aN",
        pick(&|r| r.cutset.as_ref().map(|c| c.mc_logdet_bits.log2() + r.ln_a_noise() / ln2)),
    );
    for mode in [SweepMode::MhRegular, SweepMode::MhRegularSim, SweepMode::MhRandom] {
        let pts = table
            .rows_for(mode)
            .filter_map(|r| r.mh.as_ref().map(|m| ((r.n as f64).log2(), m.total.log2() + r.ln_a_noise() / ln2)))
            .collect();
        fit(&format!("{}_total*aN", mode.as_str()), pts);
    }
    let sandwich = sandwich_check(&table).ok();
    let holds = sandwich.as_ref().map(SandwichReport::holds);
    let summary = SweepSummary {
        config_hash: config_hash(config),
        rows: table.rows.len(),
        failures: table.failures,
        fits,
        sandwich,
        sandwich_holds: holds,
    };
    let path = dir.join(&names[3]);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for f in &summary.fits {
        writeln!(out, "{:<28} slope {:>8.4}  r2 {:.5}", f.metric, f.fit.slope, f.fit.r_squared).map_err(stdout_error)?;
    }
    match holds {
        Some(false) => {
            writeln!(out, "sandwich ordering violated").map_err(stdout_error)?;
            Ok(1)
        }
        _ => Ok(0),
    }
}

fn check(cli: &Cli, config: &SweepConfig, out: &mut dyn Write) -> Result<i32> {
    if let Some(dir) = &cli.out {
        prepare_dir(dir)?;
        let outputs = ["cutset.csv", "mh.csv", "acceptance.csv"].map(String::from).to_vec();
        manifest(cli, config, outputs).write(&dir.join("manifest.json"))?;
    }
    let mut written = Ok(());
    let report = run_acceptance(config, |c| {
        if written.is_ok() {
            written = writeln!(out, "{}", c.line()).and_then(|_| out.flush());
        }
    })?;
    written.map_err(stdout_error)?;
    if let Some(dir) = &cli.out {
        for (name, text) in &report.files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    let passed = report.criteria.iter().filter(|c| c.passed()).count();
    writeln!(out, "{passed} of {} criteria passed", report.criteria.len()).map_err(stdout_error)?;
    Ok(if report.all_passed() { 0 } else { 1 })
}
