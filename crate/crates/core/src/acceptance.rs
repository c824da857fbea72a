//! The acceptance suite behind `uwcap check`.
//!
//! Every criterion reports a deterministic verdict and detail string, plus a
//! wall-clock budget that is checked separately. The CSV tables produced
//! along the way contain no timings, so two runs with the same configuration
//! must produce identical bytes.

use std::time::{Duration, Instant};

use crate::channel::AbsorptionProfile;
use crate::cutset::{ergodic_capacity_mc, normalized_gram_sums, EnvelopeCalibration};
use crate::error::Result;
use crate::logval::{log_sum_exp, LogValue};
use crate::mh::{interference_total, random_mh_seeded, regular_mh_analytic, regular_mh_simulated, Layers};
use crate::channel::OperatingPoint;
use crate::output::{csv_string, Cell, CutsetRecord, MhRecord, Record};
use crate::rng::{child_seed, stream, Domain};
use crate::scaling::{loglog_fit_log2, run_sweep, sandwich_check, ScalingTable, SweepConfig, SweepMode};
use crate::topology::{max_cell_occupancy, vertical_cut, Point, RoutingGrid, Topology};

pub const NORMALIZATION_SIZES: [usize; 4] = [16, 64, 256, 1024];
pub const ALPHAS: [f64; 3] = [1.0, 1.5, 2.0];
pub const GRID_FREQUENCIES: [f64; 2] = [1.0, 10.0];
pub const NORMALIZATION_TOL: f64 = 1e-9;
pub const CHAIN_MIN_TRIALS: usize = 400;
pub const CHAIN_SLACK: f64 = 1e-9;
pub const ENVELOPE_N: usize = 1024;
pub const ENVELOPE_LN_A: [f64; 3] = [0.5, 1.0, 2.0];
pub const ENVELOPE_MAX_WIDTH: f64 = 20.0;
pub const SV_MAX_EXPONENT: f64 = 0.1;
pub const SQRT_EXPONENT: f64 = 0.5;
pub const EXPONENT_TOL: f64 = 0.1;
pub const MIN_R_SQUARED: f64 = 0.98;
pub const SIM_SEEDS: usize = 10;
pub const SIM_RATIO_RANGE: (f64, f64) = (0.1, 1.5);
pub const INTERFERENCE_LAYERS: usize = 50;
pub const CLOSED_FORM_TOL: f64 = 1e-6;
pub const INTERFERENCE_FREQUENCIES: [f64; 4] = [1.0, 5.0, 10.0, 50.0];
pub const INTERFERENCE_SPREAD: f64 = 0.01;
pub const GAP_MAX_EXPONENT: f64 = 0.2;
pub const RANDOM_SIZES: [usize; 3] = [256, 1024, 4096];
pub const RANDOM_SEEDS: usize = 10;
pub const OCCUPANCY_N: usize = 4096;
pub const OCCUPANCY_TOPOLOGIES: usize = 200;
pub const OCCUPANCY_MIN_SHARE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    /// Verdict on the numbers alone.
    pub met: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl Criterion {
    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.elapsed <= b)
    }

    pub fn passed(&self) -> bool {
        self.met && self.within_budget()
    }

    pub fn line(&self) -> String {
        let time = match self.budget {
            Some(b) => format!("{:.1}s of {:.0}s", self.elapsed.as_secs_f64(), b.as_secs_f64()),
            None => format!("{:.1}s", self.elapsed.as_secs_f64()),
        };
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let over = if self.within_budget() { "" } else { ", over budget" };
        format!("[{verdict}] {:>2} {}: {} ({time}{over})", self.id, self.name, self.detail)
    }
}

struct CriterionRecord<'a>(&'a Criterion);

impl Record for CriterionRecord<'_> {
    fn header() -> &'static [&'static str] {
        &["id", "criterion", "met", "detail"]
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.0.id as u64),
            Cell::Text(self.0.name.into()),
            Cell::Text(if self.0.met { "true" } else { "false" }.into()),
            Cell::Text(self.0.detail.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceReport {
    pub criteria: Vec<Criterion>,
    /// `(file name, contents)` of the CSV tables.
    pub files: Vec<(String, String)>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }

    pub fn criterion(&self, id: u8) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn timed(
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> Criterion {
    let start = Instant::now();
    let (met, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion {
        id,
        name,
        met,
        detail,
        elapsed: start.elapsed(),
        budget,
    }
}

fn with_alpha(profile: &AbsorptionProfile, alpha: f64) -> AbsorptionProfile {
    AbsorptionProfile { alpha, ..*profile }
}

fn normalization(config: &SweepConfig) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &n in &NORMALIZATION_SIZES {
        let cut = vertical_cut(&Topology::build_regular(n)?)?;
        for &alpha in &ALPHAS {
            for &f in &GRID_FREQUENCIES {
                let op = with_alpha(&config.profile, alpha).at(f)?;
                let sums = normalized_gram_sums(&cut, &op)?;
                worst = sums.column.iter().fold(worst, |w, c| w.max((c - 1.0).abs()));
                cases += 1;
            }
        }
    }
    Ok((
        worst <= NORMALIZATION_TOL,
        format!("max |column sum - 1| = {worst:.3e} over {cases} cases (tol {NORMALIZATION_TOL:e})"),
    ))
}

fn bound_chain(config: &SweepConfig) -> Result<(bool, String)> {
    let cases = NORMALIZATION_SIZES.len() * ALPHAS.len() * GRID_FREQUENCIES.len();
    let per_case = CHAIN_MIN_TRIALS.div_ceil(cases);
    let (mut trials, mut violations, mut case) = (0, 0, 0u64);
    for &n in &NORMALIZATION_SIZES {
        let cut = vertical_cut(&Topology::build_regular(n)?)?;
        for &alpha in &ALPHAS {
            for &f in &GRID_FREQUENCIES {
                let op = with_alpha(&config.profile, alpha).at(f)?;
                let seed = child_seed(config.seed ^ 0xc4a1, case);
                case += 1;
                let est = ergodic_capacity_mc(&cut, &op, config.power, per_case, seed, config.memory_cap_bytes)?;
                trials += est.per_trial.len();
                violations += est.chain_violations(CHAIN_SLACK).len();
            }
        }
    }
    Ok((
        violations == 0 && trials >= CHAIN_MIN_TRIALS,
        format!("{violations} violations in {trials} trials (slack {CHAIN_SLACK:e})"),
    ))
}

fn envelope() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for &alpha in &ALPHAS {
        for &ln_a in &ENVELOPE_LN_A {
            let op = OperatingPoint::from_parts(ln_a, 0.0, alpha, 1.0)?;
            worst = worst.max(EnvelopeCalibration::calibrate(&op, ENVELOPE_N)?.width());
        }
    }
    Ok((
        worst < ENVELOPE_MAX_WIDTH,
        format!("widest band c_hi/c_lo = {worst:.3} at n = {ENVELOPE_N} (limit {ENVELOPE_MAX_WIDTH})"),
    ))
}

fn log2_points(table: &ScalingTable, mode: SweepMode, metric: impl Fn(&crate::scaling::ScalingRow) -> Option<f64>) -> Vec<(f64, f64)> {
    table
        .rows_for(mode)
        .filter_map(|r| metric(r).map(|m| ((r.n as f64).log2(), m)))
        .collect()
}

fn sv_growth(table: &ScalingTable) -> Result<(bool, String)> {
    let pts = log2_points(table, SweepMode::Cutset, |r| r.cutset.as_ref().map(|c| c.sv_estimate.log2()));
    let fit = loglog_fit_log2(pts, Vec::new())?;
    let values: Vec<String> = table
        .rows_for(SweepMode::Cutset)
        .map(|r| format!("{:.3}", r.cutset.as_ref().map_or(f64::NAN, |c| c.sv_estimate)))
        .collect();
    Ok((
        fit.slope < SV_MAX_EXPONENT,
        format!(
            "sv exponent {:.4} (limit {SV_MAX_EXPONENT}); sv = [{}]",
            fit.slope,
            values.join(", ")
        ),
    ))
}

fn exponent_check(name: &str, pts: Vec<(f64, f64)>, need_r2: bool) -> Result<(bool, String)> {
    let fit = loglog_fit_log2(pts, Vec::new())?;
    let slope_ok = (fit.slope - SQRT_EXPONENT).abs() <= EXPONENT_TOL;
    let r2_ok = !need_r2 || fit.r_squared > MIN_R_SQUARED;
    Ok((
        slope_ok && r2_ok,
        format!("{name} slope {:.4}, r2 {:.5}", fit.slope, fit.r_squared),
    ))
}

fn bound_exponent(table: &ScalingTable) -> Result<(bool, String)> {
    let pts = log2_points(table, SweepMode::Cutset, |r| {
        r.cutset.as_ref().map(|c| c.trace_bound_bits.log2() + r.ln_a_noise() / std::f64::consts::LN_2)
    });
    exponent_check("trace bound x aN", pts, true)
}

fn achievable_exponent(config: &SweepConfig, table: &ScalingTable) -> Result<(bool, String)> {
    let pts = log2_points(table, SweepMode::MhRegular, |r| {
        r.mh.as_ref().map(|m| m.total.log2() + r.ln_a_noise() / std::f64::consts::LN_2)
    });
    let (fit_ok, fit_detail) = exponent_check("MH total x aN", pts, false)?;
    let mut ratios = Vec::new();
    for &n in &config.n_list {
        let op = config.operating_point(n)?;
        let analytic = regular_mh_analytic(n, &op, config.power)?;
        let totals = (0..SIM_SEEDS as u64)
            .map(|t| regular_mh_simulated(n, &op, config.power, child_seed(config.row_seed(n), t)).map(|r| r.total))
            .collect::<Result<Vec<_>>>()?;
        let mean = log_sum_exp(totals) .ln() - (SIM_SEEDS as f64).ln();
        ratios.push((mean - analytic.total.ln()).exp());
    }
    let ratio_ok = ratios.iter().all(|&r| r >= SIM_RATIO_RANGE.0 && r <= SIM_RATIO_RANGE.1);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((
        fit_ok && ratio_ok,
        format!("{fit_detail}; simulated/analytic = [{}]", shown.join(", ")),
    ))
}

fn interference(config: &SweepConfig) -> Result<(bool, String)> {
    let op = OperatingPoint::from_parts(1.0, 0.0, 1.0, 1.0)?;
    let s = interference_total(&op, config.power, Layers::Finite(INTERFERENCE_LAYERS), true)?;
    let closed = 8.0 * config.power / (1.0 - (-1.0f64).exp());
    let rel = (s.total.exp() / closed - 1.0).abs();
    let closed_ok = rel < CLOSED_FORM_TOL;
    let mut spreads = Vec::new();
    for &alpha in &ALPHAS {
        let profile = with_alpha(&config.profile, alpha);
        let ratios = INTERFERENCE_FREQUENCIES
            .iter()
            .map(|&f| {
                let op = profile.at(f)?;
                let i = interference_total(&op, config.power, Layers::Unbounded, true)?;
                Ok((i.total.ln() - op.ln_noise.ln()).exp())
            })
            .collect::<Result<Vec<f64>>>()?;
        let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
        let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
        spreads.push(hi / lo - 1.0);
    }
    let spread_ok = spreads.iter().all(|&s| s <= INTERFERENCE_SPREAD);
    let shown: Vec<String> = spreads.iter().map(|s| format!("{:.3}", s)).collect();
    Ok((
        closed_ok && spread_ok,
        format!(
            "50-layer closed form rel err {rel:.2e}; I/N spread over f per alpha 1,1.5,2 = [{}] (limit {INTERFERENCE_SPREAD})",
            shown.join(", ")
        ),
    ))
}

fn sandwich(table: &ScalingTable) -> Result<(bool, String)> {
    let report = sandwich_check(table)?;
    let gap = report.gap_fit.as_ref().map_or(f64::NAN, |f| f.slope);
    let bad: Vec<String> = report.violations().map(|r| r.n.to_string()).collect();
    Ok((
        report.holds() && gap <= GAP_MAX_EXPONENT,
        format!(
            "ordering holds at {}/{} sizes{}; gap exponent {gap:.4} (limit {GAP_MAX_EXPONENT})",
            report.rows.len() - bad.len(),
            report.rows.len(),
            if bad.is_empty() { String::new() } else { format!(" (fails at n = {})", bad.join(", ")) }
        ),
    ))
}

fn random_networks(config: &SweepConfig) -> Result<(bool, String)> {
    let mut every_seed = true;
    let mut mean_ln_ratio = Vec::new();
    for &n in &RANDOM_SIZES {
        let op = config.operating_point(n)?;
        let regular = regular_mh_analytic(n, &op, config.power)?.total;
        let mut ln_ratios = Vec::new();
        for t in 0..RANDOM_SEEDS as u64 {
            let random = random_mh_seeded(n, &op, config.power, child_seed(config.row_seed(n), t))?.total;
            every_seed &= random.ln() < regular.ln();
            ln_ratios.push(LogValue::from_ln(regular.ln() - random.ln())?);
        }
        mean_ln_ratio.push(log_sum_exp(ln_ratios).ln() - (RANDOM_SEEDS as f64).ln());
    }
    let increasing = mean_ln_ratio.windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = mean_ln_ratio.iter().map(|r| format!("{:.2}", r / std::f64::consts::LN_10)).collect();
    Ok((
        every_seed && increasing,
        format!(
            "random below regular for every seed: {every_seed}; log10 mean regular/random at n = 256, 1024, 4096: [{}]",
            shown.join(", ")
        ),
    ))
}

fn occupancy(config: &SweepConfig) -> Result<(bool, String)> {
    let limit = (OCCUPANCY_N as f64).log2();
    let mut below = 0;
    let mut worst = 0;
    for t in 0..OCCUPANCY_TOPOLOGIES as u64 {
        let topo = Topology::build_random(OCCUPANCY_N, &mut stream(config.seed, Domain::Placement, 1 << 32 | t))?;
        let grid = RoutingGrid::new(&topo, 1.0, Point::new(0.0, 0.0))?;
        let m = max_cell_occupancy(&topo, &grid);
        worst = worst.max(m);
        if (m as f64) < limit {
            below += 1;
        }
    }
    let share = below as f64 / OCCUPANCY_TOPOLOGIES as f64;
    Ok((
        share >= OCCUPANCY_MIN_SHARE,
        format!("{below}/{OCCUPANCY_TOPOLOGIES} topologies below log2 n = {limit}; worst occupancy {worst}"),
    ))
}

/// The sweep behind criteria 4, 5, 6 and 8: the configured modes plus the
/// cut-set and closed-form rows those criteria read.
pub fn acceptance_sweep_config(config: &SweepConfig) -> SweepConfig {
    let mut c = config.clone();
    for m in [SweepMode::Cutset, SweepMode::MhRegular] {
        if !c.modes.contains(&m) {
            c.modes.push(m);
        }
    }
    c
}

fn run_once(config: &SweepConfig, mut progress: impl FnMut(&Criterion)) -> Result<AcceptanceReport> {
    let mut criteria = Vec::new();
    let mut push = |c: Criterion, all: &mut Vec<Criterion>| {
        progress(&c);
        all.push(c);
    };
    push(timed(1, "normalization identity", secs(30), || normalization(config)), &mut criteria);
    push(timed(2, "per-trial bound chain", secs(120), || bound_chain(config)), &mut criteria);
    push(timed(3, "power-transfer envelope", secs(60), envelope), &mut criteria);

    let sweep_config = acceptance_sweep_config(config);
    let start = Instant::now();
    let table = run_sweep(&sweep_config, |_| Ok(()))?;
    let sweep_time = start.elapsed();
    let mut c4 = timed(4, "singular value growth", secs(300), || sv_growth(&table));
    c4.elapsed += sweep_time;
    push(c4, &mut criteria);
    push(timed(5, "cut-set bound exponent", None, || bound_exponent(&table)), &mut criteria);
    push(timed(6, "multi-hop exponent", None, || achievable_exponent(config, &table)), &mut criteria);
    push(timed(7, "interference sum", None, || interference(config)), &mut criteria);
    push(timed(8, "sandwich and gap", None, || sandwich(&table)), &mut criteria);
    push(timed(9, "random networks", secs(300), || random_networks(config)), &mut criteria);
    push(timed(10, "cell occupancy", secs(30), || occupancy(config)), &mut criteria);

    let cutset: Vec<CutsetRecord> = table.rows.iter().filter_map(CutsetRecord::from_row).collect();
    let mh: Vec<MhRecord> = table.rows.iter().filter_map(MhRecord::from_row).collect();
    let records: Vec<CriterionRecord> = criteria.iter().map(CriterionRecord).collect();
    let files = vec![
        ("cutset.csv".to_string(), csv_string(&cutset)),
        ("mh.csv".to_string(), csv_string(&mh)),
        ("acceptance.csv".to_string(), csv_string(&records)),
    ];
    Ok(AcceptanceReport { criteria, files })
}

/// Runs criteria 1 to 10, then repeats the whole run and compares every CSV
/// byte for byte (criterion 11).
pub fn run_acceptance(config: &SweepConfig, mut progress: impl FnMut(&Criterion)) -> Result<AcceptanceReport> {
    config.validate()?;
    let mut report = run_once(config, &mut progress)?;
    let start = Instant::now();
    let second = run_once(config, |_| {});
    let c11 = match second {
        Ok(again) => {
            let differing: Vec<&str> = report
                .files
                .iter()
                .zip(&again.files)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0.as_str())
                .collect();
            let bytes: usize = report.files.iter().map(|f| f.1.len()).sum();
            Criterion {
                id: 11,
                name: "determinism",
                met: differing.is_empty() && report.files.len() == again.files.len(),
                detail: if differing.is_empty() {
                    format!("{} CSV files ({bytes} bytes) identical across two runs", report.files.len())
                } else {
                    format!("differing files: {}", differing.join(", "))
                },
                elapsed: start.elapsed(),
                budget: None,
            }
        }
        Err(e) => Criterion {
            id: 11,
            name: "determinism",
            met: false,
            detail: format!("second run failed: {e}"),
            elapsed: start.elapsed(),
            budget: None,
        },
    };
    progress(&c11);
    report.criteria.push(c11);
    Ok(report)
}
