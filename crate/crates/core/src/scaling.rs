//! Sweeps over the network size, log-log exponent fits and the check that the
//! multi-hop rate sits below the cut-set capacity and bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{AbsorptionProfile, FrequencySchedule, OperatingPoint};
use crate::cutset::{ergodic_capacity_mc, DEFAULT_MEMORY_CAP};
use crate::error::{Error, Result};
use crate::logval::{log_sum_exp, LogValue};
use crate::mh::{random_mh_seeded, regular_mh_analytic, regular_mh_simulated, ThroughputReport};
use crate::rng::child_seed;
use crate::topology::{exact_sqrt, vertical_cut, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Cutset,
    /// Closed-form regular multi-hop rate.
    MhRegular,
    /// Regular multi-hop simulated over `trials` matchings.
    MhRegularSim,
    /// Random placement simulated over `trials` topologies.
    MhRandom,
}

impl SweepMode {
    pub const ALL: [SweepMode; 4] = [
        SweepMode::Cutset,
        SweepMode::MhRegular,
        SweepMode::MhRegularSim,
        SweepMode::MhRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::Cutset => "cutset",
            SweepMode::MhRegular => "mh_regular",
            SweepMode::MhRegularSim => "mh_regular_sim",
            SweepMode::MhRandom => "mh_random",
        }
    }

    pub fn is_mh(&self) -> bool {
        *self != SweepMode::Cutset
    }
}

pub const DEFAULT_MODES: [SweepMode; 3] = [SweepMode::Cutset, SweepMode::MhRegular, SweepMode::MhRandom];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
    pub schedule: FrequencySchedule,
    pub profile: AbsorptionProfile,
    pub power: f64,
    /// Monte Carlo trials for cut rows, seeds for simulated rows.
    pub trials: usize,
    pub seed: u64,
    pub modes: Vec<SweepMode>,
    /// Exponent slack reported next to the cut-set bound.
    pub eps: f64,
    pub memory_cap_bytes: u64,
}

impl SweepConfig {
    pub fn new(n_list: Vec<usize>, schedule: FrequencySchedule) -> Self {
        SweepConfig {
            n_list,
            schedule,
            profile: AbsorptionProfile::default(),
            power: 1.0,
            trials: 8,
            seed: 0,
            modes: DEFAULT_MODES.to_vec(),
            eps: 0.0,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.schedule.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::Config("sweep.n_list must not be empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "sweep.n_list must be strictly increasing, got {:?}",
                self.n_list
            )));
        }
        for &n in &self.n_list {
            if n < 4 || exact_sqrt(n).is_none() {
                return Err(Error::Config(format!(
                    "sweep.n_list entries must be perfect squares >= 4, got {n}"
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep.trials must be >= 1".into()));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::Config(format!("sweep.power must be > 0, got {}", self.power)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("sweep.eps must be >= 0, got {}", self.eps)));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("sweep.modes must not be empty".into()));
        }
        let mut sorted = self.modes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.modes.len() {
            return Err(Error::Config(format!("sweep.modes has duplicates: {:?}", self.modes)));
        }
        Ok(())
    }

    pub fn operating_point(&self, n: usize) -> Result<OperatingPoint> {
        self.profile.at(self.schedule.frequency(n))
    }

    /// Seed of the rows for size `n`; does not depend on the rest of `n_list`.
    pub fn row_seed(&self, n: usize) -> u64 {
        child_seed(self.seed, n as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutsetMetrics {
    pub mc_logdet_bits: f64,
    pub trace_bound_bits: f64,
    pub sv_estimate: f64,
    pub sum_d_ln: LogValue,
    pub trials: usize,
    /// Trials breaking the per-trial bound chain at relative slack 1e-9.
    pub chain_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhMetrics {
    pub duty_ln: LogValue,
    /// Seed means for simulated rows.
    pub per_pair_rate: LogValue,
    pub active_sources: f64,
    pub total: LogValue,
    pub unroutable_fraction: f64,
    pub max_hop_distance: f64,
    /// Per-seed totals, empty for the closed form.
    pub per_seed_total: Vec<LogValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub mode: SweepMode,
    pub f_khz: f64,
    pub ln_a: f64,
    pub ln_noise: f64,
    pub alpha: f64,
    pub seed: u64,
    pub cutset: Option<CutsetMetrics>,
    pub mh: Option<MhMetrics>,
    pub error: Option<String>,
}

impl ScalingRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// `ln (a(f) N(f))`, the factor removed before fitting exponents.
    pub fn ln_a_noise(&self) -> f64 {
        self.ln_a + self.ln_noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub failures: usize,
}

impl ScalingTable {
    pub fn rows_for(&self, mode: SweepMode) -> impl Iterator<Item = &ScalingRow> {
        self.rows.iter().filter(move |r| r.mode == mode && r.ok())
    }

    pub fn row(&self, n: usize, mode: SweepMode) -> Option<&ScalingRow> {
        self.rows_for(mode).find(|r| r.n == n)
    }
}

fn mean_ln(values: &[LogValue]) -> Result<LogValue> {
    let s = log_sum_exp(values.iter().copied());
    if s.is_zero() {
        return Ok(s);
    }
    LogValue::from_ln(s.ln() - (values.len() as f64).ln())
}

fn mh_metrics(reports: &[ThroughputReport], closed_form: bool) -> Result<MhMetrics> {
    let k = reports.len() as f64;
    let totals: Vec<LogValue> = reports.iter().map(|r| r.total).collect();
    let rates: Vec<LogValue> = reports.iter().map(|r| r.per_pair_rate).collect();
    Ok(MhMetrics {
        duty_ln: reports[0].duty_ln,
        per_pair_rate: mean_ln(&rates)?,
        active_sources: reports.iter().map(|r| r.active_sources).sum::<f64>() / k,
        total: mean_ln(&totals)?,
        unroutable_fraction: reports.iter().map(|r| r.unroutable_fraction()).sum::<f64>() / k,
        max_hop_distance: reports.iter().map(|r| r.max_hop_distance).fold(0.0, f64::max),
        per_seed_total: if closed_form { Vec::new() } else { totals },
    })
}

fn compute_row(config: &SweepConfig, n: usize, mode: SweepMode, op: &OperatingPoint) -> Result<(Option<CutsetMetrics>, Option<MhMetrics>)> {
    let seed = config.row_seed(n);
    let seeds = |k: usize| (0..k as u64).map(move |t| child_seed(seed, t));
    match mode {
        SweepMode::Cutset => {
            let cut = vertical_cut(&Topology::build_regular(n)?)?;
            let est = ergodic_capacity_mc(&cut, op, config.power, config.trials, seed, config.memory_cap_bytes)?;
            Ok((
                Some(CutsetMetrics {
                    mc_logdet_bits: est.mc_logdet_bits,
                    trace_bound_bits: est.trace_bound_bits,
                    sv_estimate: est.sv_estimate,
                    sum_d_ln: est.sum_d_ln,
                    trials: est.trials,
                    chain_violations: est.chain_violations(1e-9).len(),
                }),
                None,
            ))
        }
        SweepMode::MhRegular => {
            let r = regular_mh_analytic(n, op, config.power)?;
            Ok((None, Some(mh_metrics(&[r], true)?)))
        }
        SweepMode::MhRegularSim => {
            let reports = seeds(config.trials)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|s| regular_mh_simulated(n, op, config.power, s))
                .collect::<Result<Vec<_>>>()?;
            Ok((None, Some(mh_metrics(&reports, false)?)))
        }
        SweepMode::MhRandom => {
            let reports = seeds(config.trials)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|s| random_mh_seeded(n, op, config.power, s))
                .collect::<Result<Vec<_>>>()?;
            Ok((None, Some(mh_metrics(&reports, false)?)))
        }
    }
}

/// Runs every `(n, mode)` row in `n` order, handing each finished row to
/// `emit` before starting the next. Row failures are recorded in the row;
/// the sweep fails when more than half of the rows fail.
pub fn run_sweep(
    config: &SweepConfig,
    mut emit: impl FnMut(&ScalingRow) -> Result<()>,
) -> Result<ScalingTable> {
    config.validate()?;
    let mut modes = config.modes.clone();
    modes.sort();
    let mut rows = Vec::with_capacity(config.n_list.len() * modes.len());
    let mut failures = 0;
    for &n in &config.n_list {
        let op = config.operating_point(n)?;
        for &mode in &modes {
            let (cutset, mh, error) = match compute_row(config, n, mode, &op) {
                Ok((c, m)) => (c, m, None),
                Err(e) => {
                    failures += 1;
                    (None, None, Some(e.to_string()))
                }
            };
            let row = ScalingRow {
                n,
                mode,
                f_khz: op.f_khz,
                ln_a: op.ln_a,
                ln_noise: op.ln_noise.ln(),
                alpha: op.alpha,
                seed: config.row_seed(n),
                cutset,
                mh,
                error,
            };
            emit(&row)?;
            rows.push(row);
        }
    }
    if 2 * failures > rows.len() {
        let first = rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::Sweep(format!(
            "{failures} of {} rows failed; first: {first}",
            rows.len()
        )));
    }
    Ok(ScalingTable { rows, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(log₂ n, log₂ metric)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    /// Sizes whose metric was not positive.
    pub excluded: Vec<f64>,
}

/// Ordinary least squares of `log₂ metric` against `log₂ n`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let mut used = Vec::with_capacity(points.len());
    let mut excluded = Vec::new();
    for &(n, m) in points {
        if m > 0.0 && m.is_finite() && n > 0.0 {
            used.push((n.log2(), m.log2()));
        } else {
            excluded.push(n);
        }
    }
    loglog_fit_log2(used, excluded)
}

/// Same as [`loglog_fit`] for metrics already given as `log₂` values, which
/// keeps values far below `f64::MIN_POSITIVE` usable.
pub fn loglog_fit_log2(points: Vec<(f64, f64)>, excluded: Vec<f64>) -> Result<ScalingFit> {
    let points: Vec<(f64, f64)> = points.into_iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "a log-log fit needs at least 2 positive points, got {}",
            points.len()
        )));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("a log-log fit needs at least 2 distinct sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    // a flat series fitted exactly is a perfect fit
    let r_squared = if ss_tot <= f64::EPSILON * my.abs().max(1.0) {
        if ss_res <= f64::EPSILON * my.abs().max(1.0) { 1.0 } else { 0.0 }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points,
        excluded,
    })
}

/// Fit of a log-domain metric against `n`.
pub fn loglog_fit_ln(points: &[(usize, LogValue)]) -> Result<ScalingFit> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for &(n, v) in points {
        if v.is_zero() {
            excluded.push(n as f64);
        } else {
            used.push(((n as f64).log2(), v.log2()));
        }
    }
    loglog_fit_log2(used, excluded)
}

pub const ANALYTIC_TOL: f64 = 1e-6;
pub const SIMULATED_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub n: usize,
    pub mh_mode: SweepMode,
    pub mh_total_bits: f64,
    pub mc_logdet_bits: f64,
    pub trace_bound_bits: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    /// Fit of `trace bound / MH total` against `n` on the closed-form rows.
    pub gap_fit: Option<ScalingFit>,
}

impl SandwichReport {
    pub fn violations(&self) -> impl Iterator<Item = &SandwichRow> {
        self.rows.iter().filter(|r| !r.ok)
    }

    pub fn holds(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.ok)
    }
}

/// Checks `MH total <= logdet (1 + tol) <= trace bound (1 + tol)` for every
/// size that has both a cut row and a regular multi-hop row.
pub fn sandwich_check(table: &ScalingTable) -> Result<SandwichReport> {
    let mut rows = Vec::new();
    let mut gap = Vec::new();
    for mh_mode in [SweepMode::MhRegular, SweepMode::MhRegularSim] {
        let tol = if mh_mode == SweepMode::MhRegular { ANALYTIC_TOL } else { SIMULATED_TOL };
        for mh_row in table.rows_for(mh_mode) {
            let Some(cut_row) = table.row(mh_row.n, SweepMode::Cutset) else {
                continue;
            };
            let (mh, cut) = match (&mh_row.mh, &cut_row.cutset) {
                (Some(m), Some(c)) => (m, c),
                _ => continue,
            };
            let total = mh.total.exp();
            let ok = total <= cut.mc_logdet_bits * (1.0 + tol)
                && cut.mc_logdet_bits <= cut.trace_bound_bits * (1.0 + tol);
            if mh_mode == SweepMode::MhRegular {
                gap.push((
                    (mh_row.n as f64).log2(),
                    cut.trace_bound_bits.log2() - mh.total.log2(),
                ));
            }
            rows.push(SandwichRow {
                n: mh_row.n,
                mh_mode,
                mh_total_bits: total,
                mc_logdet_bits: cut.mc_logdet_bits,
                trace_bound_bits: cut.trace_bound_bits,
                ok,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Usage(
            "the sandwich check needs cutset and mh_regular rows for the same n".into(),
        ));
    }
    let gap_fit = if gap.len() >= 2 {
        Some(loglog_fit_log2(gap, Vec::new())?)
    } else {
        None
    };
    Ok(SandwichReport { rows, gap_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tight() -> FrequencySchedule {
        FrequencySchedule::power_law(40.0, 0.25).unwrap()
    }

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [4.0f64, 16.0, 64.0].iter().map(|&n| (n, 3.0 * n.sqrt())).collect();
        let fit = loglog_fit(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn fit_constant() {
        let pts: Vec<(f64, f64)> = [4.0, 16.0, 64.0].iter().map(|&n| (n, 7.0)).collect();
        let fit = loglog_fit(&pts).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_with_log_correction() {
        let pts: Vec<(f64, f64)> = [64.0f64, 256.0, 1024.0, 4096.0]
            .iter()
            .map(|&n| (n, n.sqrt() * n.log2()))
            .collect();
        let fit = loglog_fit(&pts).unwrap();
        // the log factor adds the OLS slope of log2 x over x = 6, 8, 10, 12:
        // Σ (x - 9) log2 x / 20
        let extra = (-3.0 * 6f64.log2() - 8f64.log2() + 10f64.log2() + 3.0 * 12f64.log2()) / 20.0;
        assert!((fit.slope - 0.5 - extra).abs() < 1e-12, "{}", fit.slope);
        assert!(fit.slope > 0.66 && fit.slope < 0.67);
    }

    #[test]
    fn fit_excludes_nonpositive() {
        let fit = loglog_fit(&[(4.0, 2.0), (16.0, 0.0), (64.0, 8.0)]).unwrap();
        assert_eq!(fit.excluded, vec![16.0]);
        assert_eq!(fit.points.len(), 2);
        assert!(loglog_fit(&[(4.0, 2.0), (16.0, -1.0)]).is_err());
    }

    #[test]
    fn fit_in_log_domain_handles_underflow() {
        let pts: Vec<(usize, LogValue)> = [64usize, 256, 1024]
            .iter()
            .map(|&n| (n, LogValue::from_ln(-2000.0 + 0.5 * (n as f64).ln()).unwrap()))
            .collect();
        let fit = loglog_fit_ln(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::new(vec![64, 256], tight());
        assert!(c.validate().is_ok());
        c.n_list = vec![256, 64];
        assert!(c.validate().is_err());
        c.n_list = vec![64, 200];
        assert!(c.validate().is_err());
        c.n_list = vec![64];
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.modes = vec![SweepMode::Cutset, SweepMode::Cutset];
        assert!(c.validate().is_err());
    }

    #[test]
    fn cutset_sweep_rows_respect_the_bound() {
        let mut c = SweepConfig::new(vec![64, 256], tight());
        c.modes = vec![SweepMode::Cutset];
        c.trials = 2;
        let mut emitted = 0;
        let table = run_sweep(&c, |_| {
            emitted += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(emitted, 2);
        for r in &table.rows {
            let m = r.cutset.as_ref().unwrap();
            assert!(m.mc_logdet_bits <= m.trace_bound_bits * (1.0 + 1e-9));
            assert_eq!(m.chain_violations, 0);
        }
    }

    #[test]
    fn sweep_is_deterministic_and_row_seeds_are_local() {
        let mut c = SweepConfig::new(vec![16, 64], tight());
        c.modes = SweepMode::ALL.to_vec();
        c.trials = 2;
        let a = run_sweep(&c, |_| Ok(())).unwrap();
        let b = run_sweep(&c, |_| Ok(())).unwrap();
        assert_eq!(a, b);
        c.n_list = vec![64];
        let single = run_sweep(&c, |_| Ok(())).unwrap();
        assert_eq!(single.rows[..], a.rows[4..]);
    }

    #[test]
    fn sweep_records_row_failures() {
        // alpha = 1 with a loose constant schedule still runs; force failures
        // through a memory cap too small for the cut matrices
        let mut c = SweepConfig::new(vec![16, 64], tight());
        c.modes = vec![SweepMode::Cutset, SweepMode::MhRegular];
        c.trials = 1;
        c.memory_cap_bytes = 1;
        let table = run_sweep(&c, |_| Ok(())).unwrap();
        assert_eq!(table.failures, 2);
        assert!(table.rows.iter().filter(|r| r.mode == SweepMode::Cutset).all(|r| r.error.is_some()));
        c.modes = vec![SweepMode::Cutset];
        assert!(matches!(run_sweep(&c, |_| Ok(())), Err(Error::Sweep(_))));
    }

    #[test]
    fn sandwich_on_small_sweep() {
        let mut c = SweepConfig::new(vec![64, 256], tight());
        c.modes = vec![SweepMode::Cutset, SweepMode::MhRegular, SweepMode::MhRegularSim];
        c.trials = 2;
        let table = run_sweep(&c, |_| Ok(())).unwrap();
        let report = sandwich_check(&table).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.holds());
        assert!(report.gap_fit.is_some());
    }

    #[test]
    fn sandwich_flags_violation() {
        let row = |mode, cutset, mh| ScalingRow {
            n: 64,
            mode,
            f_khz: 1.0,
            ln_a: 1.0,
            ln_noise: 0.0,
            alpha: 1.5,
            seed: 0,
            cutset,
            mh,
            error: None,
        };
        let table = ScalingTable {
            rows: vec![
                row(
                    SweepMode::Cutset,
                    Some(CutsetMetrics {
                        mc_logdet_bits: 1.0,
                        trace_bound_bits: 2.0,
                        sv_estimate: 1.0,
                        sum_d_ln: LogValue::ONE,
                        trials: 1,
                        chain_violations: 0,
                    }),
                    None,
                ),
                row(
                    SweepMode::MhRegular,
                    None,
                    Some(MhMetrics {
                        duty_ln: LogValue::ONE,
                        per_pair_rate: LogValue::ONE,
                        active_sources: 8.0,
                        total: LogValue::from_linear(1.5).unwrap(),
                        unroutable_fraction: 0.0,
                        max_hop_distance: 1.0,
                        per_seed_total: vec![],
                    }),
                ),
            ],
            failures: 0,
        };
        let report = sandwich_check(&table).unwrap();
        assert!(!report.holds());
        assert_eq!(report.violations().next().unwrap().n, 64);
    }

    proptest! {
        #[test]
        fn fit_recovers_exponent(slope in -3.0f64..3.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = [16.0f64, 64.0, 256.0, 1024.0].iter().map(|&n| (n, c * n.powf(slope))).collect();
            let fit = loglog_fit(&pts).unwrap();
            prop_assert!((fit.slope - slope).abs() < 1e-12);
            prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
        }
    }
}
