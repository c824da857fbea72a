//! Cut-set upper bound across the vertical bisection of a regular network.
//!
//! `H` is the `|D_L| × |S_L|` channel from left sources to right
//! destinations, `d_i` the power source `i` delivers across the cut and
//! `F = H diag(d)^{-1/2}` the column-normalized matrix.

use std::f64::consts::{LN_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::OperatingPoint;
use crate::error::{Error, Result};
use crate::linalg::{self, POWER_MAX_ITER, POWER_TOL};
use crate::logval::{log_sum_exp_raw, LogValue};
use crate::rng::{stream, Domain};
use crate::topology::{vertical_cut, CutInstance, Topology};

/// Linear-domain entries below this are stored as exact zeros.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

/// Default cap on dense matrix memory.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// Lattice size the envelope constants are frozen at.
pub const ENVELOPE_CALIBRATION_N: usize = 256;

/// `ln |h|²` for every lattice offset that occurs across the cut.
struct GainTable {
    side: usize,
    /// Indexed by `(dx - 1) * side + dy`, `dx = i_x + k_x - 1 >= 1`.
    values: Vec<f64>,
}

impl GainTable {
    fn new(side: usize, op: &OperatingPoint) -> Self {
        let mut values = Vec::with_capacity(side * side);
        for dx in 1..=side {
            for dy in 0..side {
                values.push(op.gain_ln_unchecked((dx as f64).hypot(dy as f64)));
            }
        }
        GainTable { side, values }
    }

    #[inline]
    fn get(&self, cut: &CutInstance, k: usize, i: usize) -> f64 {
        let (ix, iy) = cut.source_coords[i];
        let (kx, ky) = cut.dest_coords[k];
        self.values[(ix + kx - 2) * self.side + iy.abs_diff(ky)]
    }
}

fn gain_table(cut: &CutInstance, op: &OperatingPoint) -> GainTable {
    GainTable::new(cut.side.max(2), op)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTransferVector {
    /// `ln d_i` per source, in `cut.sources` order.
    pub d_ln: Vec<LogValue>,
    pub total_ln: LogValue,
}

/// `d_i = Σ_k A(r_ki, f)^{-1}` by brute force over every destination.
pub fn power_transfer_exact(cut: &CutInstance, op: &OperatingPoint) -> Result<PowerTransferVector> {
    if cut.destinations.is_empty() || cut.sources.is_empty() {
        return Err(Error::Usage("cut has no sources or no destinations".into()));
    }
    let table = gain_table(cut, op);
    let mut column = vec![0.0; cut.destinations.len()];
    let d_ln: Vec<LogValue> = (0..cut.sources.len())
        .map(|i| {
            for (k, slot) in column.iter_mut().enumerate() {
                *slot = table.get(cut, k, i);
            }
            log_sum_exp_raw(&column)
        })
        .collect();
    let total_ln = crate::logval::log_sum_exp(d_ln.iter().copied());
    Ok(PowerTransferVector { d_ln, total_ln })
}

/// `ln(i_x^{1-α} a^{-i_x})`.
pub fn envelope_shape_ln(i_x: usize, op: &OperatingPoint) -> f64 {
    let ix = i_x as f64;
    (1.0 - op.alpha) * ix.ln() - ix * op.ln_a
}

/// Range of `d_i / (i_x^{1-α} a^{-i_x})` observed on a reference lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCalibration {
    pub c_lo: f64,
    pub c_hi: f64,
    pub calibration_n: usize,
}

impl EnvelopeCalibration {
    /// Brute-force calibration on the `n`-node lattice.
    pub fn calibrate(op: &OperatingPoint, n: usize) -> Result<Self> {
        if !(op.ln_a > 0.0) {
            return Err(Error::Regime(format!(
                "the power-transfer envelope needs ln a(f) > 0, got {}",
                op.ln_a
            )));
        }
        let cut = vertical_cut(&Topology::build_regular(n)?)?;
        let pt = power_transfer_exact(&cut, op)?;
        let (mut c_lo, mut c_hi) = (f64::INFINITY, 0.0f64);
        for (ratio, _) in envelope_ratios(&cut, &pt, op) {
            c_lo = c_lo.min(ratio);
            c_hi = c_hi.max(ratio);
        }
        Ok(EnvelopeCalibration {
            c_lo,
            c_hi,
            calibration_n: n,
        })
    }

    pub fn width(&self) -> f64 {
        self.c_hi / self.c_lo
    }
}

/// `(d_i / (i_x^{1-α} a^{-i_x}), i_x)` for every source.
pub fn envelope_ratios(
    cut: &CutInstance,
    pt: &PowerTransferVector,
    op: &OperatingPoint,
) -> Vec<(f64, usize)> {
    cut.source_coords
        .iter()
        .zip(&pt.d_ln)
        .map(|(&(ix, _), d)| ((d.ln() - envelope_shape_ln(ix, op)).exp(), ix))
        .collect()
}

/// Lower and upper envelope of `d_i` for sources at distance rank `i_x`.
pub fn power_transfer_envelope(
    i_x: usize,
    op: &OperatingPoint,
    calibration: &EnvelopeCalibration,
) -> Result<(LogValue, LogValue)> {
    if !(op.ln_a > 0.0) {
        return Err(Error::Regime(format!(
            "the power-transfer envelope needs ln a(f) > 0, got {}",
            op.ln_a
        )));
    }
    if i_x == 0 {
        return Err(Error::Domain("i_x starts at 1".into()));
    }
    let shape = envelope_shape_ln(i_x, op);
    Ok((
        LogValue::from_ln(shape + calibration.c_lo.ln())?,
        LogValue::from_ln(shape + calibration.c_hi.ln())?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSums {
    /// `Σ_k |F_ki|²` per source.
    pub column: Vec<f64>,
    /// `Σ_i |F_ki|²` per destination.
    pub row: Vec<f64>,
}

/// Row and column sums of `|F|²`; phases drop out.
pub fn normalized_gram_sums(cut: &CutInstance, op: &OperatingPoint) -> Result<GramSums> {
    let pt = power_transfer_exact(cut, op)?;
    let table = gain_table(cut, op);
    let (m_d, m_s) = (cut.destinations.len(), cut.sources.len());
    let mut buf = vec![0.0; m_d.max(m_s)];
    let column = (0..m_s)
        .map(|i| {
            for k in 0..m_d {
                buf[k] = table.get(cut, k, i) - pt.d_ln[i].ln();
            }
            log_sum_exp_raw(&buf[..m_d]).exp()
        })
        .collect();
    let row = (0..m_d)
        .map(|k| {
            for i in 0..m_s {
                buf[i] = table.get(cut, k, i) - pt.d_ln[i].ln();
            }
            log_sum_exp_raw(&buf[..m_s]).exp()
        })
        .collect();
    Ok(GramSums { column, row })
}

/// Phases of trial `trial`, row-major over `(destination, source)`.
pub fn cut_phases(seed: u64, domain: Domain, trial: u64, len: usize) -> Vec<f64> {
    let mut rng = stream(seed, domain, trial);
    (0..len).map(|_| rng.random::<f64>() * 2.0 * PI).collect()
}

/// `F` for one phase realization, with `|F_ki|² = A(r_ki)^{-1} / d_i`.
pub fn normalized_matrix(
    cut: &CutInstance,
    op: &OperatingPoint,
    pt: &PowerTransferVector,
    phases: &[f64],
) -> Array2<Complex64> {
    let table = gain_table(cut, op);
    let (m_d, m_s) = (cut.destinations.len(), cut.sources.len());
    debug_assert_eq!(phases.len(), m_d * m_s);
    let clamp_ln = UNDERFLOW_CLAMP.ln();
    Array2::from_shape_fn((m_d, m_s), |(k, i)| {
        let mag_sq_ln = table.get(cut, k, i) - pt.d_ln[i].ln();
        if mag_sq_ln < clamp_ln {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar((0.5 * mag_sq_ln).exp(), phases[k * m_s + i])
        }
    })
}

fn check_cut(cut: &CutInstance, trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if cut.sources.is_empty() || cut.destinations.is_empty() {
        return Err(Error::Usage("cut has no sources or no destinations".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvEstimate {
    /// Mean of `‖F‖₂²` over trials.
    pub mean: f64,
    pub per_trial: Vec<f64>,
    pub max_iterations: usize,
}

/// Monte Carlo mean of `‖F‖₂²` over independent phase draws.
pub fn largest_sv_mc(
    cut: &CutInstance,
    op: &OperatingPoint,
    trials: usize,
    seed: u64,
    memory_cap: u64,
) -> Result<SvEstimate> {
    check_cut(cut, trials)?;
    let m = cut.destinations.len().max(cut.sources.len());
    let threads = rayon::current_num_threads().min(trials);
    linalg::check_budget(
        "normalized cut matrix",
        linalg::dense_bytes(m, 2 * threads),
        memory_cap,
    )?;
    let pt = power_transfer_exact(cut, op)?;
    let len = cut.destinations.len() * cut.sources.len();
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let f = normalized_matrix(cut, op, &pt, &cut_phases(seed, Domain::SvPhases, t, len));
            linalg::spectral_norm_sq(f.view(), POWER_TOL, POWER_MAX_ITER)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_trial: Vec<f64> = outcomes.iter().map(|s| s.value).collect();
    Ok(SvEstimate {
        mean: per_trial.iter().sum::<f64>() / trials as f64,
        max_iterations: outcomes.iter().map(|s| s.iterations).max().unwrap_or(0),
        per_trial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// `log₂ det(I + (P/N) H Hᴴ)`.
    pub logdet_bits: f64,
    /// `‖F‖₂²` of the same realization.
    pub sv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCapacityEstimate {
    pub mc_logdet_bits: f64,
    /// `(P/N) Σ d_i` in bits.
    pub trace_bound_bits: f64,
    /// `E‖F‖² (P/N) Σ d_i` in bits.
    pub sv_bound_bits: f64,
    pub sv_estimate: f64,
    pub sum_d_ln: LogValue,
    pub trials: usize,
    pub seed: u64,
    pub per_trial: Vec<TrialOutcome>,
}

impl CutCapacityEstimate {
    /// Trials breaking `logdet <= trace bound` or `logdet <= sv · trace bound`,
    /// with relative slack `slack`.
    pub fn chain_violations(&self, slack: f64) -> Vec<usize> {
        let trace = self.trace_bound_bits;
        self.per_trial
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                t.logdet_bits > trace * (1.0 + slack) || t.logdet_bits > t.sv * trace * (1.0 + slack)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Ergodic cut capacity with input covariance `P·I`, by Monte Carlo over the
/// phases, together with the trace and spectral-norm bounds.
pub fn ergodic_capacity_mc(
    cut: &CutInstance,
    op: &OperatingPoint,
    power: f64,
    trials: usize,
    seed: u64,
    memory_cap: u64,
) -> Result<CutCapacityEstimate> {
    check_cut(cut, trials)?;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Config(format!("power must be > 0, got {power}")));
    }
    let m = cut.destinations.len().max(cut.sources.len());
    let threads = rayon::current_num_threads().min(trials);
    // F, its conjugate transpose, the Gram matrix and the factorization buffer
    linalg::check_budget(
        "cut channel matrices",
        linalg::dense_bytes(m, 4 * threads),
        memory_cap,
    )?;
    let pt = power_transfer_exact(cut, op)?;
    let snr_ln = power.ln() - op.ln_noise.ln();
    let trace_ln = snr_ln + pt.total_ln.ln();
    let trace_bound_bits = trace_ln.exp() / LN_2;
    // column scales sqrt((P/N) d_i) turn F into sqrt(P/N) H
    let scale: Vec<f64> = pt.d_ln.iter().map(|d| (0.5 * (snr_ln + d.ln())).exp()).collect();
    let len = cut.destinations.len() * cut.sources.len();
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let f = normalized_matrix(cut, op, &pt, &cut_phases(seed, Domain::CutPhases, t, len));
            let sv = linalg::spectral_norm_sq(f.view(), POWER_TOL, POWER_MAX_ITER)?.value;
            let mut g = f;
            for mut row in g.rows_mut() {
                for (z, s) in row.iter_mut().zip(&scale) {
                    *z *= *s;
                    if z.norm_sqr() < UNDERFLOW_CLAMP {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
            }
            let x = linalg::scaled_gram(g.view(), 1.0);
            let logdet = linalg::ln_det_identity_plus(&x)?;
            Ok(TrialOutcome {
                logdet_bits: logdet / LN_2,
                sv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials as f64;
    let sv_estimate = per_trial.iter().map(|t| t.sv).sum::<f64>() / n;
    Ok(CutCapacityEstimate {
        mc_logdet_bits: per_trial.iter().map(|t| t.logdet_bits).sum::<f64>() / n,
        trace_bound_bits,
        sv_bound_bits: sv_estimate * trace_bound_bits,
        sv_estimate,
        sum_d_ln: pt.total_ln,
        trials,
        seed,
        per_trial,
    })
}

/// Finite-`n` value of the cut-set throughput bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    /// `ln` of `(P/N) Σ d_i` in bits.
    pub bound_bits: LogValue,
    /// `ε ln n`, the slack factor reported next to the bound.
    pub n_eps_ln: f64,
    /// `ln` of `P sqrt(n) / (a N)`, the closed-form envelope with unit constant.
    pub envelope: LogValue,
}

pub fn theorem1_bound(n: usize, op: &OperatingPoint, power: f64, eps: f64) -> Result<Theorem1Bound> {
    if !(op.ln_a > 0.0) {
        return Err(Error::Regime(format!(
            "the cut-set bound chain needs ln a(f) > 0, got {}",
            op.ln_a
        )));
    }
    if !(power > 0.0) {
        return Err(Error::Config(format!("power must be > 0, got {power}")));
    }
    let cut = vertical_cut(&Topology::build_regular(n)?)?;
    let pt = power_transfer_exact(&cut, op)?;
    let ln_n = (n as f64).ln();
    Ok(Theorem1Bound {
        bound_bits: LogValue::from_ln(power.ln() - op.ln_noise.ln() + pt.total_ln.ln() - LN_2.ln())?,
        n_eps_ln: eps * ln_n,
        envelope: LogValue::from_ln(power.ln() + 0.5 * ln_n - op.ln_a - op.ln_noise.ln())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::AbsorptionProfile;
    use proptest::prelude::*;

    fn op(ln_a: f64, alpha: f64) -> OperatingPoint {
        OperatingPoint::from_parts(ln_a, 0.0, alpha, 1.0).unwrap()
    }

    fn regular_cut(n: usize) -> CutInstance {
        vertical_cut(&Topology::build_regular(n).unwrap()).unwrap()
    }

    #[test]
    fn two_term_hand_sums() {
        let cut = regular_cut(4);
        let pt = power_transfer_exact(&cut, &op(1.0, 1.0)).unwrap();
        let hand = (-1.0f64).exp() + 2f64.powf(-0.5) * (-(2f64.sqrt())).exp();
        for d in &pt.d_ln {
            assert!((d.exp() - hand).abs() < 1e-14);
            assert!((d.exp() - 0.5398).abs() < 1e-4);
        }
        let pt = power_transfer_exact(&cut, &op(0.0, 2.0)).unwrap();
        for d in &pt.d_ln {
            assert!((d.exp() - 1.5).abs() < 1e-14);
        }
        let total: f64 = pt.d_ln.iter().map(|d| d.exp()).sum();
        assert!((pt.total_ln.exp() - total).abs() < 1e-14);
    }

    #[test]
    fn profile_operating_point_matches() {
        let p = AbsorptionProfile::default();
        let at = p.at(10.0).unwrap();
        let cut = regular_cut(16);
        let pt = power_transfer_exact(&cut, &at).unwrap();
        let (k, i) = (0, 0);
        let r = cut.distance(k, i);
        let direct = -p.attenuation_ln(r, 10.0).unwrap().ln();
        assert!(pt.d_ln[i].ln() > direct);
    }

    #[test]
    fn doubling_ln_a_decreases_every_entry() {
        let cut = regular_cut(64);
        let a = power_transfer_exact(&cut, &op(0.7, 1.5)).unwrap();
        let b = power_transfer_exact(&cut, &op(1.4, 1.5)).unwrap();
        for (x, y) in a.d_ln.iter().zip(&b.d_ln) {
            assert!(y.ln() < x.ln());
        }
    }

    #[test]
    fn empty_cut_rejected() {
        let mut cut = regular_cut(4);
        cut.destinations.clear();
        cut.dest_coords.clear();
        assert!(power_transfer_exact(&cut, &op(1.0, 1.0)).is_err());
    }

    #[test]
    fn envelope_band_and_shape() {
        let o = op(1.0, 1.0);
        assert_eq!(envelope_shape_ln(5, &o), -5.0);
        let cal = EnvelopeCalibration::calibrate(&o, 1024).unwrap();
        assert!(cal.width() < 20.0, "{}", cal.width());
        let cut = regular_cut(1024);
        let pt = power_transfer_exact(&cut, &o).unwrap();
        for (i, &(ix, _)) in cut.source_coords.iter().enumerate() {
            let (lo, hi) = power_transfer_envelope(ix, &o, &cal).unwrap();
            assert!(lo.ln() <= pt.d_ln[i].ln() + 1e-12 && pt.d_ln[i].ln() <= hi.ln() + 1e-12);
        }
        for alpha in [1.0, 1.5, 2.0] {
            let o = op(0.5, alpha);
            let shapes: Vec<f64> = (1..10).map(|ix| envelope_shape_ln(ix, &o)).collect();
            assert!(shapes.windows(2).all(|w| w[1] < w[0]));
        }
        assert!(matches!(
            EnvelopeCalibration::calibrate(&op(0.0, 1.0), 64),
            Err(Error::Regime(_))
        ));
        assert!(power_transfer_envelope(1, &op(-0.1, 1.0), &cal).is_err());
    }

    #[test]
    fn frozen_calibration_is_close_to_larger_lattice() {
        // the ratio keeps sliding as i_x grows past the calibration lattice
        let o = op(1.0, 1.5);
        let small = EnvelopeCalibration::calibrate(&o, ENVELOPE_CALIBRATION_N).unwrap();
        let large = EnvelopeCalibration::calibrate(&o, 1024).unwrap();
        assert!((small.c_hi / large.c_hi - 1.0).abs() < 0.01);
        assert!(large.c_lo < small.c_lo && small.c_lo < 1.5 * large.c_lo);
    }

    #[test]
    fn column_sums_are_one() {
        for n in [4, 16, 64, 256] {
            for (ln_a, alpha) in [(0.0, 2.0), (0.3, 1.0), (2.0, 1.5), (40.0, 1.0)] {
                let sums = normalized_gram_sums(&regular_cut(n), &op(ln_a, alpha)).unwrap();
                for c in &sums.column {
                    assert!((c - 1.0).abs() < 1e-9, "n={n} ln_a={ln_a} {c}");
                }
            }
        }
    }

    fn max_row_sum_fit() -> crate::scaling::ScalingFit {
        let p = AbsorptionProfile::default();
        let schedule = crate::channel::FrequencySchedule::power_law(40.0, 0.25).unwrap();
        let pts: Vec<(f64, f64)> = [64usize, 256, 1024, 4096]
            .iter()
            .map(|&n| {
                let o = p.at(schedule.frequency(n)).unwrap();
                let sums = normalized_gram_sums(&regular_cut(n), &o).unwrap();
                (n as f64, sums.row.iter().copied().fold(0.0, f64::max))
            })
            .collect();
        crate::scaling::loglog_fit(&pts).unwrap()
    }

    #[test]
    #[ignore = "row sums grow like sqrt(n) under the default profile; see max_row_sum_grows_like_sqrt_n"]
    fn max_row_sum_is_logarithmic() {
        assert!(max_row_sum_fit().slope < 0.1);
    }

    #[test]
    fn max_row_sum_grows_like_sqrt_n() {
        // each source's normalized power lands almost entirely on the first
        // destination of its own row, which thus collects ~sqrt(n)/2 unit weights
        let fit = max_row_sum_fit();
        assert!((fit.slope - 0.5).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn row_sums_hand_computed_small_cut() {
        let cut = regular_cut(4);
        let o = op(1.0, 1.0);
        let pt = power_transfer_exact(&cut, &o).unwrap();
        let sums = normalized_gram_sums(&cut, &o).unwrap();
        for k in 0..2 {
            let hand: f64 = (0..2)
                .map(|i| {
                    let r = cut.distance(k, i);
                    (1.0 / (r * r.exp())) / pt.d_ln[i].exp()
                })
                .sum();
            assert!((sums.row[k] - hand).abs() < 1e-14);
        }
        let total_rows: f64 = sums.row.iter().sum();
        assert!((total_rows - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_scalar_shannon() {
        let p = AbsorptionProfile::default();
        let at = p.at(10.0).unwrap();
        let cut = CutInstance::single(1, 1);
        let est = ergodic_capacity_mc(&cut, &at, 2.0, 3, 5, DEFAULT_MEMORY_CAP).unwrap();
        let snr = 2.0 / (at.ln_noise.exp() * p.attenuation_ln(1.0, 10.0).unwrap().exp());
        let expected = (1.0 + snr).log2();
        for t in &est.per_trial {
            assert!((t.logdet_bits - expected).abs() < 1e-12 * expected);
            assert!((t.sv - 1.0).abs() < 1e-12);
        }
        assert!((est.mc_logdet_bits - expected).abs() < 1e-12 * expected);
        let sv = largest_sv_mc(&cut, &at, 2, 5, DEFAULT_MEMORY_CAP).unwrap();
        assert!((sv.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_chain_holds_per_trial() {
        let cut = regular_cut(64);
        for (ln_a, ln_n) in [(0.2, -3.0), (1.0, 0.0), (3.0, 2.0)] {
            let o = OperatingPoint::from_parts(ln_a, ln_n, 1.5, 1.0).unwrap();
            let est = ergodic_capacity_mc(&cut, &o, 1.0, 6, 21, DEFAULT_MEMORY_CAP).unwrap();
            assert!(est.chain_violations(1e-9).is_empty());
            assert!(est.sv_estimate >= 1.0 - 1e-9);
            assert_eq!(est.sv_bound_bits, est.sv_estimate * est.trace_bound_bits);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let cut = regular_cut(16);
        let o = op(1.0, 1.0);
        let a = ergodic_capacity_mc(&cut, &o, 1.0, 4, 77, DEFAULT_MEMORY_CAP).unwrap();
        let b = ergodic_capacity_mc(&cut, &o, 1.0, 4, 77, DEFAULT_MEMORY_CAP).unwrap();
        assert_eq!(a, b);
        let c = ergodic_capacity_mc(&cut, &o, 1.0, 4, 78, DEFAULT_MEMORY_CAP).unwrap();
        assert_ne!(a.per_trial, c.per_trial);
    }

    #[test]
    fn memory_cap_is_checked_first() {
        let cut = regular_cut(256);
        let err = ergodic_capacity_mc(&cut, &op(1.0, 1.0), 1.0, 1, 0, 1024).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
        assert!(largest_sv_mc(&cut, &op(1.0, 1.0), 1, 0, 1024).is_err());
    }

    #[test]
    fn theorem1_matches_trace_bound_and_scales_with_power() {
        let o = OperatingPoint::from_parts(1.0, 0.5, 1.0, 1.0).unwrap();
        let b = theorem1_bound(64, &o, 1.0, 0.0).unwrap();
        let est = ergodic_capacity_mc(&regular_cut(64), &o, 1.0, 1, 0, DEFAULT_MEMORY_CAP).unwrap();
        assert!((b.bound_bits.exp() - est.trace_bound_bits).abs() < 1e-12 * est.trace_bound_bits);
        let half = theorem1_bound(64, &o, 0.5, 0.0).unwrap();
        assert!((half.bound_bits.exp() * 2.0 - b.bound_bits.exp()).abs() < 1e-12 * b.bound_bits.exp());
        assert_eq!(b.n_eps_ln, 0.0);
        assert!((b.envelope.ln() - (3.0 * 2f64.ln() - 1.0 - 0.5)).abs() < 1e-12);
        assert!(matches!(
            theorem1_bound(64, &op(0.0, 1.0), 1.0, 0.0),
            Err(Error::Regime(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sv_at_least_one(seed in any::<u64>(), ln_a in 0.0f64..4.0, alpha in 1.0f64..2.0) {
            let est = largest_sv_mc(&regular_cut(16), &op(ln_a, alpha), 1, seed, DEFAULT_MEMORY_CAP).unwrap();
            prop_assert!(est.mean >= 1.0 - 1e-9);
        }

        #[test]
        fn trace_is_phase_free(seed in any::<u64>()) {
            let cut = regular_cut(16);
            let o = op(0.8, 1.2);
            let pt = power_transfer_exact(&cut, &o).unwrap();
            let len = cut.sources.len() * cut.destinations.len();
            let f = normalized_matrix(&cut, &o, &pt, &cut_phases(seed, Domain::CutPhases, 0, len));
            let trace: f64 = f.indexed_iter()
                .map(|((_, i), z)| z.norm_sqr() * pt.d_ln[i].exp())
                .sum();
            prop_assert!((trace - pt.total_ln.exp()).abs() < 1e-12 * pt.total_ln.exp());
        }
    }
}

/// The cut capacity on a 16-node lattice, recomputed from node positions with
/// plain Gaussian elimination.
#[cfg(test)]
mod elimination_oracle {
    use num_complex::Complex64;

    use crate::channel::AbsorptionProfile;
    use crate::cutset::{cut_phases, ergodic_capacity_mc, DEFAULT_MEMORY_CAP};
    use crate::rng::Domain;
    use crate::topology::{vertical_cut, Topology};

    /// `ln det(M)` of a Hermitian positive definite matrix via elimination with
    /// partial pivoting.
    fn ln_det_gauss(mut m: Vec<Vec<Complex64>>) -> f64 {
        let n = m.len();
        let mut ln_det = 0.0;
        for col in 0..n {
            let pivot = (col..n).max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm())).unwrap();
            m.swap(col, pivot);
            let p = m[col][col];
            ln_det += p.norm().ln();
            for row in col + 1..n {
                let factor = m[row][col] / p;
                for k in col..n {
                    let v = m[col][k];
                    m[row][k] -= factor * v;
                }
            }
        }
        ln_det
    }

    fn oracle(n: usize, f: f64, alpha: f64, power: f64, seed: u64) -> (f64, f64) {
        let profile = AbsorptionProfile { alpha, ..AbsorptionProfile::default() };
        let topo = Topology::build_regular(n).unwrap();
        let cut = vertical_cut(&topo).unwrap();
        // absorption in dB/km from the four relaxation terms, then per grid unit
        let f2 = f * f;
        let db = profile.a0
            + profile.a1 * f2
            + profile.a2 * f2 / (profile.b1 + f2)
            + profile.a3 * f2 / (profile.b2 + f2);
        let ln_a = db * profile.unit_km * 10f64.ln() / 10.0;
        let noise = 10f64.powf((profile.a4 - profile.a5 * 10.0 * f.log10()) / 10.0);
        let snr = power / noise;
        let (md, ms) = (cut.destinations.len(), cut.sources.len());
        let phases = cut_phases(seed, Domain::CutPhases, 0, md * ms);
        let mut h = vec![vec![Complex64::new(0.0, 0.0); ms]; md];
        let mut trace = 0.0;
        for (k, &dst) in cut.destinations.iter().enumerate() {
            for (i, &src) in cut.sources.iter().enumerate() {
                let r = topo.positions[src].distance(&topo.positions[dst]);
                let gain = 1.0 / (profile.c0 * r.powf(alpha) * (ln_a * r).exp());
                h[k][i] = Complex64::from_polar(gain.sqrt(), phases[k * ms + i]);
                trace += snr * gain;
            }
        }
        let mut m = vec![vec![Complex64::new(0.0, 0.0); md]; md];
        for a in 0..md {
            for b in 0..md {
                let dot: Complex64 = (0..ms).map(|i| h[a][i] * h[b][i].conj()).sum();
                m[a][b] = dot * snr + if a == b { 1.0 } else { 0.0 };
            }
        }
        (ln_det_gauss(m) / 2f64.ln(), trace / 2f64.ln())
    }

    #[test]
    fn lattice_capacity_matches_gaussian_elimination() {
        for (f, alpha, power) in [(1.0, 1.5, 1.0), (1.0, 1.0, 1e3), (10.0, 2.0, 1e4), (0.5, 1.5, 1e2)] {
            let seed = 11;
            let profile = AbsorptionProfile { alpha, ..AbsorptionProfile::default() };
            let op = profile.at(f).unwrap();
            let cut = vertical_cut(&Topology::build_regular(16).unwrap()).unwrap();
            let est = ergodic_capacity_mc(&cut, &op, power, 1, seed, DEFAULT_MEMORY_CAP).unwrap();
            let (logdet, trace) = oracle(16, f, alpha, power, seed);
            let got = est.per_trial[0].logdet_bits;
            assert!((got - logdet).abs() <= 1e-9 * logdet.abs().max(1e-300), "f={f}: {got} vs {logdet}");
            assert!((est.trace_bound_bits - trace).abs() <= 1e-9 * trace, "f={f}: trace");
            assert!(logdet <= trace);
        }
    }
}
