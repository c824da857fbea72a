//! Acoustic propagation: absorption, ambient noise, attenuation and the
//! random-phase narrow-band channel gain.
//!
//! Frequencies are in kHz and distances in grid units; one grid unit is
//! `unit_km` kilometres. The absorption law is an empirical dB/km fit, so the
//! per-unit exponent `ln a(f)` scales with `unit_km`.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logval::LogValue;

/// `ln 10 / 10`: converts decibels to nepers of power.
pub const DB_TO_LN: f64 = LN_10 / 10.0;

/// Coefficients of the absorption and noise laws plus the spreading model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Corner term of the `a2` relaxation (kHz²).
    pub b1: f64,
    /// Corner term of the `a3` relaxation (kHz²).
    pub b2: f64,
    /// Noise level at 1 kHz (dB).
    pub a4: f64,
    /// Noise decay per decade of frequency, applied to `10 log10 f`.
    pub a5: f64,
    /// Spreading factor, 1 (cylindrical) to 2 (spherical).
    pub alpha: f64,
    /// Attenuation scale constant.
    pub c0: f64,
    /// Length of one grid unit in km.
    pub unit_km: f64,
}

impl Default for AbsorptionProfile {
    /// Thorp-style absorption coefficients, 50 dB noise at 1 kHz with the
    /// customary 1.8 decay, practical spreading, unit spacing of 1 km.
    fn default() -> Self {
        AbsorptionProfile {
            a0: 0.003,
            a1: 2.75e-4,
            a2: 0.11,
            a3: 44.0,
            b1: 1.0,
            b2: 4100.0,
            a4: 50.0,
            a5: 1.8,
            alpha: 1.5,
            c0: 1.0,
            unit_km: 1.0,
        }
    }
}

impl AbsorptionProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("absorption.a0", self.a0),
            ("absorption.a1", self.a1),
            ("absorption.a2", self.a2),
            ("absorption.a3", self.a3),
            ("absorption.b1", self.b1),
            ("absorption.b2", self.b2),
            ("noise.a4", self.a4),
            ("noise.a5", self.a5),
            ("channel.alpha", self.alpha),
            ("channel.c0", self.c0),
            ("channel.unit_km", self.unit_km),
        ];
        for (key, v) in all {
            if !v.is_finite() {
                return Err(Error::Config(format!("{key} must be finite, got {v}")));
            }
        }
        let positive = [
            ("absorption.a1", self.a1),
            ("absorption.a2", self.a2),
            ("absorption.a3", self.a3),
            ("absorption.b1", self.b1),
            ("absorption.b2", self.b2),
            ("noise.a5", self.a5),
            ("channel.c0", self.c0),
            ("channel.unit_km", self.unit_km),
        ];
        for (key, v) in positive {
            if v <= 0.0 {
                return Err(Error::Config(format!("{key} must be > 0, got {v}")));
            }
        }
        if self.a0 < 0.0 {
            return Err(Error::Config(format!(
                "absorption.a0 must be >= 0, got {}",
                self.a0
            )));
        }
        if !(1.0..=2.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "channel.alpha must lie in the valid range [1, 2], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Exponent of the high-frequency envelope `a(f) ~ exp(c1 f²)`, per grid unit.
    pub fn c1(&self) -> f64 {
        DB_TO_LN * self.a1 * self.unit_km
    }

    /// Absorption in dB/km at `f` kHz.
    pub fn absorption_db_per_km(&self, f: f64) -> Result<f64> {
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::Domain(format!(
                "frequency must be finite and >= 0 kHz, got {f}"
            )));
        }
        let f2 = f * f;
        Ok(self.a0 + self.a1 * f2 + self.a2 * f2 / (self.b1 + f2) + self.a3 * f2 / (self.b2 + f2))
    }

    /// `ln a(f)` per grid unit.
    pub fn absorption_ln_per_unit(&self, f: f64) -> Result<f64> {
        Ok(self.absorption_db_per_km(f)? * DB_TO_LN * self.unit_km)
    }

    /// `ln N(f)` with the noise law read in dB: `10 log10 N = a4 - a5 * 10 log10 f`.
    pub fn noise_psd_ln(&self, f: f64) -> Result<LogValue> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Domain(format!(
                "noise psd needs a finite frequency > 0 kHz, got {f}"
            )));
        }
        Ok(LogValue::new_unchecked(
            (self.a4 - self.a5 * 10.0 * f.log10()) * DB_TO_LN,
        ))
    }

    /// `ln A(r, f) = ln c0 + alpha ln r + r ln a(f)`.
    pub fn attenuation_ln(&self, r: f64, f: f64) -> Result<LogValue> {
        let ln_a = self.absorption_ln_per_unit(f)?;
        attenuation_ln_with(self.c0.ln(), self.alpha, ln_a, r)
    }

    /// Precomputes the frequency-dependent quantities at `f`.
    pub fn at(&self, f: f64) -> Result<OperatingPoint> {
        Ok(OperatingPoint {
            f_khz: f,
            ln_a: self.absorption_ln_per_unit(f)?,
            ln_noise: self.noise_psd_ln(f)?,
            alpha: self.alpha,
            ln_c0: self.c0.ln(),
        })
    }
}

fn attenuation_ln_with(ln_c0: f64, alpha: f64, ln_a: f64, r: f64) -> Result<LogValue> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!(
            "attenuation needs a finite distance > 0 (far field), got {r}"
        )));
    }
    Ok(LogValue::new_unchecked(ln_c0 + alpha * r.ln() + r * ln_a))
}

/// Channel quantities frozen at one carrier frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub f_khz: f64,
    /// `ln a(f)` per grid unit.
    pub ln_a: f64,
    pub ln_noise: LogValue,
    pub alpha: f64,
    pub ln_c0: f64,
}

impl OperatingPoint {
    /// Builds an operating point directly from `ln a` and `ln N`, bypassing
    /// the empirical laws.
    pub fn from_parts(ln_a: f64, ln_noise: f64, alpha: f64, c0: f64) -> Result<Self> {
        if !ln_a.is_finite() || !ln_noise.is_finite() || !(c0 > 0.0) {
            return Err(Error::Domain(format!(
                "invalid operating point ln_a={ln_a} ln_noise={ln_noise} c0={c0}"
            )));
        }
        Ok(OperatingPoint {
            f_khz: f64::NAN,
            ln_a,
            ln_noise: LogValue::from_ln(ln_noise)?,
            alpha,
            ln_c0: c0.ln(),
        })
    }

    pub fn attenuation_ln(&self, r: f64) -> Result<LogValue> {
        attenuation_ln_with(self.ln_c0, self.alpha, self.ln_a, r)
    }

    /// `-ln A(r, f)` without validation, for hot loops over known-positive `r`.
    #[inline]
    pub(crate) fn gain_ln_unchecked(&self, r: f64) -> f64 {
        -(self.ln_c0 + self.alpha * r.ln() + r * self.ln_a)
    }
}

/// Samples `h = e^{jθ} / sqrt(A)` with `θ` uniform on `[0, 2π)`.
pub fn channel_gain_sample<R: Rng + ?Sized>(rng: &mut R, ln_attenuation: LogValue) -> Complex64 {
    let theta = rng.random::<f64>() * 2.0 * PI;
    Complex64::from_polar((-0.5 * ln_attenuation.ln()).exp(), theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    PowerLaw,
}

/// Carrier frequency as a function of the node count: `f(n) = c_f n^gamma_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySchedule {
    pub kind: ScheduleKind,
    pub c_f: f64,
    pub gamma_f: f64,
}

impl FrequencySchedule {
    pub fn constant(c_f: f64) -> Result<Self> {
        let s = FrequencySchedule {
            kind: ScheduleKind::Constant,
            c_f,
            gamma_f: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn power_law(c_f: f64, gamma_f: f64) -> Result<Self> {
        let s = FrequencySchedule {
            kind: ScheduleKind::PowerLaw,
            c_f,
            gamma_f,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_f > 0.0) || !self.c_f.is_finite() {
            return Err(Error::Config(format!(
                "schedule.c_f must be > 0 kHz, got {}",
                self.c_f
            )));
        }
        match self.kind {
            ScheduleKind::Constant if self.gamma_f != 0.0 => Err(Error::Config(format!(
                "schedule.gamma_f must be 0 for a constant schedule, got {}",
                self.gamma_f
            ))),
            _ if !(self.gamma_f >= 0.0) || !self.gamma_f.is_finite() => Err(Error::Config(
                format!("schedule.gamma_f must be >= 0, got {}", self.gamma_f),
            )),
            _ => Ok(()),
        }
    }

    /// Carrier frequency in kHz for `n` nodes.
    pub fn frequency(&self, n: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.c_f,
            ScheduleKind::PowerLaw => self.c_f * (n as f64).powf(self.gamma_f),
        }
    }
}

/// Whether the cut-set bound is expected to be order-tight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BoundTight,
    BoundLoose,
}

/// Threshold exponent: `f = Ω(n^{1/4})` makes `ln a(f)` grow at least like `sqrt(n)`.
pub const TIGHT_GAMMA: f64 = 0.25;

/// Classifies a schedule by its growth exponent. The `c1 f²` envelope of the
/// profile is what turns `gamma_f >= 1/4` into `a(f) >= (1+eps)^sqrt(n)`.
pub fn regime_classify(schedule: &FrequencySchedule, profile: &AbsorptionProfile) -> Regime {
    debug_assert!(profile.c1() > 0.0);
    match schedule.kind {
        ScheduleKind::PowerLaw if schedule.gamma_f >= TIGHT_GAMMA => Regime::BoundTight,
        _ => Regime::BoundLoose,
    }
}
