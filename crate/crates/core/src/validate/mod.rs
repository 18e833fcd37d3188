//! Post-generation hallucination checks on estimated channels.
//!
//! Three independent checks, one per hallucination type:
//! - constraint: non-finite entries, total power outside the allowed band,
//!   entries above the magnitude cap;
//! - fabricated: discriminator realism below a calibrated threshold;
//! - context: RMS delay spread on the wrong side of the LoS/NLoS boundary
//!   for the declared scenario.
//!
//! Checks only observe. What to do with a flagged estimate is up to the caller.

pub mod calibrate;
pub mod report;

pub use calibrate::{calibrate, calibrate_delay_boundary, calibrate_realism, Calibration, REALISM_QUANTILE};
pub use report::{read_report_log, write_report_log, ValidationRecord};

use serde::{Deserialize, Serialize};

use crate::channel::{rms_delay_spread_taps, ChannelMatrix, Environment, ScenarioClass, GRID_LEN};
use crate::gan::{realism_score_of, Discriminator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorConfig {
    /// Allowed total power is `[p_lo, p_hi] * expected_power * GRID_LEN`.
    pub p_lo: f64,
    pub p_hi: f64,
    /// Expected mean power per entry.
    pub expected_power: f64,
    pub magnitude_cap: f64,
    /// Realism threshold; calibrated.
    pub realism_threshold: f64,
    /// LoS/NLoS boundary on the RMS delay spread, in taps; calibrated.
    pub delay_boundary_taps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl ValidatorConfig {
    /// Default bounds with the two data-dependent thresholds supplied.
    pub fn with_thresholds(realism_threshold: f64, delay_boundary_taps: f64) -> Self {
        Self {
            p_lo: 0.25,
            p_hi: 4.0,
            expected_power: 1.0,
            magnitude_cap: 10.0,
            realism_threshold,
            delay_boundary_taps,
            calibration: None,
        }
    }

    pub fn validate(&self) -> Result<(), ValidateError> {
        let bad = |m: &str| Err(ValidateError::Config(m.to_string()));
        if !(self.p_lo < 1.0 && 1.0 < self.p_hi) || !(self.p_lo >= 0.0) {
            return bad("need 0 <= p_lo < 1 < p_hi");
        }
        if !(self.expected_power > 0.0) || !(self.magnitude_cap > 0.0) {
            return bad("expected_power and magnitude_cap must be positive");
        }
        if !(self.realism_threshold > 0.0 && self.realism_threshold < 1.0) {
            return bad("realism_threshold must lie in (0, 1)");
        }
        if !(self.delay_boundary_taps > 0.0) || !self.delay_boundary_taps.is_finite() {
            return bad("delay_boundary_taps must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ValidateError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ValidateError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FlagKind {
    Constraint,
    Fabricated,
    Context,
}

impl FlagKind {
    pub const ALL: [FlagKind; 3] = [FlagKind::Constraint, FlagKind::Fabricated, FlagKind::Context];

    pub fn key(self) -> &'static str {
        match self {
            FlagKind::Constraint => "CONSTRAINT",
            FlagKind::Fabricated => "FABRICATED",
            FlagKind::Context => "CONTEXT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    #[serde(rename = "type")]
    pub kind: FlagKind,
    pub detail: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub flags: Vec<Flag>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn from_flags(flags: Vec<Flag>) -> Self {
        Self {
            passed: flags.is_empty(),
            flags,
        }
    }

    pub fn has(&self, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("invalid validator configuration: {0}")]
    Config(String),
    #[error("fabricated-output check needs a trained discriminator")]
    MissingDiscriminator,
    #[error("batch of {estimates} estimates but {contexts} contexts")]
    LengthMismatch { estimates: usize, contexts: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

pub fn check_constraints(h: &ChannelMatrix, cfg: &ValidatorConfig) -> Vec<Flag> {
    let mut flags = Vec::new();
    let bad = h
        .as_slice()
        .iter()
        .filter(|c| !(c.re.is_finite() && c.im.is_finite()))
        .count();
    if bad > 0 {
        flags.push(Flag {
            kind: FlagKind::Constraint,
            detail: format!("{bad} non-finite entries"),
            value: bad as f64,
        });
        return flags;
    }
    let expected = cfg.expected_power * GRID_LEN as f64;
    let power = h.total_power();
    if power < cfg.p_lo * expected || power > cfg.p_hi * expected {
        flags.push(Flag {
            kind: FlagKind::Constraint,
            detail: format!(
                "total power {:.4} outside [{}, {}] x {expected}",
                power, cfg.p_lo, cfg.p_hi
            ),
            value: power / expected,
        });
    }
    let peak = h.as_slice().iter().map(|c| c.norm() as f64).fold(0.0, f64::max);
    if peak > cfg.magnitude_cap {
        flags.push(Flag {
            kind: FlagKind::Constraint,
            detail: format!("entry magnitude {peak:.4} above cap {}", cfg.magnitude_cap),
            value: peak,
        });
    }
    flags
}

/// Realism check against the declared class. Non-finite estimates are left to
/// the constraint check.
pub fn check_fabricated(
    h: &ChannelMatrix,
    declared: ScenarioClass,
    discriminator: Option<&Discriminator<f32>>,
    cfg: &ValidatorConfig,
) -> Result<Vec<Flag>, ValidateError> {
    let disc = discriminator.ok_or(ValidateError::MissingDiscriminator)?;
    if !h.is_finite() {
        return Ok(Vec::new());
    }
    let score = realism_score_of(disc, h, declared);
    Ok(if score < cfg.realism_threshold {
        vec![Flag {
            kind: FlagKind::Fabricated,
            detail: format!("realism {score:.4} below {:.4}", cfg.realism_threshold),
            value: score,
        }]
    } else {
        Vec::new()
    })
}

/// Delay-spread consistency with the declared environment. Non-finite
/// estimates are left to the constraint check.
pub fn check_context(h: &ChannelMatrix, declared: ScenarioClass, cfg: &ValidatorConfig) -> Vec<Flag> {
    if !h.is_finite() {
        return Vec::new();
    }
    let spread = rms_delay_spread_taps(h);
    let b = cfg.delay_boundary_taps;
    let wrong = match declared.environment {
        Environment::Los => spread > b,
        Environment::Nlos => spread < b,
    };
    if wrong {
        vec![Flag {
            kind: FlagKind::Context,
            detail: format!(
                "delay spread {spread:.3} taps on the wrong side of {b:.3} for declared {}",
                declared.environment.key()
            ),
            value: spread,
        }]
    } else {
        Vec::new()
    }
}

/// All three checks.
pub fn validate_estimate(
    h: &ChannelMatrix,
    declared: ScenarioClass,
    discriminator: Option<&Discriminator<f32>>,
    cfg: &ValidatorConfig,
) -> Result<ValidationReport, ValidateError> {
    let mut flags = check_constraints(h, cfg);
    flags.extend(check_fabricated(h, declared, discriminator, cfg)?);
    flags.extend(check_context(h, declared, cfg));
    Ok(ValidationReport::from_flags(flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationSummary {
    pub n: usize,
    /// Fraction of estimates with at least one flag.
    pub rate: f64,
    pub constraint: f64,
    pub fabricated: f64,
    pub context: f64,
}

impl HallucinationSummary {
    pub fn rate_of(&self, kind: FlagKind) -> f64 {
        match kind {
            FlagKind::Constraint => self.constraint,
            FlagKind::Fabricated => self.fabricated,
            FlagKind::Context => self.context,
        }
    }

    /// Aggregates already computed reports.
    pub fn from_reports(reports: &[ValidationReport]) -> Result<Self, ValidateError> {
        if reports.is_empty() {
            return Err(ValidateError::EmptyBatch);
        }
        let n = reports.len() as f64;
        let frac = |f: &dyn Fn(&ValidationReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / n;
        Ok(Self {
            n: reports.len(),
            rate: frac(&|r| !r.passed),
            constraint: frac(&|r| r.has(FlagKind::Constraint)),
            fabricated: frac(&|r| r.has(FlagKind::Fabricated)),
            context: frac(&|r| r.has(FlagKind::Context)),
        })
    }
}

pub fn hallucination_rate(
    estimates: &[ChannelMatrix],
    contexts: &[ScenarioClass],
    discriminator: &Discriminator<f32>,
    cfg: &ValidatorConfig,
) -> Result<HallucinationSummary, ValidateError> {
    if estimates.len() != contexts.len() {
        return Err(ValidateError::LengthMismatch {
            estimates: estimates.len(),
            contexts: contexts.len(),
        });
    }
    let reports = estimates
        .iter()
        .zip(contexts)
        .map(|(h, c)| validate_estimate(h, *c, Some(discriminator), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    HallucinationSummary::from_reports(&reports)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex32;

    use super::*;
    use crate::channel::{generate_channel, CarrierBand, Mobility, N_SC};
    use crate::rng::rng_from;

    fn cfg() -> ValidatorConfig {
        ValidatorConfig::with_thresholds(0.2, 1.0)
    }

    fn los() -> ScenarioClass {
        ScenarioClass::new(Environment::Los, CarrierBand::Low, Mobility::Static)
    }

    fn nlos() -> ScenarioClass {
        ScenarioClass::new(Environment::Nlos, CarrierBand::Low, Mobility::Static)
    }

    #[test]
    fn constraint_examples() {
        let h = generate_channel(los(), 3).h;
        assert!(check_constraints(&h, &cfg()).is_empty());
        let flags = check_constraints(&h.scaled(10.0), &cfg());
        let power = flags.iter().find(|f| f.detail.starts_with("total power")).unwrap();
        assert!((power.value - 100.0 * h.mean_power()).abs() < 1e-3 * power.value);
        let mut nan = h.clone();
        nan.as_mut_slice()[5].im = f32::NAN;
        let flags = check_constraints(&nan, &cfg());
        assert_eq!(flags.len(), 1);
        assert_eq!((flags[0].kind, flags[0].value), (FlagKind::Constraint, 1.0));
        let mut spike = ChannelMatrix::from_fn(|_, _| Complex32::new(1.0, 0.0));
        spike.set(0, 0, Complex32::new(11.0, 0.0));
        let flags = check_constraints(&spike, &cfg());
        assert!(flags.iter().any(|f| f.value == 11.0));
        assert!(!check_constraints(&ChannelMatrix::zeros(), &cfg()).is_empty());
    }

    #[test]
    fn context_examples() {
        let c = cfg();
        // A single tap has zero spread: fine for LoS, wrong for NLoS.
        let flat = ChannelMatrix::from_fn(|_, _| Complex32::new(1.0, 0.0));
        assert!(check_context(&flat, los(), &c).is_empty());
        assert_eq!(check_context(&flat, nlos(), &c).len(), 1);
        // Two equal taps 8 apart: spread 4 taps.
        let two = ChannelMatrix::from_fn(|_, s| {
            Complex32::new(1.0, 0.0) + Complex32::from_polar(1.0, -2.0 * std::f32::consts::PI * (8 * s) as f32 / N_SC as f32)
        });
        let flags = check_context(&two, los(), &c);
        assert!((flags[0].value - 4.0).abs() < 1e-6);
        assert!(check_context(&two, nlos(), &c).is_empty());
    }

    #[test]
    fn fabricated_needs_a_discriminator() {
        let h = generate_channel(los(), 1).h;
        assert!(matches!(
            check_fabricated(&h, los(), None, &cfg()),
            Err(ValidateError::MissingDiscriminator)
        ));
        let disc = Discriminator::<f32>::new(4, &mut rng_from(0));
        let a = check_fabricated(&h, los(), Some(&disc), &cfg()).unwrap();
        assert_eq!(a, check_fabricated(&h, los(), Some(&disc), &cfg()).unwrap());
        let zero = check_fabricated(&ChannelMatrix::zeros(), los(), Some(&disc), &cfg()).unwrap();
        assert_eq!(zero.len(), 1);
    }

    #[test]
    fn rate_edge_cases() {
        let disc = Discriminator::<f32>::new(4, &mut rng_from(0));
        assert!(matches!(hallucination_rate(&[], &[], &disc, &cfg()), Err(ValidateError::EmptyBatch)));
        let h = generate_channel(los(), 1).h;
        assert!(matches!(
            hallucination_rate(&[h.clone()], &[], &disc, &cfg()),
            Err(ValidateError::LengthMismatch { estimates: 1, contexts: 0 })
        ));
        let nan = ChannelMatrix::from_fn(|_, _| Complex32::new(f32::NAN, f32::NAN));
        let s = hallucination_rate(&[nan.clone(), nan], &[los(), nlos()], &disc, &cfg()).unwrap();
        assert_eq!((s.rate, s.constraint, s.fabricated, s.context), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn config_validation_and_json() {
        let c = cfg();
        assert!(c.validate().is_ok());
        assert_eq!(ValidatorConfig::from_json(&c.to_json()).unwrap(), c);
        for bad in [
            ValidatorConfig { p_lo: 1.0, ..cfg() },
            ValidatorConfig { p_hi: 0.9, ..cfg() },
            ValidatorConfig::with_thresholds(1.0, 1.0),
            ValidatorConfig::with_thresholds(0.5, 0.0),
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
