//! Experiment configuration: a flat TOML table with one key per setting.
//!
//! ```toml
//! m = 32
//! k = 2
//! n = 9
//! snr_db = 12.0
//! alpha = 0.333
//! estimators = ["LMMSE", "NL-M-E-SBL"]
//! sweep_var = "alpha"
//! sweep_values = [0.0, 0.5, 1.0]
//! ```
//!
//! Keys left out take the defaults of [`ExperimentConfig::default`]. The
//! swept key is overwritten by each entry of `sweep_values`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::PriorHyperparams;
use crate::model::Dimensions;
use crate::surrogate::KernelParams;

/// Signal variance of the kernel when no rule applies.
pub const FIXED_TAU2: f64 = 1e-2;

/// Default LNA back-off, 7 dB.
pub const DEFAULT_B_OFF: f64 = 5.011_872_336_272_722;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    /// Fully digital array with an LNA per antenna.
    Digital,
    /// LNAs followed by an analog combiner with `m_rf` chains.
    Hybrid,
    /// LNAs followed by 1-bit ADCs.
    OneBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "LMMSE")]
    Lmmse,
    #[serde(rename = "BLMMSE")]
    Blmmse,
    #[serde(rename = "E-SBL")]
    ESbl,
    #[serde(rename = "M-E-SBL")]
    MESbl,
    #[serde(rename = "NL-E-SBL")]
    NlESbl,
    #[serde(rename = "NL-M-E-SBL")]
    NlMESbl,
    #[serde(rename = "NML")]
    Nml,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Lmmse,
        EstimatorKind::Blmmse,
        EstimatorKind::ESbl,
        EstimatorKind::MESbl,
        EstimatorKind::NlESbl,
        EstimatorKind::NlMESbl,
        EstimatorKind::Nml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Lmmse => "LMMSE",
            EstimatorKind::Blmmse => "BLMMSE",
            EstimatorKind::ESbl => "E-SBL",
            EstimatorKind::MESbl => "M-E-SBL",
            EstimatorKind::NlESbl => "NL-E-SBL",
            EstimatorKind::NlMESbl => "NL-M-E-SBL",
            EstimatorKind::Nml => "NML",
        }
    }

    /// Whether the estimator is defined for the given receiver.
    pub fn supports(self, receiver: ReceiverKind) -> bool {
        match self {
            EstimatorKind::ESbl | EstimatorKind::MESbl => receiver != ReceiverKind::OneBit,
            EstimatorKind::Nml => receiver == ReceiverKind::OneBit,
            _ => true,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}'")))
    }
}

/// Configuration key varied across the rows of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    SnrDb,
    Alpha,
    M,
    N,
    L,
    MRf,
    PseudoInputs,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::SnrDb => "snr_db",
            SweepVar::Alpha => "alpha",
            SweepVar::M => "m",
            SweepVar::N => "n",
            SweepVar::L => "l",
            SweepVar::MRf => "m_rf",
            SweepVar::PseudoInputs => "pseudo_inputs",
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, SweepVar::SnrDb | SweepVar::Alpha)
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepVar::SnrDb,
            SweepVar::Alpha,
            SweepVar::M,
            SweepVar::N,
            SweepVar::L,
            SweepVar::MRf,
            SweepVar::PseudoInputs,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Antennas.
    pub m: usize,
    /// Users.
    pub k: usize,
    /// Pilot length (odd).
    pub n: usize,
    /// Propagation paths per user.
    pub l: usize,
    /// Pilot power.
    pub p: f64,
    /// Per-antenna SNR `p / sigma2` in dB.
    pub snr_db: f64,
    /// LNA distortion strength.
    pub alpha: f64,
    /// LNA back-off.
    pub b_off: f64,
    pub receiver: ReceiverKind,
    /// RF chains of the hybrid receiver.
    pub m_rf: usize,
    /// Number of Sobol pseudo-inputs.
    pub pseudo_inputs: usize,
    /// Half-width of the square holding the pseudo-inputs.
    pub pseudo_bound: f64,
    /// Fixed kernel signal variance; the receiver's default rule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    pub rho: f64,
    pub nu: f64,
    /// Prior shape; 0.5 for 1-bit receivers and 1e-2 otherwise when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Prior rate; 0.5 for 1-bit receivers and 1e-2 otherwise when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub sweep_var: SweepVar,
    pub sweep_values: Vec<f64>,
    /// Monte-Carlo draws for the channel covariance.
    pub cov_samples: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Outer iterations of the 1-bit estimator.
    pub max_outer: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            m: 128,
            k: 5,
            n: 19,
            l: 3,
            p: 1.0,
            snr_db: 12.0,
            alpha: 1.0 / 3.0,
            b_off: DEFAULT_B_OFF,
            receiver: ReceiverKind::Digital,
            m_rf: 96,
            pseudo_inputs: 100,
            pseudo_bound: 4.0,
            tau2: None,
            rho: 1.0,
            nu: 1.0,
            gamma: None,
            beta: None,
            trials: 2000,
            seed: 0,
            estimators: vec![
                EstimatorKind::NlESbl,
                EstimatorKind::NlMESbl,
                EstimatorKind::ESbl,
                EstimatorKind::MESbl,
                EstimatorKind::Lmmse,
                EstimatorKind::Blmmse,
            ],
            sweep_var: SweepVar::SnrDb,
            sweep_values: vec![12.0],
            cov_samples: 10_000,
            max_iter: 500,
            tol: 1e-6,
            max_outer: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Overrides one key with a TOML literal; bare words are taken as strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table =
            toml::from_str(&self.to_toml_string()).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Overrides every key present in a TOML file, keeping the rest.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let file: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in file {
            self.set(&key, &value.to_string())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn dims(&self) -> Result<Dimensions> {
        Dimensions::new(self.m, self.k, self.n, self.l)
    }

    pub fn sigma2(&self) -> f64 {
        self.p * 10f64.powf(-self.snr_db / 10.0)
    }

    /// Kernel signal variance and the rule it came from.
    pub fn tau2(&self) -> f64 {
        match (self.tau2, self.receiver) {
            (Some(t), _) => t,
            (None, ReceiverKind::Digital) => FIXED_TAU2 / (self.sigma2() * self.m as f64),
            (None, _) => FIXED_TAU2,
        }
    }

    /// Human-readable form of the kernel signal-variance rule.
    pub fn tau2_rule(&self) -> String {
        match (self.tau2, self.receiver) {
            (Some(t), _) => format!("tau2 = {t}"),
            (None, ReceiverKind::Digital) => "tau2 = 1e-2 / (sigma2 * M)".into(),
            (None, _) => "tau2 = 1e-2".into(),
        }
    }

    pub fn kernel(&self) -> Result<KernelParams> {
        KernelParams::new(self.tau2(), self.rho)
    }

    pub fn prior(&self) -> Result<PriorHyperparams> {
        let default = if self.receiver == ReceiverKind::OneBit { 0.5 } else { 1e-2 };
        PriorHyperparams::new(
            self.nu,
            self.gamma.unwrap_or(default),
            self.beta.unwrap_or(default),
        )
    }

    /// The configuration with the sweep variable set to `value`.
    pub fn at(&self, value: f64) -> Result<Self> {
        let var = self.sweep_var;
        if var.is_integer() && (value.fract() != 0.0 || value < 0.0) {
            return Err(Error::Config(format!(
                "{} must be a non-negative integer (got {value})",
                var.name()
            )));
        }
        let mut c = self.clone();
        let int = value as usize;
        match var {
            SweepVar::SnrDb => c.snr_db = value,
            SweepVar::Alpha => c.alpha = value,
            SweepVar::M => c.m = int,
            SweepVar::N => c.n = int,
            SweepVar::L => c.l = int,
            SweepVar::MRf => c.m_rf = int,
            SweepVar::PseudoInputs => c.pseudo_inputs = int,
        }
        Ok(c)
    }

    /// Checks the configuration and every point of its sweep.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values must not be empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        for e in &self.estimators {
            if !e.supports(self.receiver) {
                return Err(Error::Config(format!(
                    "{e} is not available for the {:?} receiver",
                    self.receiver
                )));
            }
        }
        for &v in &self.sweep_values {
            let c = self.at(v)?;
            c.dims()?;
            crate::model::zadoff_chu_pilots(c.k, c.n)?;
            if c.snr_db.is_nan() || !(c.p > 0.0) {
                return Err(Error::Config("snr_db and p must be valid numbers".into()));
            }
            if c.receiver == ReceiverKind::Hybrid && (c.m_rf == 0 || c.m_rf > c.m) {
                return Err(Error::Config(format!("m_rf must lie in 1..={} (got {})", c.m, c.m_rf)));
            }
            if c.pseudo_inputs == 0 || !(c.pseudo_bound > 0.0) {
                return Err(Error::Config("pseudo-input set must be non-empty".into()));
            }
            if c.cov_samples == 0 || c.max_iter == 0 || c.max_outer == 0 {
                return Err(Error::Config(
                    "cov_samples, max_iter and max_outer must be positive".into(),
                ));
            }
            c.prior()?;
            if c.sigma2() > 0.0 {
                c.kernel()?;
            }
            // The surrogate and the LNA gains need finite, positive inputs.
            crate::impairments::LnaParams::new(c.alpha, c.b_off, &crate::linalg::RVec::from_element(1, 1.0))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c = ExperimentConfig::from_toml_str("m = 16\nestimators = [\"LMMSE\"]\n").unwrap();
        assert_eq!(c.m, 16);
        assert_eq!(c.k, 5);
        assert_eq!(c.estimators, vec![EstimatorKind::Lmmse]);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_override("m=64").unwrap();
        c.apply_override("receiver = one_bit").unwrap();
        c.apply_override("sweep_values=[0.0, 1.0]").unwrap();
        c.apply_override("estimators=[\"NML\"]").unwrap();
        assert_eq!(c.m, 64);
        assert_eq!(c.receiver, ReceiverKind::OneBit);
        assert_eq!(c.sweep_values, vec![0.0, 1.0]);
        assert!(c.apply_override("m=-1").is_err());
        assert!(c.apply_override("nonsense").is_err());
    }

    #[test]
    fn tau2_rules() {
        let mut c = ExperimentConfig {
            m: 10,
            snr_db: 10.0,
            ..ExperimentConfig::default()
        };
        assert!((c.tau2() - 1e-2).abs() < 1e-15);
        c.receiver = ReceiverKind::Hybrid;
        assert_eq!(c.tau2(), 1e-2);
        c.tau2 = Some(0.3);
        assert_eq!(c.tau2(), 0.3);
        assert_eq!(c.tau2_rule(), "tau2 = 0.3");
    }

    #[test]
    fn sweep_points() {
        let c = ExperimentConfig {
            sweep_var: SweepVar::N,
            ..ExperimentConfig::default()
        };
        assert_eq!(c.at(21.0).unwrap().n, 21);
        assert!(c.at(2.5).is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.sweep_values.clear();
        assert!(c.validate().is_err());
        c.sweep_values = vec![1.0];
        c.receiver = ReceiverKind::OneBit;
        assert!(c.validate().is_err(), "linear SBL is not defined for 1-bit data");
        c.estimators = vec![EstimatorKind::Nml, EstimatorKind::NlMESbl];
        assert!(c.validate().is_ok());
        c.sweep_var = SweepVar::N;
        c.sweep_values = vec![20.0];
        assert!(c.validate().is_err(), "even pilot length");
    }
}
