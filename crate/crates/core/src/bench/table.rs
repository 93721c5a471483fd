//! Per-trial records, aggregated sweep rows and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EstimatorKind;
use crate::error::{Error, Result};
use crate::linalg::CVec;

/// Column names of the CSV body, in order.
pub const CSV_HEADER: [&str; 9] = [
    "sweep_var",
    "sweep_value",
    "estimator",
    "nmse_mean",
    "nmse_stderr",
    "trials_ok",
    "trials_failed",
    "iters_mean",
    "wall_ms_mean",
];

/// Normalized squared error after rescaling the estimate to the norm of the
/// truth. A zero estimate scores 1.
pub fn nmse(u_hat: &CVec, u_true: &CVec) -> Result<f64> {
    crate::error::check_len(u_true.len(), u_hat.len())?;
    let truth = u_true.norm();
    if truth == 0.0 {
        return Err(Error::InvalidParameter("NMSE of a zero channel is undefined".into()));
    }
    let est = u_hat.norm();
    if est == 0.0 {
        return Ok(1.0);
    }
    let scaled = u_hat * crate::linalg::C64::new(truth / est, 0.0);
    Ok((scaled - u_true).norm_squared() / (truth * truth))
}

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Index into the sweep values.
    pub point: usize,
    pub trial: usize,
    pub estimator: EstimatorKind,
    /// `None` when the estimator failed.
    pub nmse: Option<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
    /// Accepted solver steps and how many of them raised the loss.
    pub steps: usize,
    pub loss_increases: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub estimator: String,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub iters_mean: f64,
    pub wall_ms_mean: f64,
}

impl SweepRow {
    /// Aggregates the records of one (sweep value, estimator) cell in the
    /// given order. Failed trials are counted and left out of the means.
    pub fn aggregate(sweep_var: &str, sweep_value: f64, estimator: EstimatorKind, records: &[&TrialRecord]) -> Self {
        let ok: Vec<&TrialRecord> = records.iter().copied().filter(|r| r.nmse.is_some()).collect();
        let n = ok.len();
        let mean_of = |f: &dyn Fn(&TrialRecord) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        let nmse_mean = mean_of(&|r| r.nmse.unwrap_or(f64::NAN));
        let nmse_stderr = if n < 2 {
            0.0
        } else {
            let var = ok
                .iter()
                .map(|r| (r.nmse.unwrap_or(f64::NAN) - nmse_mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        SweepRow {
            sweep_var: sweep_var.to_string(),
            sweep_value,
            estimator: estimator.name().to_string(),
            nmse_mean,
            nmse_stderr,
            trials_ok: n,
            trials_failed: records.len() - n,
            iters_mean: mean_of(&|r| r.iterations as f64),
            wall_ms_mean: mean_of(&|r| r.wall_ms),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    /// Key-value pairs written as leading `# key: value` lines.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<SweepRow>,
    /// Raw per-trial outcomes in (sweep value, trial, estimator) order.
    /// Not part of the CSV.
    pub records: Vec<TrialRecord>,
}

impl SweepTable {
    pub fn row(&self, sweep_value: f64, estimator: EstimatorKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.estimator == estimator.name())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Largest share of failed trials over all rows.
    pub fn worst_failure_rate(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.trials_failed as f64 / (r.trials_ok + r.trials_failed).max(1) as f64)
            .fold(0.0, f64::max)
    }

    /// CSV body (header plus rows) without the metadata lines.
    pub fn body_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.body_csv()?);
        Ok(out)
    }

    pub fn emit_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string()?.as_bytes())?;
        Ok(())
    }

    /// Parses the output of [`SweepTable::to_csv_string`]. Per-trial records
    /// are not stored in the CSV and come back empty.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let metadata = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| {
                let l = l.trim_start_matches('#').trim_start();
                match l.split_once(": ") {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => (l.trim_end_matches(':').to_string(), String::new()),
                }
            })
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Config(format!("unexpected CSV header: {headers:?}")));
        }
        let rows = reader.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Ok(SweepTable {
            metadata,
            rows,
            records: Vec::new(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn v(xs: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(xs.len(), xs.iter().map(|&(a, b)| C64::new(a, b)))
    }

    #[test]
    fn nmse_examples() {
        let u = v(&[(1.0, -2.0), (0.5, 0.0), (0.0, 3.0)]);
        assert_eq!(nmse(&u, &u).unwrap(), 0.0);
        assert!(nmse(&(&u * C64::new(2.0, 0.0)), &u).unwrap() < 1e-15);
        let half_pi = &u * C64::new(0.0, 1.0);
        assert!((nmse(&half_pi, &u).unwrap() - 2.0).abs() < 1e-12);
        let flipped = &u * C64::new(-1.0, 0.0);
        assert!((nmse(&flipped, &u).unwrap() - 4.0).abs() < 1e-12);
        let phi: f64 = 0.7;
        let rot = &u * C64::from_polar(1.0, phi);
        assert!((nmse(&rot, &u).unwrap() - 2.0 * (1.0 - phi.cos())).abs() < 1e-12);
        assert_eq!(nmse(&CVec::zeros(3), &u).unwrap(), 1.0);
        assert!(nmse(&u, &CVec::zeros(3)).is_err());
    }

    fn record(trial: usize, nmse: Option<f64>, iterations: usize) -> TrialRecord {
        TrialRecord {
            point: 0,
            trial,
            estimator: EstimatorKind::Lmmse,
            nmse,
            iterations,
            wall_ms: 1.0,
            steps: 0,
            loss_increases: 0,
            error: nmse.is_none().then(|| "failed".to_string()),
        }
    }

    #[test]
    fn aggregation_skips_failures() {
        let recs = [record(0, Some(0.1), 4), record(1, None, 0), record(2, Some(0.3), 6)];
        let refs: Vec<&TrialRecord> = recs.iter().collect();
        let row = SweepRow::aggregate("snr_db", 5.0, EstimatorKind::Lmmse, &refs);
        assert_eq!(row.trials_ok, 2);
        assert_eq!(row.trials_failed, 1);
        assert!((row.nmse_mean - 0.2).abs() < 1e-15);
        assert!((row.nmse_stderr - 0.1).abs() < 1e-15);
        assert_eq!(row.iters_mean, 5.0);
    }

    #[test]
    fn csv_round_trip() {
        let table = SweepTable {
            metadata: vec![("seed".into(), "42".into()), ("tau2_rule".into(), "tau2 = 1e-2 / (sigma2 * M)".into())],
            rows: vec![
                SweepRow {
                    sweep_var: "snr_db".into(),
                    sweep_value: -10.0,
                    estimator: "NL-M-E-SBL".into(),
                    nmse_mean: 0.123456789012345,
                    nmse_stderr: 1.0 / 3.0,
                    trials_ok: 199,
                    trials_failed: 1,
                    iters_mean: 17.25,
                    wall_ms_mean: 3.5,
                },
                SweepRow {
                    sweep_var: "snr_db".into(),
                    sweep_value: 30.0,
                    estimator: "LMMSE".into(),
                    nmse_mean: 1e-300,
                    nmse_stderr: 0.0,
                    trials_ok: 200,
                    trials_failed: 0,
                    iters_mean: 0.0,
                    wall_ms_mean: 0.01,
                },
            ],
            records: Vec::new(),
        };
        let text = table.to_csv_string().unwrap();
        assert!(text.starts_with("# seed: 42\n# tau2_rule: tau2 = 1e-2 / (sigma2 * M)\nsweep_var,"));
        assert_eq!(SweepTable::parse_csv(&text).unwrap(), table);
    }
}
