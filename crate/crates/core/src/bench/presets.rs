//! Named sweep configurations mirroring the standard figure set.

use super::config::{EstimatorKind, ExperimentConfig, ReceiverKind, SweepVar};
use crate::error::{Error, Result};

/// Preset names with one-line descriptions.
pub const PRESETS: [(&str, &str); 8] = [
    ("fig_snr", "NMSE vs SNR, M=128, K=5, N=19, alpha=1/3"),
    ("fig_N", "NMSE vs pilot length N, SNR 12 dB"),
    ("fig_M", "NMSE vs antenna count M, SNR 12 dB"),
    ("fig_L", "NMSE vs propagation paths L, SNR 12 dB"),
    ("fig_alpha", "NMSE vs LNA distortion strength alpha, SNR 12 dB"),
    ("fig_D", "NMSE vs pseudo-input count D, SNR 12 dB"),
    ("fig_hybrid", "NMSE vs SNR with hybrid combining, M_RF=96"),
    ("fig_1bit", "NMSE vs SNR with 1-bit ADCs"),
];

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Full-scale configuration of a preset.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        name: name.to_string(),
        ..ExperimentConfig::default()
    };
    let snr_sweep = ExperimentConfig {
        sweep_var: SweepVar::SnrDb,
        sweep_values: range(-10.0, 30.0, 5.0),
        ..base.clone()
    };
    let cfg = match name {
        "fig_snr" => snr_sweep,
        "fig_N" => ExperimentConfig {
            sweep_var: SweepVar::N,
            sweep_values: range(5.0, 101.0, 16.0),
            ..base
        },
        "fig_M" => ExperimentConfig {
            sweep_var: SweepVar::M,
            sweep_values: vec![16.0, 32.0, 64.0, 96.0, 128.0, 160.0, 192.0, 224.0, 256.0],
            ..base
        },
        "fig_L" => ExperimentConfig {
            sweep_var: SweepVar::L,
            sweep_values: range(1.0, 10.0, 1.0),
            ..base
        },
        "fig_alpha" => ExperimentConfig {
            sweep_var: SweepVar::Alpha,
            sweep_values: range(0.0, 1.0, 0.1),
            ..base
        },
        "fig_D" => ExperimentConfig {
            sweep_var: SweepVar::PseudoInputs,
            sweep_values: vec![10.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0],
            estimators: vec![EstimatorKind::NlESbl, EstimatorKind::NlMESbl],
            ..base
        },
        "fig_hybrid" => ExperimentConfig {
            receiver: ReceiverKind::Hybrid,
            m_rf: 96,
            ..snr_sweep
        },
        "fig_1bit" => ExperimentConfig {
            receiver: ReceiverKind::OneBit,
            sweep_values: range(-20.0, 20.0, 5.0),
            estimators: vec![
                EstimatorKind::NlESbl,
                EstimatorKind::NlMESbl,
                EstimatorKind::Blmmse,
                EstimatorKind::Nml,
            ],
            ..snr_sweep
        },
        other => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "unknown preset '{other}' (available: {})",
                names.join(", ")
            )));
        }
    };
    Ok(cfg)
}

/// Shrinks the antenna count (and RF chains and antenna sweeps) and the
/// trial count by `scale` for quicker runs.
pub fn scaled(cfg: &ExperimentConfig, scale: f64) -> Result<ExperimentConfig> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale must lie in (0, 1] (got {scale})")));
    }
    let shrink = |v: usize| ((v as f64 * scale).round() as usize).max(2);
    let mut out = cfg.clone();
    out.m = shrink(cfg.m);
    out.m_rf = shrink(cfg.m_rf).min(out.m);
    out.trials = ((cfg.trials as f64 * scale).round() as usize).max(1);
    if matches!(cfg.sweep_var, SweepVar::M | SweepVar::MRf) {
        out.sweep_values = cfg
            .sweep_values
            .iter()
            .map(|&v| shrink(v as usize) as f64)
            .collect();
        out.sweep_values.dedup();
    }
    Ok(out)
}
