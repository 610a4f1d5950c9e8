//! Rule-based five-level stress estimate from HRV features.
//!
//! The score is a weighted sum of z-scored features. The normalization
//! constants and bin edges come from the bundled five-patient corpus and are
//! frozen here; `tests/stress_constants.rs` recomputes them from the fixtures.

use serde::{Deserialize, Serialize};

use crate::hrv::HrvFeatures;
use crate::HealthError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZNorm {
    pub mean: f64,
    pub std: f64,
}

impl ZNorm {
    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

pub const FEATURES: [&str; 3] = ["rmssd", "sdnn", "lf_hf"];
/// Lower variability raises the score, a higher LF/HF ratio raises it.
pub const WEIGHTS: [f64; 3] = [-0.4, -0.3, 0.3];

pub const NORMS: [ZNorm; 3] = [
    ZNorm { mean: 35.50019465889591, std: 19.49628620458087 },
    ZNorm { mean: 33.46080543713145, std: 10.45634219500271 },
    ZNorm { mean: 3.0258518419471705, std: 4.582403599755454 },
];

/// Ascending score thresholds between consecutive levels.
pub const BIN_EDGES: [f64; 4] = [
    -0.9701437552727952,
    -0.32550891655941594,
    0.2557196936678818,
    0.9572757734238282,
];

pub const LEVEL_NAMES: [&str; 5] = ["very low", "low", "moderate", "high", "very high"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressEstimate {
    pub level: u8,
    pub label: String,
    pub rationale: String,
}

fn inputs(f: &HrvFeatures) -> Result<[f64; 3], HealthError> {
    let lf_hf = match f.lf_hf {
        Some(r) if f.hf > 0.0 => r,
        _ => return Err(HealthError::MissingFeature("lf_hf".into())),
    };
    let values = [f.rmssd, f.sdnn, lf_hf];
    for (name, v) in FEATURES.iter().zip(values) {
        if !v.is_finite() {
            return Err(HealthError::MissingFeature((*name).into()));
        }
    }
    Ok(values)
}

/// Per-feature contributions `w_i * z_i`.
pub fn contributions(f: &HrvFeatures) -> Result<[f64; 3], HealthError> {
    let x = inputs(f)?;
    Ok(std::array::from_fn(|i| WEIGHTS[i] * NORMS[i].z(x[i])))
}

pub fn score(f: &HrvFeatures) -> Result<f64, HealthError> {
    Ok(contributions(f)?.iter().sum())
}

/// Number of edges at or below the score.
pub fn level_for(score: f64) -> u8 {
    BIN_EDGES.iter().filter(|e| **e <= score).count() as u8
}

pub fn classify(f: &HrvFeatures) -> Result<StressEstimate, HealthError> {
    let parts = contributions(f)?;
    let total: f64 = parts.iter().sum();
    let level = level_for(total);
    let dominant = (0..3)
        .max_by(|a, b| parts[*a].abs().total_cmp(&parts[*b].abs()))
        .expect("three features");
    let values = inputs(f)?;
    let relation = if values[dominant] >= NORMS[dominant].mean {
        "above"
    } else {
        "below"
    };
    let effect = if parts[dominant] >= 0.0 { "raises" } else { "lowers" };
    let unit = if dominant == 2 { "" } else { " ms" };
    Ok(StressEstimate {
        level,
        label: LEVEL_NAMES[level as usize].to_string(),
        rationale: format!(
            "dominant feature: {} = {:.2}{unit}, {relation} the reference mean of {:.2}{unit}, which {effect} the stress score (score {:.2})",
            FEATURES[dominant], values[dominant], NORMS[dominant].mean, total
        ),
    })
}
