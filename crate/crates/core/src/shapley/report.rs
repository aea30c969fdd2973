use serde::{Deserialize, Serialize};

use super::{modality_score, ModalityAggregate, ShapleyMode, ShapleyResult};

/// One line of an attribution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAttribution {
    pub id: String,
    pub mode: String,
    #[serde(rename = "P")]
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub num_text: usize,
    pub num_patch: usize,
    pub phi: Vec<f64>,
    pub ts_magnitude: Option<f64>,
    pub ts_signed: Option<f64>,
    pub baseline: f64,
    pub full_value: f64,
}

impl SampleAttribution {
    pub fn new(id: &str, result: &ShapleyResult) -> Self {
        let (mode, samples, seed) = match result.mode {
            ShapleyMode::Exact => ("exact", None, None),
            ShapleyMode::MonteCarlo { samples, seed } => ("monte_carlo", Some(samples), Some(seed)),
        };
        let score = modality_score(result).ok();
        Self {
            id: id.to_string(),
            mode: mode.to_string(),
            samples,
            seed,
            num_text: result.entity_index.num_text,
            num_patch: result.entity_index.num_patch,
            phi: result.phi.clone(),
            ts_magnitude: score.map(|s| s.ts_magnitude),
            ts_signed: score.and_then(|s| s.ts_signed),
            baseline: result.baseline,
            full_value: result.full_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub dataset: String,
    pub samples: Vec<SampleAttribution>,
    pub aggregate: ModalityAggregate,
}

impl AttributionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
