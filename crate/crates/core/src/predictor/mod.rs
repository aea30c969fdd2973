//! Black-box scoring functions over masked memes.
//!
//! Every predictor maps a [`MaskedMeme`] to a score in `[0, 1]`. The built-in ones
//! are pure; the external one forwards to a bridge process.

pub mod external;
pub mod features;
pub mod train;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::data::Label;
use crate::segment::MaskedMeme;

pub use external::{ExternalConfig, ExternalError, ExternalPredictor};
pub use features::{extract_features, FeatureVector};
pub use train::{loss_and_gradient, sigmoid, train_late_fusion, ModelParams, TrainConfig, TrainError};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("external predictor failure: {0}")]
    ExternalPredictorFailure(#[from] ExternalError),
}

#[derive(Debug, Clone)]
pub enum Scorer {
    /// `sigmoid(Σ weight(token))` over present tokens. Ignores the image.
    Lexicon(BTreeMap<String, f64>),
    /// Fraction of present patches whose mean intensity is below the threshold.
    /// Ignores the text. With no present patch the score is 0.5.
    PatchIntensity { dark_threshold: f64 },
    /// `alpha · text + (1 − alpha) · image`.
    LateFusionFixed { alpha: f64, text: Box<PredictorHandle>, image: Box<PredictorHandle> },
    LateFusionTrained(Arc<ModelParams>),
    External(Arc<ExternalPredictor>),
}

#[derive(Debug, Clone)]
pub struct PredictorHandle {
    pub scorer: Scorer,
    /// Decision threshold; a score exactly at the threshold is non-hateful.
    pub threshold: f64,
}

impl PredictorHandle {
    pub fn new(scorer: Scorer) -> Self {
        Self { scorer, threshold: DEFAULT_THRESHOLD }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
        self.threshold = threshold;
        self
    }

    pub fn kind(&self) -> &'static str {
        match self.scorer {
            Scorer::Lexicon(_) => "lexicon",
            Scorer::PatchIntensity { .. } => "patch_intensity",
            Scorer::LateFusionFixed { .. } => "late_fusion_fixed",
            Scorer::LateFusionTrained(_) => "late_fusion_trained",
            Scorer::External(_) => "external",
        }
    }

    pub fn predict(&self, input: &MaskedMeme) -> Result<f64, PredictError> {
        Ok(match &self.scorer {
            Scorer::Lexicon(lexicon) => {
                let z: f64 = input.present_tokens().filter_map(|t| lexicon.get(t)).sum();
                sigmoid(z)
            }
            Scorer::PatchIntensity { dark_threshold } => {
                let mut present = 0usize;
                let mut dark = 0usize;
                for (patch, &keep) in input.grid.patches.iter().zip(&input.patch_present) {
                    if keep {
                        present += 1;
                        if patch.mean_intensity(&input.image) < *dark_threshold {
                            dark += 1;
                        }
                    }
                }
                if present == 0 {
                    0.5
                } else {
                    dark as f64 / present as f64
                }
            }
            Scorer::LateFusionFixed { alpha, text, image } => {
                alpha * text.predict(input)? + (1.0 - alpha) * image.predict(input)?
            }
            Scorer::LateFusionTrained(params) => params.score(input),
            Scorer::External(client) => client.predict(&input.text, &input.image)?,
        })
    }

    pub fn classify(&self, input: &MaskedMeme) -> Result<Label, PredictError> {
        Ok(label_for(self.predict(input)?, self.threshold))
    }
}

/// Hateful iff `score > threshold`.
pub fn label_for(score: f64, threshold: f64) -> Label {
    if score > threshold {
        Label::Hateful
    } else {
        Label::NonHateful
    }
}

pub fn lexicon_predictor<K: AsRef<str>>(lexicon: impl IntoIterator<Item = (K, f64)>) -> PredictorHandle {
    let map = lexicon
        .into_iter()
        .map(|(k, w)| {
            assert!(w.is_finite(), "lexicon weights must be finite");
            (k.as_ref().to_lowercase(), w)
        })
        .collect();
    PredictorHandle::new(Scorer::Lexicon(map))
}

pub fn patch_intensity_predictor(dark_threshold: f64) -> PredictorHandle {
    assert!((0.0..=255.0).contains(&dark_threshold), "threshold must lie in [0, 255]");
    PredictorHandle::new(Scorer::PatchIntensity { dark_threshold })
}

pub fn late_fusion_fixed(alpha: f64, text: PredictorHandle, image: PredictorHandle) -> PredictorHandle {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    PredictorHandle::new(Scorer::LateFusionFixed { alpha, text: Box::new(text), image: Box::new(image) })
}

pub fn trained_predictor(params: ModelParams) -> PredictorHandle {
    PredictorHandle::new(Scorer::LateFusionTrained(Arc::new(params)))
}

pub fn external_predictor(config: ExternalConfig) -> Result<PredictorHandle, PredictError> {
    Ok(PredictorHandle::new(Scorer::External(Arc::new(ExternalPredictor::connect(config)?))))
}
