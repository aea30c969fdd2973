//! Experiment protocols: cross-domain matrices, caption effect, confounder sensitivity
//! and dataset-level modality reports.

pub mod synth;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_confounder_eval_sets, ConfounderGroup, DataError, Label, LabeledDataset, Meme};
use crate::metrics::{delta_f1, macro_f1, mann_whitney_u, EvalOutcome, MannWhitney, MetricsError};
use crate::predictor::{label_for, train_late_fusion, trained_predictor, PredictError, PredictorHandle, TrainConfig, TrainError};
use crate::segment::{MaskedMeme, SegmentError};
use crate::shapley::{
    aggregate_modality, file_stem, render_attribution, AttributionReport, Explainer, McConfig, RenderOptions, RenderedArtifacts,
    SampleAttribution, ShapleyError,
};

pub use synth::{confounder_domain, generate_domain, pseudo_word, suite_domain, synthetic_confounders, synthetic_suite, CaptionStyle, DomainSpec, MotifSpec};

/// Joins a caption onto the meme text.
pub const CAPTION_SEPARATOR: &str = " ";
pub const TRAIN_FRACTION: f64 = 0.8;
/// Memes with at most this many entities get exact attributions in modality reports.
pub const REPORT_EXACT_LIMIT: usize = 12;
pub const DEFAULT_SAMPLE_CAP: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sample {0} has no caption")]
    MissingCaptions(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Seeded stratified split; each class is shuffled independently and cut at `train_fraction`.
pub fn stratified_split(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [Label::NonHateful, Label::Hateful] {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.samples[i].label == label).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend(idx[..cut].iter().copied());
        test.extend(idx[cut..].iter().copied());
    }
    train.sort_unstable();
    test.sort_unstable();
    let pick = |ix: &[usize]| LabeledDataset { name: dataset.name.clone(), samples: ix.iter().map(|&i| dataset.samples[i].clone()).collect() };
    (pick(&train), pick(&test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    Off,
    Train,
    Test,
    Both,
}

impl CaptionMode {
    pub fn on_train(self) -> bool {
        matches!(self, CaptionMode::Train | CaptionMode::Both)
    }

    pub fn on_test(self) -> bool {
        matches!(self, CaptionMode::Test | CaptionMode::Both)
    }

    fn from_flags(train: bool, test: bool) -> Self {
        match (train, test) {
            (false, false) => CaptionMode::Off,
            (true, false) => CaptionMode::Train,
            (false, true) => CaptionMode::Test,
            (true, true) => CaptionMode::Both,
        }
    }
}

impl std::str::FromStr for CaptionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(CaptionMode::Off),
            "train" => Ok(CaptionMode::Train),
            "test" => Ok(CaptionMode::Test),
            "both" => Ok(CaptionMode::Both),
            other => Err(format!("unknown caption mode {other:?} (off|train|test|both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    /// Row and column labels.
    pub datasets: Vec<String>,
    pub caption_mode: CaptionMode,
    /// `cells[train][test]`; the diagonal is in-domain.
    pub cells: Vec<Vec<EvalOutcome>>,
}

impl MatrixReport {
    pub fn f1(&self, train: usize, test: usize) -> f64 {
        self.cells[train][test].macro_f1
    }

    pub fn is_in_domain(&self, train: usize, test: usize) -> bool {
        train == test
    }

    pub fn diagonal_mean(&self) -> f64 {
        let k = self.datasets.len();
        (0..k).map(|i| self.f1(i, i)).sum::<f64>() / k as f64
    }

    pub fn off_diagonal_mean(&self) -> f64 {
        let k = self.datasets.len();
        let off: Vec<f64> = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| self.f1(i, j)).collect();
        off.iter().sum::<f64>() / off.len() as f64
    }

    /// Macro-F1 grid, rows = training set, columns = test set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train\\test");
        for name in &self.datasets {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            out.push_str(&self.datasets[i]);
            for cell in row {
                out.push_str(&format!(",{:.6}", cell.macro_f1));
            }
            out.push('\n');
        }
        out
    }
}

struct Split {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn prepare_splits(datasets: &[LabeledDataset], seed: u64) -> Result<Vec<Split>, HarnessError> {
    if datasets.len() < 2 {
        return Err(HarnessError::InvalidInput(format!("need at least 2 datasets, got {}", datasets.len())));
    }
    Ok(datasets
        .iter()
        .map(|d| {
            let (train, test) = stratified_split(d, TRAIN_FRACTION, seed);
            Split { train, test }
        })
        .collect())
}

fn maybe_captioned(d: &LabeledDataset, on: bool) -> LabeledDataset {
    if on {
        d.with_captions(CAPTION_SEPARATOR)
    } else {
        d.clone()
    }
}

/// Predicted scores on the unmasked memes.
pub fn score_dataset(predictor: &PredictorHandle, dataset: &LabeledDataset) -> Result<Vec<f64>, HarnessError> {
    dataset.samples.iter().map(|m| Ok(predictor.predict(&MaskedMeme::unmasked(m)?)?)).collect()
}

pub fn evaluate(predictor: &PredictorHandle, dataset: &LabeledDataset) -> Result<EvalOutcome, HarnessError> {
    let scores = score_dataset(predictor, dataset)?;
    outcome_from_scores(&scores, dataset, predictor.threshold)
}

fn outcome_from_scores(scores: &[f64], dataset: &LabeledDataset, threshold: f64) -> Result<EvalOutcome, HarnessError> {
    let pred: Vec<Label> = scores.iter().map(|&s| label_for(s, threshold)).collect();
    Ok(macro_f1(&dataset.labels(), &pred)?)
}

/// Scores of every (row model, column test set) pair.
fn score_grid(models: &[PredictorHandle], tests: &[LabeledDataset]) -> Result<Vec<Vec<Vec<f64>>>, HarnessError> {
    models.iter().map(|m| tests.iter().map(|t| score_dataset(m, t)).collect()).collect()
}

fn grid_report(names: &[String], mode: CaptionMode, scores: &[Vec<Vec<f64>>], tests: &[LabeledDataset], threshold: f64) -> Result<MatrixReport, HarnessError> {
    let cells = scores
        .iter()
        .map(|row| row.iter().zip(tests).map(|(s, t)| outcome_from_scores(s, t, threshold)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatrixReport { datasets: names.to_vec(), caption_mode: mode, cells })
}

fn train_models(splits: &[Split], cfg: &TrainConfig, captions: bool) -> Result<Vec<PredictorHandle>, HarnessError> {
    splits.iter().map(|s| Ok(trained_predictor(train_late_fusion(&maybe_captioned(&s.train, captions), cfg)?))).collect()
}

fn require_captions(datasets: &[LabeledDataset]) -> Result<(), HarnessError> {
    for m in datasets.iter().flat_map(|d| &d.samples) {
        if m.caption.as_deref().is_none_or(|c| c.trim().is_empty()) {
            return Err(HarnessError::MissingCaptions(m.id.clone()));
        }
    }
    Ok(())
}

/// Trains one model per dataset on its train split (split seed = `cfg.seed`) and
/// evaluates it on every test split.
pub fn cross_domain_matrix(datasets: &[LabeledDataset], cfg: &TrainConfig, caption_mode: CaptionMode) -> Result<MatrixReport, HarnessError> {
    if caption_mode != CaptionMode::Off {
        require_captions(datasets)?;
    }
    let splits = prepare_splits(datasets, cfg.seed)?;
    let models = train_models(&splits, cfg, caption_mode.on_train())?;
    let tests: Vec<LabeledDataset> = splits.iter().map(|s| maybe_captioned(&s.test, caption_mode.on_test())).collect();
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    grid_report(&names, caption_mode, &score_grid(&models, &tests)?, &tests, models[0].threshold)
}

/// Which paired quantities fed a significance test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    PerSampleScores,
    PerRunF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub pairing: Pairing,
    pub test: MannWhitney,
}

pub fn significance(baseline: &[f64], treatment: &[f64], pairing: Pairing) -> Result<Significance, HarnessError> {
    Ok(Significance { pairing, test: mann_whitney_u(baseline, treatment)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEffectReport {
    /// `matrices[train_with][test_with]`.
    pub matrices: [[MatrixReport; 2]; 2],
    /// `delta[train_with][test_with][i][j]` = cell F1 minus the (off, off) cell F1.
    pub delta: [[Vec<Vec<f64>>; 2]; 2],
    /// Diagonal scores of (off, off) against (both, both).
    pub significance: Significance,
}

impl CaptionEffectReport {
    pub fn matrix(&self, mode: CaptionMode) -> &MatrixReport {
        &self.matrices[mode.on_train() as usize][mode.on_test() as usize]
    }
}

/// The 2×2 train-caption × test-caption design.
pub fn caption_effect_experiment(datasets: &[LabeledDataset], cfg: &TrainConfig) -> Result<CaptionEffectReport, HarnessError> {
    require_captions(datasets)?;
    let splits = prepare_splits(datasets, cfg.seed)?;
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    let models = [train_models(&splits, cfg, false)?, train_models(&splits, cfg, true)?];
    let tests: [Vec<LabeledDataset>; 2] = [false, true].map(|on| splits.iter().map(|s| maybe_captioned(&s.test, on)).collect());
    let threshold = models[0][0].threshold;

    let mut scores = Vec::new();
    for tr in 0..2 {
        for te in 0..2 {
            scores.push(score_grid(&models[tr], &tests[te])?);
        }
    }
    let report = |tr: usize, te: usize| grid_report(&names, CaptionMode::from_flags(tr == 1, te == 1), &scores[tr * 2 + te], &tests[te], threshold);
    let matrices = [[report(0, 0)?, report(0, 1)?], [report(1, 0)?, report(1, 1)?]];
    let base = &matrices[0][0];
    let k = names.len();
    let delta_of = |m: &MatrixReport| -> Vec<Vec<f64>> { (0..k).map(|i| (0..k).map(|j| delta_f1(&m.cells[i][j], &base.cells[i][j])).collect()).collect() };
    let delta = [[delta_of(&matrices[0][0]), delta_of(&matrices[0][1])], [delta_of(&matrices[1][0]), delta_of(&matrices[1][1])]];

    let diagonal = |grid: &[Vec<Vec<f64>>]| -> Vec<f64> { (0..k).flat_map(|i| grid[i][i].iter().copied()).collect() };
    let significance = significance(&diagonal(&scores[0]), &diagonal(&scores[3]), Pairing::PerSampleScores)?;
    Ok(CaptionEffectReport { matrices, delta, significance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderReport {
    pub text: EvalOutcome,
    pub image: EvalOutcome,
    pub text_extended: EvalOutcome,
    pub image_extended: EvalOutcome,
    /// F1(T) − F1(I).
    pub delta_ti: f64,
    /// F1(T⁺) − F1(I⁺).
    pub delta_ti_extended: f64,
}

pub fn confounder_eval(predictor: &PredictorHandle, groups: &[ConfounderGroup]) -> Result<ConfounderReport, HarnessError> {
    for g in groups {
        g.validate()?;
    }
    let sets = build_confounder_eval_sets(groups, CAPTION_SEPARATOR)?;
    let text = evaluate(predictor, &sets.text)?;
    let image = evaluate(predictor, &sets.image)?;
    let text_extended = evaluate(predictor, &sets.text_extended)?;
    let image_extended = evaluate(predictor, &sets.image_extended)?;
    Ok(ConfounderReport {
        delta_ti: delta_f1(&text, &image),
        delta_ti_extended: delta_f1(&text_extended, &image_extended),
        text,
        image,
        text_extended,
        image_extended,
    })
}

/// Estimator choice for [`modality_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMode {
    /// Exact up to [`REPORT_EXACT_LIMIT`] entities, Monte Carlo beyond.
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleArtifacts {
    pub json: PathBuf,
    pub rendered: RenderedArtifacts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityRun {
    pub report: AttributionReport,
    /// Empty when no output directory was given.
    pub artifacts: Vec<SampleArtifacts>,
}

/// Attributes the first `sample_cap` memes and aggregates TS. With `out_dir`, writes `<id>_attribution.json`
/// plus the heatmap and token CSV per sample.
pub fn modality_report(
    dataset: &LabeledDataset,
    predictor: &PredictorHandle,
    mode: AttributionMode,
    mc: &McConfig,
    sample_cap: usize,
    explainer: &Explainer,
    out_dir: Option<&Path>,
) -> Result<ModalityRun, HarnessError> {
    if dataset.is_empty() {
        return Err(HarnessError::InvalidInput("empty dataset".into()));
    }
    let memes: Vec<&Meme> = dataset.samples.iter().take(sample_cap).collect();
    if memes.is_empty() {
        return Err(HarnessError::InvalidInput("sample cap is 0".into()));
    }
    let mut results = Vec::with_capacity(memes.len());
    let mut artifacts = Vec::new();
    for meme in &memes {
        let result = match mode {
            AttributionMode::Auto => explainer.auto(predictor, meme, mc, REPORT_EXACT_LIMIT)?,
            AttributionMode::Exact => explainer.exact(predictor, meme)?,
            AttributionMode::MonteCarlo => explainer.monte_carlo(predictor, meme, mc)?,
        };
        if let Some(dir) = out_dir {
            let rendered = render_attribution(&result, meme, dir, &RenderOptions::default())?;
            let json = dir.join(format!("{}_attribution.json", file_stem(&meme.id)));
            let body = serde_json::to_string_pretty(&SampleAttribution::new(&meme.id, &result)).expect("serializable");
            std::fs::write(&json, body + "\n")?;
            artifacts.push(SampleArtifacts { json, rendered });
        }
        results.push(result);
    }
    let samples = memes.iter().zip(&results).map(|(m, r)| SampleAttribution::new(&m.id, r)).collect();
    let report = AttributionReport { dataset: dataset.name.clone(), samples, aggregate: aggregate_modality(&results)? };
    Ok(ModalityRun { report, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{lexicon_predictor, patch_intensity_predictor};
    use crate::segment::MaskingPolicy;

    fn small_suite(seed: u64, samples: usize) -> Vec<LabeledDataset> {
        synthetic_suite(2, 0.0, seed)
            .into_iter()
            .map(|s| generate_domain(&DomainSpec { samples, ..s }).unwrap())
            .collect()
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let d = &small_suite(1, 100)[0];
        let (tr, te) = stratified_split(d, 0.8, 5);
        assert_eq!(tr.class_counts(), [40, 40]);
        assert_eq!(te.class_counts(), [10, 10]);
        assert_eq!(stratified_split(d, 0.8, 5), (tr, te));
    }

    #[test]
    fn matrix_shape_and_csv() {
        let data = small_suite(2, 60);
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let m = cross_domain_matrix(&data, &cfg, CaptionMode::Off).unwrap();
        assert_eq!(m.cells.len(), 2);
        assert!(m.cells.iter().all(|r| r.len() == 2));
        assert!(m.is_in_domain(1, 1) && !m.is_in_domain(0, 1));
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("train\\test,domain0,domain1\n"));
        assert!(matches!(cross_domain_matrix(&data[..1], &cfg, CaptionMode::Off), Err(HarnessError::InvalidInput(_))));
    }

    #[test]
    fn caption_baseline_cell_matches_plain_matrix() {
        let data = small_suite(3, 60);
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let plain = cross_domain_matrix(&data, &cfg, CaptionMode::Off).unwrap();
        let effect = caption_effect_experiment(&data, &cfg).unwrap();
        assert_eq!(effect.matrix(CaptionMode::Off).cells, plain.cells);
        assert!(effect.delta[0][0].iter().flatten().all(|&d| d == 0.0));
        assert_eq!(effect.significance.pairing, Pairing::PerSampleScores);
        let both = cross_domain_matrix(&data, &cfg, CaptionMode::Both).unwrap();
        assert_eq!(effect.matrix(CaptionMode::Both).cells, both.cells);
    }

    #[test]
    fn missing_captions_rejected() {
        let mut data = small_suite(4, 20);
        data[1].samples[3].caption = None;
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(caption_effect_experiment(&data, &cfg), Err(HarnessError::MissingCaptions(_))));
        assert!(cross_domain_matrix(&data, &cfg, CaptionMode::Off).is_ok());
    }

    #[test]
    fn confounder_asymmetry_for_single_modality_scorers() {
        let spec = confounder_domain(1);
        let groups = synthetic_confounders(&spec, 40, 0.2, 1).unwrap();
        let text = confounder_eval(&spec.hate_lexicon_predictor(3.0), &groups).unwrap();
        assert!(text.delta_ti > 0.0, "{text:?}");
        let image = confounder_eval(&patch_intensity_predictor(100.0), &groups).unwrap();
        assert!(-image.delta_ti >= 0.0, "{image:?}");
    }

    #[test]
    fn text_only_report_is_all_text() {
        let spec = DomainSpec { samples: 6, ..DomainSpec::default() };
        let d = generate_domain(&spec).unwrap();
        let f = lexicon_predictor(spec.hate_lexicon.keys().chain(spec.benign_lexicon.keys()).map(|w| (w.clone(), 1.0)));
        let dir = tempfile::tempdir().unwrap();
        let run = modality_report(&d, &f, AttributionMode::Auto, &McConfig::new(20, 1), 1, &Explainer::new(MaskingPolicy::default()), Some(dir.path())).unwrap();
        assert_eq!(run.report.samples.len(), 1);
        assert_eq!(run.artifacts.len(), 1);
        assert_eq!(run.report.aggregate.mean_ts, Some(1.0));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
    }
}
