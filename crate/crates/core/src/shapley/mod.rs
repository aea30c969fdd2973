//! Shapley attribution over text-token and image-patch entities.
//!
//! Two estimators share one evaluation path:
//!
//! * **exact**: enumerates all `2ⁿ` coalitions and applies the classical
//!   weighting `|S|!(n−|S|−1)!/n!`. Limited to [`MAX_EXACT_ENTITIES`] entities.
//! * **Monte Carlo**: for every entity `t`, draws `2P+1` coalitions that exclude `t`,
//!   the `i`-th of size `((i−1) mod (n−1)) + 1`, and averages the marginal
//!   contributions `f(S ∪ {t}) − f(S)` with normaliser `2P+1`.
//!
//! All coalitions are drawn from the seeded generator before any model call, then
//! evaluated (possibly in parallel) and reduced in draw order, so results do not
//! depend on the worker count.

pub mod games;
mod render;
mod report;

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Meme;
use crate::predictor::{PredictError, PredictorHandle};
use crate::segment::{EntityIndex, MaskVector, MaskingPolicy, SegmentError, SegmentedMeme};

pub(crate) use render::file_stem;
pub use render::{render_attribution, RenderOptions, RenderedArtifacts};
pub use report::{AttributionReport, SampleAttribution};

/// Largest entity count accepted by the exact estimator (`2ⁿ` model calls).
pub const MAX_EXACT_ENTITIES: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum ShapleyError {
    #[error("exact Shapley needs at most {MAX_EXACT_ENTITIES} entities, meme has {0}")]
    TooManyEntities(usize),
    #[error("Monte Carlo Shapley needs at least 2 entities, got {0}")]
    TooFewEntities(usize),
    #[error("sample count P must be at least 1")]
    InvalidSamples,
    #[error("every attribution is zero; modality score undefined")]
    AllZeroAttribution,
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A cooperative game over `players()` entities.
pub trait Game: Sync {
    fn players(&self) -> usize;
    fn value(&self, coalition: &MaskVector) -> Result<f64, ShapleyError>;
}

/// Adapts a plain function of the coalition into a [`Game`].
pub struct FnGame<F> {
    pub players: usize,
    pub f: F,
}

impl<F: Fn(&MaskVector) -> f64 + Sync> Game for FnGame<F> {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: &MaskVector) -> Result<f64, ShapleyError> {
        Ok((self.f)(coalition))
    }
}

/// The game induced by masking a meme and scoring it with a predictor.
pub struct MemeGame<'a> {
    segmented: SegmentedMeme<'a>,
    predictor: &'a PredictorHandle,
    policy: &'a MaskingPolicy,
}

impl<'a> MemeGame<'a> {
    pub fn new(meme: &'a Meme, predictor: &'a PredictorHandle, policy: &'a MaskingPolicy) -> Result<Self, ShapleyError> {
        Ok(Self { segmented: SegmentedMeme::new(meme)?, predictor, policy })
    }

    pub fn entity_index(&self) -> EntityIndex {
        self.segmented.entity_index()
    }

    pub fn tokens(&self) -> &[String] {
        &self.segmented.tokens.tokens
    }
}

impl Game for MemeGame<'_> {
    fn players(&self) -> usize {
        self.entity_index().total()
    }

    fn value(&self, coalition: &MaskVector) -> Result<f64, ShapleyError> {
        let view = self.segmented.materialize(coalition, self.policy)?;
        Ok(self.predictor.predict(&view)?)
    }
}

/// Evaluates coalitions, in parallel when `workers > 1`. Output order matches input.
pub fn evaluate_coalitions<G: Game + ?Sized>(game: &G, coalitions: &[MaskVector], workers: usize) -> Result<Vec<f64>, ShapleyError> {
    if workers <= 1 || coalitions.len() < 2 {
        return coalitions.iter().map(|c| game.value(c)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| coalitions.par_iter().map(|c| game.value(c)).collect())
}

/// Raw attribution of a game: one value per player plus the two endpoint values.
#[derive(Debug, Clone, PartialEq)]
pub struct GameAttribution {
    pub phi: Vec<f64>,
    /// `f(∅)`.
    pub baseline: f64,
    /// `f(all)`.
    pub full_value: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Classical Shapley values by full enumeration.
pub fn exact_game_values<G: Game + ?Sized>(game: &G, workers: usize) -> Result<GameAttribution, ShapleyError> {
    let n = game.players();
    if n > MAX_EXACT_ENTITIES {
        return Err(ShapleyError::TooManyEntities(n));
    }
    if n == 0 {
        return Err(ShapleyError::EmptyInput);
    }
    let coalitions: Vec<MaskVector> = (0..1u64 << n).map(|bits| MaskVector::from_bits(bits, n)).collect();
    let values = evaluate_coalitions(game, &coalitions, workers)?;
    let n_fact = factorial(n);
    let weight: Vec<f64> = (0..n).map(|s| factorial(s) * factorial(n - s - 1) / n_fact).collect();
    let mut phi = vec![0.0; n];
    for (t, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << t;
        let mut acc = 0.0;
        for s in 0..(1usize << n) {
            if s & bit == 0 {
                acc += weight[s.count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
        *slot = acc;
    }
    Ok(GameAttribution { phi, baseline: values[0], full_value: values[(1 << n) - 1] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    /// Marginal contributions drawn per entity are `2 * samples + 1`.
    pub samples: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed }
    }

    /// The normaliser, equal to the number of draws per entity.
    pub fn draws_per_entity(&self) -> usize {
        2 * self.samples + 1
    }
}

/// The coalitions the Monte Carlo estimator will query for entity `t`, in draw order.
/// Exposed so tests can audit the size schedule.
pub fn mc_draws(n: usize, cfg: &McConfig) -> Vec<(usize, MaskVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draws = Vec::with_capacity(n * cfg.draws_per_entity());
    for t in 0..n {
        let others: Vec<usize> = (0..n).filter(|&e| e != t).collect();
        for i in 1..=cfg.draws_per_entity() {
            let size = (i - 1) % (n - 1) + 1;
            let mut mask = MaskVector::none(n);
            for k in index::sample(&mut rng, n - 1, size) {
                mask.0[others[k]] = true;
            }
            draws.push((t, mask));
        }
    }
    draws
}

/// Sampled Shapley estimate with the stratified size schedule described in the module docs.
pub fn mc_game_values<G: Game + ?Sized>(game: &G, cfg: &McConfig, workers: usize) -> Result<GameAttribution, ShapleyError> {
    let n = game.players();
    if n < 2 {
        return Err(ShapleyError::TooFewEntities(n));
    }
    if cfg.samples == 0 {
        return Err(ShapleyError::InvalidSamples);
    }
    let draws = mc_draws(n, cfg);

    // dedupe coalitions, keeping first-seen order
    let mut slot: HashMap<MaskVector, usize> = HashMap::new();
    let mut unique: Vec<MaskVector> = Vec::new();
    let mut intern = |m: MaskVector| -> usize {
        if let Some(&i) = slot.get(&m) {
            return i;
        }
        slot.insert(m.clone(), unique.len());
        unique.push(m);
        unique.len() - 1
    };
    let empty = intern(MaskVector::none(n));
    let full = intern(MaskVector::all(n));
    let pairs: Vec<(usize, usize, usize)> = draws
        .into_iter()
        .map(|(t, without)| {
            let with = without.with(t, true);
            (t, intern(without), intern(with))
        })
        .collect();

    let values = evaluate_coalitions(game, &unique, workers)?;
    let mut sums = vec![0.0; n];
    for (t, without, with) in pairs {
        sums[t] += values[with] - values[without];
    }
    let gamma = cfg.draws_per_entity() as f64;
    Ok(GameAttribution {
        phi: sums.into_iter().map(|s| s / gamma).collect(),
        baseline: values[empty],
        full_value: values[full],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShapleyMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    pub entity_index: EntityIndex,
    pub mode: ShapleyMode,
    pub baseline: f64,
    pub full_value: f64,
}

impl ShapleyResult {
    pub fn text_phi(&self) -> &[f64] {
        &self.phi[self.entity_index.text_range()]
    }

    pub fn patch_phi(&self) -> &[f64] {
        &self.phi[self.entity_index.patch_range()]
    }

    /// `|Σφ − (f(all) − f(∅))|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.full_value - self.baseline)).abs()
    }
}

/// Masking policy and parallelism shared by the estimators.
#[derive(Debug, Clone, Default)]
pub struct Explainer {
    pub policy: MaskingPolicy,
    pub workers: usize,
}

impl Explainer {
    pub fn new(policy: MaskingPolicy) -> Self {
        Self { policy, workers: 1 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn exact(&self, predictor: &PredictorHandle, meme: &Meme) -> Result<ShapleyResult, ShapleyError> {
        let game = MemeGame::new(meme, predictor, &self.policy)?;
        let a = exact_game_values(&game, self.workers)?;
        Ok(ShapleyResult {
            phi: a.phi,
            entity_index: game.entity_index(),
            mode: ShapleyMode::Exact,
            baseline: a.baseline,
            full_value: a.full_value,
        })
    }

    pub fn monte_carlo(&self, predictor: &PredictorHandle, meme: &Meme, cfg: &McConfig) -> Result<ShapleyResult, ShapleyError> {
        let game = MemeGame::new(meme, predictor, &self.policy)?;
        let a = mc_game_values(&game, cfg, self.workers)?;
        Ok(ShapleyResult {
            phi: a.phi,
            entity_index: game.entity_index(),
            mode: ShapleyMode::MonteCarlo { samples: cfg.samples, seed: cfg.seed },
            baseline: a.baseline,
            full_value: a.full_value,
        })
    }

    /// Exact when the meme has at most `exact_limit` entities, Monte Carlo otherwise.
    pub fn auto(&self, predictor: &PredictorHandle, meme: &Meme, cfg: &McConfig, exact_limit: usize) -> Result<ShapleyResult, ShapleyError> {
        let n = SegmentedMeme::new(meme)?.entity_index().total();
        if n <= exact_limit.min(MAX_EXACT_ENTITIES) {
            self.exact(predictor, meme)
        } else {
            self.monte_carlo(predictor, meme, cfg)
        }
    }
}

pub fn exact_shapley(f: &PredictorHandle, meme: &Meme, policy: &MaskingPolicy) -> Result<ShapleyResult, ShapleyError> {
    Explainer::new(policy.clone()).exact(f, meme)
}

pub fn mc_shapley(f: &PredictorHandle, meme: &Meme, cfg: &McConfig, policy: &MaskingPolicy) -> Result<ShapleyResult, ShapleyError> {
    Explainer::new(policy.clone()).monte_carlo(f, meme, cfg)
}

/// Text and image shares of the total attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityScore {
    /// `Σ_text |φ| / Σ_all |φ|`; the reported TS.
    pub ts_magnitude: f64,
    /// `1 − ts_magnitude`.
    pub is_magnitude: f64,
    /// `Σ_text φ / Σ_all φ`; `None` when the signed total is zero.
    pub ts_signed: Option<f64>,
}

pub fn modality_score(result: &ShapleyResult) -> Result<ModalityScore, ShapleyError> {
    let text_abs: f64 = result.text_phi().iter().map(|v| v.abs()).sum();
    let patch_abs: f64 = result.patch_phi().iter().map(|v| v.abs()).sum();
    let total_abs = text_abs + patch_abs;
    if total_abs == 0.0 {
        return Err(ShapleyError::AllZeroAttribution);
    }
    let ts_magnitude = text_abs / total_abs;
    let text_sum: f64 = result.text_phi().iter().sum();
    let total: f64 = text_sum + result.patch_phi().iter().sum::<f64>();
    Ok(ModalityScore {
        ts_magnitude,
        is_magnitude: 1.0 - ts_magnitude,
        ts_signed: (total != 0.0).then(|| text_sum / total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityAggregate {
    /// Mean `ts_magnitude` over samples with a defined score.
    pub mean_ts: Option<f64>,
    pub mean_is: Option<f64>,
    /// Mean signed TS over samples where it is defined.
    pub mean_ts_signed: Option<f64>,
    pub included: usize,
    /// Samples whose attributions were all zero.
    pub excluded: usize,
}

pub fn aggregate_modality(results: &[ShapleyResult]) -> Result<ModalityAggregate, ShapleyError> {
    if results.is_empty() {
        return Err(ShapleyError::EmptyInput);
    }
    let scores: Vec<ModalityScore> = results.iter().filter_map(|r| modality_score(r).ok()).collect();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let ts: Vec<f64> = scores.iter().map(|s| s.ts_magnitude).collect();
    let signed: Vec<f64> = scores.iter().filter_map(|s| s.ts_signed).collect();
    let mean_ts = mean(&ts);
    Ok(ModalityAggregate {
        mean_ts,
        mean_is: mean_ts.map(|t| 1.0 - t),
        mean_ts_signed: mean(&signed),
        included: scores.len(),
        excluded: results.len() - scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(text: &[f64], patch: &[f64]) -> ShapleyResult {
        ShapleyResult {
            phi: text.iter().chain(patch).copied().collect(),
            entity_index: EntityIndex { num_text: text.len(), num_patch: patch.len() },
            mode: ShapleyMode::Exact,
            baseline: 0.0,
            full_value: text.iter().chain(patch).sum(),
        }
    }

    #[test]
    fn additive_game() {
        let w = [1.0, 2.0];
        let g = FnGame { players: 2, f: |m: &MaskVector| (0..2).filter(|&i| m.get(i)).map(|i| w[i]).sum() };
        assert_eq!(exact_game_values(&g, 1).unwrap().phi, vec![1.0, 2.0]);
    }

    #[test]
    fn and_game() {
        let g = FnGame { players: 2, f: |m: &MaskVector| if m.get(0) && m.get(1) { 1.0 } else { 0.0 } };
        assert_eq!(exact_game_values(&g, 1).unwrap().phi, vec![0.5, 0.5]);
    }

    #[test]
    fn constant_game() {
        let g = FnGame { players: 5, f: |_: &MaskVector| 0.7 };
        let a = exact_game_values(&g, 1).unwrap();
        assert!(a.phi.iter().all(|&v| v == 0.0));
        let m = mc_game_values(&g, &McConfig::new(5, 1), 1).unwrap();
        assert!(m.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_guard() {
        let g = FnGame { players: 15, f: |_: &MaskVector| 0.0 };
        assert!(matches!(exact_game_values(&g, 1), Err(ShapleyError::TooManyEntities(15))));
        let g = FnGame { players: 1, f: |_: &MaskVector| 0.0 };
        assert!(matches!(mc_game_values(&g, &McConfig::new(3, 0), 1), Err(ShapleyError::TooFewEntities(1))));
        let g = FnGame { players: 3, f: |_: &MaskVector| 0.0 };
        assert!(matches!(mc_game_values(&g, &McConfig::new(0, 0), 1), Err(ShapleyError::InvalidSamples)));
    }

    #[test]
    fn size_schedule_cycles_through_strata() {
        let n = 5;
        let cfg = McConfig::new(6, 11); // 13 draws per entity
        let draws = mc_draws(n, &cfg);
        assert_eq!(draws.len(), n * 13);
        for (k, (t, mask)) in draws.iter().enumerate() {
            let i = k % 13 + 1;
            assert_eq!(*t, k / 13);
            assert!(!mask.get(*t));
            assert_eq!(mask.count(), (i - 1) % (n - 1) + 1);
        }
    }

    #[test]
    fn mc_is_deterministic_and_worker_independent() {
        let g = FnGame {
            players: 7,
            f: |m: &MaskVector| {
                let s: f64 = (0..7).filter(|&i| m.get(i)).map(|i| (i as f64 + 1.0) * 0.3).sum();
                (s * s).sin()
            },
        };
        let cfg = McConfig::new(40, 5);
        let a = mc_game_values(&g, &cfg, 1).unwrap();
        let b = mc_game_values(&g, &cfg, 1).unwrap();
        let c = mc_game_values(&g, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d = mc_game_values(&g, &McConfig::new(40, 6), 1).unwrap();
        assert_ne!(a.phi, d.phi);
    }

    #[test]
    fn modality_score_cases() {
        let s = modality_score(&result(&[0.5, 0.33], &[-0.17])).unwrap();
        assert!((s.ts_magnitude - 0.83).abs() < 1e-12);
        assert_eq!(s.ts_magnitude + s.is_magnitude, 1.0);
        assert!((s.ts_signed.unwrap() - 0.83 / 0.66).abs() < 1e-12);

        let s = modality_score(&result(&[0.2, -0.1], &[0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.ts_magnitude, 1.0);
        assert_eq!(s.is_magnitude, 0.0);

        assert!(matches!(modality_score(&result(&[0.0], &[0.0])), Err(ShapleyError::AllZeroAttribution)));
        // signed total cancels
        assert_eq!(modality_score(&result(&[0.5], &[-0.5])).unwrap().ts_signed, None);
    }

    #[test]
    fn aggregate_cases() {
        let a = result(&[0.8], &[0.2]);
        let b = result(&[0.9], &[0.1]);
        let agg = aggregate_modality(&[a.clone(), b]).unwrap();
        assert!((agg.mean_ts.unwrap() - 0.85).abs() < 1e-12);
        let single = aggregate_modality(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.mean_ts, Some(modality_score(&a).unwrap().ts_magnitude));
        let zero = result(&[0.0], &[0.0]);
        let agg = aggregate_modality(&[a, zero.clone()]).unwrap();
        assert_eq!((agg.included, agg.excluded), (1, 1));
        let agg = aggregate_modality(&[zero]).unwrap();
        assert_eq!(agg.mean_ts, None);
        assert!(matches!(aggregate_modality(&[]), Err(ShapleyError::EmptyInput)));
    }

    #[test]
    fn ts_and_is_sum_to_one_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        use rand::Rng;
        for _ in 0..10_000 {
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-8..3))).collect();
            let s = modality_score(&result(&t, &p)).unwrap();
            assert_eq!(s.ts_magnitude + s.is_magnitude, 1.0);
            assert!((0.0..=1.0).contains(&s.ts_magnitude));
        }
    }
}
