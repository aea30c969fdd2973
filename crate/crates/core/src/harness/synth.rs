//! Synthetic meme domains with controllable vocabulary, image motif and caption informativeness.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{ConfounderGroup, GrayImage, Label, LabeledDataset, Meme};
use crate::predictor::{lexicon_predictor, PredictorHandle};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pronounceable pseudo-word; distinct indices give distinct words.
pub fn pseudo_word(mut i: usize) -> String {
    let syllables = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    loop {
        let s = i % syllables;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        i /= syllables;
        if i == 0 && out.len() >= 4 {
            break;
        }
    }
    out
}

const HATE_CAPTIONS: &[&str] = &["a dark figure on a light background", "a shadowy shape in the frame"];
const BENIGN_CAPTIONS: &[&str] = &["a plain light background", "an empty bright scene"];
const CELEBRITIES: &[&str] = &["Ada Park", "Bo Lind", "Cy Moreau", "Dee Osei", "Eli Varga", "Fay Quist"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionStyle {
    /// Describes the image motif, so it reveals the class through the image.
    Informative,
    /// Template chosen independently of the class.
    Noise,
    None,
}

/// Grayscale image generator. Hateful images carry a dark figure in `hate_region`
/// (fractions `x0, y0, x1, y1`); benign images are background only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotifSpec {
    pub size: usize,
    pub background: f64,
    pub figure: f64,
    pub hate_region: [f64; 4],
    pub pixel_noise: f64,
}

impl Default for MotifSpec {
    fn default() -> Self {
        Self { size: 16, background: 200.0, figure: 50.0, hate_region: [0.0, 0.0, 0.5, 0.5], pixel_noise: 12.0 }
    }
}

impl MotifSpec {
    pub fn render(&self, hateful: bool, rng: &mut ChaCha8Rng) -> GrayImage {
        let n = self.size;
        let noise = Normal::new(0.0, self.pixel_noise.max(0.0)).expect("valid normal");
        let [x0, y0, x1, y1] = self.hate_region;
        let inside = |frac: f64, lo: f64, hi: f64| frac >= lo && frac < hi;
        let mut pixels = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (fy, fx) = ((r as f64 + 0.5) / n as f64, (c as f64 + 0.5) / n as f64);
                let base = if hateful && inside(fx, x0, x1) && inside(fy, y0, y1) { self.figure } else { self.background };
                let v = if self.pixel_noise > 0.0 { base + noise.sample(rng) } else { base };
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::new(n, n, pixels).expect("square image")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    pub name: String,
    /// Hateful vocabulary with sampling weights.
    pub hate_lexicon: BTreeMap<String, f64>,
    pub benign_lexicon: BTreeMap<String, f64>,
    /// Hate words placed in each hateful sample.
    pub hate_words: usize,
    /// Total words per sample; the remainder is benign filler.
    pub words_per_sample: usize,
    pub motif: MotifSpec,
    pub samples: usize,
    pub hate_fraction: f64,
    /// Exact fraction of labels flipped after generation.
    pub noise_rate: f64,
    pub captions: CaptionStyle,
    pub seed: u64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        suite_domain(0, 2, 0.0, 0)
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.hate_lexicon.is_empty() || self.benign_lexicon.is_empty() {
            return bad("both lexicons must be non-empty".into());
        }
        if let Some(w) = self.hate_lexicon.keys().find(|w| self.benign_lexicon.contains_key(*w)) {
            return bad(format!("word {w:?} is in both lexicons"));
        }
        if self.hate_lexicon.values().chain(self.benign_lexicon.values()).any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("lexicon weights must be positive".into());
        }
        if self.hate_words == 0 || self.hate_words > self.words_per_sample {
            return bad(format!("need 1 <= hate_words ({}) <= words_per_sample ({})", self.hate_words, self.words_per_sample));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return bad(format!("noise rate {} must lie in [0, 0.5)", self.noise_rate));
        }
        if !(self.hate_fraction > 0.0 && self.hate_fraction < 1.0) {
            return bad(format!("hate fraction {} must lie in (0, 1)", self.hate_fraction));
        }
        if self.samples < 2 {
            return bad("need at least 2 samples".into());
        }
        if self.motif.size == 0 {
            return bad("image size must be positive".into());
        }
        Ok(())
    }

    /// Lexicon scorer that reads this domain's hate vocabulary: each hate word adds `weight` to the logit.
    pub fn hate_lexicon_predictor(&self, weight: f64) -> PredictorHandle {
        lexicon_predictor(self.hate_lexicon.keys().map(|w| (w.clone(), weight)))
    }

    fn sample_words(&self, lexicon: &BTreeMap<String, f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let words: Vec<&String> = lexicon.keys().collect();
        let dist = WeightedIndex::new(lexicon.values().copied()).expect("positive weights");
        (0..k).map(|_| words[dist.sample(rng)].clone()).collect()
    }

    fn text(&self, hateful: bool, rng: &mut ChaCha8Rng) -> String {
        let mut words = if hateful {
            let mut w = self.sample_words(&self.hate_lexicon, self.hate_words, rng);
            w.extend(self.sample_words(&self.benign_lexicon, self.words_per_sample - self.hate_words, rng));
            w
        } else {
            self.sample_words(&self.benign_lexicon, self.words_per_sample, rng)
        };
        words.shuffle(rng);
        words.join(" ")
    }

    fn caption(&self, hateful_image: bool, rng: &mut ChaCha8Rng) -> Option<String> {
        let pool = match self.captions {
            CaptionStyle::None => return None,
            CaptionStyle::Informative if hateful_image => HATE_CAPTIONS,
            CaptionStyle::Informative => BENIGN_CAPTIONS,
            CaptionStyle::Noise => {
                if rng.random_bool(0.5) {
                    HATE_CAPTIONS
                } else {
                    BENIGN_CAPTIONS
                }
            }
        };
        pool.choose(rng).map(|s| s.to_string())
    }

    fn meme(&self, id: String, hateful: bool, rng: &mut ChaCha8Rng) -> Meme {
        let text = self.text(hateful, rng);
        let image = self.motif.render(hateful, rng);
        let caption = self.caption(hateful, rng);
        let label = if hateful { Label::Hateful } else { Label::NonHateful };
        Meme { id, text, image, caption, celebrities: None, label }
    }
}

/// Generates a labelled dataset. Deterministic in `spec.seed`.
pub fn generate_domain(spec: &DomainSpec) -> Result<LabeledDataset, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_hate = ((spec.samples as f64) * spec.hate_fraction).round() as usize;
    let mut classes: Vec<bool> = (0..spec.samples).map(|i| i < n_hate).collect();
    classes.shuffle(&mut rng);
    let mut samples: Vec<Meme> = classes
        .iter()
        .enumerate()
        .map(|(i, &h)| spec.meme(format!("{}-{i:05}", spec.name), h, &mut rng))
        .collect();
    let flips = ((spec.samples as f64) * spec.noise_rate).round() as usize;
    for i in index::sample(&mut rng, spec.samples, flips) {
        samples[i].label = samples[i].label.flipped();
    }
    Ok(LabeledDataset::new(spec.name.clone(), samples)?)
}

const WORDS_PER_DOMAIN: usize = 60;
const HATE_WORDS_PER_DOMAIN: usize = 10;
const REGIONS: [[f64; 4]; 4] = [[0.0, 0.0, 0.5, 0.5], [0.5, 0.5, 1.0, 1.0], [0.5, 0.0, 1.0, 0.5], [0.0, 0.5, 0.5, 1.0]];

fn mix_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ salt
}

/// Domain `d` of a suite: its own slice of the pseudo-word vocabulary and its own motif
/// position, so domains share neither hate terms nor image cues.
pub fn suite_domain(d: usize, hate_words: usize, noise_rate: f64, seed: u64) -> DomainSpec {
    let base = d * WORDS_PER_DOMAIN;
    let hate_lexicon = (base..base + HATE_WORDS_PER_DOMAIN).map(|i| (pseudo_word(i), 1.0)).collect();
    let benign_lexicon = (base + HATE_WORDS_PER_DOMAIN..base + WORDS_PER_DOMAIN).map(|i| (pseudo_word(i), 1.0)).collect();
    DomainSpec {
        name: format!("domain{d}"),
        hate_lexicon,
        benign_lexicon,
        hate_words,
        words_per_sample: hate_words + 3,
        motif: MotifSpec { hate_region: REGIONS[d % REGIONS.len()], ..MotifSpec::default() },
        samples: 400,
        hate_fraction: 0.5,
        noise_rate,
        captions: CaptionStyle::Informative,
        seed: mix_seed(seed, d as u64),
    }
}

/// `k` mutually disjoint domains.
pub fn synthetic_suite(k: usize, noise_rate: f64, seed: u64) -> Vec<DomainSpec> {
    (0..k).map(|d| suite_domain(d, 2, noise_rate, seed)).collect()
}

/// A domain whose hateful figure fills the whole frame, so an intensity scorer
/// separates the classes on the unmasked image.
pub fn confounder_domain(seed: u64) -> DomainSpec {
    let mut spec = suite_domain(0, 1, 0.0, seed);
    spec.name = "confounders".into();
    spec.motif.hate_region = [0.0, 0.0, 1.0, 1.0];
    spec
}

/// Builds confounder groups from a domain. `retain_rate` is the exact fraction of text
/// (and, independently, image) edits that leave the meme hateful.
pub fn synthetic_confounders(spec: &DomainSpec, groups: usize, retain_rate: f64, seed: u64) -> Result<Vec<ConfounderGroup>, HarnessError> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&retain_rate) {
        return Err(HarnessError::InvalidSpec(format!("retain rate {retain_rate} must lie in [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let retained = (groups as f64 * retain_rate).round() as usize;
    let text_kept: Vec<usize> = index::sample(&mut rng, groups, retained).into_vec();
    let image_kept: Vec<usize> = index::sample(&mut rng, groups, retained).into_vec();
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let gid = format!("g{g:04}");
        let mut original = spec.meme(format!("{gid}-orig"), true, &mut rng);
        let names: Vec<String> = CELEBRITIES.choose_multiple(&mut rng, 1 + g % 2).map(|s| s.to_string()).collect();
        original.celebrities = Some(names);

        let keep_text = text_kept.contains(&g);
        let mut text_confounder = original.clone();
        text_confounder.id = format!("{gid}-text");
        if keep_text {
            // swap the filler but keep the hate terms
            let hate: Vec<&str> = original.text.split(' ').filter(|w| spec.hate_lexicon.contains_key(*w)).collect();
            let mut words: Vec<String> = hate.iter().map(|s| s.to_string()).collect();
            words.extend(spec.sample_words(&spec.benign_lexicon, spec.words_per_sample - hate.len(), &mut rng));
            words.shuffle(&mut rng);
            text_confounder.text = words.join(" ");
            text_confounder.label = Label::Hateful;
        } else {
            text_confounder.text = spec.text(false, &mut rng);
            text_confounder.label = Label::NonHateful;
        }

        let keep_image = image_kept.contains(&g);
        let mut image_confounder = original.clone();
        image_confounder.id = format!("{gid}-image");
        image_confounder.image = spec.motif.render(keep_image, &mut rng);
        image_confounder.caption = spec.caption(keep_image, &mut rng);
        image_confounder.label = if keep_image { Label::Hateful } else { Label::NonHateful };

        let group = ConfounderGroup { group_id: gid, original, text_confounder, image_confounder };
        group.validate()?;
        out.push(group);
    }
    Ok(out)
}
