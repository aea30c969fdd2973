//! Entity universe of a meme: text tokens followed by a uniform grid of image patches.
//!
//! A meme with `k` tokens gets a `s × s` patch grid with `s = ⌈√k⌉`, so the entity
//! count is `k + s²`. Entities `0..k` are tokens in text order, `k..k + s²` are
//! patches in row-major order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{GrayImage, Meme};

pub const DEFAULT_PLACEHOLDER: &str = "[MASK]";
pub const DEFAULT_FILL: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("a {side}x{side} patch grid does not fit a {width}x{height} image")]
    ImageTooSmall { side: usize, width: usize, height: usize },
    #[error("mask has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Lowercased tokens with the byte ranges they occupy in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub spans: Vec<Range<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '…' | '—' | '–' | '¡' | '¿')
}

/// Splits on whitespace, trims leading/trailing punctuation from each word and lowercases.
/// Words that are pure punctuation are dropped.
pub fn tokenize(text: &str) -> Result<TokenSequence, SegmentError> {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut start = None;
    let mut push_word = |ws: usize, we: usize| {
        let word = &text[ws..we];
        let trimmed_start = word.len() - word.trim_start_matches(is_punct).len();
        let core = word.trim_start_matches(is_punct).trim_end_matches(is_punct);
        if !core.is_empty() {
            let s = ws + trimmed_start;
            tokens.push(core.to_lowercase());
            spans.push(s..s + core.len());
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                push_word(s, i);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        push_word(s, text.len());
    }
    if tokens.is_empty() {
        return Err(SegmentError::EmptyText);
    }
    Ok(TokenSequence { tokens, spans })
}

/// Splits `len` into `parts` contiguous bands whose sizes differ by at most one,
/// larger bands first.
pub fn bands(len: usize, parts: usize) -> Vec<Range<usize>> {
    let base = len / parts;
    let rem = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let size = base + usize::from(i < rem);
        out.push(start..start + size);
        start += size;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Patch {
    pub fn area(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn mean_intensity(&self, image: &GrayImage) -> f64 {
        let mut sum = 0u64;
        for r in self.rows.clone() {
            for c in self.cols.clone() {
                sum += image.get(r, c) as u64;
            }
        }
        sum as f64 / self.area() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub side: usize,
    pub patches: Vec<Patch>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Side length of the patch grid for a given token count.
pub fn grid_side(num_tokens: usize) -> usize {
    let mut s = (num_tokens as f64).sqrt().ceil() as usize;
    // guard against float rounding on large perfect squares
    while s * s < num_tokens {
        s += 1;
    }
    while s > 1 && (s - 1) * (s - 1) >= num_tokens {
        s -= 1;
    }
    s.max(1)
}

pub fn patch_grid(image: &GrayImage, num_tokens: usize) -> Result<PatchGrid, SegmentError> {
    if num_tokens == 0 {
        return Err(SegmentError::EmptyText);
    }
    let side = grid_side(num_tokens);
    if side > image.width() || side > image.height() {
        return Err(SegmentError::ImageTooSmall { side, width: image.width(), height: image.height() });
    }
    let row_bands = bands(image.height(), side);
    let col_bands = bands(image.width(), side);
    let patches = row_bands
        .iter()
        .flat_map(|rows| col_bands.iter().map(move |cols| Patch { rows: rows.clone(), cols: cols.clone() }))
        .collect();
    Ok(PatchGrid { side, patches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndex {
    pub num_text: usize,
    pub num_patch: usize,
}

impl EntityIndex {
    pub fn for_tokens(num_text: usize) -> Self {
        let side = grid_side(num_text);
        Self { num_text, num_patch: side * side }
    }

    pub fn total(&self) -> usize {
        self.num_text + self.num_patch
    }

    pub fn is_text(&self, entity: usize) -> bool {
        entity < self.num_text
    }

    pub fn text_range(&self) -> Range<usize> {
        0..self.num_text
    }

    pub fn patch_range(&self) -> Range<usize> {
        self.num_text..self.total()
    }
}

pub fn entity_universe(meme: &Meme) -> Result<EntityIndex, SegmentError> {
    Ok(SegmentedMeme::new(meme)?.entity_index())
}

/// Presence bits, one per entity (`true` = kept).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MaskVector(pub Vec<bool>);

impl MaskVector {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// Coalition encoded by the low `n` bits of `bits`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Self((0..n).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn with(&self, entity: usize, present: bool) -> Self {
        let mut out = self.clone();
        out.0[entity] = present;
        out
    }

    pub fn get(&self, entity: usize) -> bool {
        self.0[entity]
    }
}

/// How masked entities are neutralized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PatchFill {
    Zero,
    /// Fixed mid-gray, 128.
    Gray,
    /// Mean intensity of the dataset the meme came from.
    Mean(u8),
    Fixed(u8),
}

impl PatchFill {
    pub fn value(self) -> u8 {
        match self {
            PatchFill::Zero => 0,
            PatchFill::Gray => DEFAULT_FILL,
            PatchFill::Mean(v) | PatchFill::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub fill: PatchFill,
    pub placeholder: String,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self { fill: PatchFill::Gray, placeholder: DEFAULT_PLACEHOLDER.to_string() }
    }
}

impl MaskingPolicy {
    pub fn with_fill(fill: PatchFill) -> Self {
        Self { fill, ..Self::default() }
    }
}

/// A meme with some entities hidden.
///
/// `text` and `image` are what an external model sees. The structured token and
/// patch presence views are carried along for the built-in predictors so they never
/// need to re-parse placeholders out of the text.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMeme {
    pub text: String,
    pub image: GrayImage,
    /// Token strings in order; `None` where the token is masked.
    pub tokens: Vec<Option<String>>,
    pub grid: PatchGrid,
    pub patch_present: Vec<bool>,
}

impl MaskedMeme {
    /// The full, unmasked view of a meme.
    pub fn unmasked(meme: &Meme) -> Result<Self, SegmentError> {
        let seg = SegmentedMeme::new(meme)?;
        Ok(seg.materialize(&MaskVector::all(seg.entity_index().total()), &MaskingPolicy::default())
            .expect("full mask has the right length"))
    }

    pub fn present_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter_map(|t| t.as_deref())
    }
}

/// A meme together with its tokenization and patch grid, ready for repeated masking.
#[derive(Debug, Clone)]
pub struct SegmentedMeme<'a> {
    pub meme: &'a Meme,
    pub tokens: TokenSequence,
    pub grid: PatchGrid,
}

impl<'a> SegmentedMeme<'a> {
    pub fn new(meme: &'a Meme) -> Result<Self, SegmentError> {
        let tokens = tokenize(&meme.text)?;
        let grid = patch_grid(&meme.image, tokens.len())?;
        Ok(Self { meme, tokens, grid })
    }

    pub fn entity_index(&self) -> EntityIndex {
        EntityIndex { num_text: self.tokens.len(), num_patch: self.grid.len() }
    }

    pub fn materialize(&self, mask: &MaskVector, policy: &MaskingPolicy) -> Result<MaskedMeme, SegmentError> {
        let idx = self.entity_index();
        if mask.len() != idx.total() {
            return Err(SegmentError::LengthMismatch { expected: idx.total(), got: mask.len() });
        }
        let src = &self.meme.text;
        let mut text = String::with_capacity(src.len());
        let mut tokens = Vec::with_capacity(idx.num_text);
        let mut cursor = 0;
        for (t, span) in self.tokens.spans.iter().enumerate() {
            text.push_str(&src[cursor..span.start]);
            if mask.get(t) {
                text.push_str(&src[span.clone()]);
                tokens.push(Some(self.tokens.tokens[t].clone()));
            } else {
                text.push_str(&policy.placeholder);
                tokens.push(None);
            }
            cursor = span.end;
        }
        text.push_str(&src[cursor..]);

        let mut image = self.meme.image.clone();
        let fill = policy.fill.value();
        let mut patch_present = Vec::with_capacity(idx.num_patch);
        for (p, patch) in self.grid.patches.iter().enumerate() {
            let present = mask.get(idx.num_text + p);
            patch_present.push(present);
            if !present {
                for r in patch.rows.clone() {
                    for c in patch.cols.clone() {
                        image.set(r, c, fill);
                    }
                }
            }
        }
        Ok(MaskedMeme { text, image, tokens, grid: self.grid.clone(), patch_present })
    }
}

pub fn materialize(meme: &Meme, mask: &MaskVector, policy: &MaskingPolicy) -> Result<MaskedMeme, SegmentError> {
    SegmentedMeme::new(meme)?.materialize(mask, policy)
}
