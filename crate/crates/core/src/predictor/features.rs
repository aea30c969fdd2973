//! Late-fusion feature extraction: hashed bag-of-words ‖ 4×4 patch intensities.

use serde::{Deserialize, Serialize};

use crate::segment::{bands, MaskedMeme};

pub const DEFAULT_HASH_DIM: usize = 1024;
/// Side of the coarse image grid used for image features.
pub const IMAGE_GRID: usize = 4;
pub const IMAGE_DIM: usize = IMAGE_GRID * IMAGE_GRID;

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a(s: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    s.bytes().fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn bucket(token: &str, hash_dim: usize) -> usize {
    (fnv1a(token) % hash_dim as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub text: Vec<f64>,
    pub image: [f64; IMAGE_DIM],
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.text.len() + IMAGE_DIM
    }

    /// Text features followed by image features.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.text);
        v.extend_from_slice(&self.image);
        v
    }
}

/// Masked tokens contribute nothing; masked patches are read as whatever fill the
/// masking policy painted into the image.
pub fn extract_features(input: &MaskedMeme, hash_dim: usize) -> FeatureVector {
    assert!(hash_dim > 0, "hash dimension must be positive");
    let mut text = vec![0.0; hash_dim];
    for tok in input.present_tokens() {
        text[bucket(tok, hash_dim)] += 1.0;
    }
    let img = &input.image;
    let mut image = [0.0; IMAGE_DIM];
    let rows = bands(img.height(), IMAGE_GRID);
    let cols = bands(img.width(), IMAGE_GRID);
    for (ri, r) in rows.iter().enumerate() {
        for (ci, c) in cols.iter().enumerate() {
            let area = r.len() * c.len();
            if area == 0 {
                continue;
            }
            let mut sum = 0u64;
            for y in r.clone() {
                for x in c.clone() {
                    sum += img.get(y, x) as u64;
                }
            }
            image[ri * IMAGE_GRID + ci] = sum as f64 / area as f64 / 255.0;
        }
    }
    FeatureVector { text, image }
}
