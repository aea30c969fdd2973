//! Samples, datasets and confounder groups, plus their on-disk formats.
//!
//! Datasets are newline-delimited JSON, one meme per line:
//!
//! ```text
//! {"id": "m1", "text": "...", "label": 0, "image": {"width": 2, "height": 1, "pixels": [0, 255]}}
//! {"id": "m2", "text": "...", "label": 1, "image": {"pgm": "img/m2.pgm"}, "caption": "...", "celebrities": ["..."]}
//! ```
//!
//! PGM paths are resolved relative to the directory holding the dataset file.
//! Confounder files use the same record shape plus `group_id` and `role`.

pub mod pgm;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("dataset file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("pixel value out of range [0, 255] at line {line}")]
    PixelOutOfRange { line: usize },
    #[error("confounder group {0:?} is missing one of original/text_confounder/image_confounder")]
    IncompleteGroup(String),
    #[error("confounder group {group:?} violates the {which} invariant")]
    RoleInvariantViolated { group: String, which: String },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary hatefulness label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonHateful = 0,
    Hateful = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::NonHateful),
            1 => Some(Label::Hateful),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::NonHateful => Label::Hateful,
            Label::Hateful => Label::NonHateful,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawImage", into = "RawImage")]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(DataError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

#[derive(Serialize, Deserialize)]
struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl TryFrom<RawImage> for GrayImage {
    type Error = DataError;
    fn try_from(r: RawImage) -> Result<Self, DataError> {
        GrayImage::new(r.width, r.height, r.pixels)
    }
}

impl From<GrayImage> for RawImage {
    fn from(g: GrayImage) -> Self {
        RawImage { width: g.width, height: g.height, pixels: g.pixels }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Meme {
    pub id: String,
    pub text: String,
    pub image: GrayImage,
    pub caption: Option<String>,
    pub celebrities: Option<Vec<String>>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub samples: Vec<Meme>,
}

impl LabeledDataset {
    /// Builds a dataset, rejecting duplicate ids and blank texts.
    pub fn new(name: impl Into<String>, samples: Vec<Meme>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for (i, m) in samples.iter().enumerate() {
            if m.id.is_empty() {
                return Err(DataError::MalformedRecord { line: i + 1, reason: "empty id".into() });
            }
            if m.text.trim().is_empty() {
                return Err(DataError::MalformedRecord { line: i + 1, reason: "blank text".into() });
            }
            if !seen.insert(m.id.as_str()) {
                return Err(DataError::DuplicateId(m.id.clone()));
            }
        }
        Ok(Self { name: name.into(), samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample counts as `[non-hateful, hateful]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for m in &self.samples {
            counts[m.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|m| m.label).collect()
    }

    /// Mean pixel intensity over every image, rounded to the nearest level.
    pub fn mean_intensity(&self) -> u8 {
        let (sum, count) = self.samples.iter().fold((0u64, 0u64), |(s, c), m| {
            (s + m.image.pixels().iter().map(|&p| p as u64).sum::<u64>(), c + m.image.pixels().len() as u64)
        });
        if count == 0 {
            return 128;
        }
        ((sum as f64 / count as f64).round()) as u8
    }

    /// Applies [`augment_with_caption`] to every sample.
    pub fn with_captions(&self, separator: &str) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            samples: self.samples.iter().map(|m| augment_with_caption(m, separator)).collect(),
        }
    }
}

/// An original hateful meme with its benign-leaning text and image edits.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderGroup {
    pub group_id: String,
    pub original: Meme,
    pub text_confounder: Meme,
    pub image_confounder: Meme,
}

impl ConfounderGroup {
    pub fn validate(&self) -> Result<(), DataError> {
        let violated = |which: &str| DataError::RoleInvariantViolated {
            group: self.group_id.clone(),
            which: which.to_string(),
        };
        if self.original.label != Label::Hateful {
            return Err(violated("original label"));
        }
        if self.text_confounder.image != self.original.image {
            return Err(violated("text_confounder image"));
        }
        if self.image_confounder.text != self.original.text {
            return Err(violated("image_confounder text"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Original,
    TextConfounder,
    ImageConfounder,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ImageRecord {
    Pgm { pgm: String },
    Inline { width: usize, height: usize, pixels: Vec<i64> },
}

#[derive(Serialize, Deserialize)]
struct MemeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<Role>,
    id: String,
    text: String,
    label: Label,
    image: ImageRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    celebrities: Option<Vec<String>>,
}

impl MemeRecord {
    fn from_meme(meme: &Meme) -> Self {
        MemeRecord {
            group_id: None,
            role: None,
            id: meme.id.clone(),
            text: meme.text.clone(),
            label: meme.label,
            image: ImageRecord::Inline {
                width: meme.image.width(),
                height: meme.image.height(),
                pixels: meme.image.pixels().iter().map(|&p| p as i64).collect(),
            },
            caption: meme.caption.clone(),
            celebrities: meme.celebrities.clone(),
        }
    }

    fn into_meme(self, line: usize, base: &Path) -> Result<(Meme, Option<String>, Option<Role>), DataError> {
        let malformed = |reason: String| DataError::MalformedRecord { line, reason };
        let image = match self.image {
            ImageRecord::Inline { width, height, pixels } => {
                if pixels.iter().any(|&p| !(0..=255).contains(&p)) {
                    return Err(DataError::PixelOutOfRange { line });
                }
                GrayImage::new(width, height, pixels.into_iter().map(|p| p as u8).collect())
                    .map_err(|e| malformed(e.to_string()))?
            }
            ImageRecord::Pgm { pgm } => {
                let path = base.join(&pgm);
                let bytes = std::fs::read(&path).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
                pgm::decode(&bytes).map_err(|e| malformed(format!("{}: {e}", path.display())))?
            }
        };
        if self.id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(malformed("blank text".into()));
        }
        let meme = Meme {
            id: self.id,
            text: self.text,
            image,
            caption: self.caption,
            celebrities: self.celebrities,
            label: self.label,
        };
        Ok((meme, self.group_id, self.role))
    }
}

fn read_records(path: &Path) -> Result<Vec<(usize, MemeRecord)>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MemeRecord = serde_json::from_str(line)
            .map_err(|e| DataError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a newline-delimited JSON dataset. The dataset is named after the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, DataError> {
    let path = path.as_ref();
    let base = base_dir(path);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in read_records(path)? {
        let (meme, _, _) = record.into_meme(line, &base)?;
        if !seen.insert(meme.id.clone()) {
            return Err(DataError::DuplicateId(meme.id));
        }
        samples.push(meme);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LabeledDataset { name, samples })
}

/// Writes a dataset with inline pixel arrays.
pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::new();
    for m in &dataset.samples {
        out.push_str(&serde_json::to_string(&MemeRecord::from_meme(m)).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a confounder file. Groups are returned in order of first appearance.
pub fn load_confounders(path: impl AsRef<Path>) -> Result<Vec<ConfounderGroup>, DataError> {
    let path = path.as_ref();
    let base = base_dir(path);
    let mut order: Vec<String> = Vec::new();
    let mut parts: BTreeMap<String, [Option<Meme>; 3]> = BTreeMap::new();
    for (line, record) in read_records(path)? {
        let (meme, group_id, role) = record.into_meme(line, &base)?;
        let group_id = group_id.ok_or_else(|| DataError::MalformedRecord { line, reason: "missing group_id".into() })?;
        let role = role.ok_or_else(|| DataError::MalformedRecord { line, reason: "missing role".into() })?;
        let slot = parts.entry(group_id.clone()).or_insert_with(|| {
            order.push(group_id.clone());
            [None, None, None]
        });
        let idx = role as usize;
        if slot[idx].is_some() {
            return Err(DataError::MalformedRecord { line, reason: format!("duplicate role {role:?} in group {group_id:?}") });
        }
        slot[idx] = Some(meme);
    }
    let mut groups = Vec::with_capacity(order.len());
    for gid in order {
        let [original, text_confounder, image_confounder] = parts.remove(&gid).expect("group recorded");
        let (Some(original), Some(text_confounder), Some(image_confounder)) = (original, text_confounder, image_confounder)
        else {
            return Err(DataError::IncompleteGroup(gid));
        };
        let group = ConfounderGroup { group_id: gid, original, text_confounder, image_confounder };
        group.validate()?;
        groups.push(group);
    }
    Ok(groups)
}

pub fn save_confounders(groups: &[ConfounderGroup], path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::new();
    for g in groups {
        for (role, meme) in [
            (Role::Original, &g.original),
            (Role::TextConfounder, &g.text_confounder),
            (Role::ImageConfounder, &g.image_confounder),
        ] {
            let mut record = MemeRecord::from_meme(meme);
            record.group_id = Some(g.group_id.clone());
            record.role = Some(role);
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Appends the caption to the meme text. A missing or blank caption leaves the text untouched.
pub fn augment_with_caption(meme: &Meme, separator: &str) -> Meme {
    let mut out = meme.clone();
    if let Some(caption) = meme.caption.as_deref().filter(|c| !c.trim().is_empty()) {
        out.text = format!("{}{}{}", meme.text, separator, caption);
    }
    out
}

/// The four confounder evaluation sets, index-aligned by group.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderSets {
    pub text: LabeledDataset,
    pub image: LabeledDataset,
    pub text_extended: LabeledDataset,
    pub image_extended: LabeledDataset,
}

fn extend_text(meme: &Meme, fallback: &Meme, separator: &str) -> Meme {
    let caption = meme.caption.as_ref().or(fallback.caption.as_ref());
    let celebrities = meme.celebrities.as_ref().or(fallback.celebrities.as_ref());
    let mut parts = vec![meme.text.clone()];
    if let Some(c) = caption.filter(|c| !c.trim().is_empty()) {
        parts.push(c.clone());
    }
    if let Some(names) = celebrities {
        parts.extend(names.iter().filter(|n| !n.trim().is_empty()).cloned());
    }
    let mut out = meme.clone();
    out.text = parts.join(separator);
    out
}

/// Builds T, I, T⁺ and I⁺. Extended variants append the caption and then the celebrity
/// names; a confounder without its own metadata borrows the original's.
pub fn build_confounder_eval_sets(groups: &[ConfounderGroup], separator: &str) -> Result<ConfounderSets, DataError> {
    if groups.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let collect = |name: &str, f: &dyn Fn(&ConfounderGroup) -> Meme| LabeledDataset {
        name: name.to_string(),
        samples: groups.iter().map(f).collect(),
    };
    Ok(ConfounderSets {
        text: collect("T", &|g| g.text_confounder.clone()),
        image: collect("I", &|g| g.image_confounder.clone()),
        text_extended: collect("T+", &|g| extend_text(&g.text_confounder, &g.original, separator)),
        image_extended: collect("I+", &|g| extend_text(&g.image_confounder, &g.original, separator)),
    })
}
