use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ShapleyError, ShapleyResult};
use crate::data::{GrayImage, Meme};
use crate::segment::SegmentedMeme;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Opacity of the tint over the grayscale image; 1.0 paints the ramp colour only.
    pub alpha: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { alpha: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedArtifacts {
    pub heatmap: PathBuf,
    pub tokens_csv: PathBuf,
}

/// Red (lowest φ) to green (highest φ). A flat φ field maps to the midpoint.
pub fn ramp_color(phi: f64, min: f64, max: f64) -> [u8; 3] {
    let t = if max > min { ((phi - min) / (max - min)).clamp(0.0, 1.0) } else { 0.5 };
    [(255.0 * (1.0 - t)).round() as u8, (255.0 * t).round() as u8, 0]
}

pub(crate) fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Builds the RGB overlay without touching the filesystem.
pub fn heat_overlay(result: &ShapleyResult, image: &GrayImage, seg: &SegmentedMeme<'_>, opts: &RenderOptions) -> Vec<u8> {
    let patch_phi = result.patch_phi();
    let (min, max) = patch_phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut rgb = vec![0u8; image.width() * image.height() * 3];
    for (patch, &phi) in seg.grid.patches.iter().zip(patch_phi) {
        let color = ramp_color(phi, min, max);
        for r in patch.rows.clone() {
            for c in patch.cols.clone() {
                let gray = image.get(r, c) as f64;
                let px = (r * image.width() + c) * 3;
                for ch in 0..3 {
                    rgb[px + ch] = ((1.0 - opts.alpha) * gray + opts.alpha * color[ch] as f64).round() as u8;
                }
            }
        }
    }
    rgb
}

/// Writes `<id>_heat.ppm` (binary P6) and `<id>_tokens.csv` (`token,phi,rank`, rank 1 =
/// largest φ) into `out_dir`.
pub fn render_attribution(result: &ShapleyResult, meme: &Meme, out_dir: &Path, opts: &RenderOptions) -> Result<RenderedArtifacts, ShapleyError> {
    let seg = SegmentedMeme::new(meme)?;
    assert_eq!(seg.entity_index(), result.entity_index, "attribution does not belong to this meme");
    std::fs::create_dir_all(out_dir)?;
    let stem = file_stem(&meme.id);

    let heatmap = out_dir.join(format!("{stem}_heat.ppm"));
    let mut f = std::fs::File::create(&heatmap)?;
    write!(f, "P6\n{} {}\n255\n", meme.image.width(), meme.image.height())?;
    f.write_all(&heat_overlay(result, &meme.image, &seg, opts))?;

    let tokens_csv = out_dir.join(format!("{stem}_tokens.csv"));
    let text_phi = result.text_phi();
    let mut order: Vec<usize> = (0..text_phi.len()).collect();
    order.sort_by(|&a, &b| text_phi[b].total_cmp(&text_phi[a]));
    let mut rank = vec![0; text_phi.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let mut w = csv::Writer::from_path(&tokens_csv).map_err(|e| std::io::Error::other(e.to_string()))?;
    let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(["token", "phi", "rank"]).map_err(csv_err)?;
    for (i, tok) in seg.tokens.tokens.iter().enumerate() {
        w.write_record([tok.as_str(), &text_phi[i].to_string(), &rank[i].to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(RenderedArtifacts { heatmap, tokens_csv })
}
