//! Write a patch heatmap (PPM) and a token attribution CSV for one synthetic meme.
//!
//!     cargo run --example render_heatmap -- [OUT_DIR]

use std::path::PathBuf;

use mmprobe::harness::{generate_domain, suite_domain};
use mmprobe::predictor::{late_fusion_fixed, patch_intensity_predictor};
use mmprobe::segment::MaskingPolicy;
use mmprobe::shapley::{render_attribution, Explainer, RenderOptions};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mmprobe_heatmap"));
    let spec = suite_domain(0, 1, 0.0, 2);
    let data = generate_domain(&spec)?;
    let meme = data.samples.iter().find(|m| m.label.as_u8() == 1).expect("a hateful sample");
    let f = late_fusion_fixed(0.5, spec.hate_lexicon_predictor(3.0), patch_intensity_predictor(100.0));
    let result = Explainer::new(MaskingPolicy::default()).exact(&f, meme)?;
    let files = render_attribution(&result, meme, &out, &RenderOptions::default())?;
    println!("{}\n{}", files.heatmap.display(), files.tokens_csv.display());
    print!("{}", std::fs::read_to_string(&files.tokens_csv)?);
    Ok(())
}
