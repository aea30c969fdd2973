//! Exact and Monte Carlo attributions for one meme, side by side.
//!
//!     cargo run --example exact_vs_mc

use mmprobe::data::{GrayImage, Label, Meme};
use mmprobe::predictor::{late_fusion_fixed, lexicon_predictor, patch_intensity_predictor};
use mmprobe::segment::MaskingPolicy;
use mmprobe::shapley::{Explainer, McConfig};

fn main() -> anyhow::Result<()> {
    let mut image = GrayImage::filled(16, 16, 200);
    for r in 0..8 {
        for c in 0..8 {
            image.set(r, c, 30);
        }
    }
    let meme = Meme {
        id: "demo".into(),
        text: "they are vermin honestly".into(),
        image,
        caption: None,
        celebrities: None,
        label: Label::Hateful,
    };
    let f = late_fusion_fixed(0.6, lexicon_predictor([("vermin", 3.0), ("honestly", -0.5)]), patch_intensity_predictor(100.0));

    let explainer = Explainer::new(MaskingPolicy::default());
    let exact = explainer.exact(&f, &meme)?;
    println!("v(∅) = {:.4}, v(N) = {:.4}, efficiency gap {:.1e}", exact.baseline, exact.full_value, exact.efficiency_gap());
    println!("{:>8}  {:>9}  {:>9}  {:>9}", "entity", "exact", "P=100", "P=1000");
    let mc100 = explainer.monte_carlo(&f, &meme, &McConfig::new(100, 1))?;
    let mc1000 = explainer.monte_carlo(&f, &meme, &McConfig::new(1000, 1))?;
    let tokens: Vec<&str> = meme.text.split_whitespace().collect();
    for (i, phi) in exact.phi.iter().enumerate() {
        let name = tokens.get(i).map(|t| t.to_string()).unwrap_or_else(|| format!("patch {}", i - tokens.len()));
        println!("{name:>8}  {phi:>9.4}  {:>9.4}  {:>9.4}", mc100.phi[i], mc1000.phi[i]);
    }
    Ok(())
}
