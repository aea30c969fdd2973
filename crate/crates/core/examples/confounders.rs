//! Text-sensitive and image-sensitive predictors on confounder groups.
//!
//!     cargo run --example confounders

use mmprobe::harness::{confounder_domain, confounder_eval, synthetic_confounders};
use mmprobe::predictor::patch_intensity_predictor;

fn main() -> anyhow::Result<()> {
    let spec = confounder_domain(4);
    let groups = synthetic_confounders(&spec, 60, 0.2, 4)?;
    for (name, f) in [("hate lexicon", spec.hate_lexicon_predictor(3.0)), ("dark patches", patch_intensity_predictor(100.0))] {
        let r = confounder_eval(&f, &groups)?;
        println!("{name}");
        println!("  F1(T) {:.4}  F1(I) {:.4}  ΔF1(T,I) {:+.4}", r.text.macro_f1, r.image.macro_f1, r.delta_ti);
        println!("  F1(T⁺) {:.4}  F1(I⁺) {:.4}  ΔF1(T⁺,I⁺) {:+.4}", r.text_extended.macro_f1, r.image_extended.macro_f1, r.delta_ti_extended);
    }
    Ok(())
}
