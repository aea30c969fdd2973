//! Text share (TS) of the attribution for text-only, image-only and fused toy predictors.
//!
//!     cargo run --release --example modality_scores

use mmprobe::harness::{generate_domain, modality_report, AttributionMode, DomainSpec};
use mmprobe::predictor::{late_fusion_fixed, lexicon_predictor, patch_intensity_predictor, PredictorHandle};
use mmprobe::segment::MaskingPolicy;
use mmprobe::shapley::{Explainer, McConfig};

fn main() -> anyhow::Result<()> {
    let spec = DomainSpec { samples: 24, words_per_sample: 4, hate_words: 1, ..DomainSpec::default() };
    let data = generate_domain(&spec)?;
    let text = spec.hate_lexicon_predictor(3.0);
    let image = patch_intensity_predictor(100.0);
    let mut runs: Vec<(String, PredictorHandle)> = vec![("text only".into(), text.clone()), ("image only".into(), image.clone())];
    for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
        runs.push((format!("fusion α={alpha}"), late_fusion_fixed(alpha, text.clone(), image.clone())));
    }
    // every word carries weight, so no meme is all-zero on the text side
    let dense = spec.hate_lexicon.keys().map(|w| (w.clone(), 2.0)).chain(spec.benign_lexicon.keys().map(|w| (w.clone(), 0.5)));
    runs.push(("dense lexicon".into(), lexicon_predictor(dense.collect::<Vec<_>>())));

    let explainer = Explainer::new(MaskingPolicy::default());
    println!("{:<14} {:>8} {:>10} {:>9}", "predictor", "TS", "signed TS", "excluded");
    for (name, f) in &runs {
        let agg = modality_report(&data, f, AttributionMode::Exact, &McConfig::new(1, 0), data.len(), &explainer, None)?.report.aggregate;
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{name:<14} {:>8} {:>10} {:>9}", show(agg.mean_ts), show(agg.mean_ts_signed), agg.excluded);
    }
    Ok(())
}
