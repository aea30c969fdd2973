//! Captions on or off at train and test time, with informative and with noise captions.
//!
//!     cargo run --release --example caption_effect

use mmprobe::harness::{caption_effect_experiment, generate_domain, synthetic_suite, CaptionMode, CaptionStyle};
use mmprobe::predictor::TrainConfig;

fn main() -> anyhow::Result<()> {
    for style in [CaptionStyle::Informative, CaptionStyle::Noise] {
        let datasets = synthetic_suite(2, 0.05, 5)
            .into_iter()
            .map(|mut spec| {
                spec.captions = style;
                generate_domain(&spec)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let report = caption_effect_experiment(&datasets, &TrainConfig::default())?;
        println!("{style:?} captions");
        for mode in [CaptionMode::Off, CaptionMode::Train, CaptionMode::Test, CaptionMode::Both] {
            let m = report.matrix(mode);
            println!("  {mode:?}: diagonal {:.4}, off-diagonal {:.4}", m.diagonal_mean(), m.off_diagonal_mean());
        }
        let t = &report.significance.test;
        println!("  off vs both, Mann–Whitney U = {} / {}, p = {:.4} ({:?})", t.u_a, t.u_b, t.p_value, t.method);
    }
    Ok(())
}
