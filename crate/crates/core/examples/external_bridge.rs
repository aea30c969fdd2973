//! Attribute a model that lives in another process, speaking the NDJSON bridge protocol.
//! Uses the Python fixture bridge in lexicon mode, so python3 must be on PATH.
//!
//!     cargo run --example external_bridge

use std::time::Duration;

use mmprobe::harness::{generate_domain, suite_domain};
use mmprobe::predictor::{external_predictor, lexicon_predictor, ExternalConfig};
use mmprobe::segment::MaskingPolicy;
use mmprobe::shapley::{Explainer, McConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let lexicon = [("gaba", 2.5), ("doba", 1.5)];
    let lex_path = dir.path().join("lex.json");
    std::fs::write(&lex_path, serde_json::to_string(&serde_json::Map::from_iter(lexicon.iter().map(|(w, v)| (w.to_string(), (*v).into()))))?)?;

    let bridge = format!("python3 {}/tests/fixtures/bridge.py lexicon {}", env!("CARGO_MANIFEST_DIR"), lex_path.display());
    let remote = external_predictor(ExternalConfig { command: bridge, timeout: Duration::from_secs(10), connections: 2 })?;
    let local = lexicon_predictor(lexicon);

    let data = generate_domain(&suite_domain(0, 2, 0.0, 1))?;
    let explainer = Explainer::new(MaskingPolicy::default()).with_workers(2);
    let cfg = McConfig::new(50, 3);
    for meme in data.samples.iter().take(3) {
        let r = explainer.monte_carlo(&remote, meme, &cfg)?;
        let l = explainer.monte_carlo(&local, meme, &cfg)?;
        let gap = r.phi.iter().zip(&l.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{} {:?}: bridged vs in-process max |Δφ| {gap:.2e}", meme.id, meme.text);
    }
    Ok(())
}
