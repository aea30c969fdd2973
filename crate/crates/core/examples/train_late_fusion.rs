//! Train the logistic late-fusion model on a synthetic domain and inspect the loss curve.
//!
//!     cargo run --release --example train_late_fusion

use mmprobe::harness::{evaluate, generate_domain, stratified_split, suite_domain, TRAIN_FRACTION};
use mmprobe::predictor::train::train_with_history;
use mmprobe::predictor::{trained_predictor, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = generate_domain(&suite_domain(0, 2, 0.05, 3))?;
    let (train, test) = stratified_split(&data, TRAIN_FRACTION, 3);
    let cfg = TrainConfig::default();
    let outcome = train_with_history(&train, &cfg)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate().step_by(25) {
        println!("epoch {epoch:>3}  loss {loss:.5}");
    }
    println!("final      loss {:.5}", outcome.loss_history.last().unwrap());
    let f = trained_predictor(outcome.params);
    println!("train macro-F1 {:.4}", evaluate(&f, &train)?.macro_f1);
    let held = evaluate(&f, &test)?;
    println!("test  macro-F1 {:.4}  confusion {:?}", held.macro_f1, held.confusion);
    Ok(())
}
