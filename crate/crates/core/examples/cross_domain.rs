//! Train on each synthetic domain, test on every domain.
//!
//!     cargo run --release --example cross_domain

use mmprobe::harness::{cross_domain_matrix, generate_domain, synthetic_suite, CaptionMode};
use mmprobe::predictor::TrainConfig;

fn main() -> anyhow::Result<()> {
    let datasets = synthetic_suite(3, 0.05, 11).iter().map(generate_domain).collect::<Result<Vec<_>, _>>()?;
    let m = cross_domain_matrix(&datasets, &TrainConfig::default(), CaptionMode::Off)?;
    print!("{}", m.to_csv());
    println!("in-domain mean {:.4}, cross-domain mean {:.4}", m.diagonal_mean(), m.off_diagonal_mean());
    Ok(())
}
