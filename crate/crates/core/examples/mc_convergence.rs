//! Monte Carlo error against the exact oracle as P grows, averaged over 20 seeds.
//!
//!     cargo run --release --example mc_convergence

use mmprobe::shapley::games::{reference_game, sigmoid_game, REFERENCE_WEIGHTS};
use mmprobe::shapley::{exact_game_values, mc_game_values, Game, McConfig};

fn max_abs_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sweep(name: &str, game: &dyn Game) {
    let exact = exact_game_values(game, 1).expect("exact").phi;
    println!("{name}");
    println!("  {:>5}  {:>10}  {:>10}", "P", "mean err", "worst err");
    for p in [10, 100, 500, 1000] {
        let errs: Vec<f64> = (0..20)
            .map(|seed| max_abs_err(&mc_game_values(game, &McConfig::new(p, seed), 4).expect("mc").phi, &exact))
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let worst = errs.iter().copied().fold(0.0, f64::max);
        println!("  {p:>5}  {mean:>10.5}  {worst:>10.5}");
    }
    let seed7 = max_abs_err(&mc_game_values(game, &McConfig::new(500, 7), 1).expect("mc").phi, &exact);
    println!("  P=500 seed=7: {seed7:.5}");
}

fn main() {
    sweep("ring interaction game (unbiased for the stratified estimator)", &reference_game());
    sweep("sigmoid game (stratified estimator is biased here)", &sigmoid_game(REFERENCE_WEIGHTS.to_vec(), 2.0));
}
