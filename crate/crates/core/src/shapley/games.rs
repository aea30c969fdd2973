//! Small closed-form games for checking the estimators.

use super::FnGame;
use crate::predictor::sigmoid;
use crate::segment::MaskVector;

/// Weights of the 8-player reference game.
pub const REFERENCE_WEIGHTS: [f64; 8] = [0.9, -0.6, 0.4, 0.25, -0.3, 0.7, 0.1, -0.45];
pub const REFERENCE_COUPLING: f64 = 0.2;

/// `Σ wᵢxᵢ + a·Σ_{ring neighbours} xᵢxⱼ − a·Σ_{distance-2 pairs} xᵢxⱼ` on a ring.
///
/// Every player has two `+a` and two `−a` partners, so its expected marginal contribution
/// is the same for every coalition size while individual contributions still vary. That
/// makes the stratified Monte Carlo estimator unbiased for this game, and its error
/// purely sampling noise.
pub fn ring_interaction_value(weights: &[f64], coupling: f64, s: &MaskVector) -> f64 {
    let n = weights.len();
    let mut v = 0.0;
    for i in 0..n {
        if !s.get(i) {
            continue;
        }
        v += weights[i];
        for (step, sign) in [(1, 1.0), (2, -1.0)] {
            // count each unordered pair once
            let j = (i + step) % n;
            if s.get(j) {
                v += sign * coupling;
            }
        }
    }
    v
}

pub fn ring_interaction_game(weights: Vec<f64>, coupling: f64) -> FnGame<impl Fn(&MaskVector) -> f64 + Sync> {
    FnGame { players: weights.len(), f: move |s: &MaskVector| ring_interaction_value(&weights, coupling, s) }
}

pub fn reference_game() -> FnGame<impl Fn(&MaskVector) -> f64 + Sync> {
    ring_interaction_game(REFERENCE_WEIGHTS.to_vec(), REFERENCE_COUPLING)
}

/// `sigmoid(scale · Σ wᵢxᵢ)`: a generic saturating score, for which the stratified
/// estimator carries a small bias because it never samples the empty coalition.
pub fn sigmoid_game(weights: Vec<f64>, scale: f64) -> FnGame<impl Fn(&MaskVector) -> f64 + Sync> {
    FnGame {
        players: weights.len(),
        f: move |s: &MaskVector| sigmoid(scale * weights.iter().enumerate().filter(|(i, _)| s.get(*i)).map(|(_, w)| w).sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::{exact_game_values, Game};

    #[test]
    fn ring_game_marginals_have_size_independent_means() {
        let g = reference_game();
        let n = 8;
        for t in 0..n {
            let mut per_size = vec![(0.0, 0usize); n];
            for bits in 0u32..(1 << n) {
                if bits & (1 << t) != 0 {
                    continue;
                }
                let s = MaskVector::from_bits(bits as u64, n);
                let d = g.value(&s.with(t, true)).unwrap() - g.value(&s).unwrap();
                let k = bits.count_ones() as usize;
                per_size[k].0 += d;
                per_size[k].1 += 1;
            }
            for (sum, count) in &per_size {
                assert!((sum / *count as f64 - REFERENCE_WEIGHTS[t]).abs() < 1e-12);
            }
        }
        // hence exact φ equals the weights
        let phi = exact_game_values(&g, 1).unwrap().phi;
        for (p, w) in phi.iter().zip(REFERENCE_WEIGHTS) {
            assert!((p - w).abs() < 1e-12);
        }
    }
}
