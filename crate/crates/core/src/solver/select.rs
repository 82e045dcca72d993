//! Heuristic choice among the remaining solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::Scene;

use super::{Assignment, Heuristic, SolverError};

/// Mean center distance over all pairs of assigned instances; 0 for fewer
/// than two variables.
pub fn average_pairwise_distance(sol: &Assignment, scene: &Scene) -> Result<f64, SolverError> {
    let centers = sol
        .values()
        .map(|id| scene.instance(id).map(|i| i.center()).ok_or_else(|| SolverError::UnknownInstance(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            total += centers[i].distance(centers[j]);
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}

/// Relative tolerance under which two average distances count as equal.
/// Permuting the same instances over variables reorders the summation, so
/// exact ties can differ in the last bits.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Picks one solution. Ties in the distance heuristics (within
/// [`TIE_TOLERANCE`]) go to the earliest.
pub fn select_solution<'a>(
    solutions: &'a [Assignment],
    strategy: Heuristic,
    scene: &Scene,
) -> Result<&'a Assignment, SolverError> {
    if solutions.is_empty() {
        return Err(SolverError::NoSolutions);
    }
    let index = match strategy {
        Heuristic::First => 0,
        Heuristic::Random { seed } => ChaCha8Rng::seed_from_u64(seed).random_range(0..solutions.len()),
        Heuristic::MinAvgDistance | Heuristic::MaxAvgDistance => {
            let mut best = 0;
            let mut best_score = average_pairwise_distance(&solutions[0], scene)?;
            for (i, sol) in solutions.iter().enumerate().skip(1) {
                let s = average_pairwise_distance(sol, scene)?;
                let margin = TIE_TOLERANCE * best_score.abs().max(1.0);
                let better = match strategy {
                    Heuristic::MinAvgDistance => s < best_score - margin,
                    _ => s > best_score + margin,
                };
                if better {
                    best = i;
                    best_score = s;
                }
            }
            best
        }
    };
    Ok(&solutions[index])
}
