//! Seeded random parameter vectors and vertex edits for checks and benchmarks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::autodiff::{Tape, TapeScratch};
use crate::mesh::bbox_diagonal;
use crate::objectives::EditSpec;

/// Deterministic generator used by every seeded command.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative spread of the first sampling attempts around `p0`.
const INITIAL_SPREAD: f64 = 0.3;
const TRIES_PER_SPREAD: usize = 200;

/// A random parameter vector near `p0` at which every constraint holds.
///
/// Each coordinate is perturbed uniformly by up to `spread · max(|p0_i|, 0.1)`.
/// Candidates are rejected until one is feasible; the spread halves after
/// every run of failed tries. Returns `None` only if `p0` itself is
/// infeasible or not evaluable.
pub fn feasible_point<R: Rng>(tape: &Tape, p0: &[f64], rng: &mut R) -> Option<Vec<f64>> {
    let mut s = TapeScratch::new(tape);
    let feasible = |p: &[f64], s: &mut TapeScratch| {
        tape.eval_constraints(p, s)
            .map(|g| g.iter().all(|&x| x >= 0.0))
            .unwrap_or(false)
    };
    let mut spread = INITIAL_SPREAD;
    while spread > 1e-6 {
        for _ in 0..TRIES_PER_SPREAD {
            let p: Vec<f64> = p0
                .iter()
                .map(|&x| x + spread * x.abs().max(0.1) * rng.gen_range(-1.0..=1.0))
                .collect();
            if feasible(&p, &mut s) {
                return Some(p);
            }
        }
        spread *= 0.5;
    }
    feasible(p0, &mut s).then(|| p0.to_vec())
}

pub fn feasible_points<R: Rng>(
    tape: &Tape,
    p0: &[f64],
    count: usize,
    rng: &mut R,
) -> Option<Vec<Vec<f64>>> {
    (0..count).map(|_| feasible_point(tape, p0, rng)).collect()
}

/// Moves `count` distinct vertices (all of them if there are fewer) by
/// `fraction` of the bounding-box diagonal, each in a uniformly random
/// direction.
pub fn random_edit<R: Rng>(
    positions: &[f64],
    count: usize,
    fraction: f64,
    rng: &mut R,
) -> EditSpec {
    let n = positions.len() / 3;
    let step = fraction * bbox_diagonal(positions);
    let mut vids = sample(rng, n, count.min(n)).into_vec();
    vids.sort_unstable();
    let moved: Vec<(usize, [f64; 3])> = vids
        .into_iter()
        .map(|v| {
            let d: [f64; 3] = UnitSphere.sample(rng);
            (
                v,
                [
                    positions[3 * v] + step * d[0],
                    positions[3 * v + 1] + step * d[1],
                    positions[3 * v + 2] + step * d[2],
                ],
            )
        })
        .collect();
    EditSpec::new(moved, [])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use crate::models;

    #[test]
    fn samples_are_feasible_and_seeded() {
        let m = Model::compile(models::MOUNT).unwrap();
        let a = feasible_points(&m.tape, &m.initial_params, 20, &mut rng(3)).unwrap();
        let b = feasible_points(&m.tape, &m.initial_params, 20, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(m.constraint_values(p).unwrap().iter().all(|&g| g >= 0.0));
        }
        assert!(a.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn edit_displacement_magnitude() {
        let m = Model::compile(models::DRESSER).unwrap();
        let rest = m.positions(&m.initial_params).unwrap();
        let edit = random_edit(&rest, 10, 0.05, &mut rng(0));
        assert_eq!(edit.moved.len(), 10);
        let step = 0.05 * bbox_diagonal(&rest);
        for mv in &edit.moved {
            let d: f64 = (0..3)
                .map(|k| (mv.target[k] - rest[3 * mv.vid + k]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((d - step).abs() < 1e-12);
        }
        let small = random_edit(&rest[..24], 10, 0.05, &mut rng(0));
        assert_eq!(small.moved.len(), 8);
    }
}
