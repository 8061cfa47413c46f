use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::pcd::kdtree::squared_distance;

/// Number of rows kept for `ratio` of `rows`: `ceil(ratio * rows)`, at least one.
pub fn coreset_size(rows: usize, ratio: f64) -> usize {
    ((ratio * rows as f64).ceil() as usize).clamp(1, rows.max(1))
}

/// Start row drawn from `seed`.
pub fn seeded_start(rows: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).gen_range(0..rows)
}

/// Greedy k-center selection from `start`: repeatedly adds the row farthest
/// from the current selection, breaking ties by the lower index. Returns the
/// selected indices in ascending order.
pub fn greedy_k_center(data: &[f64], dim: usize, target: usize, start: usize) -> Vec<usize> {
    let rows = data.len() / dim;
    let target = target.min(rows);
    if target == 0 {
        return Vec::new();
    }
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut selected = vec![start];
    let mut nearest: Vec<f64> = (0..rows)
        .into_par_iter()
        .map(|i| squared_distance(row(i), row(start)))
        .collect();
    nearest[start] = f64::NEG_INFINITY;
    while selected.len() < target {
        let (next, _) = nearest
            .par_iter()
            .enumerate()
            .map(|(i, &d)| (i, d))
            .reduce(
                || (usize::MAX, f64::NEG_INFINITY),
                |a, b| {
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        selected.push(next);
        nearest[next] = f64::NEG_INFINITY;
        let r = row(next);
        nearest.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = squared_distance(row(i), r);
            if nd < *d {
                *d = nd;
            }
        });
    }
    selected.sort_unstable();
    selected
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR: [f64; 8] = [0.0, 0.0, 10.0, 0.0, 0.0, 10.0, 1.0, 1.0];

    fn farthest_from(start: usize) -> usize {
        let d = |i: usize| squared_distance(&FOUR[2 * i..2 * i + 2], &FOUR[2 * start..2 * start + 2]);
        let mut best = 0;
        for i in 1..4 {
            if d(i) > d(best) {
                best = i;
            }
        }
        best
    }

    #[test]
    fn half_of_four_is_start_plus_farthest() {
        for start in 0..4 {
            let mut expect = vec![start, farthest_from(start)];
            expect.sort_unstable();
            assert_eq!(greedy_k_center(&FOUR, 2, coreset_size(4, 0.5), start), expect);
        }
    }

    #[test]
    fn sizes_round_up() {
        assert_eq!(coreset_size(4, 0.5), 2);
        assert_eq!(coreset_size(10, 0.01), 1);
        assert_eq!(coreset_size(3, 0.5), 2);
        assert_eq!(coreset_size(7, 1.0), 7);
    }

    #[test]
    fn duplicates_are_never_selected_twice() {
        let data = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(greedy_k_center(&data, 1, 3, 2), vec![0, 1, 2]);
    }

    #[test]
    fn full_target_selects_everything() {
        assert_eq!(greedy_k_center(&FOUR, 2, 4, 3), vec![0, 1, 2, 3]);
    }
}
