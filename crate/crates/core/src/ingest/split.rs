use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RecordSet;
use crate::error::{Error, Result};

/// Train/validation/test index lists into a [`RecordSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub bins: usize,
}

impl Splits {
    /// Split sizes for `n` records: test is 10% of all records, validation is
    /// 20% of the rest, both rounded half-up; train takes the remainder.
    pub fn sizes(n: usize) -> (usize, usize, usize) {
        let test = (n + 5) / 10;
        let rest = n - test;
        let val = (2 * rest + 5) / 10;
        (rest - val, val, test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stratified split of a record set by band gap. See [`stratified_split_values`].
pub fn stratified_split(rs: &RecordSet, seed: u64, bins: usize) -> Result<Splits> {
    stratified_split_values(&rs.band_gaps(), seed, bins)
}

/// Splits `values` into train/val/test, stratified over `bins` equal-width
/// bins spanning `[min, max]` of the values.
///
/// Per-bin counts are the floor or ceiling of the bin's proportional share in
/// every subset, while subset totals match [`Splits::sizes`] exactly. Members
/// of each bin are shuffled with a generator keyed by `seed` before they are
/// dealt out.
pub fn stratified_split_values(values: &[f64], seed: u64, bins: usize) -> Result<Splits> {
    let n = values.len();
    if n < 10 {
        return Err(Error::input(format!(
            "need at least 10 records to hold out 10% for testing, got {n}"
        )));
    }
    if bins == 0 {
        return Err(Error::input("bins must be at least 1"));
    }
    let members = bin_members(values, bins);
    let (n_train, n_val, n_test) = Splits::sizes(n);
    let targets = [n_test, n_val, n_train];
    let bin_sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = round_allocation(&bin_sizes, &targets);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (mut idx, row) in members.into_iter().zip(counts) {
        idx.shuffle(&mut rng);
        let mut it = idx.into_iter();
        for (subset, &k) in out.iter_mut().zip(&row) {
            subset.extend(it.by_ref().take(k));
        }
    }
    let [mut test, mut val, mut train] = out;
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Ok(Splits {
        train,
        val,
        test,
        seed,
        bins,
    })
}

/// Equal-width bin membership over the observed range.
pub(crate) fn bin_members(values: &[f64], bins: usize) -> Vec<Vec<usize>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    let mut members = vec![Vec::new(); bins];
    for (i, &v) in values.iter().enumerate() {
        let b = if width > 0.0 {
            (((v - lo) / width) * bins as f64).floor() as usize
        } else {
            0
        };
        members[b.min(bins - 1)].push(i);
    }
    members
}

/// Rounds the proportional allocation `size_k * target_c / n` to integers so
/// that every row sums to `size_k`, every column sums to `target_c`, and every
/// cell is the floor or ceiling of its real share.
///
/// Such a rounding always exists for matrices with integral row and column
/// sums; it is found here as a max-flow over the fractional cells.
fn round_allocation(sizes: &[usize], targets: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = sizes.iter().sum();
    let cols = targets.len();
    // Exact rational shares: size * target / n, kept as (floor, has_fraction).
    let mut counts: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&s| targets.iter().map(|&t| s * t / n).collect())
        .collect();
    let fractional: Vec<Vec<bool>> = sizes
        .iter()
        .map(|&s| targets.iter().map(|&t| (s * t) % n != 0).collect())
        .collect();
    let mut row_need: Vec<usize> = sizes
        .iter()
        .zip(&counts)
        .map(|(&s, row)| s - row.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = (0..cols)
        .map(|c| targets[c] - counts.iter().map(|row| row[c]).sum::<usize>())
        .collect();
    // Unit-capacity bipartite flow: augment one unit at a time.
    let mut used = vec![vec![false; cols]; sizes.len()];
    loop {
        let Some(start) = row_need.iter().position(|&r| r > 0) else {
            break;
        };
        let path = augmenting_path(start, &fractional, &used, &col_need)
            .expect("integral matrix rounding always exists");
        // path alternates row, col, row, col ... ending at a column with spare capacity.
        for w in path.chunks(2) {
            let (r, c) = (w[0], w[1]);
            used[r][c] = true;
        }
        for w in path[1..].chunks(2) {
            if w.len() == 2 {
                let (c, r) = (w[0], w[1]);
                used[r][c] = false;
            }
        }
        row_need[start] -= 1;
        col_need[*path.last().unwrap()] -= 1;
    }
    for (r, row) in counts.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if used[r][c] {
                *v += 1;
            }
        }
    }
    counts
}

/// BFS for an alternating path row -> col (unused fractional cell) -> row
/// (via a used cell, backwards) -> ... ending in a column with spare capacity.
fn augmenting_path(
    start: usize,
    fractional: &[Vec<bool>],
    used: &[Vec<bool>],
    col_need: &[usize],
) -> Option<Vec<usize>> {
    let rows = fractional.len();
    let cols = col_need.len();
    let mut row_prev: Vec<Option<usize>> = vec![None; rows];
    let mut col_prev: Vec<Option<usize>> = vec![None; cols];
    let mut row_seen = vec![false; rows];
    row_seen[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        for c in 0..cols {
            if !fractional[r][c] || used[r][c] || col_prev[c].is_some() {
                continue;
            }
            col_prev[c] = Some(r);
            if col_need[c] > 0 {
                let mut path = vec![c];
                let mut col = c;
                loop {
                    let row = col_prev[col].unwrap();
                    path.push(row);
                    match row_prev[row] {
                        Some(pc) => {
                            path.push(pc);
                            col = pc;
                        }
                        None => break,
                    }
                }
                path.reverse();
                return Some(path);
            }
            for r2 in 0..rows {
                if used[r2][c] && !row_seen[r2] {
                    row_seen[r2] = true;
                    row_prev[r2] = Some(c);
                    queue.push_back(r2);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_rounding(sizes: &[usize], targets: &[usize]) {
        let n: usize = sizes.iter().sum();
        let counts = round_allocation(sizes, targets);
        for (row, &s) in counts.iter().zip(sizes) {
            assert_eq!(row.iter().sum::<usize>(), s);
            for (&v, &t) in row.iter().zip(targets) {
                let ideal = (s * t) as f64 / n as f64;
                assert!((v as f64 - ideal).abs() < 1.0, "{v} vs {ideal}");
            }
        }
        for (c, &t) in targets.iter().enumerate() {
            assert_eq!(counts.iter().map(|r| r[c]).sum::<usize>(), t);
        }
    }

    #[test]
    fn sizes_for_one_thousand() {
        assert_eq!(Splits::sizes(1000), (720, 180, 100));
        assert_eq!(Splits::sizes(27600), (19872, 4968, 2760));
    }

    #[test]
    fn rounding_preserves_margins() {
        check_rounding(&[10; 10], &[10, 18, 72]);
        check_rounding(&[3, 7, 1, 0, 12, 5], &[3, 5, 20]);
        check_rounding(&[1, 1, 1, 1, 1, 1, 1, 1, 1, 2], &[1, 2, 8]);
        check_rounding(&[33, 2, 9, 71, 5], &[12, 21, 87]);
    }

    #[test]
    fn too_few_records() {
        assert!(stratified_split_values(&[1.0; 9], 0, 10).is_err());
    }

    #[test]
    fn constant_values_use_single_bin() {
        let s = stratified_split_values(&[2.0; 20], 3, 10).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (14, 4, 2));
    }

    #[test]
    fn deterministic_per_seed() {
        let v: Vec<f64> = (0..57).map(|i| (i as f64 * 0.37).sin().abs() * 5.0).collect();
        assert_eq!(
            stratified_split_values(&v, 11, 10).unwrap(),
            stratified_split_values(&v, 11, 10).unwrap()
        );
        assert_ne!(
            stratified_split_values(&v, 11, 10).unwrap(),
            stratified_split_values(&v, 12, 10).unwrap()
        );
    }
}
