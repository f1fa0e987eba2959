//! Triangular indexing for quantities defined on unordered patient pairs.
//!
//! Pairwise values (exact pair expectations, susceptibilities) are stored in
//! a flat vector over pairs `(i, j)` with `i < j`, ordered lexicographically:
//! `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.

/// Number of unordered pairs over `n` items.
pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Flat index of the unordered pair `{i, j}`, `i != j`, among `n` items.
///
/// # Panics
///
/// Panics if `i == j` or either index is out of range.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    assert!(i != j, "pair index requires two distinct patients");
    assert!(i < n && j < n, "pair ({i}, {j}) out of range for n={n}");
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    // Offset of row `lo` in the upper triangle, then the column within it.
    lo * (2 * n - lo - 1) / 2 + (hi - lo - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_dense_and_ordered() {
        for n in 2..8 {
            let mut seen = vec![false; n_pairs(n)];
            let mut expected = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let idx = pair_index(i, j, n);
                    assert_eq!(idx, expected, "pair ({i},{j}) for n={n}");
                    assert_eq!(idx, pair_index(j, i, n));
                    seen[idx] = true;
                    expected += 1;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    #[should_panic(expected = "distinct")]
    fn rejects_diagonal() {
        pair_index(3, 3, 5);
    }
}
