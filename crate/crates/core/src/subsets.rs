//! Small helpers for enumerating index subsets in lexicographic order.

use itertools::Itertools;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `items`, in lexicographic order of positions.
pub fn k_subsets(items: &[usize], k: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    items.iter().copied().combinations(k)
}

/// Bit mask of a subset of `0..64`.
pub fn mask_of(subset: &[usize]) -> u64 {
    subset.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

/// Sorted member indices of a bit mask.
pub fn members(mut mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        out.push(i);
        mask &= mask - 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(10, 10), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn subsets_are_lexicographic() {
        let got: Vec<_> = k_subsets(&[0, 1, 2, 3], 2).collect();
        assert_eq!(
            got,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
    }

    #[test]
    fn mask_round_trip() {
        let s = vec![0, 3, 9, 63];
        assert_eq!(members(mask_of(&s)), s);
    }
}
