//! Lexicographic enumeration of fixed-size subsets.

/// Advances `idx` (a strictly increasing `k`-subset of `0..n`) to its
/// lexicographic successor. Returns `false` once the last subset is passed.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut pos = k;
    while pos > 0 {
        pos -= 1;
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for t in (pos + 1)..k {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Calls `f` on every `k`-subset of `pool` in lexicographic order of positions.
/// `f` returns `false` to stop early. `pool` is expected to be ascending, so
/// positional order is also ascending vertex order.
pub fn for_each_subset<F>(pool: &[usize], k: usize, mut f: F)
where
    F: FnMut(&[usize]) -> bool,
{
    let n = pool.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut subset: Vec<usize> = idx.iter().map(|&t| pool[t]).collect();
    loop {
        if !f(&subset) {
            return;
        }
        if !next_combination(&mut idx, n) {
            return;
        }
        for (s, &t) in subset.iter_mut().zip(&idx) {
            *s = pool[t];
        }
    }
}

/// Vertices `0..p` minus `exclude`, ascending.
pub fn complement(p: usize, exclude: &[usize]) -> Vec<usize> {
    (0..p).filter(|v| !exclude.contains(v)).collect()
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        acc = match acc.checked_mul((n - t) as u128) {
            Some(v) => v / (t as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
