//! Set partitions and splittings of bitmask-encoded index sets.
//!
//! The cascade of perturbation systems indexes its unknowns by subsets of
//! the direction set `{0..n}` and assembles their sources from partitions of
//! those subsets.  Everything here enumerates in a fixed deterministic
//! order, so downstream sums are reproducible across runs.

/// Subset of directions as a bitmask.
pub type Mask = u32;

pub fn popcount(mask: Mask) -> usize {
    mask.count_ones() as usize
}

/// All subsets of `{0..n}` ordered by (size, numeric value) — the order the
/// cascade must solve them in, since each system only sources from strictly
/// smaller subsets.
pub fn subsets_by_size(n: usize) -> Vec<Mask> {
    let mut all: Vec<Mask> = (1..(1u32 << n)).collect();
    all.sort_by_key(|&m| (popcount(m), m));
    all
}

/// Unordered splittings of `s` into two nonempty disjoint parts, each
/// returned once with the part containing the lowest set bit first.
pub fn unordered_splittings(s: Mask) -> Vec<(Mask, Mask)> {
    assert!(s != 0, "cannot split the empty set");
    let low = s & s.wrapping_neg();
    let rest = s ^ low;
    let mut out = Vec::new();
    // Submasks of `rest` joined with the low bit form the first part.
    let mut t = rest;
    loop {
        let first = low | t;
        if first != s {
            out.push((first, s ^ first));
        }
        if t == 0 {
            break;
        }
        t = (t - 1) & rest;
    }
    out.sort_unstable();
    out
}

/// Ordered pairs `(a, b)` of nonempty disjoint parts with `a | b == s`;
/// both orders of each splitting appear.
pub fn ordered_splittings(s: Mask) -> Vec<(Mask, Mask)> {
    let mut out = Vec::new();
    for (a, b) in unordered_splittings(s) {
        out.push((a, b));
        out.push((b, a));
    }
    out.sort_unstable();
    out
}

/// All partitions of `s` into nonempty blocks.  Each partition's blocks are
/// sorted ascending; the list of partitions is sorted lexicographically.
pub fn partitions(s: Mask) -> Vec<Vec<Mask>> {
    fn recurse(s: Mask, out: &mut Vec<Vec<Mask>>, prefix: &mut Vec<Mask>) {
        if s == 0 {
            let mut p = prefix.clone();
            p.sort_unstable();
            out.push(p);
            return;
        }
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        let mut t = rest;
        loop {
            let block = low | t;
            prefix.push(block);
            recurse(s ^ block, out, prefix);
            prefix.pop();
            if t == 0 {
                break;
            }
            t = (t - 1) & rest;
        }
    }
    let mut out = Vec::new();
    recurse(s, &mut out, &mut Vec::new());
    out.sort();
    out
}

/// Partitions of `s` with at least two blocks — the ones that can source a
/// cost term, since the single-block partition is weighted by the vanishing
/// first coefficient.
pub fn proper_partitions(s: Mask) -> Vec<Vec<Mask>> {
    partitions(s)
        .into_iter()
        .filter(|p| p.len() >= 2)
        .collect()
}
