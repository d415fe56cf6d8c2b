//! Agreement between a recovered partition and reference labels.

use std::collections::BTreeMap;

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items. Two trivial
/// partitions that coincide score 1.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let mut table: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    let mut rows: BTreeMap<&A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<&B, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len());
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Number of reference classes for which some group has purity at least `min_purity`
/// with respect to that class and contains at least `min_coverage` of the class.
pub fn classes_recovered<L: Ord>(groups: &[Vec<usize>], labels: &[L], min_purity: f64, min_coverage: f64) -> usize {
    let mut class_sizes: BTreeMap<&L, usize> = BTreeMap::new();
    labels.iter().for_each(|l| *class_sizes.entry(l).or_default() += 1);
    class_sizes
        .iter()
        .filter(|(class, &size)| {
            groups.iter().any(|g| {
                let hits = g.iter().filter(|&&m| &labels[m] == **class).count();
                !g.is_empty()
                    && hits as f64 >= min_purity * g.len() as f64
                    && hits as f64 >= min_coverage * size as f64
            })
        })
        .count()
}
