//! Sequence reweighting by single-linkage identity clusters.

use rayon::prelude::*;

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};

/// Fraction of sites at which two equal-length sequences agree.
pub fn sequence_identity(a: &[usize], b: &[usize]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Weights `x_m = 1 / |cluster(m)|`, where clusters are the connected components of the
/// graph linking sequences with identity strictly greater than `identity_threshold`.
pub fn compute_sequence_weights(data: &OneHotDataset, identity_threshold: f64) -> Result<Vec<f64>> {
    if !(identity_threshold > 0.0 && identity_threshold < 1.0) {
        return Err(Error::config(format!(
            "identity threshold must lie in (0, 1), got {identity_threshold}"
        )));
    }
    let n = data.n_samples();
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            (a + 1..n)
                .filter(move |&b| sequence_identity(data.sample(a), data.sample(b)) > identity_threshold)
                .map(move |b| (a, b))
        })
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let roots: Vec<usize> = (0..n).map(|m| find(&mut parent, m)).collect();
    let mut sizes = vec![0usize; n];
    roots.iter().for_each(|&r| sizes[r] += 1);
    Ok(roots.iter().map(|&r| 1.0 / sizes[r] as f64).collect())
}
