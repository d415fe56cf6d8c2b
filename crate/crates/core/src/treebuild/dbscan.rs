use rayon::prelude::*;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices within Euclidean distance `eps` (inclusive) of each point, the point itself
/// included, in increasing order.
pub fn neighborhoods(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let eps2 = eps * eps;
    (0..points.len())
        .into_par_iter()
        .map(|p| {
            (0..points.len())
                .filter(|&q| q == p || squared_distance(&points[p], &points[q]) <= eps2)
                .collect()
        })
        .collect()
}

/// DBSCAN with Euclidean distance. Points with fewer than `min_pts` neighbours (self
/// included) that are not reachable from a core point are noise (`None`). Cluster ids
/// are numbered in order of discovery, scanning points by index.
///
/// With `min_pts = 1` every point is a core point and the clusters are the connected
/// components of the graph linking points at distance `<= eps`.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    debug_assert!(eps > 0.0 && min_pts >= 1);
    let neighbors = neighborhoods(points, eps);
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        if neighbors[p].len() < min_pts {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[p] = Some(cluster);
        let mut frontier: Vec<usize> = neighbors[p].clone();
        while let Some(q) = frontier.pop() {
            if !visited[q] {
                visited[q] = true;
                if neighbors[q].len() >= min_pts {
                    frontier.extend(&neighbors[q]);
                }
            }
            if labels[q].is_none() {
                labels[q] = Some(cluster);
            }
        }
    }
    labels
}
