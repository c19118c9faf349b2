use super::ContrastiveError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means(points: &[Vec<f64>], labels: &[usize], c: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Objective of a labeling with its own cluster means as centroids.
pub fn kmeans_objective(points: &[Vec<f64>], labels: &[usize], c: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (mu, _) = means(points, labels, c);
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &mu[l])).sum()
}

fn plus_plus_seeds(points: &[Vec<f64>], c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd iterations to a fixed point; an emptied cluster is reseeded with
/// the point farthest from its current centroid.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let c = centroids.len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..max_iters {
        let (mut mu, counts) = means(points, &labels, c);
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &mu[labels[a]]);
                        let db = sq_dist(&points[b], &mu[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("nonempty points");
                mu[k] = points[far].clone();
                labels[far] = k;
            }
        }
        centroids = mu;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let (mu, counts) = means(points, &labels, c);
    for k in 0..c {
        if counts[k] > 0 {
            centroids[k] = mu[k].clone();
        }
    }
    (centroids, labels)
}

/// Single-point moves that lower the objective once centroid shifts are
/// accounted for. Runs after Lloyd converges to escape its weaker fixed
/// points; the result is still a nearest-centroid partition.
fn refine(points: &[Vec<f64>], labels: &mut [usize], c: usize) -> bool {
    let mut moved = false;
    loop {
        let (mu, counts) = means(points, labels, c);
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let from = labels[i];
            let nf = counts[from] as f64;
            if counts[from] <= 1 {
                continue;
            }
            let gain_out = nf / (nf - 1.0) * sq_dist(p, &mu[from]);
            for to in 0..c {
                if to == from {
                    continue;
                }
                let nt = counts[to] as f64;
                let cost_in = if counts[to] == 0 { 0.0 } else { nt / (nt + 1.0) * sq_dist(p, &mu[to]) };
                let delta = cost_in - gain_out;
                if delta < -1e-12 && best.map_or(true, |b| delta < b.2) {
                    best = Some((i, to, delta));
                }
            }
        }
        match best {
            Some((i, to, _)) => {
                labels[i] = to;
                moved = true;
            }
            None => return moved,
        }
    }
}

/// k-means with k-means++ seeding and `restarts` independent runs; keeps
/// the lowest objective (earliest run on ties). Labels are the
/// nearest-centroid assignment under the returned centroids.
pub fn kmeans_fit_assign(
    points: &[Vec<f64>],
    c: usize,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult, ContrastiveError> {
    if c == 0 || c > points.len() {
        return Err(ContrastiveError::InvalidClusterCount { c, n: points.len() });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ContrastiveError::ShapeMismatch("points differ in width".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let seeds = plus_plus_seeds(points, c, &mut rng);
        let (mut centroids, mut labels) = lloyd(points, seeds, max_iters);
        while refine(points, &mut labels, c) {
            let (mu, _) = means(points, &labels, c);
            let (cc, ll) = lloyd(points, mu, max_iters);
            centroids = cc;
            labels = ll;
        }
        let objective: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(KMeansResult {
                centroids,
                labels,
                objective,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![5.0, 5.0],
            vec![5.1, 5.0],
        ];
        let r = kmeans_fit_assign(&pts, 2, 100, 3, 1).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[1], r.labels[2]);
        assert_eq!(r.labels[3], r.labels[4]);
        assert_ne!(r.labels[0], r.labels[3]);
    }

    #[test]
    fn rejects_bad_cluster_count() {
        let pts = vec![vec![0.0]];
        assert!(kmeans_fit_assign(&pts, 2, 10, 1, 0).is_err());
        assert!(kmeans_fit_assign(&pts, 0, 10, 1, 0).is_err());
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let pts = vec![vec![1.0]; 4];
        let r = kmeans_fit_assign(&pts, 2, 10, 2, 0).unwrap();
        assert_eq!(r.objective, 0.0);
    }
}
