use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, MlError};
use crate::numeric::ExactSum;
use crate::relation::Relation;
use crate::types::{ColumnType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 2,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from training points to their nearest
    /// centroid.
    pub inertia: f64,
    /// Lloyd updates that moved some centroid by more than `tol`.
    pub iterations_run: usize,
    /// Inertia of the initial centroids, then after every update.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, the lowest index on ties.
pub fn assign_cluster(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn inertia(m: &FeatureMatrix, centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut s = ExactSum::new();
    for (x, &l) in m.rows().zip(labels) {
        s.add(sq_dist(x, &centroids[l]));
    }
    s.value()
}

fn kmeans_plus_plus(m: &FeatureMatrix, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.n();
    let mut centroids = vec![m.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = m.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().copied().collect::<ExactSum>().value();
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = i;
                    break;
                }
            }
            // rounding can leave `chosen` on a zero-weight point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).expect("positive total");
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = m.row(pick).to_vec();
        for (x, d) in m.rows().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeding.
pub fn kmeans_train(m: &FeatureMatrix, params: &KMeansParams) -> Result<KMeansModel, MlError> {
    if params.k == 0 || params.k > m.n() {
        return Err(MlError::InvalidK {
            k: params.k,
            n: m.n(),
        });
    }
    let init = kmeans_plus_plus(m, params.k, params.seed);
    kmeans_train_from(m, init, params.max_iter, params.tol)
}

/// Lloyd's algorithm from the given initial centroids.
pub fn kmeans_train_from(
    m: &FeatureMatrix,
    initial: Vec<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel, MlError> {
    let k = initial.len();
    if k == 0 || k > m.n() {
        return Err(MlError::InvalidK { k, n: m.n() });
    }
    if let Some(c) = initial.iter().find(|c| c.len() != m.d()) {
        return Err(MlError::DimensionMismatch {
            expected: m.d(),
            got: c.len(),
        });
    }
    let mut centroids = initial;
    let mut labels: Vec<usize> = m.rows().map(|x| assign_cluster(&centroids, x)).collect();
    let mut history = vec![inertia(m, &centroids, &labels)];
    let mut iterations_run = 0;
    for _ in 0..max_iter {
        let mut sums = vec![vec![ExactSum::new(); m.d()]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in m.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                s.add(*v);
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    s.iter().map(|v| v.value() / c as f64).collect()
                }
            })
            .collect();
        // re-seed empty clusters at the points farthest from their centroid
        let mut taken: Vec<usize> = Vec::new();
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = m
                .rows()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .map(|(i, x)| (i, sq_dist(x, &centroids[labels[i]])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                taken.push(i);
                next[j] = m.row(i).to_vec();
            }
        }
        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        labels = m.rows().map(|x| assign_cluster(&centroids, x)).collect();
        history.push(inertia(m, &centroids, &labels));
        if movement <= tol {
            break;
        }
        iterations_run += 1;
    }
    Ok(KMeansModel {
        k,
        inertia: *history.last().expect("initial inertia"),
        centroids,
        iterations_run,
        inertia_history: history,
    })
}

/// Source rows plus an Int64 `cluster` column.
pub fn kmeans_predict(model: &KMeansModel, m: &FeatureMatrix) -> Result<Relation, MlError> {
    let d = model.centroids.first().map_or(0, Vec::len);
    if d != m.d() {
        return Err(MlError::DimensionMismatch {
            expected: d,
            got: m.d(),
        });
    }
    let labels = m
        .rows()
        .map(|x| vec![Value::Int64(assign_cluster(&model.centroids, x) as i64)]);
    m.extend_source(&[("cluster", ColumnType::Int64)], labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let m =
            FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let model = kmeans_train(
            &m,
            &KMeansParams {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.centroids, vec![vec![1.0, 1.0]]);
        assert_eq!(model.iterations_run, 1);
    }

    #[test]
    fn separated_groups() {
        let m = FeatureMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 0.1],
            vec![10.0, 10.0],
            vec![10.0, 10.1],
        ])
        .unwrap();
        let model = kmeans_train(
            &m,
            &KMeansParams {
                k: 2,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut cs = model.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((cs[0][0] - 0.0).abs() < 1e-12 && (cs[0][1] - 0.05).abs() < 1e-12);
        assert!((cs[1][0] - 10.0).abs() < 1e-12 && (cs[1][1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn invalid_k() {
        let m = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            kmeans_train(
                &m,
                &KMeansParams {
                    k: 2,
                    ..Default::default()
                }
            ),
            Err(MlError::InvalidK { k: 2, n: 1 })
        ));
        assert!(matches!(
            kmeans_train(
                &m,
                &KMeansParams {
                    k: 0,
                    ..Default::default()
                }
            ),
            Err(MlError::InvalidK { .. })
        ));
    }

    #[test]
    fn predict_ties_and_exact_hits() {
        let model = KMeansModel {
            k: 2,
            centroids: vec![vec![0.0], vec![2.0]],
            inertia: 0.0,
            iterations_run: 0,
            inertia_history: vec![],
        };
        let m = FeatureMatrix::from_rows(&[vec![2.0], vec![1.0]]).unwrap();
        let out = kmeans_predict(&model, &m).unwrap();
        let clusters: Vec<_> = out.rows().map(|r| r[1].clone()).collect();
        assert_eq!(clusters, vec![Value::Int64(1), Value::Int64(0)]);
        let wrong = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            kmeans_predict(&model, &wrong),
            Err(MlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_points_do_not_stall_seeding() {
        let m = FeatureMatrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let model = kmeans_train(
            &m,
            &KMeansParams {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.centroids.len(), 3);
        assert_eq!(model.inertia, 0.0);
    }
}
