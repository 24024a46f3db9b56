//! Exact t-SNE (O(N²) per iteration).
//!
//! Rows are processed in image-id order and each point's initial position is
//! derived from a hash of its id and the seed, so the embedding of an image
//! does not depend on the row order of the input file.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

const MAX_SEARCH_STEPS: usize = 200;
const PERPLEXITY_TOL: f64 = 1e-5;
const LOG_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    /// Number of leading iterations run with exaggerated affinities.
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 50.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

/// Symmetric joint probabilities with zero diagonal, row-major N x N.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    p: Vec<f64>,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    fn permuted(&self, order: &[usize]) -> AffinityMatrix {
        // order[k] = row of self placed at k.
        let n = self.n;
        let mut p = vec![0.0; n * n];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                p[a * n + b] = self.p[i * n + j];
            }
        }
        AffinityMatrix { n, p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
}

impl Embedding {
    pub fn get(&self, id: &str) -> Option<[f64; 2]> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|k| self.coords[k])
    }

    /// CSV `image_id,x,y,group`; ids missing from `groups` get an empty group.
    pub fn write_csv<W: Write>(&self, groups: &HashMap<String, String>, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["image_id", "x", "y", "group"])?;
        for (id, [x, y]) in self.ids.iter().zip(&self.coords) {
            let group = groups.get(id).map(String::as_str).unwrap_or("");
            csv.write_record([id.as_str(), &x.to_string(), &y.to_string(), group])?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TsneRun {
    pub embedding: Embedding,
    /// In the same row order as `embedding`.
    pub affinities: AffinityMatrix,
    pub initial_kl: f64,
    pub final_kl: f64,
}

/// Gaussian conditional probabilities for one point given its squared
/// distances to the other N-1 points. The precision is bisected until
/// `2^H` matches `perplexity`; a target at or above N-1 yields the uniform
/// distribution (sigma = infinity).
pub fn conditional_affinities(sq_distances: &[f64], perplexity: f64) -> Result<(f64, Vec<f64>)> {
    conditional_row(sq_distances, perplexity, 0)
}

fn conditional_row(sq: &[f64], perplexity: f64, row: usize) -> Result<(f64, Vec<f64>)> {
    let m = sq.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "t-SNE needs at least two points".into(),
        ));
    }
    if perplexity.is_nan() || perplexity <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "perplexity must be positive, got {perplexity}"
        )));
    }
    if perplexity >= m as f64 {
        return Ok((f64::INFINITY, vec![1.0 / m as f64; m]));
    }
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let d: Vec<f64> = sq.iter().map(|v| v - min).collect();
    let target = perplexity.ln();
    let mean = d.iter().sum::<f64>() / m as f64;

    let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut probs = vec![0.0; m];
    for _ in 0..MAX_SEARCH_STEPS {
        let mut z = 0.0;
        for (p, &dj) in probs.iter_mut().zip(&d) {
            *p = (-beta * dj).exp();
            z += *p;
        }
        let mut weighted = 0.0;
        for (p, &dj) in probs.iter_mut().zip(&d) {
            *p /= z;
            weighted += *p * dj;
        }
        let entropy = z.ln() + beta * weighted;
        if (entropy.exp() - perplexity).abs() <= PERPLEXITY_TOL {
            return Ok(((0.5 / beta).sqrt(), probs));
        }
        if entropy > target {
            lo = beta;
            beta = if hi.is_infinite() {
                beta * 2.0
            } else {
                0.5 * (lo + hi)
            };
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
    }
    Err(Error::PerplexitySearch { row, perplexity })
}

fn squared_distances(features: &FeatureMatrix, order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut d = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v: f64 = features
                .row(order[a])
                .iter()
                .zip(features.row(order[b]))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d[a * n + b] = v;
            d[b * n + a] = v;
        }
    }
    d
}

/// Row-stochastic conditional matrix `p_{j|i}` (row `i`), zero diagonal.
fn conditional_matrix(sq: &[f64], n: usize, perplexity: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| sq[i * n + j]));
        let (_, probs) = conditional_row(&row, perplexity, i)?;
        for (j, p) in (0..n).filter(|&j| j != i).zip(probs) {
            out[i * n + j] = p;
        }
    }
    Ok(out)
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2N` from a row-major N x N conditional matrix.
pub fn symmetrize(conditional: &[f64], n: usize) -> Result<AffinityMatrix> {
    if conditional.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "conditional matrix has {} entries, expected {}",
            conditional.len(),
            n * n
        )));
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in i + 1..n {
            let v = (conditional[i * n + j] + conditional[j * n + i]) / denom;
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    Ok(AffinityMatrix { n, p })
}

/// Joint affinities of the feature rows, in input row order.
pub fn affinities(features: &FeatureMatrix, perplexity: f64) -> Result<AffinityMatrix> {
    let order: Vec<usize> = (0..features.len()).collect();
    let n = order.len();
    validate(n, perplexity)?;
    let sq = squared_distances(features, &order);
    symmetrize(&conditional_matrix(&sq, n, perplexity)?, n)
}

fn validate(n: usize, perplexity: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "t-SNE needs at least two points, got {n}"
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::InvalidArgument(format!(
            "perplexity must lie in (0, {n}), got {perplexity}"
        )));
    }
    Ok(())
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|²)` (zero diagonal) and their sum.
fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num, z)
}

fn kl_from_coords(p: &AffinityMatrix, y: &[[f64; 2]]) -> f64 {
    let (num, z) = student_kernel(y);
    let n = p.n;
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.p[i * n + j];
            if i == j || pij <= 0.0 {
                continue;
            }
            let qij = num[i * n + j] / z;
            kl += pij * (pij.max(LOG_FLOOR) / qij.max(LOG_FLOOR)).ln();
        }
    }
    kl
}

/// `KL(P || Q)` with Q the normalized Student-t similarities of the
/// embedding, whose rows must be in the same order as `p`.
pub fn kl_divergence(p: &AffinityMatrix, embedding: &Embedding) -> Result<f64> {
    if embedding.coords.len() != p.n {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} rows, affinities {}",
            embedding.coords.len(),
            p.n
        )));
    }
    Ok(kl_from_coords(p, &embedding.coords))
}

fn initial_position(id: &str, seed: u64) -> [f64; 2] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    [normal.sample(&mut rng), normal.sample(&mut rng)]
}

pub fn run_tsne(features: &FeatureMatrix, config: &TsneConfig) -> Result<Embedding> {
    run_tsne_traced(features, config).map(|r| r.embedding)
}

pub fn run_tsne_traced(features: &FeatureMatrix, config: &TsneConfig) -> Result<TsneRun> {
    let n = features.len();
    validate(n, config.perplexity)?;
    if config.iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| features.ids()[a].cmp(&features.ids()[b]));
    let sq = squared_distances(features, &order);
    let p = symmetrize(&conditional_matrix(&sq, n, config.perplexity)?, n)?;

    let mut y: Vec<[f64; 2]> = order
        .iter()
        .map(|&i| initial_position(&features.ids()[i], config.seed))
        .collect();
    let initial_kl = kl_from_coords(&p, &y);

    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };

        let (num, z) = student_kernel(&y);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                let coeff = (exaggeration * p.p[k] - num[k] / z) * num[k];
                g[0] += coeff * (y[i][0] - y[j][0]);
                g[1] += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }

        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign {
                    gains[i][d] * 0.8
                } else {
                    gains[i][d] + 0.2
                }
                .max(MIN_GAIN);
                update[i][d] =
                    momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }

        let mut mean = [0.0; 2];
        for pt in &y {
            mean[0] += pt[0];
            mean[1] += pt[1];
        }
        for pt in &mut y {
            pt[0] -= mean[0] / n as f64;
            pt[1] -= mean[1] / n as f64;
        }

        if let Some(bad) = y
            .iter()
            .position(|pt| !(pt[0].is_finite() && pt[1].is_finite()))
        {
            return Err(Error::NonFinite {
                iteration: it,
                detail: format!("coordinate of `{}` diverged", features.ids()[order[bad]]),
            });
        }
    }
    let final_kl = kl_from_coords(&p, &y);
    if !final_kl.is_finite() {
        return Err(Error::NonFinite {
            iteration: config.iterations,
            detail: "final KL divergence".to_string(),
        });
    }

    // Back to input row order.
    let mut coords = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        coords[i] = y[k];
    }
    let mut inverse = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        inverse[i] = k;
    }
    Ok(TsneRun {
        embedding: Embedding {
            ids: features.ids().to_vec(),
            coords,
        },
        affinities: p.permuted(&inverse),
        initial_kl,
        final_kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn features(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_rows(
            rows.into_iter()
                .enumerate()
                .map(|(i, r)| (format!("p{i:02}"), r))
                .collect(),
        )
        .unwrap()
    }

    fn entropy_bits(p: &[f64]) -> f64 {
        -p.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.log2())
            .sum::<f64>()
    }

    #[test]
    fn equal_distances_give_uniform() {
        let (_, p) = conditional_affinities(&[4.0; 5], 5.0).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_neighbor_is_certain() {
        for perp in [1.0, 1.5] {
            let (_, p) = conditional_affinities(&[3.0], perp).unwrap();
            assert_eq!(p, vec![1.0]);
        }
        // A single neighbour always has perplexity exactly 1.
        assert!(conditional_affinities(&[3.0], 0.5).is_err());
    }

    #[test]
    fn perplexity_matches_entropy_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for perp in [2.0, 5.0, 15.0, 30.0] {
            let row: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..500.0)).collect();
            let (sigma, p) = conditional_affinities(&row, perp).unwrap();
            assert!(sigma.is_finite() && sigma > 0.0);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((2f64.powf(entropy_bits(&p)) - perp).abs() <= 1e-4);
            // Probabilities follow the Gaussian kernel with the returned bandwidth.
            let w: Vec<f64> = row
                .iter()
                .map(|d| (-d / (2.0 * sigma * sigma)).exp())
                .collect();
            let z: f64 = w.iter().sum();
            if z > 0.0 {
                for (a, b) in p.iter().zip(&w) {
                    assert!((a - b / z).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_distances_fail_to_bracket() {
        assert!(matches!(
            conditional_affinities(&[0.0; 6], 3.0),
            Err(Error::PerplexitySearch { .. })
        ));
    }

    #[test]
    fn symmetrize_examples() {
        // Already symmetric conditional input.
        let c = vec![0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0];
        let p = symmetrize(&c, 3).unwrap();
        for (a, b) in p.values().iter().zip(&c) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
        // p_{2|1} = 1, p_{1|2} = 1, point 3 splits evenly.
        let c = vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0];
        let p = symmetrize(&c, 3).unwrap();
        assert!((p.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affinities_normalized_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows = (0..25)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let p = affinities(&features(rows), 8.0).unwrap();
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..25 {
            assert_eq!(p.get(i, i), 0.0);
            for j in 0..25 {
                assert_eq!(p.get(i, j), p.get(j, i));
            }
        }
    }

    #[test]
    fn kl_examples() {
        // Equilateral triangle: Q is uniform off-diagonal, so uniform P gives 0.
        let p = AffinityMatrix {
            n: 3,
            p: vec![
                0.0,
                1.0 / 6.0,
                1.0 / 6.0,
                1.0 / 6.0,
                0.0,
                1.0 / 6.0,
                1.0 / 6.0,
                1.0 / 6.0,
                0.0,
            ],
        };
        let h = 3f64.sqrt() / 2.0;
        let emb = Embedding {
            ids: vec!["a".into(), "b".into(), "c".into()],
            coords: vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
        };
        assert!(kl_divergence(&p, &emb).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_matches_hand_summation() {
        let c = vec![
            0.0, 0.6, 0.3, 0.1, //
            0.5, 0.0, 0.25, 0.25, //
            0.2, 0.2, 0.0, 0.6, //
            0.0, 0.5, 0.5, 0.0,
        ];
        let p = symmetrize(&c, 4).unwrap();
        let coords = vec![[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0], [3.0, -1.0]];
        let emb = Embedding {
            ids: (0..4).map(|i| i.to_string()).collect(),
            coords: coords.clone(),
        };
        let mut z = 0.0;
        let mut q = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let d2: f64 = (coords[i][0] - coords[j][0]).powi(2)
                        + (coords[i][1] - coords[j][1]).powi(2);
                    q[i][j] = 1.0 / (1.0 + d2);
                    z += q[i][j];
                }
            }
        }
        let mut expected = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let pij = (c[i * 4 + j] + c[j * 4 + i]) / 8.0;
                if i != j && pij > 0.0 {
                    expected += pij * (pij / (q[i][j] / z)).ln();
                }
            }
        }
        let got = kl_divergence(&p, &emb).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got >= 0.0);
    }

    #[test]
    fn two_points() {
        let fm = features(vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        let cfg = TsneConfig {
            perplexity: 1.0,
            iterations: 300,
            ..Default::default()
        };
        let run = run_tsne_traced(&fm, &cfg).unwrap();
        let [a, b] = [run.embedding.coords[0], run.embedding.coords[1]];
        let sep = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!(sep.is_finite() && sep > 0.0);
        assert!(run.final_kl <= run.initial_kl + 1e-15);
    }

    #[test]
    fn config_validation() {
        let fm = features(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let bad_perp = TsneConfig {
            perplexity: 3.0,
            ..Default::default()
        };
        assert!(run_tsne(&fm, &bad_perp).is_err());
        let no_iters = TsneConfig {
            perplexity: 1.5,
            iterations: 0,
            ..Default::default()
        };
        assert!(run_tsne(&fm, &no_iters).is_err());
        let single = features(vec![vec![0.0]]);
        assert!(run_tsne(
            &single,
            &TsneConfig {
                perplexity: 0.5,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let rows: Vec<(String, Vec<f64>)> = (0..15)
            .map(|i| {
                (
                    format!("img{i}"),
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let cfg = TsneConfig {
            perplexity: 4.0,
            iterations: 200,
            seed: 5,
            ..Default::default()
        };
        let a = run_tsne(&FeatureMatrix::from_rows(rows.clone()).unwrap(), &cfg).unwrap();
        let mut shuffled = rows;
        shuffled.reverse();
        shuffled.swap(2, 9);
        let b = run_tsne(&FeatureMatrix::from_rows(shuffled).unwrap(), &cfg).unwrap();
        for id in &a.ids {
            assert_eq!(a.get(id), b.get(id));
        }
    }

    #[test]
    fn embedding_csv() {
        let emb = Embedding {
            ids: vec!["a".into(), "b".into()],
            coords: vec![[1.5, -2.0], [0.0, 3.25]],
        };
        let groups = HashMap::from([("a".to_string(), "infant".to_string())]);
        let mut buf = Vec::new();
        emb.write_csv(&groups, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image_id,x,y,group\na,1.5,-2,infant\nb,0,3.25,\n"
        );
    }
}
