//! Brute-force reference implementations and fixtures shared by the
//! integration suites. Nothing here calls into the ranking or purity code it
//! is used to check.

#![allow(dead_code)]

use attrib_core::centroid::ModelCluster;
use attrib_core::corpus::{EmbeddingCorpus, GenerationRecord};
use attrib_core::EmbeddingVector;
use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small instance: per model, a list of points.
#[derive(Debug, Clone)]
pub struct Instance {
    pub models: Vec<String>,
    pub points: Vec<Vec<Vec<f32>>>,
    pub query: Vec<f32>,
}

impl Instance {
    pub fn clusters(&self) -> Vec<ModelCluster> {
        self.models
            .iter()
            .zip(&self.points)
            .map(|(m, pts)| {
                ModelCluster::new(
                    "p",
                    m.clone(),
                    pts.iter()
                        .map(|p| EmbeddingVector::new(p.clone()).unwrap())
                        .collect(),
                    false,
                )
                .unwrap()
            })
            .collect()
    }
}

/// Random instance with at most 5 models, 4 points each, dim 8. Half of the
/// instances use small integer coordinates so ties are common.
pub fn random_instance(rng: &mut impl Rng, min_points: usize) -> Instance {
    let n_models = rng.random_range(2..=5);
    let dim = rng.random_range(1..=8);
    let integer = rng.random_bool(0.5);
    let coord = |rng: &mut dyn rand::RngCore| -> f32 {
        if integer {
            rng.random_range(-2i32..=2) as f32
        } else {
            rng.random_range(-1.0f32..1.0)
        }
    };
    let mut points = Vec::new();
    for _ in 0..n_models {
        let k = rng.random_range(min_points..=4);
        points.push(
            (0..k)
                .map(|_| (0..dim).map(|_| coord(rng)).collect())
                .collect(),
        );
    }
    let query = (0..dim).map(|_| coord(rng)).collect();
    // shuffled, non-sorted ids exercise the tie rule
    let mut models: Vec<String> = (0..n_models)
        .map(|i| format!("model-{}", (i * 7 + 3) % 11))
        .collect();
    models.reverse();
    Instance {
        models,
        points,
        query,
    }
}

pub fn oracle_centroid(points: &[Vec<f32>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0f64; dim];
    for p in points {
        for d in 0..dim {
            c[d] += p[d] as f64;
        }
    }
    for x in c.iter_mut() {
        *x /= points.len() as f64;
    }
    c
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Ranking by repeated selection of the (distance, id)-smallest remaining
/// candidate.
pub fn oracle_rank(inst: &Instance) -> Vec<(String, f64)> {
    let q: Vec<f64> = inst.query.iter().map(|&x| x as f64).collect();
    let mut remaining: Vec<(String, f64)> = inst
        .models
        .iter()
        .zip(&inst.points)
        .map(|(m, pts)| (m.clone(), sq_dist(&q, &oracle_centroid(pts)).sqrt()))
        .collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (ref id, d) = remaining[i];
            let (ref bid, bd) = remaining[best];
            if d < bd || (d == bd && id < bid) {
                best = i;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

/// frac per model from the full pairwise distance matrix.
pub fn oracle_purity(inst: &Instance) -> Vec<(String, f64)> {
    let mut pts: Vec<(usize, Vec<f64>)> = Vec::new();
    for (m, cluster) in inst.points.iter().enumerate() {
        for p in cluster {
            pts.push((m, p.iter().map(|&x| x as f64).collect()));
        }
    }
    let n = pts.len();
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sq_dist(&pts[i].1, &pts[j].1)).collect())
        .collect();
    let mut hits = vec![0usize; inst.models.len()];
    for i in 0..n {
        let min = (0..n)
            .filter(|&j| j != i)
            .map(|j| matrix[i][j])
            .fold(f64::INFINITY, f64::min);
        let nearest: Vec<usize> = (0..n).filter(|&j| j != i && matrix[i][j] == min).collect();
        if nearest.iter().any(|&j| pts[j].0 == pts[i].0) {
            hits[pts[i].0] += 1;
        }
    }
    inst.models
        .iter()
        .enumerate()
        .map(|(m, id)| (id.clone(), hits[m] as f64 / inst.points[m].len() as f64))
        .collect()
}

/// Mann-Whitney AUC by exhaustive pair counting, as a fraction (num, 2*P*N).
pub fn oracle_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

pub fn record(p: &str, m: &str, seed: i64, v: Vec<f32>) -> GenerationRecord {
    GenerationRecord {
        prompt_id: p.into(),
        model_id: m.into(),
        seed,
        embedding: EmbeddingVector::new(v).unwrap(),
    }
}

pub fn corpus_of(records: Vec<GenerationRecord>) -> EmbeddingCorpus {
    EmbeddingCorpus::from_records(records, "fixture", DateTime::<Utc>::UNIX_EPOCH).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
