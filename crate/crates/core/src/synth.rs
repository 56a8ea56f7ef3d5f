//! Seeded synthetic corpora of isotropic Gaussian clusters.
//!
//! For each prompt the model means form a regular simplex with edge
//! `separation * sigma`: the centred standard basis of `R^n_models` is written
//! in Helmert coordinates (`n_models - 1` of them) and mapped onto a random
//! orthonormal frame of the embedding space. Each generation is its model's
//! mean plus `sigma` times a standard normal vector.
//!
//! Randomness: ChaCha20 keyed by `seed`. Prompt `p` (global index across a
//! mixed corpus) draws its frame from stream `p * (n_models + 1)` and model
//! `m`'s samples from stream `p * (n_models + 1) + m + 1`. Normals come from
//! [`BoxMuller`], so output does not depend on thread scheduling.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, EmbeddingCorpus, GenerationRecord};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, BoxMuller};
use crate::vector::{self, EmbeddingVector};

pub const ENCODER_NAME: &str = "synthetic-gaussian";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_models: usize,
    pub n_prompts: usize,
    pub k_per_cell: usize,
    pub dim: usize,
    /// Distance between model means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_models: 19,
            n_prompts: 280,
            k_per_cell: 30,
            dim: 64,
            separation: 6.0,
            sigma: 1.0,
            seed: 7,
            normalize: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 || self.n_prompts == 0 || self.k_per_cell == 0 {
            return Err(Error::invalid(
                "model, prompt and per-cell counts must be at least 1",
            ));
        }
        if self.dim < 2 {
            return Err(Error::invalid(format!(
                "dim must be at least 2, got {}",
                self.dim
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        if self.n_models - 1 > self.dim {
            return Err(Error::invalid(format!(
                "{} equidistant model means require dim >= {}, got {}",
                self.n_models,
                self.n_models - 1,
                self.dim
            )));
        }
        Ok(())
    }
}

pub fn model_id(m: usize) -> String {
    format!("m{m:02}")
}

pub fn prompt_id(p: usize) -> String {
    format!("p{p:04}")
}

fn stream(spec: &SynthSpec, global_prompt: usize, slot: usize) -> u64 {
    global_prompt as u64 * (spec.n_models as u64 + 1) + slot as u64
}

/// `count` orthonormal vectors in `R^dim` (modified Gram-Schmidt on
/// Gaussian draws).
fn random_frame(rng: &mut impl rand::RngCore, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut normal = BoxMuller::new();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for u in &frame {
            let proj = vector::dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= proj * y);
        }
        // a near-degenerate draw is discarded and redrawn
        if let Some(unit) = vector::normalize(&v).filter(|_| vector::norm(&v) > 1e-6) {
            frame.push(unit);
        }
    }
    frame
}

/// Design means of every model for the prompt with global index
/// `global_prompt`.
pub fn design_means(spec: &SynthSpec, global_prompt: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let n = spec.n_models;
    let mut rng = stream_rng(spec.seed, stream(spec, global_prompt, 0));
    let frame = random_frame(&mut rng, n - 1, spec.dim);
    let scale = spec.separation * spec.sigma / std::f64::consts::SQRT_2;
    let means = (0..n)
        .map(|i| {
            let mut mu = vec![0.0; spec.dim];
            for (j0, u) in frame.iter().enumerate() {
                let j = j0 + 1;
                let norm = ((j * (j + 1)) as f64).sqrt();
                let coord = match i.cmp(&j) {
                    std::cmp::Ordering::Less => 1.0 / norm,
                    std::cmp::Ordering::Equal => -(j as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                };
                if coord != 0.0 {
                    mu.iter_mut()
                        .zip(u)
                        .for_each(|(m, x)| *m += scale * coord * x);
                }
            }
            mu
        })
        .collect();
    Ok(means)
}

fn prompt_records(spec: &SynthSpec, global_prompt: usize) -> Result<Vec<GenerationRecord>> {
    let means = design_means(spec, global_prompt)?;
    let pid = prompt_id(global_prompt);
    let mut records = Vec::with_capacity(spec.n_models * spec.k_per_cell);
    for (m, mu) in means.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, stream(spec, global_prompt, m + 1));
        let mut normal = BoxMuller::new();
        for s in 0..spec.k_per_cell {
            let values: Vec<f32> = mu
                .iter()
                .map(|&c| (c + spec.sigma * normal.sample(&mut rng)) as f32)
                .collect();
            records.push(GenerationRecord {
                prompt_id: pid.clone(),
                model_id: model_id(m),
                seed: s as i64,
                embedding: EmbeddingVector::new(values)?,
            });
        }
    }
    Ok(records)
}

fn assemble(
    records: Vec<GenerationRecord>,
    n_models: usize,
    prompts: usize,
    dim: usize,
    normalize: bool,
) -> Result<EmbeddingCorpus> {
    let manifest = CorpusManifest {
        encoder_name: ENCODER_NAME.into(),
        dim,
        model_ids: (0..n_models).map(model_id).collect(),
        prompt_ids: (0..prompts).map(prompt_id).collect(),
        normalized: false,
        created_at: DateTime::<Utc>::UNIX_EPOCH,
    };
    let corpus = EmbeddingCorpus::new(records, manifest)?;
    if normalize {
        corpus.normalize()
    } else {
        Ok(corpus)
    }
}

/// Records are ordered prompt-major, model-minor, seed ascending.
pub fn generate(spec: &SynthSpec) -> Result<EmbeddingCorpus> {
    generate_mixed(&[(spec.clone(), spec.n_prompts)])
}

/// Concatenates blocks of prompts drawn from different specs. Block `b`
/// contributes `count` prompts numbered after the previous blocks'.
pub fn generate_mixed(specs: &[(SynthSpec, usize)]) -> Result<EmbeddingCorpus> {
    let (first, _) = specs
        .first()
        .ok_or_else(|| Error::invalid("no synthetic specs given"))?;
    for (s, count) in specs {
        s.validate()?;
        if *count == 0 {
            return Err(Error::invalid("every block needs at least one prompt"));
        }
        if s.n_models != first.n_models || s.dim != first.dim || s.normalize != first.normalize {
            return Err(Error::invalid(
                "mixed specs must agree on n_models, dim and normalization",
            ));
        }
    }
    let jobs: Vec<(&SynthSpec, usize)> = specs
        .iter()
        .scan(0usize, |next, (s, count)| {
            let start = *next;
            *next += count;
            Some((start..start + count).map(move |p| (s, p)))
        })
        .flatten()
        .collect();
    let total = jobs.len();
    let blocks = jobs
        .par_iter()
        .map(|&(s, p)| prompt_records(s, p))
        .collect::<Result<Vec<_>>>()?;
    assemble(
        blocks.into_iter().flatten().collect(),
        first.n_models,
        total,
        first.dim,
        first.normalize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(separation: f64) -> SynthSpec {
        SynthSpec {
            n_models: 4,
            n_prompts: 3,
            k_per_cell: 5,
            dim: 8,
            separation,
            sigma: 1.0,
            seed: 11,
            normalize: true,
        }
    }

    #[test]
    fn simplex_edges() {
        let spec = SynthSpec {
            separation: 3.0,
            sigma: 2.0,
            ..small(0.0)
        };
        let means = design_means(&spec, 0).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = vector::euclidean(&means[i], &means[j]);
                assert!((d - 6.0).abs() < 1e-9, "{i},{j}: {d}");
            }
        }
    }

    #[test]
    fn simplex_fits_in_n_minus_one_dims() {
        let spec = SynthSpec {
            n_models: 5,
            dim: 4,
            separation: 1.0,
            ..small(0.0)
        };
        let means = design_means(&spec, 2).unwrap();
        let d = vector::euclidean(&means[0], &means[4]);
        assert!((d - 1.0).abs() < 1e-9);
        let too_small = SynthSpec {
            n_models: 6,
            dim: 4,
            ..small(1.0)
        };
        let err = generate(&too_small).unwrap_err().to_string();
        assert!(err.contains("dim >= 5"), "{err}");
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(2.0)).unwrap();
        let b = generate(&small(2.0)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthSpec {
            seed: 12,
            ..small(2.0)
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layout_and_normalization() {
        let c = generate(&small(2.0)).unwrap();
        assert_eq!(c.len(), 4 * 3 * 5);
        assert!(c.is_normalized());
        assert_eq!(c.model_ids(), ["m00", "m01", "m02", "m03"]);
        assert_eq!(c.records()[0].prompt_id, "p0000");
        assert_eq!(c.records()[5].model_id, "m01");
        assert!(c.records().iter().all(|r| r.embedding.is_unit()));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec {
            sigma: 0.0,
            ..small(1.0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            dim: 1,
            n_models: 1,
            ..small(1.0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            k_per_cell: 0,
            ..small(1.0)
        })
        .is_err());
        assert!(generate_mixed(&[]).is_err());
        let other = SynthSpec {
            n_models: 3,
            ..small(1.0)
        };
        assert!(generate_mixed(&[(small(1.0), 1), (other, 1)]).is_err());
    }

    #[test]
    fn mixed_blocks_get_consecutive_prompts() {
        let c = generate_mixed(&[(small(0.0), 2), (small(8.0), 3)]).unwrap();
        assert_eq!(c.prompt_ids().len(), 5);
        assert_eq!(c.prompt_ids()[4], "p0004");
        // block prompts draw from their global index
        let solo = generate_mixed(&[(small(8.0), 5)]).unwrap();
        assert_eq!(c.cell("p0003", "m01"), solo.cell("p0003", "m01"));
    }
}
