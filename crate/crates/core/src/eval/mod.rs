//! Closed-world experiments over a corpus.
//!
//! Queries are held-out generations from the corpus itself: each
//! (prompt, model) cell gives up one record as the query and the centroids are
//! built from the rest. Accuracies are micro-averaged over cells. Every pass
//! is parallel over prompts and merged in manifest order, so reports do not
//! depend on the thread count.

pub mod holdout;
pub mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centroid::{build_clusters_with, rank_dense, subsample, ClusterOptions, Metric};
use crate::corpus::EmbeddingCorpus;
use crate::distinguish::{rank_prompts, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::one_vs_rest::DEFAULT_FPR_CAPS;
use crate::outlier::{DEFAULT_FIT_SIZE, DEFAULT_QUANTILE};
use crate::rng;

pub use holdout::{holdout_split, prompt_holdouts, Holdout, PromptHoldout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Reference generations per centroid, ascending.
    pub k_values: Vec<usize>,
    /// Deepest top-k reported.
    pub k_rank_max: usize,
    pub repeats: usize,
    pub split_seed: u64,
    pub tau: f64,
    pub metric: Metric,
    pub renormalize_centroid: bool,
    pub fpr_caps: Vec<f64>,
    /// Targets for the sweeps; every model when absent.
    pub targets: Option<Vec<String>>,
    pub quantile: f64,
    pub fit_size: Option<usize>,
    /// Prompts for the prompt-controlled attack; when absent, `attack_prompts`
    /// prompts are drawn from those with a perfect distinguishability score.
    pub selected_prompts: Option<Vec<String>>,
    pub attack_prompts: usize,
    /// Attack trials per prompt.
    pub trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 5, 10],
            k_rank_max: 5,
            repeats: 5,
            split_seed: 0,
            tau: DEFAULT_TAU,
            metric: Metric::Euclidean,
            renormalize_centroid: false,
            fpr_caps: DEFAULT_FPR_CAPS.to_vec(),
            targets: None,
            quantile: DEFAULT_QUANTILE,
            fit_size: Some(DEFAULT_FIT_SIZE),
            selected_prompts: None,
            attack_prompts: 5,
            trials: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::invalid(
                "k_values must be non-empty positive integers",
            ));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("k_values must be strictly ascending"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.k_rank_max == 0 {
            return Err(Error::invalid("k_rank_max must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        *self.k_values.last().expect("validated non-empty")
    }

    fn repeat_seed(&self, repeat: usize) -> u64 {
        rng::mix_seed(self.split_seed, repeat as u64)
    }
}

/// Ranking outcome of every held-out query of one prompt, in manifest model
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub prompt_id: String,
    /// Zero-based rank of the true model.
    pub true_rank: Vec<usize>,
    /// Index (manifest order) of the top-1 model.
    pub predicted: Vec<usize>,
}

/// One repeat at one centroid size.
pub fn evaluate_pass(
    corpus: &EmbeddingCorpus,
    config: &EvalConfig,
    repeat: usize,
    k: usize,
) -> Result<Vec<PromptOutcome>> {
    let split_seed = config.repeat_seed(repeat);
    let options = ClusterOptions {
        k: Some(k),
        sampling_seed: rng::mix_seed(split_seed, k as u64),
        renormalize: config.renormalize_centroid,
    };
    let models = corpus.model_ids();
    corpus
        .prompt_ids()
        .par_iter()
        .map(|p| {
            let h = prompt_holdouts(corpus, p, split_seed, &options)?;
            let mut true_rank = Vec::with_capacity(models.len());
            let mut predicted = Vec::with_capacity(models.len());
            for (q, truth) in h.queries.iter().zip(models) {
                let ranking = rank_dense(&q.embedding.to_f64(), &h.clusters, config.metric)?;
                true_rank.push(ranking.position(truth).expect("every model is ranked"));
                predicted.push(
                    models
                        .iter()
                        .position(|m| *m == ranking.predicted)
                        .expect("predicted model is a candidate"),
                );
            }
            Ok(PromptOutcome {
                prompt_id: p.clone(),
                true_rank,
                predicted,
            })
        })
        .collect()
}

fn check_cells(corpus: &EmbeddingCorpus, needed: usize) -> Result<()> {
    for p in corpus.prompt_ids() {
        for m in corpus.model_ids() {
            let available = corpus.cell(p, m).len();
            if available < needed {
                return Err(Error::InsufficientRecords {
                    prompt_id: p.clone(),
                    model_id: m.clone(),
                    needed,
                    available,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCurve {
    pub k: usize,
    /// Mean top-d accuracy over repeats, d = 1..=depth.
    pub mean: Vec<f64>,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub std: Vec<f64>,
    /// `per_repeat[r][d - 1]`.
    pub per_repeat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyCurve {
    pub depth: usize,
    pub repeats: usize,
    /// Held-out queries per repeat.
    pub cells: usize,
    pub per_k: Vec<KCurve>,
}

impl AccuracyCurve {
    pub fn get(&self, k: usize) -> Option<&KCurve> {
        self.per_k.iter().find(|c| c.k == k)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Top-1..top-depth accuracy for every k, over `repeats` re-splits.
pub fn topk_accuracy(corpus: &EmbeddingCorpus, config: &EvalConfig) -> Result<AccuracyCurve> {
    config.validate()?;
    check_cells(corpus, config.max_k() + 1)?;
    let depth = config.k_rank_max.min(corpus.model_ids().len());
    let cells = corpus.prompt_ids().len() * corpus.model_ids().len();

    let per_k = config
        .k_values
        .iter()
        .map(|&k| {
            let per_repeat = (0..config.repeats)
                .map(|r| {
                    let outcomes = evaluate_pass(corpus, config, r, k)?;
                    let mut hits = vec![0usize; depth];
                    for rank in outcomes.iter().flat_map(|o| &o.true_rank) {
                        for h in hits.iter_mut().skip(*rank) {
                            *h += 1;
                        }
                    }
                    Ok(hits
                        .into_iter()
                        .map(|h| h as f64 / cells as f64)
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = (0..depth)
                .map(|d| mean_std(&per_repeat.iter().map(|acc| acc[d]).collect::<Vec<_>>()))
                .unzip();
            Ok(KCurve {
                k,
                mean,
                std,
                per_repeat,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AccuracyCurve {
        depth,
        repeats: config.repeats,
        cells,
        per_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    /// Row-normalized rates; an empty row stays all zero.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total == 0 {
                            0.0
                        } else {
                            c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn rate(&self, from: &str, to: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == from)?;
        let j = self.labels.iter().position(|l| l == to)?;
        Some(self.rates()[i][j])
    }
}

/// Counts of (true model -> top-1 model) over all repeats, using the largest
/// k in the config.
pub fn confusion(corpus: &EmbeddingCorpus, config: &EvalConfig) -> Result<ConfusionMatrix> {
    config.validate()?;
    let k = config.max_k();
    check_cells(corpus, k + 1)?;
    let n = corpus.model_ids().len();
    let mut counts = vec![vec![0u64; n]; n];
    for r in 0..config.repeats {
        for outcome in evaluate_pass(corpus, config, r, k)? {
            for (truth, &pred) in outcome.predicted.iter().enumerate() {
                counts[truth][pred] += 1;
            }
        }
    }
    Ok(ConfusionMatrix {
        labels: corpus.model_ids().to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub prompts: Vec<String>,
    pub trials_per_prompt: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// For each selected prompt, `trials` times: pick a model uniformly, hold out
/// one of its generations uniformly, and classify it against centroids built
/// from every other record of the prompt.
pub fn prompt_controlled_attack(
    corpus: &EmbeddingCorpus,
    selected_prompts: &[String],
    trials: usize,
    seed: u64,
    metric: Metric,
) -> Result<AttackResult> {
    if selected_prompts.is_empty() {
        return Err(Error::invalid("no prompts selected"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    for p in selected_prompts {
        if !corpus.has_prompt(p) {
            return Err(Error::UnknownPrompt(p.clone()));
        }
    }
    let models = corpus.model_ids();
    let per_prompt = selected_prompts
        .par_iter()
        .map(|p| {
            let mut rng = rng::stream_rng(seed, rng::stream_id(&["attack", p]));
            let mut correct = 0usize;
            for _ in 0..trials {
                let model = &models[rng.random_range(0..models.len())];
                let cell = corpus.cell(p, model);
                if cell.len() < 2 {
                    return Err(Error::InsufficientRecords {
                        prompt_id: p.clone(),
                        model_id: model.clone(),
                        needed: 2,
                        available: cell.len(),
                    });
                }
                let query = cell[rng.random_range(0..cell.len())];
                let clusters =
                    build_clusters_with(corpus, p, &ClusterOptions::default(), Some(&query.key()))?;
                let ranking = rank_dense(&query.embedding.to_f64(), &clusters, metric)?;
                if ranking.predicted == *model {
                    correct += 1;
                }
            }
            Ok(correct)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct: usize = per_prompt.iter().sum();
    let total = trials * selected_prompts.len();
    Ok(AttackResult {
        prompts: selected_prompts.to_vec(),
        trials_per_prompt: trials,
        correct,
        total,
        accuracy: correct as f64 / total as f64,
    })
}

/// Seeded choice of `count` prompts among those with a perfect score.
pub fn pick_perfect_prompts(
    corpus: &EmbeddingCorpus,
    tau: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let perfect: Vec<String> = rank_prompts(corpus, tau)?
        .into_iter()
        .filter(|r| r.score == 1.0)
        .map(|r| r.prompt_id)
        .collect();
    if perfect.is_empty() {
        return Err(Error::invalid(format!(
            "no prompt reaches distinguishability 1.0 at tau {tau}"
        )));
    }
    Ok(subsample(&perfect, count, seed, &["attack-prompts"])
        .into_iter()
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub prompt_id: String,
    pub score: f64,
    pub top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    /// `None` when fewer than two prompts or either column is constant.
    pub spearman: Option<f64>,
    pub degenerate: bool,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Per-prompt distinguishability against held-out top-1 accuracy at the
/// largest k, averaged over repeats.
pub fn distinguishability_correlation(
    corpus: &EmbeddingCorpus,
    config: &EvalConfig,
) -> Result<CorrelationReport> {
    config.validate()?;
    let k = config.max_k();
    check_cells(corpus, k + 1)?;
    let reports = rank_prompts(corpus, config.tau)?;
    let n_models = corpus.model_ids().len();

    let mut hits = vec![0usize; corpus.prompt_ids().len()];
    for r in 0..config.repeats {
        for (i, outcome) in evaluate_pass(corpus, config, r, k)?.iter().enumerate() {
            hits[i] += outcome.true_rank.iter().filter(|&&rank| rank == 0).count();
        }
    }
    let rows: Vec<CorrelationRow> = corpus
        .prompt_ids()
        .iter()
        .zip(hits)
        .map(|(p, h)| {
            let score = reports
                .iter()
                .find(|r| &r.prompt_id == p)
                .map(|r| r.score)
                .expect("every prompt is scored");
            CorrelationRow {
                prompt_id: p.clone(),
                score,
                top1: h as f64 / (n_models * config.repeats) as f64,
            }
        })
        .collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let top1: Vec<f64> = rows.iter().map(|r| r.top1).collect();
    let rho = spearman(&scores, &top1);
    Ok(CorrelationReport {
        rows,
        degenerate: rho.is_none(),
        spearman: rho,
    })
}
