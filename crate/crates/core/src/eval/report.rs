//! Serialized experiment outputs: a JSON summary plus CSV tables.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{
    confusion, distinguishability_correlation, pick_perfect_prompts, prompt_controlled_attack,
    topk_accuracy, AccuracyCurve, ConfusionMatrix, CorrelationReport, EvalConfig,
};
use crate::corpus::EmbeddingCorpus;
use crate::distinguish::SeparabilityReport;
use crate::error::{Error, Result};
use crate::one_vs_rest::{ovr_sweep, DetectionRow, OvrConfig};
use crate::outlier::{outlier_sweep, OutlierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Topk,
    Confusion,
    PromptAttack,
    OvrSweep,
    OutlierSweep,
    Correlation,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "topk" => EvalMode::Topk,
            "confusion" => EvalMode::Confusion,
            "prompt-attack" => EvalMode::PromptAttack,
            "ovr-sweep" => EvalMode::OvrSweep,
            "outlier-sweep" => EvalMode::OutlierSweep,
            "correlation" => EvalMode::Correlation,
            other => return Err(Error::invalid(format!("unknown eval mode {other:?}"))),
        })
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Topk => "topk",
            EvalMode::Confusion => "confusion",
            EvalMode::PromptAttack => "prompt-attack",
            EvalMode::OvrSweep => "ovr-sweep",
            EvalMode::OutlierSweep => "outlier-sweep",
            EvalMode::Correlation => "correlation",
        })
    }
}

/// Named output files; `summary.json` is always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOutput {
    pub summary: String,
    pub files: Vec<(String, String)>,
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::invalid(format!("json: {e}")))
}

/// `0.02` -> `2%`.
pub fn cap_label(cap: f64) -> String {
    let pct = (cap * 100.0 * 1e6).round() / 1e6;
    format!("tpr@{pct}%")
}

/// model, accuracy, roc_auc, tpr@<cap>... with three decimals.
pub fn detection_csv(rows: &[DetectionRow], fpr_caps: &[f64]) -> Result<String> {
    let mut header = vec!["model".to_string(), "accuracy".into(), "roc_auc".into()];
    header.extend(fpr_caps.iter().map(|&c| cap_label(c)));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.model.clone(),
                format!("{:.3}", r.accuracy),
                format!("{:.3}", r.roc_auc),
            ];
            row.extend(r.operating_points.iter().map(|op| format!("{:.3}", op.tpr)));
            row
        })
        .collect();
    csv_string(&header, &body)
}

/// prompt_id, score, then one frac column per model.
pub fn distinguish_csv(reports: &[SeparabilityReport], model_ids: &[String]) -> Result<String> {
    let mut header = vec!["prompt_id".to_string(), "score".into()];
    header.extend(model_ids.iter().cloned());
    let body: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.prompt_id.clone(), r.score.to_string()];
            row.extend(model_ids.iter().map(|m| {
                r.per_model_frac
                    .get(m)
                    .map(f64::to_string)
                    .unwrap_or_default()
            }));
            row
        })
        .collect();
    csv_string(&header, &body)
}

pub fn topk_csv(curve: &AccuracyCurve) -> Result<String> {
    let header: Vec<String> = ["k", "depth", "mean", "std"].map(String::from).to_vec();
    let body: Vec<Vec<String>> = curve
        .per_k
        .iter()
        .flat_map(|c| {
            (0..curve.depth).map(move |d| {
                vec![
                    c.k.to_string(),
                    (d + 1).to_string(),
                    c.mean[d].to_string(),
                    c.std[d].to_string(),
                ]
            })
        })
        .collect();
    csv_string(&header, &body)
}

fn matrix_csv<T: ToString>(labels: &[String], rows: &[Vec<T>]) -> Result<String> {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(labels.iter().cloned());
    let body: Vec<Vec<String>> = labels
        .iter()
        .zip(rows)
        .map(|(l, row)| {
            let mut out = vec![l.clone()];
            out.extend(row.iter().map(ToString::to_string));
            out
        })
        .collect();
    csv_string(&header, &body)
}

pub fn confusion_csv(m: &ConfusionMatrix) -> Result<String> {
    matrix_csv(&m.labels, &m.counts)
}

pub fn correlation_csv(r: &CorrelationReport) -> Result<String> {
    let header: Vec<String> = ["prompt_id", "score", "top1"].map(String::from).to_vec();
    let body: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.prompt_id.clone(),
                row.score.to_string(),
                row.top1.to_string(),
            ]
        })
        .collect();
    csv_string(&header, &body)
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    mode: String,
    config: &'a EvalConfig,
    result: T,
}

fn summary<T: Serialize>(mode: EvalMode, config: &EvalConfig, result: T) -> Result<String> {
    json(&Summary {
        mode: mode.to_string(),
        config,
        result,
    })
}

fn targets(corpus: &EmbeddingCorpus, config: &EvalConfig) -> Vec<String> {
    config
        .targets
        .clone()
        .unwrap_or_else(|| corpus.model_ids().to_vec())
}

/// Runs one experiment and renders its outputs.
pub fn run_eval(
    corpus: &EmbeddingCorpus,
    mode: EvalMode,
    config: &EvalConfig,
) -> Result<EvalOutput> {
    config.validate()?;
    let mut files = Vec::new();
    let summary = match mode {
        EvalMode::Topk => {
            let curve = topk_accuracy(corpus, config)?;
            files.push(("topk.csv".into(), topk_csv(&curve)?));
            summary(mode, config, &curve)?
        }
        EvalMode::Confusion => {
            let m = confusion(corpus, config)?;
            files.push(("confusion.csv".into(), confusion_csv(&m)?));
            files.push((
                "confusion_rates.csv".into(),
                matrix_csv(&m.labels, &m.rates())?,
            ));
            summary(mode, config, &m)?
        }
        EvalMode::PromptAttack => {
            let prompts = match &config.selected_prompts {
                Some(p) => p.clone(),
                None => pick_perfect_prompts(
                    corpus,
                    config.tau,
                    config.attack_prompts,
                    config.split_seed,
                )?,
            };
            let result = prompt_controlled_attack(
                corpus,
                &prompts,
                config.trials,
                config.split_seed,
                config.metric,
            )?;
            summary(mode, config, &result)?
        }
        EvalMode::OvrSweep => {
            let ovr = OvrConfig {
                split_seed: config.split_seed,
                k: None,
                fpr_caps: config.fpr_caps.clone(),
                renormalize_centroid: config.renormalize_centroid,
            };
            let rows = ovr_sweep(corpus, &targets(corpus, config), &ovr)?;
            files.push(("ovr.csv".into(), detection_csv(&rows, &config.fpr_caps)?));
            summary(mode, config, &rows)?
        }
        EvalMode::OutlierSweep => {
            let oc = OutlierConfig {
                split_seed: config.split_seed,
                fit_size: config.fit_size,
                quantile: config.quantile,
                fpr_caps: config.fpr_caps.clone(),
            };
            let rows = outlier_sweep(corpus, &targets(corpus, config), &oc)?;
            files.push((
                "outlier.csv".into(),
                detection_csv(&rows, &config.fpr_caps)?,
            ));
            summary(mode, config, &rows)?
        }
        EvalMode::Correlation => {
            let r = distinguishability_correlation(corpus, config)?;
            files.push(("correlation.csv".into(), correlation_csv(&r)?));
            summary(mode, config, &r)?
        }
    };
    files.push(("summary.json".into(), summary.clone()));
    Ok(EvalOutput { summary, files })
}
