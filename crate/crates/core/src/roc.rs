//! ROC curves over real-valued scores where larger means "positive".
//!
//! The curve is swept over the distinct score values: at threshold `t` every
//! sample with `score >= t` is called positive. Tied scores move both rates
//! in one step, so the trapezoidal area equals the Mann-Whitney statistic
//! `P(pos > neg) + 0.5 P(pos == neg)`. The area is accumulated in integers and
//! divided once.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Smallest score called positive; `+inf` (serialized as null) for the
    /// reject-all point.
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub fpr_cap: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocReport {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    pub operating_points: Vec<OperatingPoint>,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid(format!("{name} scores are empty")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("{name} scores"),
            index: i,
        });
    }
    Ok(())
}

pub fn roc_curve(positive: &[f64], negative: &[f64]) -> Result<RocReport> {
    check_scores("positive", positive)?;
    check_scores("negative", negative)?;
    let p = positive.len();
    let n = negative.len();

    let mut scored: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
        true_positives: 0,
        false_positives: 0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // twice the Mann-Whitney U: sum of dFP * (TP_prev + TP_cur)
    let mut twice_u: u128 = 0;
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        let (tp_prev, fp_prev) = (tp, fp);
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_u += ((fp - fp_prev) as u128) * ((tp_prev + tp) as u128);
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold,
            true_positives: tp,
            false_positives: fp,
        });
    }
    let auc = twice_u as f64 / (2 * p as u128 * n as u128) as f64;

    Ok(RocReport {
        points,
        auc,
        positives: p,
        negatives: n,
        operating_points: Vec::new(),
    })
}

impl RocReport {
    /// Best operating point with `fpr <= fpr_cap`: the highest TPR, and among
    /// points sharing it the one with the largest threshold. No interpolation.
    pub fn tpr_at_fpr(&self, fpr_cap: f64) -> Result<OperatingPoint> {
        if !(0.0..=1.0).contains(&fpr_cap) {
            return Err(Error::invalid(format!("fpr cap {fpr_cap} outside [0, 1]")));
        }
        let mut best: Option<&RocPoint> = None;
        for pt in self.points.iter().filter(|pt| pt.fpr <= fpr_cap) {
            if best.is_none_or(|b| pt.tpr > b.tpr) {
                best = Some(pt);
            }
        }
        let best = best.ok_or_else(|| Error::invalid("ROC curve has no points"))?;
        Ok(OperatingPoint {
            fpr_cap,
            tpr: best.tpr,
            fpr: best.fpr,
            threshold: best.threshold,
        })
    }

    pub fn with_operating_points(mut self, caps: &[f64]) -> Result<Self> {
        self.operating_points = caps
            .iter()
            .map(|&c| self.tpr_at_fpr(c))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Trapezoidal area under `points`, computed in floating point.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// (tpr, threshold) at the given FPR cap.
pub fn tpr_at_fpr(report: &RocReport, fpr_cap: f64) -> Result<(f64, f64)> {
    let op = report.tpr_at_fpr(fpr_cap)?;
    Ok((op.tpr, op.threshold))
}
