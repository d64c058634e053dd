//! ROC curves from similar and different pair similarities.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// FPR targets reported by default.
pub const DEFAULT_TARGET_FPRS: [f64; 3] = [1e-4, 1e-5, 1e-7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprPoint {
    pub target_fpr: f64,
    /// Best TPR among thresholds whose FPR is at most the target. `None`
    /// when there are too few different pairs to resolve the target.
    pub tpr: Option<f64>,
    pub threshold: Option<f64>,
}

/// A pair is called similar when its similarity is at least the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub similar_pairs: usize,
    pub different_pairs: usize,
    /// `max over thresholds of min(TPR, 1 - FPR)`.
    pub crossover_accuracy: f64,
    pub crossover_threshold: f64,
    pub tpr_at_fpr: Vec<FprPoint>,
    pub warnings: Vec<String>,
}

/// Fraction of `sorted` values that are `>= t`.
fn fraction_at_least(sorted: &[f64], t: f64) -> f64 {
    let below = sorted.partition_point(|&v| v < t);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

pub fn build_roc(similar: &[f64], different: &[f64], target_fprs: &[f64]) -> Result<RocReport> {
    if similar.is_empty() || different.is_empty() {
        return Err(Error::Config("ROC needs both similar and different pairs".into()));
    }
    if similar.iter().chain(different).any(|v| !v.is_finite()) {
        return Err(Error::Config("similarities must be finite".into()));
    }
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (sim, diff) = (sort(similar), sort(different));
    let mut thresholds: Vec<f64> = std::iter::once(0.0).chain(sim.iter().copied()).chain(diff.iter().copied()).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    // One cutoff above every score closes the curve at (0, 0).
    let top = thresholds.last().copied().unwrap_or(0.0);
    thresholds.push(top + 1.0);

    let tpr: Vec<f64> = thresholds.iter().map(|&t| fraction_at_least(&sim, t)).collect();
    let fpr: Vec<f64> = thresholds.iter().map(|&t| fraction_at_least(&diff, t)).collect();

    let (mut crossover_accuracy, mut crossover_threshold) = (-1.0, 0.0);
    for ((&t, &tp), &fp) in thresholds.iter().zip(&tpr).zip(&fpr) {
        let acc = tp.min(1.0 - fp);
        if acc > crossover_accuracy {
            crossover_accuracy = acc;
            crossover_threshold = t;
        }
    }

    let mut warnings = Vec::new();
    let tpr_at_fpr = target_fprs
        .iter()
        .map(|&target| {
            if (diff.len() as f64) * target < 1.0 {
                warnings.push(format!(
                    "FPR {target:e} needs at least {:.0} different pairs, have {}; not estimated",
                    (1.0 / target).ceil(),
                    diff.len()
                ));
                return FprPoint {
                    target_fpr: target,
                    tpr: None,
                    threshold: None,
                };
            }
            // TPR is non-increasing in the threshold, so the lowest
            // admissible threshold gives the best TPR.
            let i = fpr.iter().position(|&f| f <= target).expect("last threshold has FPR 0");
            FprPoint {
                target_fpr: target,
                tpr: Some(tpr[i]),
                threshold: Some(thresholds[i]),
            }
        })
        .collect();

    Ok(RocReport {
        thresholds,
        tpr,
        fpr,
        similar_pairs: sim.len(),
        different_pairs: diff.len(),
        crossover_accuracy,
        crossover_threshold,
        tpr_at_fpr,
        warnings,
    })
}

impl RocReport {
    pub fn is_monotone(&self) -> bool {
        let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[0] >= w[1]);
        self.thresholds.windows(2).all(|w| w[0] < w[1])
            && nonincreasing(&self.tpr)
            && nonincreasing(&self.fpr)
            && self.tpr.iter().chain(&self.fpr).all(|r| (0.0..=1.0).contains(r))
    }

    /// Lowest threshold whose FPR does not exceed `fpr`.
    pub fn threshold_at_fpr(&self, fpr: f64) -> f64 {
        let i = self.fpr.iter().position(|&f| f <= fpr).expect("last threshold has FPR 0");
        self.thresholds[i]
    }
}
