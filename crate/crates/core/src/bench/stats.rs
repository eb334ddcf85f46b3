//! Summary statistics over trials.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::TrialResult;

/// Mean and the half-width of its two-sided 95% t interval. The half-width
/// is `None` for fewer than two samples.
pub fn mean_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    // Sum in sorted order so the result does not depend on input order.
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * (var / n as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub m: u32,
    pub n: usize,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub trials: usize,
    pub reward_mean: f64,
    pub reward_ci95: Option<f64>,
    pub found_mean: f64,
    pub found_ci95: Option<f64>,
    pub steps_mean: f64,
}

/// Groups results by planner and setting, sorted by key. Independent of the
/// order of `results`.
pub fn aggregate(results: &[TrialResult]) -> Vec<SummaryRow> {
    let key = |r: &TrialResult| (r.planner.clone(), r.m, r.n, r.d, r.alpha, r.beta);
    let mut keys: Vec<_> = results.iter().map(key).collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
            .then(a.4.total_cmp(&b.4))
            .then(a.5.total_cmp(&b.5))
    });
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let group: Vec<&TrialResult> = results.iter().filter(|r| key(r) == k).collect();
            let col = |f: fn(&TrialResult) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (reward_mean, reward_ci95) = mean_ci95(&col(|r| r.reward));
            let (found_mean, found_ci95) = mean_ci95(&col(|r| r.found as f64));
            let (steps_mean, _) = mean_ci95(&col(|r| r.steps as f64));
            SummaryRow {
                planner: k.0,
                m: k.1,
                n: k.2,
                d: k.3,
                alpha: k.4,
                beta: k.5,
                trials: group.len(),
                reward_mean,
                reward_ci95,
                found_mean,
                found_ci95,
                steps_mean,
            }
        })
        .collect()
}
