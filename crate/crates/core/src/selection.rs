//! Nested borrowing subsets and MSE-optimal subset selection.
//!
//! ECs ranked by ascending influence score define nested candidate
//! subsets S₁ ⊂ … ⊂ S_{n₀}. For each candidate size k the combined
//! sample is assembled, nuisances refitted, and the AIPW estimate
//! evaluated against a reference value; k* minimizes the estimated
//! MSE = bias² + variance, with ties resolved to the smallest k.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{combine, EcDataset, RctDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_aipw, fit_nuisances, EstimateReport, OutcomeRegressor, DEFAULT_TRIM,
};
use crate::glm::Family;
use crate::influence::InfluenceScores;

/// One evaluated subset size.
#[derive(Debug, Clone, Serialize)]
pub struct KGridRow {
    pub top_k: usize,
    pub estimate: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Successful grid rows in ascending k order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct KGrid {
    pub rows: Vec<KGridRow>,
}

/// A candidate k whose evaluation failed (excluded from the argmin).
#[derive(Debug, Clone, Serialize)]
pub struct KFailure {
    pub top_k: usize,
    pub error: String,
}

/// The selected subset size with its estimate and the full grid.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalSelection {
    pub k_star: usize,
    pub report: EstimateReport,
    pub grid: KGrid,
    /// Original EC row indices of the borrowed subset (the first
    /// k_star entries of the influence ranking).
    pub selected_ec_indices: Vec<usize>,
    pub failures: Vec<KFailure>,
}

/// Knobs shared by every per-k evaluation.
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    pub family: Family,
    pub trim: f64,
    pub regressor: OutcomeRegressor,
}

impl SelectionOptions {
    pub fn new(family: Family) -> Self {
        Self { family, trim: DEFAULT_TRIM, regressor: OutcomeRegressor::Glm }
    }
}

/// Default candidate grid: 0..n₀ in steps of max(1, round(n₀/40)),
/// always including 0 and n₀.
pub fn default_k_vector(n0: usize) -> Vec<usize> {
    let step = ((n0 as f64 / 40.0).round() as usize).max(1);
    let mut ks: Vec<usize> = (0..=n0).step_by(step).collect();
    if *ks.last().expect("non-empty") != n0 {
        ks.push(n0);
    }
    ks
}

/// The k ECs with the smallest influence scores, in ranking order.
pub fn nested_subset(
    ec: &EcDataset,
    influences: &InfluenceScores,
    k: usize,
) -> Result<EcDataset> {
    if influences.n() != ec.n() {
        return Err(Error::ShapeMismatch(format!(
            "{} influence scores for {} EC rows",
            influences.n(),
            ec.n()
        )));
    }
    if k > ec.n() {
        return Err(Error::KOutOfRange { k, n0: ec.n() });
    }
    ec.select_rows(&influences.ranking[..k])
}

fn evaluate_k(
    rct: &RctDataset,
    ec: &EcDataset,
    influences: &InfluenceScores,
    reference_value: f64,
    k: usize,
    options: &SelectionOptions,
) -> Result<(KGridRow, EstimateReport)> {
    let subset = nested_subset(ec, influences, k)?;
    let combined = combine(rct, &subset)?;
    let nuisances = fit_nuisances(
        combined.x(),
        combined.a(),
        combined.y(),
        options.family,
        options.trim,
        None,
        options.regressor,
    )?;
    let report = estimate_aipw(combined.a(), combined.y(), &nuisances, Some(reference_value))?;
    let bias = report.bias.expect("reference supplied");
    let row = KGridRow {
        top_k: k,
        estimate: report.estimate,
        bias,
        variance: report.se * report.se,
        mse: report.mse.expect("reference supplied"),
    };
    Ok((row, report))
}

/// Index of the minimum-mse row; the scan order makes ties resolve to
/// the smallest k (rows are in ascending k order).
pub fn argmin_mse(rows: &[KGridRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if best.is_none_or(|b| row.mse < rows[b].mse) {
            best = Some(i);
        }
    }
    best
}

/// Evaluates every candidate k and selects the MSE-minimizing subset.
///
/// Candidate evaluations run in parallel; the grid is assembled in k
/// order so results are deterministic. A failing k is recorded and
/// excluded from the argmin; if every candidate fails the selection
/// fails as a whole.
pub fn find_optimal_k(
    rct: &RctDataset,
    ec: &EcDataset,
    influences: &InfluenceScores,
    reference_value: f64,
    k_vector: &[usize],
    options: &SelectionOptions,
) -> Result<OptimalSelection> {
    if !reference_value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reference value must be finite, got {reference_value}"
        )));
    }
    if k_vector.is_empty() {
        return Err(Error::InvalidArgument("k_vector must be non-empty".into()));
    }
    if k_vector.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("k_vector must be sorted and unique".into()));
    }
    if let Some(&k) = k_vector.iter().find(|&&k| k > ec.n()) {
        return Err(Error::KOutOfRange { k, n0: ec.n() });
    }

    let evaluated: Vec<(usize, Result<(KGridRow, EstimateReport)>)> = k_vector
        .par_iter()
        .map(|&k| (k, evaluate_k(rct, ec, influences, reference_value, k, options)))
        .collect();

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in evaluated {
        match outcome {
            Ok((row, report)) => {
                rows.push(row);
                reports.push(report);
            }
            Err(e) => failures.push(KFailure { top_k: k, error: e.to_string() }),
        }
    }
    let Some(best) = argmin_mse(&rows) else {
        let first = failures.first().expect("all candidates failed");
        return Err(Error::SelectionFailed {
            first_k: first.top_k,
            first_error: first.error.clone(),
        });
    };
    let k_star = rows[best].top_k;
    Ok(OptimalSelection {
        k_star,
        report: reports.swap_remove(best),
        grid: KGrid { rows },
        selected_ec_indices: influences.ranking[..k_star].to_vec(),
        failures,
    })
}

/// Re-evaluates the grid on [k*−delta, k*+delta] in steps of 1,
/// clipped to [0, n₀].
pub fn sensitivity_sweep(
    rct: &RctDataset,
    ec: &EcDataset,
    influences: &InfluenceScores,
    reference_value: f64,
    k_star: usize,
    delta: usize,
    options: &SelectionOptions,
) -> Result<KGrid> {
    if delta < 1 {
        return Err(Error::InvalidArgument("delta must be at least 1".into()));
    }
    let lo = k_star.saturating_sub(delta);
    let hi = (k_star + delta).min(ec.n());
    let evaluated: Vec<Result<(KGridRow, EstimateReport)>> = (lo..=hi)
        .collect::<Vec<usize>>()
        .par_iter()
        .map(|&k| evaluate_k(rct, ec, influences, reference_value, k, options))
        .collect();
    let rows: Vec<KGridRow> = evaluated
        .into_iter()
        .filter_map(|r| r.ok().map(|(row, _)| row))
        .collect();
    if rows.is_empty() {
        return Err(Error::SelectionFailed {
            first_k: lo,
            first_error: "no grid point evaluated successfully".into(),
        });
    }
    Ok(KGrid { rows })
}
