//! End-to-end analysis: optional calibration, outcome model fit,
//! influence scores, optimal-subset selection, and the benchmark
//! estimators, in one call.

use serde::Serialize;

use crate::calibration::{calibrate_ec, fit_rlearner, BiasKind, BiasModel};
use crate::data::{combine, EcDataset, RctDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_full, estimate_rct, EstimateReport, OutcomeRegressor, PsSpec, DEFAULT_TRIM,
};
use crate::glm::{self, Family};
use crate::influence::{compute_influences, InfluenceScores};
use crate::selection::{
    default_k_vector, find_optimal_k, sensitivity_sweep, KGrid, OptimalSelection,
    SelectionOptions,
};

/// Reference value used for the bias leg of every MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSpec {
    /// The RCT-only AIPW estimate (treats it as the zero-bias anchor).
    RctAipw,
    /// An externally supplied value (the true ATE in simulations).
    Value(f64),
}

/// Whether and how EC outcomes are calibrated before selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationKind {
    Off,
    Linear,
    Kernel,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub family: Family,
    pub trim: f64,
    /// Candidate subset sizes; `None` uses the default grid.
    pub k_vector: Option<Vec<usize>>,
    pub reference: ReferenceSpec,
    pub calibration: CalibrationKind,
    /// Known randomization probability for the RCT propensity.
    pub known_ps: Option<f64>,
    pub regressor: OutcomeRegressor,
    /// Half-width of the sensitivity sweep around k*; `None` skips it.
    pub sensitivity_delta: Option<usize>,
}

impl AnalysisOptions {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            trim: DEFAULT_TRIM,
            k_vector: None,
            reference: ReferenceSpec::RctAipw,
            calibration: CalibrationKind::Off,
            known_ps: None,
            regressor: OutcomeRegressor::Glm,
            sensitivity_delta: None,
        }
    }
}

/// Everything one analysis produces.
#[derive(Debug)]
pub struct AnalysisResult {
    pub reference_value: f64,
    pub direct: EstimateReport,
    pub aipw: EstimateReport,
    pub full: EstimateReport,
    pub aib: OptimalSelection,
    pub caib: Option<OptimalSelection>,
    pub influences: InfluenceScores,
    pub influences_calibrated: Option<InfluenceScores>,
    pub sensitivity: Option<KGrid>,
    pub calibrated_ec: Option<EcDataset>,
    pub bias_model: Option<BiasModel>,
}

/// One row of the comparison table (serialized into report.json).
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub estimator: String,
    pub estimate: f64,
    pub se: f64,
    pub bias: f64,
    pub mse: f64,
    pub n_used: usize,
    pub k: usize,
}

impl AnalysisResult {
    /// The comparison rows: direct, aipw, full, aib, and caib when
    /// calibration ran.
    pub fn table_rows(&self, n_ec: usize) -> Vec<TableRow> {
        fn row(name: &str, report: &EstimateReport, k: usize) -> TableRow {
            TableRow {
                estimator: name.to_string(),
                estimate: report.estimate,
                se: report.se,
                bias: report.bias.unwrap_or(f64::NAN),
                mse: report.mse.unwrap_or(f64::NAN),
                n_used: report.n_used,
                k,
            }
        }
        let mut rows = vec![
            row("direct", &self.direct, 0),
            row("aipw", &self.aipw, 0),
            row("full", &self.full, n_ec),
            row("aib", &self.aib.report, self.aib.k_star),
        ];
        if let Some(caib) = &self.caib {
            rows.push(row("caib", &caib.report, caib.k_star));
        }
        rows
    }
}

/// Runs the borrowing workflow end to end.
///
/// Steps: RCT-only benchmarks, reference resolution, full borrowing,
/// outcome model on RCT controls, influence scores, optimal-k
/// selection, optional sensitivity sweep, and (when enabled) outcome
/// calibration followed by a second selection pass on calibrated ECs.
/// Post-calibration fits run under the Gaussian family because
/// calibrated outcomes are continuous; influence scores for calibrated
/// ECs reuse the original RCT-controls model.
pub fn run_analysis(
    rct: &RctDataset,
    ec: &EcDataset,
    options: &AnalysisOptions,
) -> Result<AnalysisResult> {
    if ec.p() != rct.p() {
        return Err(Error::ShapeMismatch(format!(
            "EC has {} covariate columns, RCT has {}",
            ec.p(),
            rct.p()
        )));
    }
    let known_ps = options.known_ps.map(PsSpec::Const);
    let rct_estimates = estimate_rct(rct, options.family, options.trim, known_ps.as_ref())?;
    let reference_value = match options.reference {
        ReferenceSpec::RctAipw => rct_estimates.aipw.estimate,
        ReferenceSpec::Value(v) => {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "reference value must be finite, got {v}"
                )));
            }
            v
        }
    };
    let direct = rct_estimates.direct.with_reference(reference_value);
    let aipw = rct_estimates.aipw.with_reference(reference_value);
    let full = estimate_full(
        rct,
        ec,
        options.family,
        reference_value,
        options.trim,
        options.regressor,
    )?;

    let controls = rct.controls_only();
    let outcome_model = glm::fit_glm(&controls.x, &controls.y, options.family)?;
    let influences = compute_influences(&outcome_model, &controls, ec)?;

    let k_vector = options.k_vector.clone().unwrap_or_else(|| default_k_vector(ec.n()));
    let selection_options = SelectionOptions {
        family: options.family,
        trim: options.trim,
        regressor: options.regressor,
    };
    let aib = find_optimal_k(rct, ec, &influences, reference_value, &k_vector, &selection_options)?;

    let sensitivity = match options.sensitivity_delta {
        Some(delta) => Some(sensitivity_sweep(
            rct,
            ec,
            &influences,
            reference_value,
            aib.k_star,
            delta,
            &selection_options,
        )?),
        None => None,
    };

    let mut caib = None;
    let mut influences_calibrated = None;
    let mut calibrated_ec = None;
    let mut bias_model = None;
    if options.calibration != CalibrationKind::Off {
        let kind = match options.calibration {
            CalibrationKind::Linear => BiasKind::Linear,
            CalibrationKind::Kernel => BiasKind::KernelRidge,
            CalibrationKind::Off => unreachable!(),
        };
        let pooled = combine(rct, ec)?.controls_only();
        let model = fit_rlearner(&pooled, kind)?;
        let calibrated = calibrate_ec(ec, &model)?;
        let cal_influences = compute_influences(&outcome_model, &controls, &calibrated)?;
        // Calibrated outcomes are continuous, so the selection pass
        // switches to the Gaussian family.
        let cal_options = SelectionOptions {
            family: Family::GaussianIdentity,
            trim: options.trim,
            regressor: options.regressor,
        };
        caib = Some(find_optimal_k(
            rct,
            &calibrated,
            &cal_influences,
            reference_value,
            &k_vector,
            &cal_options,
        )?);
        influences_calibrated = Some(cal_influences);
        calibrated_ec = Some(calibrated);
        bias_model = Some(model);
    }

    Ok(AnalysisResult {
        reference_value,
        direct,
        aipw,
        full,
        aib,
        caib,
        influences,
        influences_calibrated,
        sensitivity,
        calibrated_ec,
        bias_model,
    })
}
