//! Outcome calibration of external controls (Step 0).
//!
//! A bias function b(x) captures the systematic covariate-dependent
//! discrepancy between EC and RCT-control outcomes. It is estimated on
//! the pooled controls by minimizing the R-learner objective
//!
//! Σᵢ ( Yᵢ − m̂(Xᵢ) − (π̂₀(Xᵢ) − Rᵢ)·b(Xᵢ) )²
//!
//! where π̂₀ is the sampling score (probability a pooled control comes
//! from the RCT) and m̂ the pooled-control outcome regression. EC
//! outcomes are then adjusted as Ỹ = Y − b̂(X). The calibrated outcome
//! is continuous, so downstream influence and AIPW steps run under the
//! Gaussian-identity family.

use nalgebra::{DMatrix, DVector};

use crate::data::{ControlRows, EcDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::glm::{self, Family, GlmFit};
use crate::kernel::{self, KernelRidgeFit};

/// Sampling-score predictions are clamped to (ε, 1−ε).
const SCORE_EPS: f64 = 1e-6;
/// If every |π̂₀ − R| falls below this, the transformed regression is
/// hopeless and we refuse to amplify noise.
const DEGENERACY_GUARD: f64 = 1e-3;

/// Functional form of the bias function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasKind {
    Linear,
    KernelRidge,
}

/// Pooled-control outcome regression m̂(x), matched to the bias kind.
#[derive(Debug, Clone)]
pub enum OutcomeModel {
    Glm(GlmFit),
    Kernel(KernelRidgeFit),
}

impl OutcomeModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            OutcomeModel::Glm(fit) => fit.predict(x),
            OutcomeModel::Kernel(fit) => fit.predict(x),
        }
    }
}

#[derive(Debug, Clone)]
enum BiasEstimator {
    /// b(x) = x̃ᵀβ (intercept first).
    Linear(DVector<f64>),
    /// b(x) = Σⱼ αⱼ wⱼ k(x, xⱼ) over the pooled-control rows.
    Kernel {
        train_x: DMatrix<f64>,
        weighted_alpha: DVector<f64>,
        sigma2: f64,
        lambda: f64,
    },
}

/// Fitted bias function plus the nuisances backing it.
#[derive(Debug, Clone)]
pub struct BiasModel {
    pub kind: BiasKind,
    estimator: BiasEstimator,
    pub sampling_score: GlmFit,
    pub outcome_model: OutcomeModel,
}

impl BiasModel {
    /// b̂ at the rows of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match &self.estimator {
            BiasEstimator::Linear(beta) => {
                if x.ncols() + 1 != beta.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "bias model expects {} covariate columns, got {}",
                        beta.len() - 1,
                        x.ncols()
                    )));
                }
                Ok(glm::design(x) * beta)
            }
            BiasEstimator::Kernel { train_x, weighted_alpha, sigma2, .. } => {
                if x.ncols() != train_x.ncols() {
                    return Err(Error::ShapeMismatch(format!(
                        "bias model expects {} covariate columns, got {}",
                        train_x.ncols(),
                        x.ncols()
                    )));
                }
                Ok(kernel::gaussian_gram(x, train_x, *sigma2) * weighted_alpha)
            }
        }
    }

    /// Linear coefficients (intercept first) when the kind is linear.
    pub fn linear_coefficients(&self) -> Option<&DVector<f64>> {
        match &self.estimator {
            BiasEstimator::Linear(beta) => Some(beta),
            BiasEstimator::Kernel { .. } => None,
        }
    }

    /// Ridge penalty selected for the kernel bias fit, when applicable.
    pub fn kernel_lambda(&self) -> Option<f64> {
        match &self.estimator {
            BiasEstimator::Linear(_) => None,
            BiasEstimator::Kernel { lambda, .. } => Some(*lambda),
        }
    }
}

/// Logistic regression of the source flag R on covariates among the
/// pooled controls.
pub fn fit_sampling_score(x_controls: &DMatrix<f64>, r: &[u8]) -> Result<GlmFit> {
    if r.len() != x_controls.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "x has {} rows, r has {}",
            x_controls.nrows(),
            r.len()
        )));
    }
    if !r.contains(&0) || !r.contains(&1) {
        return Err(Error::SourceMissing);
    }
    let r_vec = DVector::from_iterator(r.len(), r.iter().map(|&v| f64::from(v)));
    glm::fit_glm(x_controls, &r_vec, Family::BinomialLogit)
}

/// Sampling-score predictions clamped to (ε, 1−ε).
pub fn predict_sampling_score(fit: &GlmFit, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(fit.predict(x)?.map(|p| p.clamp(SCORE_EPS, 1.0 - SCORE_EPS)))
}

/// Fits the bias function on pooled controls via the R-learner.
pub fn fit_rlearner(controls: &ControlRows, kind: BiasKind) -> Result<BiasModel> {
    let score_fit = fit_sampling_score(&controls.x, &controls.r)?;
    let pi0 = predict_sampling_score(&score_fit, &controls.x)?;
    fit_rlearner_with_score(controls, score_fit, pi0, kind)
}

pub(crate) fn fit_rlearner_with_score(
    controls: &ControlRows,
    sampling_score: GlmFit,
    pi0: DVector<f64>,
    kind: BiasKind,
) -> Result<BiasModel> {
    let n = controls.n();
    let outcome_model = match kind {
        BiasKind::Linear => {
            OutcomeModel::Glm(glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity)?)
        }
        BiasKind::KernelRidge => {
            OutcomeModel::Kernel(kernel::fit_kernel_ridge(&controls.x, &controls.y)?)
        }
    };
    let m_hat = outcome_model.predict(&controls.x)?;
    let pseudo = &controls.y - m_hat;
    let weights =
        DVector::from_fn(n, |i, _| pi0[i] - f64::from(controls.r[i]));
    if weights.amax() < DEGENERACY_GUARD {
        return Err(Error::SingularDesign(format!(
            "transformed regressors degenerate: max |π̂₀ − R| = {:.2e}",
            weights.amax()
        )));
    }

    let estimator = match kind {
        BiasKind::Linear => {
            // Least squares of the pseudo-residual on w·x̃.
            let mut design = glm::design(&controls.x);
            for i in 0..n {
                let w = weights[i];
                for j in 0..design.ncols() {
                    design[(i, j)] *= w;
                }
            }
            let dtd = design.transpose() * &design;
            let dty = design.transpose() * &pseudo;
            let (beta, _) = glm::solve_spd(&dtd, &dty)?;
            BiasEstimator::Linear(beta)
        }
        BiasKind::KernelRidge => {
            // Kernel ridge on the same transformed problem: the kernel of
            // the class (x, w) ↦ w·b(x) is K̃ᵢⱼ = wᵢ wⱼ k(xᵢ, xⱼ).
            let sigma2 = controls.x.ncols() as f64;
            let mut k_tilde = kernel::gaussian_gram(&controls.x, &controls.x, sigma2);
            for i in 0..n {
                for j in 0..n {
                    k_tilde[(i, j)] *= weights[i] * weights[j];
                }
            }
            let (lambda, alpha) = kernel::loo_select_lambda(&k_tilde, &pseudo, n as f64);
            let weighted_alpha = DVector::from_fn(n, |i, _| alpha[i] * weights[i]);
            BiasEstimator::Kernel {
                train_x: controls.x.clone(),
                weighted_alpha,
                sigma2,
                lambda,
            }
        }
    };
    Ok(BiasModel { kind, estimator, sampling_score, outcome_model })
}

/// Applies Ỹ = Y − b̂(X) to every EC outcome. Covariates are unchanged
/// and the result is a continuous-outcome dataset.
pub fn calibrate_ec(ec: &EcDataset, bias_model: &BiasModel) -> Result<EcDataset> {
    let bias = bias_model.predict(ec.x())?;
    let calibrated = ec.y() - bias;
    // Binary outcomes stop being 0/1 once the bias is subtracted.
    ec.with_outcomes(calibrated, OutcomeKind::Continuous)
}
