//! Treatment-effect estimators.
//!
//! Four estimators are provided: the direct difference in arm means,
//! the RCT-only AIPW estimator, the combined-sample AIPW estimator on
//! a borrowing subset, and full borrowing (AIPW on the RCT pooled with
//! every EC). AIPW averages the per-unit values
//!
//! φᵢ = Aᵢ(Yᵢ−m̂₁)/ê − (1−Aᵢ)(Yᵢ−m̂₀)/(1−ê) + m̂₁ − m̂₀
//!
//! and reports se = sd(φ)/√n. When a reference value is supplied the
//! report carries bias = estimate − reference and mse = bias² + se².

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{combine, EcDataset, RctDataset};
use crate::error::{Error, Result};
use crate::glm::{self, Family};
use crate::kernel;

/// Propensity trimming default, matching common practice.
pub const DEFAULT_TRIM: f64 = 0.01;

/// How the outcome regressions m̂ₐ are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeRegressor {
    /// Family-matched GLM (linear or logistic). The default.
    Glm,
    /// Gaussian-kernel ridge regression on each arm.
    KernelRidge,
}

/// A known propensity score, bypassing the logistic fit.
#[derive(Debug, Clone)]
pub enum PsSpec {
    Const(f64),
    PerRow(Vec<f64>),
}

/// Fitted nuisances aligned with a dataset's rows.
#[derive(Debug, Clone)]
pub struct NuisanceEstimates {
    /// Propensity scores, clamped to [trim, 1−trim].
    pub ps_hat: DVector<f64>,
    pub mu1_hat: DVector<f64>,
    pub mu0_hat: DVector<f64>,
    pub trim: f64,
}

/// A point estimate with its influence-function values.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub se: f64,
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub n_used: usize,
}

impl EstimateReport {
    fn from_phi(phi: Vec<f64>, reference: Option<f64>) -> Self {
        let n = phi.len();
        let estimate = phi.iter().sum::<f64>() / n as f64;
        let var_phi = if n > 1 {
            phi.iter().map(|&v| (v - estimate) * (v - estimate)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        let se = (var_phi / n as f64).sqrt();
        let bias = reference.map(|r| estimate - r);
        let mse = bias.map(|b| b * b + se * se);
        Self { estimate, se, phi, bias, mse, n_used: n }
    }

    /// Attaches bias and mse relative to a reference value.
    pub fn with_reference(mut self, reference: f64) -> Self {
        let bias = self.estimate - reference;
        self.bias = Some(bias);
        self.mse = Some(bias * bias + self.se * self.se);
        self
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
}

/// Direct contrast of treated and control outcome means in the RCT.
pub fn estimate_direct(rct: &RctDataset) -> Result<EstimateReport> {
    let n = rct.n();
    let treated: Vec<f64> =
        (0..n).filter(|&i| rct.a()[i] == 1).map(|i| rct.y()[i]).collect();
    let controls: Vec<f64> =
        (0..n).filter(|&i| rct.a()[i] == 0).map(|i| rct.y()[i]).collect();
    if treated.is_empty() {
        return Err(Error::ArmMissing { arm: "treated" });
    }
    if controls.is_empty() {
        return Err(Error::ArmMissing { arm: "control" });
    }
    let n1t = treated.len() as f64;
    let n1c = controls.len() as f64;
    let mean1 = treated.iter().sum::<f64>() / n1t;
    let mean0 = controls.iter().sum::<f64>() / n1c;
    let estimate = mean1 - mean0;
    let se = (sample_variance(&treated) / n1t + sample_variance(&controls) / n1c).sqrt();

    // Influence contributions of the difference in means; their average
    // is the estimate exactly.
    let pi1 = n1t / n as f64;
    let pi0 = n1c / n as f64;
    let phi: Vec<f64> = (0..n)
        .map(|i| {
            let a = f64::from(rct.a()[i]);
            a * (rct.y()[i] - mean1) / pi1 - (1.0 - a) * (rct.y()[i] - mean0) / pi0 + estimate
        })
        .collect();
    Ok(EstimateReport { estimate, se, phi, bias: None, mse: None, n_used: n })
}

fn fit_outcome_arm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: &[usize],
    family: Family,
    regressor: OutcomeRegressor,
    arm: &'static str,
) -> Result<DVector<f64>> {
    if rows.is_empty() {
        return Err(Error::ArmMissing { arm });
    }
    let x_arm = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    let y_arm = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    match regressor {
        OutcomeRegressor::Glm => {
            let fit = glm::fit_glm(&x_arm, &y_arm, family)?;
            fit.predict(x)
        }
        OutcomeRegressor::KernelRidge => {
            let fit = kernel::fit_kernel_ridge(&x_arm, &y_arm)?;
            fit.predict(x)
        }
    }
}

/// Fits the propensity and per-arm outcome nuisances on one sample.
///
/// The propensity is a logistic regression of A on X unless `known_ps`
/// is given; fitted or known values are clamped to [trim, 1−trim].
/// m̂₀ is fitted on every A=0 row (so borrowed ECs contribute), m̂₁ on
/// the treated rows.
pub fn fit_nuisances(
    x: &DMatrix<f64>,
    a: &[u8],
    y: &DVector<f64>,
    family: Family,
    trim: f64,
    known_ps: Option<&PsSpec>,
    regressor: OutcomeRegressor,
) -> Result<NuisanceEstimates> {
    let n = x.nrows();
    if a.len() != n || y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "x has {n} rows, a has {}, y has {}",
            a.len(),
            y.len()
        )));
    }
    if !(trim > 0.0 && trim < 0.5) {
        return Err(Error::InvalidArgument(format!("trim must be in (0, 0.5), got {trim}")));
    }

    let mut ps_hat = match known_ps {
        Some(PsSpec::Const(p)) => {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::InvalidArgument(format!("known ps must be in (0,1), got {p}")));
            }
            DVector::from_element(n, *p)
        }
        Some(PsSpec::PerRow(v)) => {
            if v.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "known ps has {} entries for {n} rows",
                    v.len()
                )));
            }
            if v.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::InvalidArgument("known ps entries must be in (0,1)".into()));
            }
            DVector::from_vec(v.clone())
        }
        None => {
            let a_vec = DVector::from_iterator(n, a.iter().map(|&v| f64::from(v)));
            let fit = glm::fit_glm(x, &a_vec, Family::BinomialLogit)?;
            fit.predict(x)?
        }
    };
    for p in ps_hat.iter_mut() {
        *p = p.clamp(trim, 1.0 - trim);
    }

    let treated_rows: Vec<usize> = (0..n).filter(|&i| a[i] == 1).collect();
    let control_rows: Vec<usize> = (0..n).filter(|&i| a[i] == 0).collect();
    let mu1_hat = fit_outcome_arm(x, y, &treated_rows, family, regressor, "treated")?;
    let mu0_hat = fit_outcome_arm(x, y, &control_rows, family, regressor, "control")?;

    Ok(NuisanceEstimates { ps_hat, mu1_hat, mu0_hat, trim })
}

/// AIPW estimate over one sample with pre-fitted nuisances.
pub fn estimate_aipw(
    a: &[u8],
    y: &DVector<f64>,
    nuisances: &NuisanceEstimates,
    reference: Option<f64>,
) -> Result<EstimateReport> {
    let n = a.len();
    if y.len() != n || nuisances.ps_hat.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "a has {n} rows, y has {}, nuisances have {}",
            y.len(),
            nuisances.ps_hat.len()
        )));
    }
    let phi: Vec<f64> = (0..n)
        .map(|i| {
            let ai = f64::from(a[i]);
            let e = nuisances.ps_hat[i];
            ai * (y[i] - nuisances.mu1_hat[i]) / e
                - (1.0 - ai) * (y[i] - nuisances.mu0_hat[i]) / (1.0 - e)
                + nuisances.mu1_hat[i]
                - nuisances.mu0_hat[i]
        })
        .collect();
    Ok(EstimateReport::from_phi(phi, reference))
}

/// The two RCT-only benchmark estimates.
#[derive(Debug, Clone)]
pub struct RctEstimates {
    pub direct: EstimateReport,
    pub aipw: EstimateReport,
}

/// Direct and AIPW estimates using the RCT sample alone.
pub fn estimate_rct(
    rct: &RctDataset,
    family: Family,
    trim: f64,
    known_ps: Option<&PsSpec>,
) -> Result<RctEstimates> {
    let direct = estimate_direct(rct)?;
    let nuisances = fit_nuisances(
        rct.x(),
        rct.a(),
        rct.y(),
        family,
        trim,
        known_ps,
        OutcomeRegressor::Glm,
    )?;
    let aipw = estimate_aipw(rct.a(), rct.y(), &nuisances, None)?;
    Ok(RctEstimates { direct, aipw })
}

/// Full borrowing: AIPW on the RCT pooled with the entire EC set,
/// with freshly fitted nuisances on the combined sample.
pub fn estimate_full(
    rct: &RctDataset,
    ec: &EcDataset,
    family: Family,
    reference: f64,
    trim: f64,
    regressor: OutcomeRegressor,
) -> Result<EstimateReport> {
    let combined = combine(rct, ec)?;
    let nuisances = fit_nuisances(
        combined.x(),
        combined.a(),
        combined.y(),
        family,
        trim,
        None,
        regressor,
    )?;
    estimate_aipw(combined.a(), combined.y(), &nuisances, Some(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn constant_effect_rct() -> RctDataset {
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let a = vec![1, 1, 1, 0, 0, 0];
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        RctDataset::new(x, a, y, OutcomeKind::Binary, None).unwrap()
    }

    #[test]
    fn direct_on_degenerate_arms() {
        let report = estimate_direct(&constant_effect_rct()).unwrap();
        assert_eq!(report.estimate, 1.0);
        assert_eq!(report.se, 0.0);
        let mean_phi = report.phi.iter().sum::<f64>() / report.phi.len() as f64;
        assert!((mean_phi - report.estimate).abs() < 1e-15);
    }

    #[test]
    fn direct_recovers_mech2_effect() {
        let reps = 200;
        let mut estimates = Vec::with_capacity(reps);
        for rep in 0..reps {
            let data = crate::simgen::gen_mech2(100, 40, 4000 + rep as u64).unwrap();
            estimates.push(estimate_direct(&data.rct).unwrap().estimate);
        }
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let sd = sample_variance(&estimates).sqrt();
        let mc_se = sd / (reps as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * mc_se, "mean {mean:.3}, 3·MC-SE {:.3}", 3.0 * mc_se);
    }

    #[test]
    fn known_ps_bypasses_logistic_fit() {
        let rct = constant_effect_rct();
        let nu = fit_nuisances(
            rct.x(),
            rct.a(),
            rct.y(),
            Family::GaussianIdentity,
            0.01,
            Some(&PsSpec::Const(0.5)),
            OutcomeRegressor::Glm,
        )
        .unwrap();
        assert!(nu.ps_hat.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn fitted_ps_near_half_under_randomization() {
        let mut r = ChaCha8Rng::seed_from_u64(15);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 10_000;
        let x = DMatrix::from_fn(n, 1, |_, _| normal.sample(&mut r));
        let a: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + normal.sample(&mut r));
        let nu = fit_nuisances(
            &x,
            &a,
            &y,
            Family::GaussianIdentity,
            0.01,
            None,
            OutcomeRegressor::Glm,
        )
        .unwrap();
        let mean_ps = nu.ps_hat.mean();
        assert!((mean_ps - 0.5).abs() < 0.02, "mean ps {mean_ps}");
    }

    #[test]
    fn trim_clamps_extreme_scores() {
        let rct = constant_effect_rct();
        let extreme = PsSpec::PerRow(vec![0.001, 0.5, 0.9995, 0.4, 0.6, 0.001]);
        let nu = fit_nuisances(
            rct.x(),
            rct.a(),
            rct.y(),
            Family::GaussianIdentity,
            0.01,
            Some(&extreme),
            OutcomeRegressor::Glm,
        )
        .unwrap();
        assert_eq!(nu.ps_hat[0], 0.01);
        assert_eq!(nu.ps_hat[2], 0.99);
        assert_eq!(nu.ps_hat[1], 0.5);
    }

    #[test]
    fn aipw_exact_with_perfect_nuisances() {
        // Noiseless data, e≡0.5, perfectly fitted outcome models: the
        // residual terms vanish and the estimate is the true effect.
        let n = 10;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let a: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let effect = 2.0;
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)] + if a[i] == 1 { effect } else { 0.0 }
        });
        let mu0 = DVector::from_fn(n, |i, _| x[(i, 0)]);
        let mu1 = DVector::from_fn(n, |i, _| x[(i, 0)] + effect);
        let nu = NuisanceEstimates {
            ps_hat: DVector::from_element(n, 0.5),
            mu1_hat: mu1,
            mu0_hat: mu0,
            trim: 0.01,
        };
        let report = estimate_aipw(&a, &y, &nu, Some(effect)).unwrap();
        assert!((report.estimate - effect).abs() < 1e-12);
        assert_eq!(report.bias.unwrap(), report.estimate - effect);
        let mse = report.mse.unwrap();
        let recomputed = report.bias.unwrap().powi(2) + report.se * report.se;
        assert!((mse - recomputed).abs() < 1e-12);
    }

    #[test]
    fn phi_mean_and_variance_identities() {
        let mut r = ChaCha8Rng::seed_from_u64(31);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |_, _| normal.sample(&mut r));
        let a: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
        let y = DVector::from_fn(n, |i, _| {
            1.0 + x[(i, 0)] - x[(i, 1)] + 2.0 * f64::from(a[i]) + normal.sample(&mut r)
        });
        let nu = fit_nuisances(
            &x,
            &a,
            &y,
            Family::GaussianIdentity,
            0.01,
            None,
            OutcomeRegressor::Glm,
        )
        .unwrap();
        let report = estimate_aipw(&a, &y, &nu, None).unwrap();
        let mean_phi = report.phi.iter().sum::<f64>() / n as f64;
        assert!((mean_phi - report.estimate).abs() < 1e-12);
        let var_phi = sample_variance(&report.phi);
        assert!((report.se * report.se * n as f64 - var_phi).abs() < 1e-10);
    }

    #[test]
    fn translation_invariance_of_effect_estimates() {
        let mut r = ChaCha8Rng::seed_from_u64(32);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 120;
        let x = DMatrix::from_fn(n, 1, |_, _| normal.sample(&mut r));
        let mut a: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
        a[0] = 1;
        a[1] = 0;
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)] - f64::from(a[i]) + 0.3 * normal.sample(&mut r)
        });
        let rct =
            RctDataset::new(x.clone(), a.clone(), y.clone(), OutcomeKind::Continuous, None).unwrap();
        let shifted = RctDataset::new(
            x,
            a,
            y.add_scalar(7.5),
            OutcomeKind::Continuous,
            None,
        )
        .unwrap();
        let base = estimate_rct(&rct, Family::GaussianIdentity, 0.01, None).unwrap();
        let moved = estimate_rct(&shifted, Family::GaussianIdentity, 0.01, None).unwrap();
        assert!((base.direct.estimate - moved.direct.estimate).abs() < 1e-8);
        assert!((base.aipw.estimate - moved.aipw.estimate).abs() < 1e-8);
    }

    #[test]
    fn known_ps_changes_only_the_weighting() {
        let mut r = ChaCha8Rng::seed_from_u64(33);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 150;
        let x = DMatrix::from_fn(n, 1, |_, _| normal.sample(&mut r));
        let mut a: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
        a[0] = 1;
        a[1] = 0;
        let y = DVector::from_fn(n, |i, _| {
            1.0 + x[(i, 0)] + f64::from(a[i]) + 0.5 * normal.sample(&mut r)
        });
        let fitted = fit_nuisances(
            &x,
            &a,
            &y,
            Family::GaussianIdentity,
            0.01,
            None,
            OutcomeRegressor::Glm,
        )
        .unwrap();
        let known = fit_nuisances(
            &x,
            &a,
            &y,
            Family::GaussianIdentity,
            0.01,
            Some(&PsSpec::Const(0.5)),
            OutcomeRegressor::Glm,
        )
        .unwrap();
        // Outcome models identical, so φ differs only through ê.
        assert_eq!(fitted.mu1_hat, known.mu1_hat);
        assert_eq!(fitted.mu0_hat, known.mu0_hat);
        let rep_fitted = estimate_aipw(&a, &y, &fitted, None).unwrap();
        let rep_known = estimate_aipw(&a, &y, &known, None).unwrap();
        for i in 0..n {
            let ai = f64::from(a[i]);
            let expected = ai * (y[i] - known.mu1_hat[i]) / 0.5
                - (1.0 - ai) * (y[i] - known.mu0_hat[i]) / 0.5
                + known.mu1_hat[i]
                - known.mu0_hat[i];
            assert!((rep_known.phi[i] - expected).abs() < 1e-12);
        }
        assert!(rep_fitted.estimate != rep_known.estimate);
    }

    #[test]
    fn full_borrowing_is_aipw_on_combined_sample() {
        let data = crate::simgen::gen_mech2(80, 60, 99).unwrap();
        let report = estimate_full(
            &data.rct,
            &data.ec,
            Family::GaussianIdentity,
            3.0,
            0.01,
            OutcomeRegressor::Glm,
        )
        .unwrap();
        let combined = combine(&data.rct, &data.ec).unwrap();
        let nu = fit_nuisances(
            combined.x(),
            combined.a(),
            combined.y(),
            Family::GaussianIdentity,
            0.01,
            None,
            OutcomeRegressor::Glm,
        )
        .unwrap();
        let manual = estimate_aipw(combined.a(), combined.y(), &nu, Some(3.0)).unwrap();
        assert_eq!(report.estimate, manual.estimate);
        assert_eq!(report.se, manual.se);
        assert_eq!(report.n_used, data.rct.n() + data.ec.n());
    }
}
