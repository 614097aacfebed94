//! Generalized linear models with explicit per-unit loss, gradient,
//! and Hessian.
//!
//! Two families are supported: Gaussian with identity link (fitted by
//! the normal equations) and Binomial with logit link (fitted by IRLS
//! with step-halving). The per-unit loss is the negative log-likelihood
//! (Gaussian scaled to half the squared error), so the model deviance
//! equals twice the total loss in both families.
//!
//! An intercept is always included and is never part of the input
//! covariate matrix; it occupies coefficient index 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// IRLS tolerance on the relative deviance change.
pub const IRLS_TOLERANCE: f64 = 1e-8;
/// IRLS iteration cap.
pub const IRLS_MAX_ITERATIONS: usize = 100;
/// Coefficients beyond this sup-norm at convergence are reported as
/// perfect separation instead of returned silently.
pub const SEPARATION_THRESHOLD: f64 = 30.0;

const RANK_TOLERANCE: f64 = 1e-12;
const MIN_IRLS_WEIGHT: f64 = 1e-10;
const MAX_STEP_HALVINGS: usize = 30;

/// Outcome model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    GaussianIdentity,
    BinomialLogit,
}

impl Family {
    /// Mean response for a linear predictor value.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => expit(eta),
        }
    }

    fn loss_from_eta(self, eta: f64, y: f64) -> f64 {
        match self {
            Family::GaussianIdentity => 0.5 * (y - eta) * (y - eta),
            // -y*eta + log(1 + exp(eta)), computed stably.
            Family::BinomialLogit => -y * eta + softplus(eta),
        }
    }

    /// dL/dη. Multiplying by the design row gives the coefficient gradient.
    fn dloss_deta(self, eta: f64, y: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta - y,
            Family::BinomialLogit => expit(eta) - y,
        }
    }

    /// d²L/dη² (the IRLS weight).
    fn curvature(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => 1.0,
            Family::BinomialLogit => {
                let mu = expit(eta);
                mu * (1.0 - mu)
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(v)) without overflow.
fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Prepends the intercept column to a covariate matrix.
pub fn design(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut d = DMatrix::zeros(n, p + 1);
    d.column_mut(0).fill(1.0);
    if p > 0 {
        d.view_mut((0, 1), (n, p)).copy_from(x);
    }
    d
}

fn design_row(x_row: &[f64]) -> DVector<f64> {
    let mut row = DVector::zeros(x_row.len() + 1);
    row[0] = 1.0;
    for (j, v) in x_row.iter().enumerate() {
        row[j + 1] = *v;
    }
    row
}

fn eta_for_row(theta: &DVector<f64>, x_row: &[f64]) -> f64 {
    debug_assert_eq!(theta.len(), x_row.len() + 1);
    theta[0] + x_row.iter().zip(theta.iter().skip(1)).map(|(x, t)| x * t).sum::<f64>()
}

/// Per-unit loss at an arbitrary coefficient vector.
pub fn unit_loss_at(family: Family, theta: &DVector<f64>, x_row: &[f64], y: f64) -> f64 {
    family.loss_from_eta(eta_for_row(theta, x_row), y)
}

/// Per-unit coefficient gradient at an arbitrary coefficient vector.
pub fn unit_gradient_at(family: Family, theta: &DVector<f64>, x_row: &[f64], y: f64) -> DVector<f64> {
    let scale = family.dloss_deta(eta_for_row(theta, x_row), y);
    let mut g = design_row(x_row);
    g *= scale;
    g
}

/// A fitted GLM.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Intercept first, then one coefficient per covariate column.
    pub coefficients: DVector<f64>,
    pub family: Family,
    pub converged: bool,
    pub iterations: usize,
    /// Residual deviance (twice the total per-unit loss).
    pub deviance: f64,
    /// Condition number estimate of the final weighted normal-equation matrix.
    pub condition_estimate: f64,
    #[allow(dead_code)]
    pub(crate) deviance_trace: Vec<f64>,
}

impl GlmFit {
    /// Mean predictions for the rows of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() + 1 != self.coefficients.len() {
            return Err(Error::ShapeMismatch(format!(
                "fit expects {} covariate columns, got {}",
                self.coefficients.len() - 1,
                x.ncols()
            )));
        }
        let eta = design(x) * &self.coefficients;
        Ok(match self.family {
            Family::GaussianIdentity => eta,
            // Clamp so predictions stay strictly inside (0,1) even when
            // the linear predictor saturates in floating point.
            Family::BinomialLogit => eta.map(|e| expit(e).clamp(1e-12, 1.0 - 1e-12)),
        })
    }

    pub fn unit_loss(&self, x_row: &[f64], y: f64) -> f64 {
        unit_loss_at(self.family, &self.coefficients, x_row, y)
    }

    pub fn unit_gradient(&self, x_row: &[f64], y: f64) -> DVector<f64> {
        unit_gradient_at(self.family, &self.coefficients, x_row, y)
    }
}

/// Mean predictions; free-function form of [`GlmFit::predict`].
pub fn predict_mean(fit: &GlmFit, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    fit.predict(x)
}

/// Average per-unit Hessian of the loss over the rows of `x`,
/// evaluated at the fitted coefficients. Symmetric positive
/// semidefinite; for the binomial family it equals the IRLS weighting
/// matrix X̃ᵀWX̃ divided by the row count.
pub fn avg_hessian(fit: &GlmFit, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() + 1 != fit.coefficients.len() {
        return Err(Error::ShapeMismatch(format!(
            "fit expects {} covariate columns, got {}",
            fit.coefficients.len() - 1,
            x.ncols()
        )));
    }
    let n = x.nrows();
    let d = design(x);
    let eta = &d * &fit.coefficients;
    let q = d.ncols();
    let mut h = DMatrix::zeros(q, q);
    for i in 0..n {
        let w = fit.family.curvature(eta[i]);
        let row = d.row(i);
        for a in 0..q {
            for b in 0..q {
                h[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    h /= n as f64;
    Ok(h)
}

/// Solves the symmetric positive-definite system `a x = b`, returning
/// the solution and a condition-number estimate. Rank deficiency is a
/// `SingularDesign` error.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let eigen = a.clone().symmetric_eigen();
    let max_eig = eigen.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let min_eig = eigen.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max_eig <= 0.0 || min_eig <= RANK_TOLERANCE * max_eig {
        return Err(Error::SingularDesign(format!(
            "smallest eigenvalue {min_eig:.3e} vs largest {max_eig:.3e}"
        )));
    }
    let mut projected = eigen.eigenvectors.transpose() * b;
    for (v, lambda) in projected.iter_mut().zip(eigen.eigenvalues.iter()) {
        *v /= *lambda;
    }
    Ok((&eigen.eigenvectors * projected, max_eig / min_eig))
}

fn total_deviance(family: Family, eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    2.0 * eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| family.loss_from_eta(e, yi))
        .sum::<f64>()
}

/// Fits a GLM of `y` on `x` (intercept added internally).
///
/// Gaussian-identity solves the normal equations; binomial-logit runs
/// IRLS with step-halving until the relative deviance change drops
/// below [`IRLS_TOLERANCE`].
pub fn fit_glm(x: &DMatrix<f64>, y: &DVector<f64>, family: Family) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if n < p + 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} rows to fit {} coefficients, got {n}",
            p + 2,
            p + 1
        )));
    }
    if family == Family::BinomialLogit && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(
            "binomial fits require a 0/1 outcome".into(),
        ));
    }
    let d = design(x);
    match family {
        Family::GaussianIdentity => {
            let xtx = d.transpose() * &d;
            let xty = d.transpose() * y;
            let (theta, condition) = solve_spd(&xtx, &xty)?;
            let eta = &d * &theta;
            let deviance = total_deviance(family, &eta, y);
            Ok(GlmFit {
                coefficients: theta,
                family,
                converged: true,
                iterations: 1,
                deviance,
                condition_estimate: condition,
                deviance_trace: vec![deviance],
            })
        }
        Family::BinomialLogit => irls_binomial(&d, y),
    }
}

fn irls_binomial(d: &DMatrix<f64>, y: &DVector<f64>) -> Result<GlmFit> {
    let q = d.ncols();
    let mut theta = DVector::zeros(q);
    let mut eta = DVector::zeros(d.nrows());
    let mut deviance = total_deviance(Family::BinomialLogit, &eta, y);
    let mut trace = vec![deviance];
    let mut condition = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..IRLS_MAX_ITERATIONS {
        iterations += 1;
        let mut xtwx = DMatrix::zeros(q, q);
        let mut xtwz = DVector::zeros(q);
        for i in 0..d.nrows() {
            let mu = expit(eta[i]);
            let w = (mu * (1.0 - mu)).max(MIN_IRLS_WEIGHT);
            let z = eta[i] + (y[i] - mu) / w;
            let row = d.row(i);
            for a in 0..q {
                xtwz[a] += w * row[a] * z;
                for b in 0..q {
                    xtwx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let (mut candidate, cond) = solve_spd(&xtwx, &xtwz)?;
        condition = cond;

        let mut cand_eta = d * &candidate;
        let mut cand_dev = total_deviance(Family::BinomialLogit, &cand_eta, y);
        let mut halvings = 0;
        while cand_dev > deviance + 1e-12 && halvings < MAX_STEP_HALVINGS {
            candidate = (&candidate + &theta) * 0.5;
            cand_eta = d * &candidate;
            cand_dev = total_deviance(Family::BinomialLogit, &cand_eta, y);
            halvings += 1;
        }
        if cand_dev > deviance + 1e-12 {
            // No descent direction left; we are at a minimum up to noise.
            converged = true;
            break;
        }
        let change = deviance - cand_dev;
        theta = candidate;
        eta = cand_eta;
        deviance = cand_dev;
        trace.push(deviance);
        if change / (deviance.abs() + 0.1) < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }

    let max_abs_coef = theta.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if max_abs_coef > SEPARATION_THRESHOLD {
        return Err(Error::PerfectSeparation {
            max_abs_coef,
            threshold: SEPARATION_THRESHOLD,
        });
    }
    if !converged {
        return Err(Error::Nonconvergence { iterations });
    }
    Ok(GlmFit {
        coefficients: theta,
        family: Family::BinomialLogit,
        converged,
        iterations,
        deviance,
        condition_estimate: condition,
        deviance_trace: trace,
    })
}

/// Forward-stepwise covariate selection by AIC (deviance + 2·#params).
///
/// Starts from the intercept-only model and greedily adds the column
/// with the lowest AIC until no addition improves it. Candidate fits
/// that fail (collinearity, separation) are skipped. The returned
/// indices are sorted ascending; the procedure is deterministic given
/// the column order.
pub fn select_covariates_aic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
) -> Result<Vec<usize>> {
    let p = x.ncols();
    let intercept_only = fit_glm(&DMatrix::zeros(x.nrows(), 0), y, family)?;
    let mut current_aic = intercept_only.deviance + 2.0;
    let mut selected: Vec<usize> = Vec::new();

    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if selected.contains(&j) {
                continue;
            }
            let mut cols = selected.clone();
            cols.push(j);
            let sub = DMatrix::from_fn(x.nrows(), cols.len(), |i, c| x[(i, cols[c])]);
            let aic = match fit_glm(&sub, y, family) {
                Ok(fit) => fit.deviance + 2.0 * (cols.len() as f64 + 1.0),
                Err(_) => continue,
            };
            if best.is_none_or(|(_, b)| aic < b) {
                best = Some((j, aic));
            }
        }
        match best {
            Some((j, aic)) if aic < current_aic => {
                selected.push(j);
                current_aic = aic;
            }
            _ => break,
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn noiseless_line_recovered_exactly() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.3 - 2.0);
        let y = DVector::from_fn(20, |i, _| 1.0 + 2.0 * x[(i, 0)]);
        let fit = fit_glm(&x, &y, Family::GaussianIdentity).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_matches_svd_least_squares() {
        let mut r = rng(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(50, 3, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(50, |i, _| {
            0.5 - x[(i, 0)] + 2.0 * x[(i, 1)] + 0.3 * x[(i, 2)] + normal.sample(&mut r)
        });
        let fit = fit_glm(&x, &y, Family::GaussianIdentity).unwrap();
        // Independent route: SVD least squares on the design matrix.
        let d = design(&x);
        let svd = d.svd(true, true);
        let theta = svd.solve(&y, 1e-12).unwrap();
        for j in 0..4 {
            assert!(
                (fit.coefficients[j] - theta[j]).abs() < 1e-10,
                "coefficient {j}: {} vs {}",
                fit.coefficients[j],
                theta[j]
            );
        }
    }

    #[test]
    fn gaussian_residuals_orthogonal_to_design() {
        let mut r = rng(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(80, 2, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(80, |i, _| 2.0 + x[(i, 0)] - x[(i, 1)] + normal.sample(&mut r));
        let fit = fit_glm(&x, &y, Family::GaussianIdentity).unwrap();
        let resid = &y - fit.predict(&x).unwrap();
        let moments = design(&x).transpose() * resid;
        assert!(moments.amax() < 1e-8, "X̃ᵀr = {moments}");
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut r = rng(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let base = DMatrix::from_fn(30, 1, |_, _| normal.sample(&mut r));
        let x = DMatrix::from_fn(30, 2, |i, _| base[(i, 0)]);
        let y = DVector::from_fn(30, |i, _| base[(i, 0)]);
        assert!(matches!(
            fit_glm(&x, &y, Family::GaussianIdentity),
            Err(Error::SingularDesign(_))
        ));
    }

    #[test]
    fn predict_identity_and_logit_at_origin() {
        let fit = GlmFit {
            coefficients: DVector::from_vec(vec![0.0, 1.0]),
            family: Family::GaussianIdentity,
            converged: true,
            iterations: 1,
            deviance: 0.0,
            condition_estimate: 1.0,
            deviance_trace: vec![],
        };
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(fit.predict(&x).unwrap()[0], 0.0);
        let logit = GlmFit { family: Family::BinomialLogit, ..fit };
        assert!((logit.predict(&x).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predictions_monotone_in_x_for_positive_slope() {
        for family in [Family::GaussianIdentity, Family::BinomialLogit] {
            let fit = GlmFit {
                coefficients: DVector::from_vec(vec![-0.3, 1.7]),
                family,
                converged: true,
                iterations: 1,
                deviance: 0.0,
                condition_estimate: 1.0,
                deviance_trace: vec![],
            };
            let x = DMatrix::from_fn(21, 1, |i, _| i as f64 * 0.25 - 2.0);
            let mu = fit.predict(&x).unwrap();
            for i in 1..21 {
                assert!(mu[i] > mu[i - 1]);
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let theta = DVector::from_vec(vec![1.5, -0.4]);
        let x_row = [2.0];
        let y = 1.5 - 0.4 * 2.0;
        let g = unit_gradient_at(Family::GaussianIdentity, &theta, &x_row, y);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut r = rng(42);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..100 {
            let family = if trial % 2 == 0 { Family::GaussianIdentity } else { Family::BinomialLogit };
            let p = 1 + trial % 3;
            let theta = DVector::from_fn(p + 1, |_, _| normal.sample(&mut r) * 0.8);
            let x_row: Vec<f64> = (0..p).map(|_| normal.sample(&mut r)).collect();
            let y = match family {
                Family::GaussianIdentity => normal.sample(&mut r),
                Family::BinomialLogit => f64::from(r.random::<f64>() < 0.5),
            };
            let analytic = unit_gradient_at(family, &theta, &x_row, y);
            let h = 1e-6;
            for j in 0..=p {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (unit_loss_at(family, &up, &x_row, y)
                    - unit_loss_at(family, &down, &x_row, y))
                    / (2.0 * h);
                let scale = analytic[j].abs().max(fd.abs()).max(1e-3);
                assert!(
                    (analytic[j] - fd).abs() / scale < 1e-6,
                    "family {family:?} coef {j}: analytic {} vs fd {fd}",
                    analytic[j]
                );
            }
        }
    }

    #[test]
    fn avg_hessian_is_symmetric_psd_and_matches_irls_weights() {
        let mut r = rng(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(60, 2, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(60, |i, _| {
            f64::from(r.random::<f64>() < expit(x[(i, 0)] - 0.5 * x[(i, 1)]))
        });
        let fit = fit_glm(&x, &y, Family::BinomialLogit).unwrap();
        let h = avg_hessian(&fit, &x).unwrap();
        // Symmetry and eigenvalues >= -1e-10.
        for a in 0..3 {
            for b in 0..3 {
                assert!((h[(a, b)] - h[(b, a)]).abs() < 1e-12);
            }
        }
        let eigen = h.clone().symmetric_eigen();
        assert!(eigen.eigenvalues.iter().all(|&v| v >= -1e-10));
        // Equals X̃ᵀWX̃ / n with the converged IRLS weights.
        let d = design(&x);
        let eta = &d * &fit.coefficients;
        let mut xtwx = DMatrix::zeros(3, 3);
        for i in 0..60 {
            let mu = expit(eta[i]);
            let w = mu * (1.0 - mu);
            for a in 0..3 {
                for b in 0..3 {
                    xtwx[(a, b)] += w * d[(i, a)] * d[(i, b)];
                }
            }
        }
        xtwx /= 60.0;
        assert!((h - xtwx).amax() < 1e-10);
    }

    #[test]
    fn irls_deviance_monotone_non_increasing() {
        let mut r = rng(21);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(120, 2, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(120, |i, _| {
            f64::from(r.random::<f64>() < expit(1.0 + 2.0 * x[(i, 0)] - x[(i, 1)]))
        });
        let fit = fit_glm(&x, &y, Family::BinomialLogit).unwrap();
        assert!(fit.converged);
        for w in fit.deviance_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "deviance increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn binomial_slope_unbiased_on_mech1_controls() {
        // Mechanism-1 RCT controls follow logit(P(Y=1)) = x - 1.
        let reps = 200;
        let mut slopes = Vec::with_capacity(reps);
        for rep in 0..reps {
            let data = crate::simgen::gen_mech1(200, 40, 1000 + rep as u64).unwrap();
            let controls = data.rct.controls_only();
            let fit = fit_glm(&controls.x, &controls.y, Family::BinomialLogit).unwrap();
            slopes.push(fit.coefficients[1]);
        }
        let mean = slopes.iter().sum::<f64>() / reps as f64;
        let sd = (slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (reps as f64 - 1.0))
            .sqrt();
        let mc_se = sd / (reps as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * mc_se,
            "mean slope {mean:.4} not within 3 MC-SE ({:.4}) of 1.0",
            3.0 * mc_se
        );
    }

    #[test]
    fn aic_selects_single_strong_column() {
        let mut r = rng(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(100, 1, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(100, |i, _| 3.0 * x[(i, 0)] + 0.2 * normal.sample(&mut r));
        let selected = select_covariates_aic(&x, &y, Family::GaussianIdentity).unwrap();
        assert_eq!(selected, vec![0]);
    }

    #[test]
    fn aic_keeps_informative_column_among_noise() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut hits = 0;
        for rep in 0..200 {
            let mut r = rng(600 + rep);
            let x = DMatrix::from_fn(100, 6, |_, _| normal.sample(&mut r));
            let y = DVector::from_fn(100, |i, _| 2.0 * x[(i, 0)] + normal.sample(&mut r));
            let selected = select_covariates_aic(&x, &y, Family::GaussianIdentity).unwrap();
            if selected.contains(&0) {
                hits += 1;
            }
        }
        assert!(hits >= 190, "x1 kept in only {hits}/200 replicates");
    }

    #[test]
    fn aic_mostly_empty_on_pure_noise() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut empty = 0;
        for rep in 0..200 {
            let mut r = rng(900 + rep);
            let x = DMatrix::from_fn(100, 3, |_, _| normal.sample(&mut r));
            let y = DVector::from_fn(100, |_, _| normal.sample(&mut r));
            let selected = select_covariates_aic(&x, &y, Family::GaussianIdentity).unwrap();
            if selected.is_empty() {
                empty += 1;
            }
        }
        assert!(empty > 100, "empty selection in only {empty}/200 replicates");
    }
}
