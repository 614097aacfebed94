//! Kernel ridge regression with a Gaussian kernel.
//!
//! Used as the flexible nuisance regressor behind the AIPW outcome
//! models and the kernel variant of the R-learner. The bandwidth
//! defaults to σ² = p (the covariate count) and the ridge penalty is
//! chosen by leave-one-out error over a log-spaced grid, evaluated
//! through the hat-matrix identity on one eigendecomposition of the
//! Gram matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of points in the leave-one-out λ grid.
const LAMBDA_GRID_POINTS: usize = 17;
/// The grid spans n·10^a for a in [LAMBDA_LOG_MIN, LAMBDA_LOG_MAX].
const LAMBDA_LOG_MIN: f64 = -6.0;
const LAMBDA_LOG_MAX: f64 = 2.0;

/// A fitted Gaussian-kernel ridge regression.
#[derive(Debug, Clone)]
pub struct KernelRidgeFit {
    train_x: DMatrix<f64>,
    alpha: DVector<f64>,
    /// Squared bandwidth of k(u,v) = exp(-‖u-v‖²/σ²).
    pub sigma2: f64,
    /// Selected ridge penalty.
    pub lambda: f64,
    /// Outcomes are centered before solving; predictions add this back.
    pub y_mean: f64,
}

impl KernelRidgeFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.train_x.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "fit expects {} covariate columns, got {}",
                self.train_x.ncols(),
                x.ncols()
            )));
        }
        let k = gaussian_gram(x, &self.train_x, self.sigma2);
        Ok((k * &self.alpha).add_scalar(self.y_mean))
    }

    /// Dual weights solving (K + λI)α = y − ȳ.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }
}

/// Gram matrix of k(u,v) = exp(-‖u-v‖²/σ²) between the rows of `a` and `b`.
pub(crate) fn gaussian_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut sq = 0.0;
        for c in 0..a.ncols() {
            let d = a[(i, c)] - b[(j, c)];
            sq += d * d;
        }
        (-sq / sigma2).exp()
    })
}

fn all_rows_identical(x: &DMatrix<f64>) -> bool {
    for i in 1..x.nrows() {
        for c in 0..x.ncols() {
            if x[(i, c)] != x[(0, c)] {
                return false;
            }
        }
    }
    true
}

/// Leave-one-out λ selection on a precomputed symmetric kernel matrix.
/// Returns (λ, dual weights) for the uncentered target `y`.
pub(crate) fn loo_select_lambda(k: &DMatrix<f64>, y: &DVector<f64>, n_scale: f64) -> (f64, DVector<f64>) {
    let n = y.len();
    let eigen = k.clone().symmetric_eigen();
    let d: Vec<f64> = eigen.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let uty = eigen.eigenvectors.transpose() * y;

    let mut best: Option<(f64, f64)> = None;
    for g in 0..LAMBDA_GRID_POINTS {
        let a = LAMBDA_LOG_MIN
            + (LAMBDA_LOG_MAX - LAMBDA_LOG_MIN) * g as f64 / (LAMBDA_GRID_POINTS - 1) as f64;
        let lambda = n_scale * 10f64.powf(a);
        // Hat matrix H = K (K + λI)^{-1} = U diag(d/(d+λ)) Uᵀ.
        let shrink: Vec<f64> = d.iter().map(|&dj| dj / (dj + lambda)).collect();
        let mut loo = 0.0;
        for i in 0..n {
            let mut fitted = 0.0;
            let mut h_ii = 0.0;
            for j in 0..n {
                let u_ij = eigen.eigenvectors[(i, j)];
                fitted += u_ij * shrink[j] * uty[j];
                h_ii += u_ij * u_ij * shrink[j];
            }
            let denom = (1.0 - h_ii).max(1e-12);
            let e = (y[i] - fitted) / denom;
            loo += e * e;
        }
        if best.is_none_or(|(_, b)| loo < b) {
            best = Some((lambda, loo));
        }
    }
    let lambda = best.expect("non-empty lambda grid").0;
    let mut coef = uty;
    for (c, dj) in coef.iter_mut().zip(d.iter()) {
        *c /= dj + lambda;
    }
    let alpha = &eigen.eigenvectors * coef;
    (lambda, alpha)
}

/// Fits kernel ridge with σ² = p and λ chosen by leave-one-out error.
pub fn fit_kernel_ridge(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<KernelRidgeFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("kernel ridge needs at least 2 rows".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("kernel ridge needs at least one covariate".into()));
    }
    if all_rows_identical(x) {
        return Err(Error::DegenerateKernel);
    }
    let sigma2 = x.ncols() as f64;
    let y_mean = y.mean();
    let yc = y.add_scalar(-y_mean);
    let k = gaussian_gram(x, x, sigma2);
    let (lambda, alpha) = loo_select_lambda(&k, &yc, n as f64);
    Ok(KernelRidgeFit { train_x: x.clone(), alpha, sigma2, lambda, y_mean })
}

/// Fits kernel ridge at a fixed bandwidth and penalty.
pub fn fit_kernel_ridge_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    lambda: f64,
) -> Result<KernelRidgeFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("kernel ridge needs at least 2 rows".into()));
    }
    if sigma2 <= 0.0 || lambda <= 0.0 {
        return Err(Error::InvalidArgument("sigma2 and lambda must be positive".into()));
    }
    if all_rows_identical(x) {
        return Err(Error::DegenerateKernel);
    }
    let y_mean = y.mean();
    let yc = y.add_scalar(-y_mean);
    let mut k = gaussian_gram(x, x, sigma2);
    for i in 0..n {
        k[(i, i)] += lambda;
    }
    let alpha = k
        .cholesky()
        .ok_or(Error::SingularDesign("kernel system not positive definite".into()))?
        .solve(&yc);
    Ok(KernelRidgeFit { train_x: x.clone(), alpha, sigma2, lambda, y_mean })
}

/// Free-function form of [`KernelRidgeFit::predict`].
pub fn predict_kernel_ridge(fit: &KernelRidgeFit, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    fit.predict(x)
}
