//! Per-EC influence scores.
//!
//! The score of an external control z approximates the total absolute
//! change in the RCT-control losses that refitting the outcome model
//! with z added would cause:
//!
//! score(z) = Σᵢ |∇L(Zᵢ, θ̂)ᵀ H⁻¹ ∇L(z, θ̂)|
//!
//! summed over RCT controls Zᵢ, with H the average per-unit loss
//! Hessian over the controls. The control gradients and one symmetric
//! factorization of H are computed once and reused for every EC, so
//! no refits are needed. [`exact_influence`] is the refit oracle the
//! approximation is validated against.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{ControlRows, EcDataset};
use crate::error::{Error, Result};
use crate::glm::{self, Family, GlmFit};

/// Nonnegative per-EC scores plus their ascending ranking.
///
/// `ranking[i]` is the original EC row index of the i-th smallest
/// score; equal scores keep their original EC order.
#[derive(Debug, Clone)]
pub struct InfluenceScores {
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl InfluenceScores {
    pub fn n(&self) -> usize {
        self.scores.len()
    }
}

fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps original order on ties.
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    idx
}

/// Conditioned Cholesky factorization of the average Hessian.
///
/// If the smallest eigenvalue is below 1e-10 · trace/(p+1), a ridge of
/// 1e-8 · trace/(p+1) is added; if the factorization still fails the
/// Hessian is reported as singular.
fn factor_hessian(h: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let q = h.nrows();
    let trace_scale = h.trace() / q as f64;
    let eigen = h.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let mut conditioned = h.clone();
    if min_eig < 1e-10 * trace_scale {
        let jitter = 1e-8 * trace_scale;
        for i in 0..q {
            conditioned[(i, i)] += jitter;
        }
    }
    conditioned.cholesky().ok_or(Error::SingularHessian)
}

/// Influence score of every EC unit against the fitted RCT-controls model.
///
/// Scores are returned in EC row order; the ranking sorts them ascending.
pub fn compute_influences(
    fit: &GlmFit,
    rct_controls: &ControlRows,
    ec_data: &EcDataset,
) -> Result<InfluenceScores> {
    let q = fit.coefficients.len();
    if rct_controls.x.ncols() + 1 != q {
        return Err(Error::ShapeMismatch(format!(
            "fit expects {} covariate columns, controls have {}",
            q - 1,
            rct_controls.x.ncols()
        )));
    }
    if ec_data.p() + 1 != q {
        return Err(Error::ShapeMismatch(format!(
            "fit expects {} covariate columns, ECs have {}",
            q - 1,
            ec_data.p()
        )));
    }
    let n_c = rct_controls.n();

    // Control gradient matrix G (n_c × q), computed once.
    let mut gradients = DMatrix::zeros(n_c, q);
    for i in 0..n_c {
        let x_row: Vec<f64> = (0..q - 1).map(|j| rct_controls.x[(i, j)]).collect();
        let g = fit.unit_gradient(&x_row, rct_controls.y[i]);
        gradients.row_mut(i).copy_from(&g.transpose());
    }

    let h = glm::avg_hessian(fit, &rct_controls.x)?;
    let factor = factor_hessian(&h)?;

    let mut scores = Vec::with_capacity(ec_data.n());
    for i in 0..ec_data.n() {
        let x_row: Vec<f64> = (0..q - 1).map(|j| ec_data.x()[(i, j)]).collect();
        let g_z = fit.unit_gradient(&x_row, ec_data.y()[i]);
        let v = factor.solve(&g_z);
        let score = (&gradients * v).iter().map(|t| t.abs()).sum::<f64>();
        scores.push(score);
    }
    let ranking = rank_ascending(&scores);
    Ok(InfluenceScores { scores, ranking })
}

/// Spearman rank correlation (average ranks on ties). Used to check
/// rank agreement between approximate scores and exact refits.
pub fn spearman_rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).expect("finite values"));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                out[idx[k]] = avg;
            }
            i = j + 1;
        }
        out
    }
    assert_eq!(a.len(), b.len(), "inputs must have equal length");
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (ra[i] - mean) * (rb[i] - mean);
        da += (ra[i] - mean) * (ra[i] - mean);
        db += (rb[i] - mean) * (rb[i] - mean);
    }
    num / (da.sqrt() * db.sqrt())
}

/// Exact influence of one candidate unit: refits the outcome model on
/// controls ∪ {z} and sums the absolute per-control loss changes.
pub fn exact_influence(
    family: Family,
    rct_controls: &ControlRows,
    z_x: &[f64],
    z_y: f64,
) -> Result<f64> {
    let p = rct_controls.x.ncols();
    if z_x.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "candidate has {} covariates, controls have {p}",
            z_x.len()
        )));
    }
    let base = glm::fit_glm(&rct_controls.x, &rct_controls.y, family)?;

    let n_c = rct_controls.n();
    let mut x_plus = DMatrix::zeros(n_c + 1, p);
    x_plus.view_mut((0, 0), (n_c, p)).copy_from(&rct_controls.x);
    for j in 0..p {
        x_plus[(n_c, j)] = z_x[j];
    }
    let y_plus = DVector::from_iterator(
        n_c + 1,
        rct_controls.y.iter().copied().chain(std::iter::once(z_y)),
    );
    let refit = glm::fit_glm(&x_plus, &y_plus, family)?;

    let mut total = 0.0;
    for i in 0..n_c {
        let x_row: Vec<f64> = (0..p).map(|j| rct_controls.x[(i, j)]).collect();
        total += (refit.unit_loss(&x_row, rct_controls.y[i])
            - base.unit_loss(&x_row, rct_controls.y[i]))
        .abs();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeKind;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_controls(seed: u64, n: usize, p: usize) -> ControlRows {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(n, p, |_, _| normal.sample(&mut r));
        let y = DVector::from_fn(n, |i, _| {
            1.0 + (0..p).map(|j| (j as f64 + 1.0) * 0.5 * x[(i, j)]).sum::<f64>()
                + normal.sample(&mut r)
        });
        ControlRows { x, y, r: vec![1; n] }
    }

    #[test]
    fn ec_on_fitted_line_scores_zero() {
        let controls = gaussian_controls(1, 40, 1);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        let x_ec = DMatrix::from_row_slice(2, 1, &[0.7, -1.2]);
        let y_ec = fit.predict(&x_ec).unwrap();
        let ec = EcDataset::new(x_ec, y_ec, OutcomeKind::Continuous, None).unwrap();
        let scores = compute_influences(&fit, &controls, &ec).unwrap();
        assert_eq!(scores.scores[0], 0.0);
        assert_eq!(scores.scores[1], 0.0);
    }

    #[test]
    fn scores_nonnegative_and_ranking_sorted() {
        let controls = gaussian_controls(2, 50, 2);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.5).unwrap();
        let x_ec = DMatrix::from_fn(30, 2, |_, _| normal.sample(&mut r));
        let y_ec = DVector::from_fn(30, |_, _| normal.sample(&mut r));
        let ec = EcDataset::new(x_ec, y_ec, OutcomeKind::Continuous, None).unwrap();
        let scores = compute_influences(&fit, &controls, &ec).unwrap();
        assert!(scores.scores.iter().all(|&s| s >= 0.0));
        for w in scores.ranking.windows(2) {
            assert!(scores.scores[w[0]] <= scores.scores[w[1]]);
        }
    }

    #[test]
    fn ranking_ties_stable_by_row_index() {
        let controls = gaussian_controls(4, 30, 1);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        // Two ECs exactly on the fitted line tie at score 0 and must keep order.
        let x_ec = DMatrix::from_row_slice(3, 1, &[0.4, 0.9, -0.3]);
        let mut y_ec = fit.predict(&x_ec).unwrap();
        y_ec[2] += 5.0;
        let ec = EcDataset::new(x_ec, y_ec, OutcomeKind::Continuous, None).unwrap();
        let scores = compute_influences(&fit, &controls, &ec).unwrap();
        assert_eq!(scores.ranking, vec![0, 1, 2]);
    }

    #[test]
    fn score_independent_of_other_ecs() {
        let controls = gaussian_controls(5, 40, 2);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x_ec = DMatrix::from_fn(10, 2, |_, _| normal.sample(&mut r));
        let y_ec = DVector::from_fn(10, |_, _| normal.sample(&mut r));
        let full = EcDataset::new(x_ec.clone(), y_ec.clone(), OutcomeKind::Continuous, None).unwrap();
        let all = compute_influences(&fit, &controls, &full).unwrap();
        let solo = full.select_rows(&[4]).unwrap();
        let one = compute_influences(&fit, &controls, &solo).unwrap();
        assert_eq!(all.scores[4], one.scores[0]);
    }

    #[test]
    fn residual_scaling_scales_scores_quadratically() {
        let controls = gaussian_controls(7, 50, 1);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        let fitted = fit.predict(&controls.x).unwrap();
        let c = 2.5;
        let scaled = ControlRows {
            x: controls.x.clone(),
            y: DVector::from_fn(controls.n(), |i, _| fitted[i] + c * (controls.y[i] - fitted[i])),
            r: controls.r.clone(),
        };
        // Same fitted coefficients: residuals were rescaled about the fit.
        let refit = glm::fit_glm(&scaled.x, &scaled.y, Family::GaussianIdentity).unwrap();
        assert!((refit.coefficients.clone() - fit.coefficients.clone()).amax() < 1e-8);

        let x_ec = DMatrix::from_row_slice(3, 1, &[0.3, -0.8, 1.4]);
        let mu_ec = fit.predict(&x_ec).unwrap();
        let resid = [0.5, -1.0, 2.0];
        let ec = EcDataset::new(
            x_ec.clone(),
            DVector::from_fn(3, |i, _| mu_ec[i] + resid[i]),
            OutcomeKind::Continuous,
            None,
        )
        .unwrap();
        let ec_scaled = EcDataset::new(
            x_ec,
            DVector::from_fn(3, |i, _| mu_ec[i] + c * resid[i]),
            OutcomeKind::Continuous,
            None,
        )
        .unwrap();
        let base = compute_influences(&fit, &controls, &ec).unwrap();
        let scaled_scores = compute_influences(&refit, &scaled, &ec_scaled).unwrap();
        for i in 0..3 {
            let expected = c * c * base.scores[i];
            assert!(
                (scaled_scores.scores[i] - expected).abs() / expected.max(1e-12) < 1e-8,
                "score {i}: {} vs c²·{}",
                scaled_scores.scores[i],
                base.scores[i]
            );
        }
    }

    #[test]
    fn duplicate_control_on_fit_has_zero_exact_influence() {
        let controls = gaussian_controls(8, 30, 1);
        let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
        let z_x = [0.6];
        let z_y = fit.predict(&DMatrix::from_row_slice(1, 1, &z_x)).unwrap()[0];
        let value = exact_influence(Family::GaussianIdentity, &controls, &z_x, z_y).unwrap();
        assert!(value <= 1e-8, "exact influence {value}");
    }

    #[test]
    fn far_outlier_dominates_exact_influence() {
        let controls = gaussian_controls(9, 50, 1);
        let mut r = ChaCha8Rng::seed_from_u64(10);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut values = Vec::new();
        for _ in 0..20 {
            let zx = [normal.sample(&mut r)];
            let zy = 1.0 + 0.5 * zx[0] + normal.sample(&mut r);
            values.push(exact_influence(Family::GaussianIdentity, &controls, &zx, zy).unwrap());
        }
        let outlier = exact_influence(Family::GaussianIdentity, &controls, &[0.5], 80.0).unwrap();
        let max_in_dist = values.iter().fold(0.0_f64, |m, &v| m.max(v));
        assert!(outlier > max_in_dist, "outlier {outlier} vs max {max_in_dist}");
    }

    #[test]
    fn approximation_ranks_match_exact_refits() {
        for (family, n_c, seed) in [
            (Family::GaussianIdentity, 50, 21u64),
            (Family::BinomialLogit, 80, 22u64),
        ] {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let x = DMatrix::from_fn(n_c, 2, |_, _| normal.sample(&mut r));
            let y = match family {
                Family::GaussianIdentity => DVector::from_fn(n_c, |i, _| {
                    0.5 + x[(i, 0)] - 0.7 * x[(i, 1)] + normal.sample(&mut r)
                }),
                Family::BinomialLogit => DVector::from_fn(n_c, |i, _| {
                    f64::from(r.random::<f64>() < glm::expit(0.3 + x[(i, 0)] - 0.7 * x[(i, 1)]))
                }),
            };
            let controls = ControlRows { x, y, r: vec![1; n_c] };
            let fit = glm::fit_glm(&controls.x, &controls.y, family).unwrap();

            let x_ec = DMatrix::from_fn(20, 2, |_, _| 1.3 * normal.sample(&mut r));
            let y_ec = match family {
                Family::GaussianIdentity => DVector::from_fn(20, |i, _| {
                    0.5 + x_ec[(i, 0)] - 0.7 * x_ec[(i, 1)] + 1.5 * normal.sample(&mut r)
                }),
                Family::BinomialLogit => {
                    DVector::from_fn(20, |_, _| f64::from(r.random::<f64>() < 0.5))
                }
            };
            let kind = match family {
                Family::GaussianIdentity => OutcomeKind::Continuous,
                Family::BinomialLogit => OutcomeKind::Binary,
            };
            let ec = EcDataset::new(x_ec.clone(), y_ec.clone(), kind, None).unwrap();
            let approx = compute_influences(&fit, &controls, &ec).unwrap();
            let exact: Vec<f64> = (0..20)
                .map(|i| {
                    let zx = [x_ec[(i, 0)], x_ec[(i, 1)]];
                    exact_influence(family, &controls, &zx, y_ec[i]).unwrap()
                })
                .collect();
            let rho = spearman_rank_correlation(&approx.scores, &exact);
            assert!(rho >= 0.95, "{family:?}: Spearman {rho}");
        }
    }

    #[test]
    fn demo_scores_separate_ranked_halves() {
        let mut majority = 0;
        for seed in 0..20 {
            let data = crate::simgen::gen_demo(100, 200, 300 + seed).unwrap();
            let controls = data.rct.controls_only();
            let fit = glm::fit_glm(&controls.x, &controls.y, Family::GaussianIdentity).unwrap();
            let scores = compute_influences(&fit, &controls, &data.ec).unwrap();
            let top_max = scores.scores[scores.ranking[49]];
            let bottom_min = scores.scores[scores.ranking[150]];
            if top_max < bottom_min {
                majority += 1;
            }
        }
        assert!(majority > 10, "separation in {majority}/20 seeds");
    }
}
