//! Candidate-mediator screening: ridge-projection outcome-model estimates,
//! marginal exposure-model fits, product ranking, and the marginal
//! (SIS-style) baseline screeners used for comparison.

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg::{gram, Cholesky};
use crate::model::{CandidateSet, Dataset};

/// Default candidate count `ceil(n / ln n)`.
pub fn default_candidate_count(n: usize) -> usize {
    ((n as f64) / (n as f64).ln()).ceil() as usize
}

/// Candidate count `ceil(2n / ln n)` used by the marginal baseline
/// screeners in the comparison study.
pub fn baseline_candidate_count(n: usize) -> usize {
    (2.0 * (n as f64) / (n as f64).ln()).ceil() as usize
}

/// Configuration for the ridge-projection screening step.
#[derive(Debug, Clone)]
pub struct RholpConfig {
    /// Ridge constant `k >= 0`.
    pub k: f64,
    /// Target candidate count.
    pub d: usize,
    /// Rescale every design column to unit sample standard deviation
    /// before computing the projection estimates. Off for simulated data
    /// (which is generated on a common scale), on by default for the
    /// real-data path.
    pub standardize: bool,
}

impl RholpConfig {
    pub fn for_sample_size(n: usize) -> Self {
        RholpConfig {
            k: 1.0,
            d: default_candidate_count(n),
            standardize: false,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::config(format!("k must be finite and >= 0, got {}", self.k)));
        }
        if self.d < 1 || self.d > p {
            return Err(Error::config(format!(
                "candidate count d must lie in [1, {p}], got {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// Ridge-projection coefficient estimates `Z^T (k I_n + Z Z^T)^{-1} Y` for
/// the full design `Z = [M X C]`.
///
/// The returned vector holds the `p` mediator coefficients, then the
/// exposure coefficient, then one entry per covariate column. At `k = 0`
/// the `n x n` Gram matrix must be invertible, which requires
/// `p + 1 + q >= n` and full row rank.
pub fn rholp_estimates(dataset: &Dataset, k: f64) -> Result<Array1<f64>> {
    let g = dataset_gram(dataset);
    rholp_estimates_with_gram(dataset, k, &g)
}

/// Same as [`rholp_estimates`], reusing a precomputed Gram matrix
/// `Z Z^T` so a pipeline can share it with the orthogonalization stage.
pub fn rholp_estimates_with_gram(dataset: &Dataset, k: f64, g: &Array2<f64>) -> Result<Array1<f64>> {
    let s = shifted_gram_solve(g, k, dataset.outcome())?;
    let mut out = Vec::with_capacity(dataset.p() + 1 + dataset.q());
    out.extend(dataset.mediators().t().dot(&s).into_iter());
    out.push(dataset.exposure().dot(&s));
    if let Some(c) = dataset.covariates() {
        for col in c.columns() {
            out.push(col.dot(&s));
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "screening",
            "ridge projection produced a non-finite coefficient (ill-conditioned system)",
        ));
    }
    Ok(Array1::from(out))
}

/// Gram matrix of the full design `[M X C]`.
pub fn dataset_gram(dataset: &Dataset) -> Array2<f64> {
    let mut extras = vec![dataset.exposure()];
    if let Some(c) = dataset.covariates() {
        extras.extend(c.columns());
        return gram(dataset.mediators(), &extras);
    }
    gram(dataset.mediators(), &extras)
}

fn shifted_gram_solve(g: &Array2<f64>, k: f64, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let mut a = g.clone();
    if k != 0.0 {
        for i in 0..a.nrows() {
            a[[i, i]] += k;
        }
    }
    let chol = Cholesky::factor(a).map_err(|e| {
        if k == 0.0 {
            Error::numerical(
                "screening",
                "Gram matrix Z Z^T is singular at k = 0; the design must have full row rank",
            )
        } else {
            e
        }
    })?;
    Ok(chol.solve(y))
}

/// Ridge-projection estimates on the standardized design: every column of
/// `Z` is divided by its sample standard deviation first. Constant columns
/// are an error.
pub fn rholp_estimates_standardized(dataset: &Dataset, k: f64) -> Result<Array1<f64>> {
    let n = dataset.n();
    let p = dataset.p();
    let scaled_m = {
        let mut m = Array2::zeros((n, p).f());
        for j in 0..p {
            let col = dataset.mediator(j);
            let sd = sample_sd(col);
            if sd <= 0.0 {
                return Err(Error::data(format!(
                    "mediator column '{}' is constant; cannot standardize",
                    dataset.mediator_names()[j]
                )));
            }
            let inv = sd.recip();
            let mut out = m.column_mut(j);
            for i in 0..n {
                out[i] = col[i] * inv;
            }
        }
        m
    };
    let scale_vec = |v: ArrayView1<f64>, what: &str| -> Result<Array1<f64>> {
        let sd = sample_sd(v);
        if sd <= 0.0 {
            return Err(Error::data(format!("{what} column is constant; cannot standardize")));
        }
        Ok(v.mapv(|x| x / sd))
    };
    let x = scale_vec(dataset.exposure(), "exposure")?;
    let mut extras = vec![x.view()];
    let scaled_c: Option<Vec<Array1<f64>>> = match dataset.covariates() {
        Some(c) => {
            let mut cols = Vec::with_capacity(c.ncols());
            for (idx, col) in c.columns().into_iter().enumerate() {
                cols.push(scale_vec(col, &format!("covariate {}", idx + 1))?);
            }
            Some(cols)
        }
        None => None,
    };
    if let Some(cols) = &scaled_c {
        extras.extend(cols.iter().map(|c| c.view()));
    }
    let g = gram(&scaled_m, &extras);
    let s = shifted_gram_solve(&g, k, dataset.outcome())?;
    let mut out = Vec::with_capacity(p + 1 + dataset.q());
    out.extend(scaled_m.t().dot(&s).into_iter());
    for extra in &extras {
        out.push(extra.dot(&s));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "screening",
            "ridge projection produced a non-finite coefficient (ill-conditioned system)",
        ));
    }
    Ok(Array1::from(out))
}

fn sample_sd(v: ArrayView1<f64>) -> f64 {
    let n = v.len();
    let mean = v.sum() / n as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Marginal exposure-model fits: for every mediator `j`, the coefficient of
/// `X` from regressing `M_j` on `[X, C]` (plus an intercept when enabled),
/// its standard error, and the residual variance.
#[derive(Debug, Clone)]
pub struct MarginalAlphaFit {
    pub alpha_hat: Array1<f64>,
    pub se_alpha: Array1<f64>,
    pub sigma_u2: Array1<f64>,
}

/// Per-mediator OLS of `M_j` on the exposure design. The residual variance
/// uses denominator `n - m` with `m` the number of fitted design columns
/// (`n - 1` for the plain no-intercept exposure regression).
pub fn marginal_alpha_fit(dataset: &Dataset, intercept: bool) -> Result<MarginalAlphaFit> {
    let n = dataset.n();
    let p = dataset.p();
    let design = exposure_design(dataset, intercept);
    let m = design.ncols();
    if n <= m {
        return Err(Error::numerical(
            "screening",
            format!("mediator-model design has {m} columns but only {n} rows"),
        ));
    }
    let dtd = design.t().dot(&design);
    let chol = Cholesky::factor(dtd).map_err(|_| {
        Error::numerical(
            "screening",
            "mediator-model design [X C] is rank deficient",
        )
    })?;
    // (D^T D)^{-1}[0,0]: the sampling-variance factor for the exposure slope.
    let inv00 = {
        let mut e0 = vec![0.0; m];
        e0[0] = 1.0;
        chol.solve_slice(&mut e0);
        e0[0]
    };
    let dtm = design.t().dot(dataset.mediators());
    let df = (n - m) as f64;
    let mut alpha_hat = Array1::zeros(p);
    let mut se_alpha = Array1::zeros(p);
    let mut sigma_u2 = Array1::zeros(p);
    let mut rhs = vec![0.0; m];
    for j in 0..p {
        let b = dtm.column(j);
        for (r, v) in rhs.iter_mut().zip(b.iter()) {
            *r = *v;
        }
        chol.solve_slice(&mut rhs);
        let fitted_ss: f64 = rhs.iter().zip(b.iter()).map(|(a, bv)| a * bv).sum();
        let col = dataset.mediator(j);
        let total_ss = col.dot(&col);
        let s2 = ((total_ss - fitted_ss) / df).max(0.0);
        alpha_hat[j] = rhs[0];
        sigma_u2[j] = s2;
        se_alpha[j] = (inv00 * s2).sqrt();
    }
    Ok(MarginalAlphaFit {
        alpha_hat,
        se_alpha,
        sigma_u2,
    })
}

fn exposure_design(dataset: &Dataset, intercept: bool) -> Array2<f64> {
    let n = dataset.n();
    let m = 1 + dataset.q() + usize::from(intercept);
    let mut d = Array2::zeros((n, m));
    d.column_mut(0).assign(&dataset.exposure());
    if let Some(c) = dataset.covariates() {
        for (k, col) in c.columns().into_iter().enumerate() {
            d.column_mut(1 + k).assign(&col);
        }
    }
    if intercept {
        d.column_mut(m - 1).fill(1.0);
    }
    d
}

/// Ranks mediators by `|alpha_hat_j * beta_tilde_j|` and keeps the top `d`.
/// Ties break toward the smaller index so the selection is deterministic.
pub fn select_candidates(alpha_hat: &[f64], beta_tilde: &[f64], d: usize) -> CandidateSet {
    assert_eq!(
        alpha_hat.len(),
        beta_tilde.len(),
        "alpha and beta vectors must have equal length"
    );
    assert!(d >= 1, "candidate count must be at least 1");
    let scores: Vec<f64> = alpha_hat
        .iter()
        .zip(beta_tilde)
        .map(|(a, b)| (a * b).abs())
        .collect();
    select_by_scores(scores, d)
}

fn select_by_scores(scores: Vec<f64>, d: usize) -> CandidateSet {
    let p = scores.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(d.min(p));
    let kept_scores: Vec<f64> = order.iter().map(|&j| scores[j]).collect();
    CandidateSet::new(order, kept_scores, d)
}

/// Marginal screening rules used by the antecedent methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStrategy {
    /// Rank by `|alpha_hat_j|` from the mediator model.
    AlphaSis,
    /// Rank by `|alpha_hat_j * beta_check_j|` where `beta_check_j` is the
    /// mediator coefficient from the one-at-a-time outcome regression of
    /// `Y` on `[M_j, X, C]`.
    ProductSis,
}

/// Runs a marginal baseline screener and returns its candidate set.
pub fn baseline_screen(
    dataset: &Dataset,
    strategy: BaselineStrategy,
    d: usize,
    intercept: bool,
) -> Result<CandidateSet> {
    assert!(d >= 1, "candidate count must be at least 1");
    let fit = marginal_alpha_fit(dataset, intercept)?;
    match strategy {
        BaselineStrategy::AlphaSis => {
            let scores: Vec<f64> = fit.alpha_hat.iter().map(|a| a.abs()).collect();
            Ok(select_by_scores(scores, d))
        }
        BaselineStrategy::ProductSis => {
            let beta_check = marginal_outcome_coefficients(dataset, intercept)?;
            let scores: Vec<f64> = fit
                .alpha_hat
                .iter()
                .zip(&beta_check)
                .map(|(a, b)| (a * b).abs())
                .collect();
            Ok(select_by_scores(scores, d))
        }
    }
}

/// Coefficient of `M_j` in the per-mediator outcome regression of `Y` on
/// `[M_j, X, C]`, computed by residualizing both `M_j` and `Y` against the
/// shared columns.
fn marginal_outcome_coefficients(dataset: &Dataset, intercept: bool) -> Result<Vec<f64>> {
    let n = dataset.n();
    let p = dataset.p();
    let shared = exposure_design(dataset, intercept);
    let m = shared.ncols();
    let btb = shared.t().dot(&shared);
    let chol = Cholesky::factor(btb).map_err(|_| {
        Error::numerical(
            "screening",
            "marginal outcome design [X C] is rank deficient",
        )
    })?;
    // Residual of Y against the shared columns.
    let bty = shared.t().dot(&dataset.outcome());
    let coef_y = chol.solve(bty.view());
    let y_res = {
        let mut r = dataset.outcome().to_owned();
        let fitted = shared.dot(&coef_y);
        r -= &fitted;
        r
    };
    let btm = shared.t().dot(dataset.mediators());
    let mut out = Vec::with_capacity(p);
    let mut rhs = vec![0.0; m];
    for j in 0..p {
        let b = btm.column(j);
        for (r, v) in rhs.iter_mut().zip(b.iter()) {
            *r = *v;
        }
        chol.solve_slice(&mut rhs);
        let fitted_ss: f64 = rhs.iter().zip(b.iter()).map(|(a, bv)| a * bv).sum();
        let col = dataset.mediator(j);
        let total_ss = col.dot(&col);
        let res_ss = total_ss - fitted_ss;
        if res_ss <= total_ss * 1e-12 {
            return Err(Error::numerical(
                "screening",
                format!(
                    "marginal outcome design for mediator '{}' is rank deficient",
                    dataset.mediator_names()[j]
                ),
            ));
        }
        let num = col.dot(&y_res);
        out.push(num / res_ss);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array1, Array2};

    fn tiny_dataset() -> Dataset {
        // n = 6, p = 2, deterministic values
        let x = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.8];
        let m = Array2::from_shape_vec(
            (6, 2),
            vec![
                2.0, 1.0, //
                -1.0, 0.3, //
                4.0, -0.2, //
                0.6, 0.9, //
                -2.4, 1.4, //
                1.6, -0.7,
            ],
        )
        .unwrap();
        let y = array![1.0, 0.0, 2.5, -0.3, -1.0, 0.7];
        Dataset::new(x, m, y, None, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn zero_outcome_gives_zero_coefficients() {
        let ds = tiny_dataset();
        let zero = Dataset::new(
            ds.exposure().to_owned(),
            ds.mediators().clone(),
            Array1::zeros(ds.n()),
            None,
            ds.mediator_names().to_vec(),
        )
        .unwrap();
        let est = rholp_estimates(&zero, 1.0).unwrap();
        for v in est.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn exact_linear_mediator_recovers_slope() {
        let x = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.8];
        let m = {
            let mut m = Array2::zeros((6, 2));
            for i in 0..6 {
                m[[i, 0]] = 2.0 * x[i];
                m[[i, 1]] = (i as f64) - 2.0;
            }
            m
        };
        let y = Array1::zeros(6);
        let ds = Dataset::new(x, m, y, None, vec!["a".into(), "b".into()]).unwrap();
        let fit = marginal_alpha_fit(&ds, false).unwrap();
        assert_relative_eq!(fit.alpha_hat[0], 2.0, max_relative = 1e-12);
        assert!(fit.sigma_u2[0] < 1e-20);
    }

    #[test]
    fn orthogonal_mediator_has_zero_alpha() {
        let x = array![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let mut m = Array2::zeros((6, 1));
        // constant column is orthogonal to the +/-1 exposure
        for i in 0..6 {
            m[[i, 0]] = 3.0;
        }
        let y = Array1::zeros(6);
        let ds = Dataset::new(x, m, y, None, vec!["a".into()]).unwrap();
        let fit = marginal_alpha_fit(&ds, false).unwrap();
        assert!(fit.alpha_hat[0].abs() < 1e-10);
    }

    #[test]
    fn select_ranks_by_product_magnitude() {
        let cs = select_candidates(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0], 2);
        assert_eq!(cs.indices(), &[0, 2]);
    }

    #[test]
    fn select_breaks_ties_by_index() {
        let cs = select_candidates(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 2);
        assert_eq!(cs.indices(), &[0, 1]);
    }

    #[test]
    fn candidate_count_defaults() {
        assert_eq!(default_candidate_count(400), 67);
        assert_eq!(baseline_candidate_count(400), 134);
    }

    #[test]
    fn exhaustive_selection_returns_all_indices() {
        let ds = tiny_dataset();
        let a = baseline_screen(&ds, BaselineStrategy::AlphaSis, 2, false).unwrap();
        let b = baseline_screen(&ds, BaselineStrategy::ProductSis, 2, false).unwrap();
        let mut ai = a.indices().to_vec();
        let mut bi = b.indices().to_vec();
        ai.sort_unstable();
        bi.sort_unstable();
        assert_eq!(ai, vec![0, 1]);
        assert_eq!(bi, vec![0, 1]);
    }

    #[test]
    fn alpha_sis_finds_single_signal() {
        // mediator 1 tracks X exactly; mediator 0 is exposure-free noise
        let x = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.8];
        let mut m = Array2::zeros((6, 2));
        for i in 0..6 {
            m[[i, 0]] = [0.3, -0.1, 0.2, -0.25, 0.15, -0.3][i];
            m[[i, 1]] = 1.5 * x[i];
        }
        let y = Array1::zeros(6);
        let ds = Dataset::new(x, m, y, None, vec!["a".into(), "b".into()]).unwrap();
        let cs = baseline_screen(&ds, BaselineStrategy::AlphaSis, 1, false).unwrap();
        assert_eq!(cs.indices(), &[1]);
    }

    #[test]
    fn singular_gram_rejected_at_k_zero() {
        // p + 1 = 3 < n = 6, so Z Z^T is rank deficient
        let ds = tiny_dataset();
        let err = rholp_estimates(&ds, 0.0).unwrap_err();
        assert!(err.to_string().contains("singular"));
    }

    #[test]
    fn constant_column_blocks_standardization() {
        let x = array![1.0, -1.0, 1.0, -1.0];
        let mut m = Array2::zeros((4, 1));
        for i in 0..4 {
            m[[i, 0]] = 7.0;
        }
        let y = array![0.0, 1.0, 0.0, 1.0];
        let ds = Dataset::new(x, m, y, None, vec!["a".into()]).unwrap();
        let err = rholp_estimates_standardized(&ds, 1.0).unwrap_err();
        assert!(err.to_string().contains("constant"));
    }
}
