//! Approximate-orthogonalization inference for the outcome model: the
//! projection vector that is nearly orthogonal to every nuisance column,
//! the resulting test statistic and standard error, and the residual
//! variance used by both.
//!
//! One factorization of `(Z Z^T + delta I)` is shared across candidates;
//! each per-candidate projection comes from a rank-one downdate of that
//! factorization, falling back to a direct refactorization when the
//! downdate denominator degenerates.

use ndarray::{Array1, Array2};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{ols_rss_dropping, Cholesky};
use crate::model::{CandidateSet, Dataset, ModelTruth};

/// How the outcome-model residual variance is estimated. A single method is
/// supported today; the tag leaves room for alternatives without an
/// interface change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaEpsMethod {
    /// OLS refit of `Y` on the screened mediators plus exposure (and
    /// covariates / intercept when present).
    #[default]
    RefitOnCandidates,
}

/// Configuration for the orthogonalization stage.
#[derive(Debug, Clone)]
pub struct AoConfig {
    /// Regularization `delta > 0` of the projection system.
    pub delta: f64,
    pub sigma_eps_method: SigmaEpsMethod,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            delta: 1.0,
            sigma_eps_method: SigmaEpsMethod::RefitOnCandidates,
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::config(format!(
                "delta must be finite and > 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Shared state for per-candidate inference: the factorized
/// `(Z Z^T + delta I)` with `Z = [M X C]` over all `p` mediators, the Gram
/// matrix itself (kept for the degenerate-downdate fallback), and the
/// outcome residual variance.
pub struct AoContext<'a> {
    chol: Cholesky,
    gram: Array2<f64>,
    delta: f64,
    dataset: &'a Dataset,
    candidates: &'a CandidateSet,
    sigma_eps2: f64,
    /// Candidate mediators dropped from the variance refit as collinear.
    dropped: Vec<usize>,
}

impl<'a> AoContext<'a> {
    pub fn build(
        dataset: &'a Dataset,
        candidates: &'a CandidateSet,
        config: &AoConfig,
        intercept: bool,
    ) -> Result<Self> {
        let gram = crate::screening::dataset_gram(dataset);
        Self::build_with_gram(dataset, candidates, config, intercept, gram)
    }

    /// Builds the context from a precomputed Gram matrix of `[M X C]`.
    pub fn build_with_gram(
        dataset: &'a Dataset,
        candidates: &'a CandidateSet,
        config: &AoConfig,
        intercept: bool,
        gram: Array2<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let n = dataset.n();
        assert_eq!(gram.nrows(), n);
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[[i, i]] += config.delta;
        }
        let chol = Cholesky::factor(shifted).map_err(|_| {
            Error::numerical(
                "orthogonalization",
                "factorization of (Z Z^T + delta I) failed; increase delta",
            )
        })?;
        let (sigma_eps2, dropped) = estimate_sigma_eps2(dataset, candidates, intercept)?;
        Ok(AoContext {
            chol,
            gram,
            delta: config.delta,
            dataset,
            candidates,
            sigma_eps2,
            dropped,
        })
    }

    pub fn sigma_eps2(&self) -> f64 {
        self.sigma_eps2
    }

    pub fn dropped_mediators(&self) -> &[usize] {
        &self.dropped
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Solves `(Z Z^T + delta I) x = b`; exposed for verification against a
    /// dense oracle.
    pub fn solve_shifted(&self, b: &Array1<f64>) -> Array1<f64> {
        self.chol.solve(b.view())
    }
}

/// Projection vector `v_j = delta (W_{-j} W_{-j}^T + delta I)^{-1} M_j`
/// where `W_{-j}` is the full design with column `M_j` removed.
///
/// Computed from the shared factorization of `A = Z Z^T + delta I` through
/// the rank-one identity `(A - m m^T)^{-1} m = A^{-1} m / (1 - m^T A^{-1} m)`.
/// When that denominator is within `1e-12` of zero the projection is
/// recomputed from a direct factorization of `A - m m^T`.
pub fn ao_projection(context: &AoContext, j: usize) -> Result<Array1<f64>> {
    assert!(
        context.candidates.contains(j),
        "mediator {j} is not in the candidate set"
    );
    let m = context.dataset.mediator(j);
    let w = context.chol.solve(m);
    let s = m.dot(&w);
    let denom = 1.0 - s;
    if denom.abs() < 1e-12 {
        let n = context.dataset.n();
        let mut down = context.gram.clone();
        for a in 0..n {
            down[[a, a]] += context.delta;
            for b in 0..n {
                down[[a, b]] -= m[a] * m[b];
            }
        }
        let chol = Cholesky::factor(down).map_err(|_| {
            Error::numerical(
                "orthogonalization",
                format!("downdated system for mediator {} is not positive definite", j + 1),
            )
        })?;
        let v = chol.solve(m);
        return Ok(v * context.delta);
    }
    Ok(w * (context.delta / denom))
}

/// Estimate, standard error and two-sided p-value for the outcome-model
/// coefficient of candidate `j`, given its projection vector.
pub fn ao_beta_test(context: &AoContext, j: usize, v: &Array1<f64>) -> Result<(f64, f64, f64)> {
    let m = context.dataset.mediator(j);
    let vt_m = v.dot(&m);
    let v_norm = v.dot(v).sqrt();
    let m_norm = m.dot(&m).sqrt();
    if vt_m.abs() <= 1e-12 * v_norm * m_norm {
        return Err(Error::numerical(
            "orthogonalization",
            format!("projection for mediator {} is orthogonal to it", j + 1),
        ));
    }
    let beta_hat = v.dot(&context.dataset.outcome()) / vt_m;
    let se = (v.dot(v) * context.sigma_eps2).sqrt() / vt_m.abs();
    let p = p_from_estimate(beta_hat, se);
    Ok((beta_hat, se, p))
}

/// Two-sided p-value for an estimate/se pair, with the zero-variance
/// convention `p = 1` for a zero estimate and `p = 0` otherwise.
pub fn p_from_estimate(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        two_sided_p(estimate / se)
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `p = 2 (1 - Phi(|z|))`, evaluated through the complementary error
/// function so extreme statistics keep full relative precision.
pub fn two_sided_p(z: f64) -> f64 {
    assert!(!z.is_nan(), "test statistic must not be NaN");
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Residual variance from the OLS refit of `Y` on the screened mediators
/// plus exposure (and covariates / intercept), with denominator
/// `n - (columns fitted)`. Collinear mediator columns are dropped and
/// reported; a collinear exposure/covariate column is an error.
pub fn estimate_sigma_eps2(
    dataset: &Dataset,
    candidates: &CandidateSet,
    intercept: bool,
) -> Result<(f64, Vec<usize>)> {
    let n = dataset.n();
    let q = dataset.q();
    let fixed = 1 + q + usize::from(intercept);
    if candidates.len() + fixed >= n {
        return Err(Error::numerical(
            "orthogonalization",
            format!(
                "variance refit needs fewer than {n} columns, got {} candidates plus {fixed} fixed",
                candidates.len()
            ),
        ));
    }
    let ones;
    let mut cols = Vec::with_capacity(fixed + candidates.len());
    cols.push(dataset.exposure());
    if let Some(c) = dataset.covariates() {
        for col in c.columns() {
            cols.push(col);
        }
    }
    if intercept {
        ones = Array1::from_elem(n, 1.0);
        cols.push(ones.view());
    }
    for &j in candidates.indices() {
        cols.push(dataset.mediator(j));
    }
    let fit = ols_rss_dropping(&cols, fixed, dataset.outcome())?;
    let dropped: Vec<usize> = fit
        .dropped
        .iter()
        .map(|&pos| candidates.indices()[pos - fixed])
        .collect();
    let df = n - fit.rank;
    Ok((fit.rss / df as f64, dropped))
}

/// Realized bias `R_j = (v^T M_j)^{-1} v^T W_{-j} eta_{-j}` of the
/// projection estimator on simulated data with known coefficients; a
/// diagnostic, reported rather than enforced.
pub fn realized_bias(dataset: &Dataset, truth: &ModelTruth, j: usize, v: &Array1<f64>) -> f64 {
    let m_j = dataset.mediator(j);
    let vt_m = v.dot(&m_j);
    // v^T (M beta + gamma X) - beta_j v^T M_j, i.e. the nuisance part only.
    let mut nuisance = truth.gamma * v.dot(&dataset.exposure());
    for (idx, &b) in truth.beta.iter().enumerate() {
        if b != 0.0 && idx != j {
            nuisance += b * v.dot(&dataset.mediator(idx));
        }
    }
    nuisance / vt_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn p_value_center_and_symmetry() {
        assert_eq!(two_sided_p(0.0), 1.0);
        assert_eq!(two_sided_p(-3.0), two_sided_p(3.0));
    }

    #[test]
    fn p_value_matches_normal_quantile() {
        // 1.959964 is the 97.5% standard-normal quantile
        assert_relative_eq!(two_sided_p(1.959964), 0.05, epsilon = 1e-5);
    }

    #[test]
    fn p_value_hand_example() {
        // v^T M = 2, v^T Y = 4, v^T v = 1, sigma2 = 1:
        // beta = 2, se = 0.5, z = 4
        let beta = 4.0 / 2.0;
        let se = (1.0f64 * 1.0).sqrt() / 2.0;
        let p = p_from_estimate(beta, se);
        assert_relative_eq!(beta, 2.0, epsilon = 1e-15);
        assert_relative_eq!(se, 0.5, epsilon = 1e-15);
        assert_relative_eq!(p, 6.334248e-5, max_relative = 1e-5);
    }

    #[test]
    fn zero_variance_conventions() {
        assert_eq!(p_from_estimate(0.0, 0.0), 1.0);
        assert_eq!(p_from_estimate(0.5, 0.0), 0.0);
    }

    #[test]
    fn phi_tail_precision() {
        // reference survival values for the standard normal
        let cases = [
            (0.5, 0.6170750774519738),
            (1.0, 0.3173105078629141),
            (2.5, 0.01241933065155227),
            (4.0, 6.334248366623984e-5),
        ];
        for (z, expect) in cases {
            assert_relative_eq!(two_sided_p(z), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn empty_nuisance_projection_is_identity() {
        // With no other columns the projection system is delta I + m m^T and
        // the downdate identity must return m itself:
        // (delta I)^{-1} m * delta = m.
        let m = array![1.0, -2.0, 0.5, 3.0];
        let n = m.len();
        let delta = 1.0;
        let mut a = Array2::from_diag_elem(n, delta);
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] += m[i] * m[j];
            }
        }
        let chol = Cholesky::factor(a).unwrap();
        let w = chol.solve(m.view());
        let denom = 1.0 - m.dot(&w);
        let v = &w * (delta / denom);
        for i in 0..n {
            assert_relative_eq!(v[i], m[i], max_relative = 1e-10);
        }
    }
}
