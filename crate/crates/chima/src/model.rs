//! Shared domain types and their validation. No numerics live here beyond
//! the invariant checks performed at construction time.
//!
//! All types are immutable after validation and safe to share read-only
//! across worker threads.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::to_column_major;

/// A validated analysis dataset: exposure vector, mediator matrix, outcome
/// vector and optional covariates.
///
/// Mediators are stored column-major so that extracting a single mediator
/// column (the inner loop of the orthogonalization stage) is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    exposure: Array1<f64>,
    mediators: Array2<f64>,
    outcome: Array1<f64>,
    covariates: Option<Array2<f64>>,
    mediator_names: Vec<String>,
}

impl Dataset {
    /// Validates and assembles a dataset. Errors on row-count mismatches,
    /// non-finite entries (reporting the 1-based position), duplicate
    /// mediator names, and undersized samples.
    pub fn new(
        exposure: Array1<f64>,
        mediators: Array2<f64>,
        outcome: Array1<f64>,
        covariates: Option<Array2<f64>>,
        mediator_names: Vec<String>,
    ) -> Result<Self> {
        let n = exposure.len();
        let (mn, p) = mediators.dim();
        if mn != n || outcome.len() != n {
            return Err(Error::data(format!(
                "row count mismatch: exposure has {n} rows, mediators {mn}, outcome {}",
                outcome.len()
            )));
        }
        if let Some(c) = &covariates {
            if c.nrows() != n {
                return Err(Error::data(format!(
                    "row count mismatch: covariates have {} rows, expected {n}",
                    c.nrows()
                )));
            }
        }
        if n < 4 {
            return Err(Error::data(format!("need at least 4 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::data("need at least one mediator column"));
        }
        if mediator_names.len() != p {
            return Err(Error::data(format!(
                "have {p} mediator columns but {} names",
                mediator_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(p);
        for name in &mediator_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::data(format!("duplicate mediator name '{name}'")));
            }
        }
        check_finite_vec(&exposure, "exposure")?;
        check_finite_vec(&outcome, "outcome")?;
        check_finite_mat(&mediators, "mediators")?;
        if let Some(c) = &covariates {
            check_finite_mat(c, "covariates")?;
        }
        Ok(Dataset {
            exposure,
            mediators: to_column_major(mediators),
            outcome,
            covariates: covariates.map(to_column_major),
            mediator_names,
        })
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn p(&self) -> usize {
        self.mediators.ncols()
    }

    /// Number of covariate columns (0 when absent).
    pub fn q(&self) -> usize {
        self.covariates.as_ref().map_or(0, |c| c.ncols())
    }

    pub fn exposure(&self) -> ArrayView1<f64> {
        self.exposure.view()
    }

    pub fn outcome(&self) -> ArrayView1<f64> {
        self.outcome.view()
    }

    pub fn mediators(&self) -> &Array2<f64> {
        &self.mediators
    }

    pub fn mediator(&self, j: usize) -> ArrayView1<f64> {
        self.mediators.column(j)
    }

    pub fn covariates(&self) -> Option<ArrayView2<f64>> {
        self.covariates.as_ref().map(|c| c.view())
    }

    pub fn mediator_names(&self) -> &[String] {
        &self.mediator_names
    }
}

fn check_finite_vec(v: &Array1<f64>, what: &str) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::data(format!(
                "non-finite value in {what} at row {}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn check_finite_mat(m: &Array2<f64>, what: &str) -> Result<()> {
    for ((i, j), x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::data(format!(
                "non-finite value in {what} at ({}, {})",
                i + 1,
                j + 1
            )));
        }
    }
    Ok(())
}

/// Synthetic mediator names "M0001", "M0002", ... used by the simulation
/// harness so reports and set comparisons have stable identifiers.
pub fn synthetic_names(p: usize) -> Vec<String> {
    let width = p.to_string().len().max(4);
    (1..=p).map(|j| format!("M{j:0width$}")).collect()
}

/// Ground truth for simulated data: the coefficient vectors, the direct
/// effect, and the indices with a nonzero mediation contribution.
#[derive(Debug, Clone)]
pub struct ModelTruth {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub gamma: f64,
    pub active_set: Vec<usize>,
}

impl ModelTruth {
    /// Builds the truth record; the active set is derived as the indices
    /// where both coefficients are nonzero.
    pub fn new(alpha: Array1<f64>, beta: Array1<f64>, gamma: f64) -> Self {
        assert_eq!(alpha.len(), beta.len());
        let active_set = alpha
            .iter()
            .zip(beta.iter())
            .enumerate()
            .filter(|(_, (a, b))| **a != 0.0 && **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        ModelTruth {
            alpha,
            beta,
            gamma,
            active_set,
        }
    }
}

/// Screened candidate mediators, ordered by descending ranking score.
/// Indices are 0-based positions into the dataset's mediator columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    indices: Vec<usize>,
    scores: Vec<f64>,
    d: usize,
}

impl CandidateSet {
    pub fn new(indices: Vec<usize>, scores: Vec<f64>, d: usize) -> Self {
        assert_eq!(indices.len(), scores.len());
        assert!(indices.len() <= d);
        for w in scores.windows(2) {
            assert!(w[0] >= w[1], "candidate scores must be non-increasing");
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &j in &indices {
            assert!(seen.insert(j), "candidate indices must be distinct");
        }
        CandidateSet { indices, scores, d }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn target_size(&self) -> usize {
        self.d
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.contains(&j)
    }
}

/// Per-candidate inference record: the two marginal tests and their
/// combined maximum p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub index: usize,
    pub alpha_hat: f64,
    pub se_alpha: f64,
    pub p_alpha: f64,
    pub beta_hat: f64,
    pub se_beta: f64,
    pub p_beta: f64,
    pub p_max: f64,
}

impl TestRecord {
    /// Assembles a record; `p_max` is always computed here so the
    /// `p_max = max(p_alpha, p_beta)` invariant holds by construction.
    pub fn new(
        index: usize,
        alpha_hat: f64,
        se_alpha: f64,
        p_alpha: f64,
        beta_hat: f64,
        se_beta: f64,
        p_beta: f64,
    ) -> Self {
        assert!((0.0..=1.0).contains(&p_alpha), "p_alpha out of [0,1]");
        assert!((0.0..=1.0).contains(&p_beta), "p_beta out of [0,1]");
        assert!(se_alpha >= 0.0 && se_alpha.is_finite());
        assert!(se_beta >= 0.0 && se_beta.is_finite());
        TestRecord {
            index,
            alpha_hat,
            se_alpha,
            p_alpha,
            beta_hat,
            se_beta,
            p_beta,
            p_max: p_alpha.max(p_beta),
        }
    }
}

/// Fitted composite-null FDR model: estimated null-configuration
/// proportions, the tuning parameter, and the rejection threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrModel {
    pub pi00: f64,
    pub pi01: f64,
    pub pi10: f64,
    pub lambda: f64,
    pub t_hat: f64,
    pub alpha_level: f64,
}

impl FdrModel {
    pub fn new(pi00: f64, pi01: f64, pi10: f64, lambda: f64, t_hat: f64, alpha_level: f64) -> Self {
        for (name, v) in [("pi00", pi00), ("pi01", pi01), ("pi10", pi10)] {
            assert!((0.0..=1.0).contains(&v), "{name} out of [0,1]");
        }
        assert!(pi00 + pi01 + pi10 <= 1.0 + 1e-9);
        assert!(lambda > 0.0 && lambda < 1.0);
        assert!((0.0..=1.0).contains(&t_hat));
        assert!(alpha_level > 0.0 && alpha_level < 1.0);
        FdrModel {
            pi00,
            pi01,
            pi10,
            lambda,
            t_hat,
            alpha_level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn consistent_dimensions_validate() {
        let x = Array1::zeros(10);
        let m = Array2::zeros((10, 3));
        let y = Array1::zeros(10);
        let ds = Dataset::new(x, m, y, None, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(ds.n(), 10);
        assert_eq!(ds.p(), 3);
    }

    #[test]
    fn row_mismatch_rejected() {
        let x = Array1::zeros(10);
        let m = Array2::zeros((9, 3));
        let y = Array1::zeros(10);
        let err = Dataset::new(x, m, y, None, names(3)).unwrap_err();
        assert!(err.to_string().contains("row count mismatch"));
    }

    #[test]
    fn nan_reported_with_position() {
        let x = Array1::zeros(10);
        let mut m = Array2::zeros((10, 3));
        m[[1, 0]] = f64::NAN; // 1-based (2, 1)
        let y = Array1::zeros(10);
        let err = Dataset::new(x, m, y, None, names(3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 1)"), "got: {msg}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let x = Array1::zeros(5);
        let m = Array2::zeros((5, 2));
        let y = Array1::zeros(5);
        let err = Dataset::new(x, m, y, None, vec!["g".into(), "g".into()]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = Array1::zeros(3);
        let m = Array2::zeros((3, 2));
        let y = Array1::zeros(3);
        assert!(Dataset::new(x, m, y, None, names(2)).is_err());
    }

    #[test]
    fn validation_is_idempotent() {
        let x = Array1::from(vec![1.0, 2.0, 3.0, 4.0]);
        let m = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 0.5, 1.0, 2.0, -1.0, 0.0, 3.0])
            .unwrap();
        let y = Array1::from(vec![0.1, 0.2, 0.3, 0.4]);
        let ds = Dataset::new(x, m, y, None, names(2)).unwrap();
        let again = Dataset::new(
            ds.exposure().to_owned(),
            ds.mediators().clone(),
            ds.outcome().to_owned(),
            None,
            ds.mediator_names().to_vec(),
        )
        .unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn active_set_is_coefficient_overlap() {
        let alpha = Array1::from(vec![1.0, 0.5, 0.0, 0.2]);
        let beta = Array1::from(vec![0.3, 0.0, 0.4, -0.1]);
        let truth = ModelTruth::new(alpha, beta, 0.5);
        assert_eq!(truth.active_set, vec![0, 3]);
    }

    #[test]
    fn test_record_computes_p_max() {
        let r = TestRecord::new(2, 1.0, 0.5, 0.01, -0.2, 0.1, 0.4);
        assert_eq!(r.p_max, 0.4);
        let r = TestRecord::new(2, 1.0, 0.5, 0.7, -0.2, 0.1, 0.4);
        assert_eq!(r.p_max, 0.7);
    }

    #[test]
    fn synthetic_names_are_stable() {
        let names = synthetic_names(3);
        assert_eq!(names, vec!["M0001", "M0002", "M0003"]);
        let wide = synthetic_names(12000);
        assert_eq!(wide[0], "M00001");
    }
}
