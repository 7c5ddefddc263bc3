//! Contracts, validated portfolios and their design matrices.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// One insurance contract: exposure in years, observed loss cost and the
/// risk characteristics (without the intercept).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub contract_id: String,
    pub exposure: f64,
    pub loss_cost: f64,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(contract_id: impl Into<String>, exposure: f64, loss_cost: f64, covariates: Vec<f64>) -> Self {
        Self {
            contract_id: contract_id.into(),
            exposure,
            loss_cost,
            covariates,
        }
    }

    /// Row-level checks: exposure in `(0, 1]`, finite non-negative loss,
    /// finite covariates.
    pub fn validate(&self, row: usize) -> Result<()> {
        if !(self.exposure > 0.0 && self.exposure <= 1.0) {
            return Err(Error::InvalidObservation {
                row,
                field: "exposure",
                value: self.exposure,
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.loss_cost >= 0.0 && self.loss_cost.is_finite()) {
            return Err(Error::InvalidObservation {
                row,
                field: "loss_cost",
                value: self.loss_cost,
                reason: "must be finite and non-negative",
            });
        }
        if let Some(&bad) = self.covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                row,
                field: "covariate",
                value: bad,
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

/// Annualized loss cost `z = y / t`.
pub fn normalize(obs: &Observation) -> f64 {
    obs.loss_cost / obs.exposure
}

/// Builds the `n x (q+1)` design with a leading column of ones and checks
/// that it has full column rank.
pub fn build_design<'a, I>(rows: I, q: usize, names: &[String]) -> Result<DMatrix<f64>>
where
    I: ExactSizeIterator<Item = &'a [f64]>,
{
    let n = rows.len();
    if n < q + 1 {
        return Err(Error::TooFewContracts { rows: n, columns: q + 1 });
    }
    let mut design = DMatrix::<f64>::zeros(n, q + 1);
    for (i, row) in rows.enumerate() {
        if row.len() != q {
            return Err(Error::Dimension {
                expected: q,
                actual: row.len(),
                context: "covariates per contract",
            });
        }
        design[(i, 0)] = 1.0;
        for (j, &v) in row.iter().enumerate() {
            design[(i, j + 1)] = v;
        }
    }
    if let Some(cols) = linalg::dependent_columns(&design) {
        let columns = cols
            .into_iter()
            .map(|c| if c == 0 { "intercept".to_string() } else { names[c - 1].clone() })
            .collect();
        return Err(Error::RankDeficient { columns });
    }
    Ok(design)
}

/// Default covariate names `x1..xq`.
pub fn default_names(q: usize) -> Vec<String> {
    (1..=q).map(|j| format!("x{j}")).collect()
}

/// A validated, ordered set of contracts plus its full-rank design matrix.
#[derive(Debug, Clone)]
pub struct Portfolio {
    observations: Vec<Observation>,
    design: DMatrix<f64>,
    covariate_names: Vec<String>,
}

impl Portfolio {
    /// Validates `observations` and builds the design with covariate names
    /// `x1..xq`.
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let q = observations.first().map_or(0, |o| o.covariates.len());
        Self::with_names(observations, default_names(q))
    }

    pub fn with_names(observations: Vec<Observation>, covariate_names: Vec<String>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyPortfolio);
        }
        let q = covariate_names.len();
        for (row, obs) in observations.iter().enumerate() {
            obs.validate(row)?;
        }
        let design = build_design(observations.iter().map(|o| o.covariates.as_slice()), q, &covariate_names)?;
        Ok(Self {
            observations,
            design,
            covariate_names,
        })
    }

    /// Intercept-only portfolio from parallel exposure and loss slices.
    pub fn homogeneous(exposures: &[f64], losses: &[f64]) -> Result<Self> {
        if exposures.len() != losses.len() {
            return Err(Error::Dimension {
                expected: exposures.len(),
                actual: losses.len(),
                context: "losses vs exposures",
            });
        }
        let obs = exposures
            .iter()
            .zip(losses)
            .enumerate()
            .map(|(i, (&t, &y))| Observation::new(format!("c{}", i + 1), t, y, Vec::new()))
            .collect();
        Self::new(obs)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Number of contracts.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of coefficients, `q + 1`.
    pub fn n_coefficients(&self) -> usize {
        self.design.ncols()
    }

    pub fn exposures(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.exposure).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.loss_cost).collect()
    }

    /// Annualized losses `z_i`.
    pub fn normalized(&self) -> Vec<f64> {
        self.observations.iter().map(normalize).collect()
    }

    pub fn total_loss(&self) -> f64 {
        self.observations.iter().map(|o| o.loss_cost).sum()
    }

    pub fn all_full_exposure(&self) -> bool {
        self.observations.iter().all(|o| o.exposure == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&Observation::new("a", 0.5, 0.0, vec![])), 0.0);
        assert_eq!(normalize(&Observation::new("a", 1.0, 20.0, vec![])), 20.0);
        assert_eq!(normalize(&Observation::new("a", 0.5, 5.0, vec![])), 10.0);
    }

    #[test]
    fn rejects_bad_rows() {
        let zero_t = Portfolio::homogeneous(&[0.5, 0.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(zero_t, Error::InvalidObservation { row: 1, field: "exposure", .. }));
        let big_t = Portfolio::homogeneous(&[1.5], &[1.0]).unwrap_err();
        assert!(matches!(big_t, Error::InvalidObservation { field: "exposure", .. }));
        let neg = Portfolio::homogeneous(&[0.5], &[-1.0]).unwrap_err();
        assert!(matches!(neg, Error::InvalidObservation { field: "loss_cost", .. }));
        assert_eq!(Portfolio::homogeneous(&[], &[]).unwrap_err(), Error::EmptyPortfolio);
    }

    #[test]
    fn zero_losses_are_accepted() {
        let p = Portfolio::homogeneous(&[0.5, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(p.total_loss(), 0.0);
    }

    #[test]
    fn too_few_contracts() {
        let obs = vec![Observation::new("a", 1.0, 1.0, vec![1.0, 0.0])];
        assert_eq!(
            Portfolio::new(obs).unwrap_err(),
            Error::TooFewContracts { rows: 1, columns: 3 }
        );
    }

    #[test]
    fn duplicate_column_names_both() {
        let obs = (0..5)
            .map(|i| {
                let v = (i % 2) as f64;
                Observation::new(format!("c{i}"), 1.0, 1.0, vec![v, v])
            })
            .collect();
        let err = Portfolio::new(obs).unwrap_err();
        assert_eq!(
            err,
            Error::RankDeficient {
                columns: vec!["x1".into(), "x2".into()]
            }
        );
    }

    #[test]
    fn design_has_leading_ones() {
        let obs = vec![
            Observation::new("a", 1.0, 1.0, vec![0.0]),
            Observation::new("b", 0.5, 2.0, vec![1.0]),
        ];
        let p = Portfolio::new(obs).unwrap();
        assert_eq!(p.design().column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert_eq!(p.n_coefficients(), 2);
    }
}
