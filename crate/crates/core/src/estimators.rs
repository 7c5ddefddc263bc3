//! Premiums and the asymptotic comparison of the two premium estimators.
//!
//! The coefficient estimator of each scheme is asymptotically
//! `N(beta, phi (X' D X)^-1)`, so the log of a premium estimator is normal
//! and the premium itself lognormal. Because the offset weights dominate the
//! ratio weights, `Cov_R - Cov_O` is positive definite as soon as one
//! contract has partial exposure.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{TweedieFamily, WeightScheme};
use crate::linalg;
use crate::model::WeightedProblem;
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PremiumQuote {
    pub contract_id: String,
    /// `exp(x' beta)`.
    pub annualized: f64,
    /// `t * exp(x' beta)`.
    pub exposure_scaled: f64,
}

fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}

fn dot(x: &[f64], beta: &DVector<f64>) -> f64 {
    x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
}

/// Premium for a design row `x` (leading 1 included) and exposure `t`.
pub fn premium(beta: &DVector<f64>, x: &[f64], t: f64) -> Result<PremiumQuote> {
    check_len(beta.len(), x.len(), "design row")?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain {
            what: "exposure",
            detail: format!("t = {t} is outside (0, 1]"),
        });
    }
    let annualized = dot(x, beta).exp();
    Ok(PremiumQuote {
        contract_id: String::new(),
        annualized,
        exposure_scaled: t * annualized,
    })
}

/// Premiums of every contract in `portfolio`.
pub fn portfolio_premiums(portfolio: &Portfolio, beta: &DVector<f64>) -> Result<Vec<PremiumQuote>> {
    check_len(portfolio.n_coefficients(), beta.len(), "coefficient vector")?;
    let design = portfolio.design();
    portfolio
        .observations()
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            let row: Vec<f64> = design.row(i).iter().copied().collect();
            let mut q = premium(beta, &row, obs.exposure)?;
            q.contract_id = obs.contract_id.clone();
            Ok(q)
        })
        .collect()
}

/// Whether a covariance matrix already carries the dispersion factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceScale {
    /// The matrix is `phi (X' D X)^-1`.
    IncludesDispersion,
    /// The matrix is `(X' D X)^-1`; multiply by the given `phi`.
    Unscaled { phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorMoments {
    pub mean: f64,
    pub variance: f64,
    pub scheme: Option<WeightScheme>,
}

fn quadratic_form(x: &[f64], m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for (a, xa) in x.iter().enumerate() {
        for (b, xb) in x.iter().enumerate() {
            s += xa * m[(a, b)] * xb;
        }
    }
    s
}

/// Accepts symmetric positive semi-definite matrices (the zero matrix is a
/// legitimate degenerate covariance).
fn check_covariance(m: &DMatrix<f64>) -> Result<()> {
    let scale = linalg::max_abs(m).max(1.0);
    let asym = linalg::max_abs(&(m - m.transpose()));
    if asym > 1e-10 * scale {
        return Err(Error::Asymmetric(asym));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("covariance has non-finite entries".into()));
    }
    let min_eig = linalg::symmetrize(m).symmetric_eigenvalues().min();
    if min_eig < -1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("covariance has eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// Lognormal mean and variance of `exp(x' beta_hat)` when
/// `beta_hat ~ N(beta, covariance)`:
/// `E = exp(x' beta + s/2)`, `Var = (exp(s) - 1) E^2` with `s = x' Cov x`.
pub fn premium_moments(
    x: &[f64],
    beta: &DVector<f64>,
    covariance: &DMatrix<f64>,
    scale: CovarianceScale,
) -> Result<EstimatorMoments> {
    check_len(beta.len(), x.len(), "design row")?;
    check_len(beta.len(), covariance.nrows(), "covariance rows")?;
    check_len(beta.len(), covariance.ncols(), "covariance columns")?;
    check_covariance(covariance)?;
    let factor = match scale {
        CovarianceScale::IncludesDispersion => 1.0,
        CovarianceScale::Unscaled { phi } => {
            if !(phi > 0.0) {
                return Err(Error::Dispersion(phi));
            }
            phi
        }
    };
    let s = (factor * quadratic_form(x, covariance)).max(0.0);
    let mean = (dot(x, beta) + 0.5 * s).exp();
    let variance = s.exp_m1() * mean * mean;
    Ok(EstimatorMoments {
        mean,
        variance,
        scheme: None,
    })
}

/// Asymptotic covariance `phi (X' D X)^-1` of a scheme's estimator with `D`
/// evaluated at `beta`.
pub fn scheme_covariance(
    portfolio: &Portfolio,
    beta: &DVector<f64>,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<DMatrix<f64>> {
    let gram = WeightedProblem::for_scheme(portfolio, scheme, family).gram(beta)?;
    Ok(linalg::spd_inverse(&gram, "X'DX")? * family.phi())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceVerdict {
    /// `Cov_R - Cov_O` is positive definite.
    StrictlyDominant,
    /// Every exposure is 1 and the two covariances coincide.
    DegenerateEqual,
}

#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub verdict: DominanceVerdict,
    pub covariance_offset: DMatrix<f64>,
    pub covariance_ratio: DMatrix<f64>,
    /// `M = Cov_R - Cov_O`.
    pub difference: DMatrix<f64>,
}

/// Compares the two asymptotic covariances at `beta`.
///
/// Fails with [`Error::NotPositiveDefinite`] if `M` cannot be factorised
/// although some contract has partial exposure.
pub fn covariance_dominance(portfolio: &Portfolio, beta: &DVector<f64>, family: &TweedieFamily) -> Result<DominanceReport> {
    let covariance_offset = scheme_covariance(portfolio, beta, WeightScheme::Offset, family)?;
    let covariance_ratio = scheme_covariance(portfolio, beta, WeightScheme::Ratio, family)?;
    let difference = &covariance_ratio - &covariance_offset;
    let norm = linalg::max_abs(&covariance_ratio).max(linalg::max_abs(&covariance_offset));

    let verdict = if portfolio.all_full_exposure() {
        let min_eig = linalg::symmetrize(&difference).symmetric_eigenvalues().min();
        if linalg::max_abs(&difference) > 1e-12 * norm.max(1.0) || min_eig < -1e-10 * norm {
            return Err(Error::NotPositiveDefinite(format!(
                "covariances differ at full exposure (min eigenvalue {min_eig:e})"
            )));
        }
        DominanceVerdict::DegenerateEqual
    } else {
        match nalgebra::Cholesky::new(linalg::symmetrize(&difference)) {
            Some(_) => DominanceVerdict::StrictlyDominant,
            None => {
                return Err(Error::NotPositiveDefinite(
                    "Cov_R - Cov_O failed to factorise".into(),
                ))
            }
        }
    };
    Ok(DominanceReport {
        verdict,
        covariance_offset,
        covariance_ratio,
        difference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentOrdering {
    pub offset: EstimatorMoments,
    pub ratio: EstimatorMoments,
    /// Some contract has exposure below 1.
    pub partial_exposure: bool,
    /// `E_O < E_R` and `Var_O < Var_R` with partial exposure, equality
    /// otherwise.
    pub holds: bool,
}

/// Moments of both premium estimators for the design row `x`, with `D`
/// evaluated at `beta`.
pub fn moment_ordering(
    x: &[f64],
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    family: &TweedieFamily,
) -> Result<MomentOrdering> {
    let mut per_scheme = WeightScheme::ALL.iter().map(|&scheme| {
        let cov = scheme_covariance(portfolio, beta, scheme, family)?;
        let mut m = premium_moments(x, beta, &cov, CovarianceScale::IncludesDispersion)?;
        m.scheme = Some(scheme);
        Ok::<_, Error>(m)
    });
    let offset = per_scheme.next().unwrap()?;
    let ratio = per_scheme.next().unwrap()?;
    let partial_exposure = !portfolio.all_full_exposure();
    let holds = if partial_exposure {
        offset.mean < ratio.mean && offset.variance < ratio.variance
    } else {
        offset.mean == ratio.mean && offset.variance == ratio.variance
    };
    Ok(MomentOrdering {
        offset,
        ratio,
        partial_exposure,
        holds,
    })
}

/// Expected random gap `sum_i t_i (zeta_i - E[zeta_hat_i])` under `scheme`,
/// with the true coefficients `beta`.
///
/// It is never positive: the lognormal premium estimator is biased upwards.
pub fn expected_random_gap(
    portfolio: &Portfolio,
    beta: &DVector<f64>,
    family: &TweedieFamily,
    scheme: WeightScheme,
) -> Result<f64> {
    let cov = scheme_covariance(portfolio, beta, scheme, family)?;
    let design = portfolio.design();
    let mut total = 0.0;
    for (i, obs) in portfolio.observations().iter().enumerate() {
        let row: Vec<f64> = design.row(i).iter().copied().collect();
        let zeta = dot(&row, beta).exp();
        let m = premium_moments(&row, beta, &cov, CovarianceScale::IncludesDispersion)?;
        total += obs.exposure * (zeta - m.mean);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomGapComparison {
    pub offset: f64,
    pub ratio: f64,
    /// `E[gap_R] <= E[gap_O]`.
    pub ordered: bool,
}

pub fn compare_random_gaps(
    portfolio: &Portfolio,
    beta: &DVector<f64>,
    family: &TweedieFamily,
) -> Result<RandomGapComparison> {
    let offset = expected_random_gap(portfolio, beta, family, WeightScheme::Offset)?;
    let ratio = expected_random_gap(portfolio, beta, family, WeightScheme::Ratio)?;
    Ok(RandomGapComparison {
        offset,
        ratio,
        ordered: ratio <= offset,
    })
}
