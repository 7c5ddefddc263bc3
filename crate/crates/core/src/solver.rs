//! Iteratively reweighted least squares (Fisher scoring) for the weighted
//! log-link Tweedie regression, and the closed-form intercept-only fits.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{TweedieFamily, WeightScheme};
use crate::linalg;
use crate::model::WeightedProblem;
use crate::portfolio::Portfolio;

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `beta_0 = log(homogeneous MLE)`, all slopes zero.
    HomogeneousIntercept,
    Zeros,
    UserVector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Stop once `max_j |(X' D R)_j|` (the gradient scaled by `phi`) falls
    /// below this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: Init,
    /// Halve a step while it lowers the quasi-log-likelihood.
    pub step_halving: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            init: Init::HomogeneousIntercept,
            step_halving: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain {
                what: "tolerance",
                detail: format!("{} must be strictly positive", self.tolerance),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain {
                what: "max_iterations",
                detail: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub scheme: Option<WeightScheme>,
    /// Number of contracts the fit was computed on.
    pub n_observations: usize,
    pub beta_hat: DVector<f64>,
    /// `phi (X' D X)^-1` at `beta_hat`.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `max_j |(X' D R)_j|` at `beta_hat`.
    pub gradient_norm: f64,
    /// Quasi-log-likelihood at `beta_hat`.
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
}

impl FitResult {
    /// Annualized premiums `exp(x_i' beta_hat)` over the rows of `design`.
    pub fn annualized_premiums(&self, design: &DMatrix<f64>) -> Vec<f64> {
        linalg::scores(design, &self.beta_hat).into_iter().map(f64::exp).collect()
    }
}

/// Weighted mean of the annualized losses under the scheme's weights:
/// the MLE of a common mean.
pub fn homogeneous_mle(portfolio: &Portfolio, scheme: WeightScheme, family: &TweedieFamily) -> Result<f64> {
    if portfolio.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for obs in portfolio.observations() {
        let w = scheme.weight_unchecked(obs.exposure, family.p());
        num += w * (obs.loss_cost / obs.exposure);
        den += w;
    }
    Ok(num / den)
}

/// Closed-form intercept of the intercept-only version of `problem`:
/// `sum w e^((1-p) o) r / sum w e^((2-p) o)`.
fn problem_intercept(problem: &WeightedProblem<'_>) -> Result<f64> {
    let zeros = DVector::zeros(problem.n_coefficients());
    let offsets = problem.linear_predictor(&zeros)?;
    let p = problem.p();
    let (mut num, mut den) = (0.0, 0.0);
    for ((&o, &r), &w) in offsets.iter().zip(problem.response()).zip(problem.weights()) {
        num += w * ((1.0 - p) * o).exp() * r;
        den += w * ((2.0 - p) * o).exp();
    }
    if num <= 0.0 {
        return Err(Error::AllZeroLosses);
    }
    Ok((num / den).ln())
}

fn initial_beta(problem: &WeightedProblem<'_>, init: &Init) -> Result<DVector<f64>> {
    let k = problem.n_coefficients();
    match init {
        Init::HomogeneousIntercept => {
            let mut beta = DVector::zeros(k);
            beta[0] = problem_intercept(problem)?;
            Ok(beta)
        }
        Init::Zeros => Ok(DVector::zeros(k)),
        Init::UserVector(v) => {
            if v.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    actual: v.len(),
                    context: "user initial vector",
                });
            }
            Ok(DVector::from_column_slice(v))
        }
    }
}

/// Starting coefficients for a scheme fit.
pub fn init_beta(
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
    config: &FitConfig,
) -> Result<DVector<f64>> {
    let problem = WeightedProblem::for_scheme(portfolio, scheme, family);
    initial_beta(&problem, &config.init)
}

/// Solves `(X' D X) delta = X' D R`.
fn scoring_direction(problem: &WeightedProblem<'_>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = problem.gram(beta)?;
    let score = problem.score(beta)?;
    let chol = linalg::cholesky(&gram, "X'DX")?;
    Ok(chol.solve(&score))
}

/// One IRLS update `beta + (X' D X)^-1 X' D R`. The dispersion cancels.
pub fn irls_step(
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<DVector<f64>> {
    let problem = WeightedProblem::for_scheme(portfolio, scheme, family);
    Ok(beta + scoring_direction(&problem, beta)?)
}

/// Runs IRLS on an arbitrary weighted problem.
///
/// Non-convergence is reported through `converged = false`; a singular
/// information matrix aborts with an error.
pub fn fit_problem(problem: &WeightedProblem<'_>, phi: f64, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if problem.response().iter().all(|&r| r == 0.0) {
        return Err(Error::AllZeroLosses);
    }
    let mut beta = initial_beta(problem, &config.init)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut objective = problem.quasi_loglik(&beta, 1.0)?;
    let mut gradient_norm;

    loop {
        let score = problem.score(&beta)?;
        gradient_norm = score.amax();
        if !gradient_norm.is_finite() || !objective.is_finite() {
            return Err(Error::SingularInformation("non-finite score during IRLS"));
        }
        trace.push(TraceEntry {
            iteration: iterations,
            beta: beta.iter().copied().collect(),
            objective: objective / phi,
            gradient_norm,
        });
        if gradient_norm < config.tolerance {
            converged = true;
            break;
        }
        if iterations == config.max_iterations {
            break;
        }

        let mut step = scoring_direction(problem, &beta)?;
        let mut candidate = &beta + &step;
        let mut cand_obj = problem.quasi_loglik(&candidate, 1.0)?;
        if config.step_halving {
            let mut halvings = 0;
            while !(cand_obj >= objective) && halvings < 50 {
                step *= 0.5;
                candidate = &beta + &step;
                cand_obj = problem.quasi_loglik(&candidate, 1.0)?;
                halvings += 1;
            }
            if halvings > 0 {
                debug!("iteration {iterations}: step halved {halvings} times");
            }
        }
        beta = candidate;
        objective = cand_obj;
        iterations += 1;
    }

    debug!("IRLS finished after {iterations} iterations, |score| = {gradient_norm:e}, converged = {converged}");
    let covariance = linalg::spd_inverse(&problem.gram(&beta)?, "X'DX at the estimate")? * phi;
    Ok(FitResult {
        scheme: None,
        n_observations: problem.response().len(),
        beta_hat: beta,
        covariance,
        iterations,
        converged,
        gradient_norm,
        objective: objective / phi,
        trace,
    })
}

/// Fits the weighted regression of the annualized losses under `scheme`.
pub fn fit(
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    let problem = WeightedProblem::for_scheme(portfolio, scheme, family);
    let mut result = fit_problem(&problem, family.phi(), config)?;
    result.scheme = Some(scheme);
    Ok(result)
}

/// Fits the raw losses with `log t` offsets and unit weights.
pub fn fit_offset_formulation(portfolio: &Portfolio, family: &TweedieFamily, config: &FitConfig) -> Result<FitResult> {
    let problem = WeightedProblem::offset_formulation(portfolio, family);
    let mut result = fit_problem(&problem, family.phi(), config)?;
    result.scheme = Some(WeightScheme::Offset);
    Ok(result)
}
