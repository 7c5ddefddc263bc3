//! Claim-count regressions: the Poisson model, where offset and ratio fits
//! coincide, and the zero-inflated Poisson, where they do not.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WeightedProblem;
use crate::portfolio::{build_design, default_names};
use crate::solver::{fit_problem, FitConfig, FitResult};

#[derive(Debug, Clone, PartialEq)]
pub struct CountObservation {
    pub exposure: f64,
    pub count: u64,
    pub covariates: Vec<f64>,
}

impl CountObservation {
    pub fn new(exposure: f64, count: u64, covariates: Vec<f64>) -> Self {
        Self {
            exposure,
            count,
            covariates,
        }
    }

    /// Normalized count `z = y / t`.
    pub fn normalized(&self) -> f64 {
        self.count as f64 / self.exposure
    }
}

/// Validated count data with its full-rank design.
#[derive(Debug, Clone)]
pub struct CountData {
    observations: Vec<CountObservation>,
    design: DMatrix<f64>,
}

impl CountData {
    pub fn new(observations: Vec<CountObservation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyPortfolio);
        }
        for (row, o) in observations.iter().enumerate() {
            if !(o.exposure > 0.0 && o.exposure <= 1.0) {
                return Err(Error::InvalidObservation {
                    row,
                    field: "exposure",
                    value: o.exposure,
                    reason: "must lie in (0, 1]",
                });
            }
            if let Some(&v) = o.covariates.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidObservation {
                    row,
                    field: "covariate",
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        let q = observations[0].covariates.len();
        let design = build_design(observations.iter().map(|o| o.covariates.as_slice()), q, &default_names(q))?;
        Ok(Self { observations, design })
    }

    pub fn observations(&self) -> &[CountObservation] {
        &self.observations
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_coefficients(&self) -> usize {
        self.design.ncols()
    }

    pub fn all_full_exposure(&self) -> bool {
        self.observations.iter().all(|o| o.exposure == 1.0)
    }

    fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.n_coefficients() {
            return Err(Error::Dimension {
                expected: self.n_coefficients(),
                actual: beta.len(),
                context: "coefficient vector",
            });
        }
        Ok(())
    }
}

/// Exposure handling for count models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoissonMode {
    /// Raw counts with mean `t e^(x'b)`.
    Offset,
    /// Normalized counts `y/t` with mean `e^(x'b)`, weighted by `t`.
    Ratio,
}

impl PoissonMode {
    pub const ALL: [PoissonMode; 2] = [PoissonMode::Offset, PoissonMode::Ratio];

    pub fn name(self) -> &'static str {
        match self {
            PoissonMode::Offset => "offset",
            PoissonMode::Ratio => "ratio",
        }
    }
}

fn poisson_problem(data: &CountData, mode: PoissonMode) -> Result<WeightedProblem<'_>> {
    let obs = data.observations();
    match mode {
        PoissonMode::Offset => WeightedProblem::new(
            data.design(),
            obs.iter().map(|o| o.count as f64).collect(),
            vec![1.0; obs.len()],
            Some(obs.iter().map(|o| o.exposure.ln()).collect()),
            1.0,
        ),
        PoissonMode::Ratio => WeightedProblem::new(
            data.design(),
            obs.iter().map(CountObservation::normalized).collect(),
            obs.iter().map(|o| o.exposure).collect(),
            None,
            1.0,
        ),
    }
}

/// Poisson log-link regression by IRLS.
pub fn poisson_fit(data: &CountData, mode: PoissonMode, config: &FitConfig) -> Result<FitResult> {
    let problem = poisson_problem(data, mode)?;
    fit_problem(&problem, 1.0, config)
}

/// Poisson log-likelihood gradient, `X' W (r - mu)`.
pub fn poisson_gradient(data: &CountData, beta: &DVector<f64>, mode: PoissonMode) -> Result<DVector<f64>> {
    poisson_problem(data, mode)?.score(beta)
}

/// Zero-inflated Poisson: a point mass `zero_inflation` at zero mixed with a
/// Poisson count.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipParams {
    zero_inflation: f64,
    beta: DVector<f64>,
}

impl ZipParams {
    pub fn new(zero_inflation: f64, beta: DVector<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&zero_inflation) {
            return Err(Error::Domain {
                what: "zero_inflation",
                detail: format!("{zero_inflation} is outside [0, 1)"),
            });
        }
        Ok(Self { zero_inflation, beta })
    }

    pub fn zero_inflation(&self) -> f64 {
        self.zero_inflation
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
}

// Log-density of one ZIP observation with mean `mu` and its derivative in
// log(mu), without the factorial term.
fn zip_term(pi: f64, r: f64, mu: f64) -> (f64, f64) {
    if r == 0.0 {
        let keep = (1.0 - pi) * (-mu).exp();
        let total = pi + keep;
        (total.ln(), -mu * keep / total)
    } else {
        ((1.0 - pi).ln() - mu + r * mu.ln(), r - mu)
    }
}

fn zip_terms(params: &ZipParams, data: &CountData, mode: PoissonMode) -> Result<Vec<(f64, f64, f64)>> {
    data.check_beta(&params.beta)?;
    let pi = params.zero_inflation;
    Ok(data
        .observations()
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let eta: f64 = data.design().row(i).iter().zip(params.beta.iter()).map(|(x, b)| x * b).sum();
            match mode {
                PoissonMode::Offset => {
                    let (l, d) = zip_term(pi, o.count as f64, o.exposure * eta.exp());
                    (1.0, l, d)
                }
                PoissonMode::Ratio => {
                    let (l, d) = zip_term(pi, o.normalized(), eta.exp());
                    (o.exposure, l, d)
                }
            }
        })
        .collect())
}

/// ZIP log-likelihood. Offset mode sums the log-densities of the raw counts
/// with mean `t e^(x'b)`; ratio mode sums `t` times the log-density of the
/// normalized count with mean `e^(x'b)`. Factorials are dropped.
pub fn zip_loglik(params: &ZipParams, data: &CountData, mode: PoissonMode) -> Result<f64> {
    Ok(zip_terms(params, data, mode)?.iter().map(|(w, l, _)| w * l).sum())
}

/// Gradient of [`zip_loglik`] in `beta`.
pub fn zip_gradient(params: &ZipParams, data: &CountData, mode: PoissonMode) -> Result<DVector<f64>> {
    let terms = zip_terms(params, data, mode)?;
    let mut g = DVector::zeros(data.n_coefficients());
    for (i, (w, _, d)) in terms.iter().enumerate() {
        for j in 0..g.len() {
            g[j] += w * d * data.design()[(i, j)];
        }
    }
    Ok(g)
}

/// Above this spread the offset-minus-ratio log-likelihood difference is
/// considered to vary with `beta`.
pub const NONCONSTANCY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZipEvidence {
    pub zero_inflation: f64,
    pub probes: Vec<Vec<f64>>,
    /// `zip_loglik(offset) - zip_loglik(ratio)` at each probe.
    pub differences: Vec<f64>,
    pub spread: f64,
    /// The two modes share their maximizer (difference constant in beta).
    pub equivalent: bool,
    /// Every contract has full exposure.
    pub degenerate: bool,
}

/// Evaluates the two ZIP log-likelihoods at the Poisson estimate and at
/// perturbations of it, and reports whether their difference moves with
/// `beta`.
pub fn zip_nonequivalence_check(data: &CountData, zero_inflation: f64) -> Result<ZipEvidence> {
    let k = data.n_coefficients();
    let base = match poisson_fit(data, PoissonMode::Offset, &FitConfig::default()) {
        Ok(f) => f.beta_hat,
        Err(Error::AllZeroLosses) => DVector::zeros(k),
        Err(e) => return Err(e),
    };
    let mut probes = vec![base.clone(), base.add_scalar(0.25), base.add_scalar(-0.25)];
    for j in 0..k {
        let mut b = base.clone();
        b[j] += 0.5;
        probes.push(b);
    }
    let differences = probes
        .iter()
        .map(|b| {
            let params = ZipParams::new(zero_inflation, b.clone())?;
            Ok(zip_loglik(&params, data, PoissonMode::Offset)? - zip_loglik(&params, data, PoissonMode::Ratio)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = differences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = differences.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    let degenerate = data.all_full_exposure();
    Ok(ZipEvidence {
        zero_inflation,
        probes: probes.iter().map(|b| b.iter().copied().collect()).collect(),
        differences,
        spread,
        equivalent: degenerate || spread <= NONCONSTANCY_THRESHOLD,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> CountData {
        let rows = [
            (0.2, 0, 0.0),
            (0.5, 1, 1.0),
            (1.0, 0, 0.0),
            (0.8, 2, 1.0),
            (0.3, 0, 1.0),
            (1.0, 3, 0.0),
            (0.6, 0, 0.0),
            (0.9, 1, 1.0),
        ];
        CountData::new(rows.iter().map(|&(t, y, x)| CountObservation::new(t, y, vec![x])).collect()).unwrap()
    }

    fn full(data: &CountData) -> CountData {
        CountData::new(
            data.observations()
                .iter()
                .map(|o| CountObservation::new(1.0, o.count, o.covariates.clone()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn modes_agree() {
        let d = mixed();
        let o = poisson_fit(&d, PoissonMode::Offset, &FitConfig::default()).unwrap();
        let r = poisson_fit(&d, PoissonMode::Ratio, &FitConfig::default()).unwrap();
        assert!(o.converged && r.converged);
        assert!((o.beta_hat - r.beta_hat).amax() < 1e-8);
    }

    #[test]
    fn intercept_only_closed_form() {
        let d = CountData::new(
            [(0.25, 1), (1.0, 0), (0.5, 4)]
                .iter()
                .map(|&(t, y)| CountObservation::new(t, y, vec![]))
                .collect(),
        )
        .unwrap();
        let want = (5.0_f64 / 1.75).ln();
        for mode in PoissonMode::ALL {
            let f = poisson_fit(&d, mode, &FitConfig::default()).unwrap();
            assert!((f.beta_hat[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_counts_rejected() {
        let d = CountData::new(vec![CountObservation::new(0.5, 0, vec![]); 3]).unwrap();
        assert_eq!(
            poisson_fit(&d, PoissonMode::Ratio, &FitConfig::default()).unwrap_err(),
            Error::AllZeroLosses
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(CountData::new(vec![CountObservation::new(0.0, 1, vec![])]).is_err());
        assert!(ZipParams::new(1.0, DVector::zeros(1)).is_err());
        assert!(ZipParams::new(-0.1, DVector::zeros(1)).is_err());
    }

    #[test]
    fn zip_without_inflation_is_poisson() {
        let d = mixed();
        let beta = DVector::from_vec(vec![-0.3, 0.4]);
        let params = ZipParams::new(0.0, beta.clone()).unwrap();
        for mode in PoissonMode::ALL {
            let g = zip_gradient(&params, &d, mode).unwrap();
            let pg = poisson_gradient(&d, &beta, mode).unwrap();
            assert!((g - pg).amax() < 1e-10);
        }
    }

    #[test]
    fn zip_gradients_by_exposure() {
        let d = mixed();
        let params = ZipParams::new(0.3, DVector::from_vec(vec![-0.3, 0.4])).unwrap();
        let go = zip_gradient(&params, &d, PoissonMode::Offset).unwrap();
        let gr = zip_gradient(&params, &d, PoissonMode::Ratio).unwrap();
        assert!((&go - &gr).amax() > 1e-6);

        let f = full(&d);
        let go = zip_gradient(&params, &f, PoissonMode::Offset).unwrap();
        let gr = zip_gradient(&params, &f, PoissonMode::Ratio).unwrap();
        assert!((go - gr).amax() < 1e-12);
    }

    #[test]
    fn zip_gradient_matches_difference_quotient() {
        let d = mixed();
        let beta = DVector::from_vec(vec![-0.2, 0.1]);
        for mode in PoissonMode::ALL {
            let g = zip_gradient(&ZipParams::new(0.3, beta.clone()).unwrap(), &d, mode).unwrap();
            for j in 0..2 {
                let h = 1e-6;
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd = (zip_loglik(&ZipParams::new(0.3, up).unwrap(), &d, mode).unwrap()
                    - zip_loglik(&ZipParams::new(0.3, dn).unwrap(), &d, mode).unwrap())
                    / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6 * g[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn nonequivalence_evidence() {
        let d = mixed();
        let ev = zip_nonequivalence_check(&d, 0.3).unwrap();
        assert!(ev.probes.len() >= 3);
        assert!(!ev.equivalent && ev.spread > 1e-6);

        let poisson = zip_nonequivalence_check(&d, 0.0).unwrap();
        assert!(poisson.equivalent);

        let deg = zip_nonequivalence_check(&full(&d), 0.3).unwrap();
        assert!(deg.equivalent && deg.degenerate && deg.spread < 1e-10);
    }
}
