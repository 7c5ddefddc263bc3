//! Quasi-log-likelihood, score and Fisher information of a weighted
//! log-link Tweedie regression.
//!
//! The normalising term `a(y, w, phi)` of the Tweedie density does not depend
//! on the coefficients and is left out, so objective values are only
//! comparable for a fixed portfolio, scheme and family.
//!
//! For contract `i` with response `r_i`, prior weight `w_i`, offset `o_i` and
//! mean `mu_i = exp(x_i' beta + o_i)`:
//!
//! ```text
//! loglik   = (1/phi) sum_i w_i (mu_i^(1-p) r_i / (1-p) - mu_i^(2-p) / (2-p))
//! gradient = (1/phi) X' D R,   D = diag(w_i mu_i^(2-p)),  R_i = r_i / mu_i - 1
//! info     = (1/phi) X' D X
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{TweedieFamily, WeightScheme};
use crate::linalg;
use crate::portfolio::Portfolio;

/// A weighted log-link regression problem with optional offsets.
///
/// `p = 1` is accepted here (Poisson quasi-likelihood) so that the claim
/// count examples can share the kernels; the Tweedie family itself keeps
/// `p` strictly inside `(1, 2)`.
#[derive(Debug, Clone)]
pub struct WeightedProblem<'a> {
    design: &'a DMatrix<f64>,
    response: Vec<f64>,
    weights: Vec<f64>,
    offsets: Option<Vec<f64>>,
    p: f64,
}

impl<'a> WeightedProblem<'a> {
    pub fn new(
        design: &'a DMatrix<f64>,
        response: Vec<f64>,
        weights: Vec<f64>,
        offsets: Option<Vec<f64>>,
        p: f64,
    ) -> Result<Self> {
        let n = design.nrows();
        for (len, context) in [
            (response.len(), "response length"),
            (weights.len(), "weights length"),
            (offsets.as_ref().map_or(n, Vec::len), "offsets length"),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: len,
                    context,
                });
            }
        }
        if !(1.0..2.0).contains(&p) {
            return Err(Error::VariancePower(p));
        }
        Ok(Self {
            design,
            response,
            weights,
            offsets,
            p,
        })
    }

    /// Annualized losses weighted by the scheme: `(z_i, w_i)`, no offset.
    pub fn for_scheme(portfolio: &'a Portfolio, scheme: WeightScheme, family: &TweedieFamily) -> Self {
        let weights = portfolio
            .observations()
            .iter()
            .map(|o| scheme.weight_unchecked(o.exposure, family.p()))
            .collect();
        Self {
            design: portfolio.design(),
            response: portfolio.normalized(),
            weights,
            offsets: None,
            p: family.p(),
        }
    }

    /// Raw losses with unit weights and `log t` offsets.
    pub fn offset_formulation(portfolio: &'a Portfolio, family: &TweedieFamily) -> Self {
        Self {
            design: portfolio.design(),
            response: portfolio.losses(),
            weights: vec![1.0; portfolio.len()],
            offsets: Some(portfolio.exposures().iter().map(|t| t.ln()).collect()),
            p: family.p(),
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_coefficients(&self) -> usize {
        self.design.ncols()
    }

    fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.design.ncols() {
            return Err(Error::Dimension {
                expected: self.design.ncols(),
                actual: beta.len(),
                context: "coefficient vector",
            });
        }
        Ok(())
    }

    /// Linear predictors including offsets.
    pub fn linear_predictor(&self, beta: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let mut eta = linalg::scores(self.design, beta);
        if let Some(off) = &self.offsets {
            for (e, o) in eta.iter_mut().zip(off) {
                *e += o;
            }
        }
        Ok(eta)
    }

    /// Means `mu_i = exp(eta_i)`.
    pub fn means(&self, beta: &DVector<f64>) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(beta)?.into_iter().map(f64::exp).collect())
    }

    /// Quasi-log-likelihood with dispersion `phi`.
    pub fn quasi_loglik(&self, beta: &DVector<f64>, phi: f64) -> Result<f64> {
        let eta = self.linear_predictor(beta)?;
        let p = self.p;
        let mut total = 0.0;
        for ((&e, &r), &w) in eta.iter().zip(&self.response).zip(&self.weights) {
            let term = if p == 1.0 {
                r * e - e.exp()
            } else {
                let fit_part = if r == 0.0 { 0.0 } else { ((1.0 - p) * e).exp() * r / (1.0 - p) };
                fit_part - ((2.0 - p) * e).exp() / (2.0 - p)
            };
            total += w * term;
        }
        Ok(total / phi)
    }

    /// Diagonal of `D`: `w_i mu_i^(2-p)`.
    pub fn d_diagonal(&self, beta: &DVector<f64>) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(beta)?;
        Ok(eta
            .iter()
            .zip(&self.weights)
            .map(|(&e, &w)| w * ((2.0 - self.p) * e).exp())
            .collect())
    }

    /// Working residuals `R_i = r_i / mu_i - 1`.
    pub fn residuals(&self, beta: &DVector<f64>) -> Result<Vec<f64>> {
        let mu = self.means(beta)?;
        Ok(mu.iter().zip(&self.response).map(|(&m, &r)| r / m - 1.0).collect())
    }

    /// Unscaled score `X' D R`; the gradient times `phi`.
    pub fn score(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.d_diagonal(beta)?;
        let r = self.residuals(beta)?;
        let dr: Vec<f64> = d.iter().zip(&r).map(|(a, b)| a * b).collect();
        Ok(linalg::transpose_times(self.design, &dr))
    }

    pub fn gradient(&self, beta: &DVector<f64>, phi: f64) -> Result<DVector<f64>> {
        Ok(self.score(beta)? / phi)
    }

    /// Unscaled information `X' D X`.
    pub fn gram(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.d_diagonal(beta)?;
        Ok(linalg::weighted_gram(self.design, &d))
    }

    /// Fisher information `(1/phi) X' D X`, verified positive definite.
    pub fn fisher_info(&self, beta: &DVector<f64>, phi: f64) -> Result<DMatrix<f64>> {
        let info = self.gram(beta)? / phi;
        linalg::cholesky(&info, "Fisher information")?;
        Ok(info)
    }
}

/// Quasi-log-likelihood of the annualized losses under `scheme`.
pub fn quasi_loglik(
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<f64> {
    WeightedProblem::for_scheme(portfolio, scheme, family).quasi_loglik(beta, family.phi())
}

/// Gradient `(1/phi) X' D R` of [`quasi_loglik`].
pub fn gradient(
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<DVector<f64>> {
    WeightedProblem::for_scheme(portfolio, scheme, family).gradient(beta, family.phi())
}

/// Diagonal of `D`: `w_i exp((2-p) x_i' beta)`.
pub fn d_matrix(
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<Vec<f64>> {
    WeightedProblem::for_scheme(portfolio, scheme, family).d_diagonal(beta)
}

/// Fisher information `(1/phi) X' D X`.
pub fn fisher_info(
    beta: &DVector<f64>,
    portfolio: &Portfolio,
    scheme: WeightScheme,
    family: &TweedieFamily,
) -> Result<DMatrix<f64>> {
    WeightedProblem::for_scheme(portfolio, scheme, family).fisher_info(beta, family.phi())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::Observation;

    fn fam(p: f64, phi: f64) -> TweedieFamily {
        TweedieFamily::new(p, phi).unwrap()
    }

    fn three_contracts() -> Portfolio {
        Portfolio::new(vec![
            Observation::new("a", 0.25, 3.0, vec![0.0, 1.0]),
            Observation::new("b", 0.8, 0.0, vec![1.0, 0.0]),
            Observation::new("c", 1.0, 7.5, vec![1.0, 1.0]),
            Observation::new("d", 0.5, 1.0, vec![0.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn zero_loss_single_contract() {
        let p = Portfolio::homogeneous(&[0.4], &[0.0]).unwrap();
        let f = fam(1.6, 2.0);
        let beta = DVector::from_vec(vec![0.7]);
        for scheme in WeightScheme::ALL {
            let w = scheme.weight_unchecked(0.4, 1.6);
            let expected = -(w / 2.0) * (0.4_f64 * 0.7).exp() / 0.4;
            let got = quasi_loglik(&beta, &p, scheme, &f).unwrap();
            assert!((got - expected).abs() < 1e-14, "{scheme}: {got} vs {expected}");
        }
    }

    #[test]
    fn schemes_coincide_at_full_exposure() {
        let p = Portfolio::new(vec![
            Observation::new("a", 1.0, 3.0, vec![0.0]),
            Observation::new("b", 1.0, 5.0, vec![1.0]),
            Observation::new("c", 1.0, 0.0, vec![1.0]),
        ])
        .unwrap();
        let f = fam(1.42, 1.0);
        let beta = DVector::from_vec(vec![0.3, -0.2]);
        let off = quasi_loglik(&beta, &p, WeightScheme::Offset, &f).unwrap();
        let rat = quasi_loglik(&beta, &p, WeightScheme::Ratio, &f).unwrap();
        assert_eq!(off, rat);
        assert_eq!(
            d_matrix(&beta, &p, WeightScheme::Offset, &f).unwrap(),
            d_matrix(&beta, &p, WeightScheme::Ratio, &f).unwrap()
        );
    }

    #[test]
    fn d_matrix_at_zero_score() {
        let p = Portfolio::homogeneous(&[0.25, 1.0], &[1.0, 1.0]).unwrap();
        let f = fam(1.5, 1.0);
        let beta = DVector::zeros(1);
        assert_eq!(d_matrix(&beta, &p, WeightScheme::Offset, &f).unwrap(), vec![0.5, 1.0]);
        assert_eq!(d_matrix(&beta, &p, WeightScheme::Ratio, &f).unwrap(), vec![0.25, 1.0]);
    }

    #[test]
    fn d_offset_dominates_ratio() {
        let p = three_contracts();
        let f = fam(1.3, 1.0);
        let beta = DVector::from_vec(vec![0.1, 0.4, -0.7]);
        let o = d_matrix(&beta, &p, WeightScheme::Offset, &f).unwrap();
        let r = d_matrix(&beta, &p, WeightScheme::Ratio, &f).unwrap();
        for (i, obs) in p.observations().iter().enumerate() {
            assert!(r[i] > 0.0);
            if obs.exposure < 1.0 {
                assert!(o[i] > r[i]);
            } else {
                assert_eq!(o[i], r[i]);
            }
        }
    }

    #[test]
    fn gradient_vanishes_when_fit_is_exact() {
        // Losses equal to their means: R = 0.
        let beta = DVector::from_vec(vec![0.2, 0.5]);
        let xs = [0.0, 1.0, 2.0];
        let ts = [0.3, 0.7, 1.0];
        let obs = xs
            .iter()
            .zip(&ts)
            .enumerate()
            .map(|(i, (&x, &t))| Observation::new(format!("{i}"), t, t * (0.2_f64 + 0.5 * x).exp(), vec![x]))
            .collect();
        let p = Portfolio::new(obs).unwrap();
        let f = fam(1.5, 1.0);
        for scheme in WeightScheme::ALL {
            let g = gradient(&beta, &p, scheme, &f).unwrap();
            assert!(g.amax() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_zero_at_homogeneous_closed_form() {
        let ts = [0.5, 1.0, 0.2, 0.9];
        let ys = [5.0, 20.0, 0.0, 3.0];
        let p = Portfolio::homogeneous(&ts, &ys).unwrap();
        let f = fam(1.5, 1.0);
        for scheme in WeightScheme::ALL {
            let (mut num, mut den) = (0.0, 0.0);
            for (&t, &y) in ts.iter().zip(&ys) {
                let w = scheme.weight_unchecked(t, 1.5);
                num += w * y / t;
                den += w;
            }
            let beta = DVector::from_vec(vec![(num / den).ln()]);
            assert!(gradient(&beta, &p, scheme, &f).unwrap().amax() < 1e-10);
        }
    }

    #[test]
    fn offset_formulation_shares_kernels() {
        let p = three_contracts();
        let f = fam(1.42, 1.7);
        let beta = DVector::from_vec(vec![0.3, -0.1, 0.25]);
        let weighted = WeightedProblem::for_scheme(&p, WeightScheme::Offset, &f);
        let raw = WeightedProblem::offset_formulation(&p, &f);
        let (a, b) = (weighted.quasi_loglik(&beta, 1.7).unwrap(), raw.quasi_loglik(&beta, 1.7).unwrap());
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        let (ga, gb) = (weighted.gradient(&beta, 1.7).unwrap(), raw.gradient(&beta, 1.7).unwrap());
        assert!((ga - gb).amax() < 1e-12);
        let (ia, ib) = (weighted.fisher_info(&beta, 1.7).unwrap(), raw.fisher_info(&beta, 1.7).unwrap());
        assert!((ia - ib).amax() < 1e-12);
    }

    #[test]
    fn fisher_info_intercept_only_and_symmetry() {
        let p = Portfolio::homogeneous(&[0.25, 1.0, 0.6], &[1.0, 2.0, 0.0]).unwrap();
        let f = fam(1.5, 2.0);
        let beta = DVector::from_vec(vec![0.8]);
        let info = fisher_info(&beta, &p, WeightScheme::Ratio, &f).unwrap();
        let expected = (0.25 + 1.0 + 0.6) * (0.5 * 0.8_f64).exp() / 2.0;
        assert!((info[(0, 0)] - expected).abs() < 1e-14);

        let p3 = three_contracts();
        let b3 = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let i3 = fisher_info(&b3, &p3, WeightScheme::Offset, &f).unwrap();
        assert_eq!((&i3 - i3.transpose()).amax(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = three_contracts();
        let f = fam(1.5, 1.0);
        let beta = DVector::zeros(2);
        assert!(matches!(
            quasi_loglik(&beta, &p, WeightScheme::Ratio, &f),
            Err(Error::Dimension { expected: 3, actual: 2, .. })
        ));
        assert!(gradient(&beta, &p, WeightScheme::Ratio, &f).is_err());
        assert!(fisher_info(&beta, &p, WeightScheme::Ratio, &f).is_err());
    }
}
