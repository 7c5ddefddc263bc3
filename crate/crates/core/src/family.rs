//! Tweedie family parameters and the two exposure weighting schemes.
//!
//! Both exposure treatments reduce to a weighted Tweedie regression on the
//! annualized loss `z = y / t`. They differ only in the prior weight attached
//! to each contract: `t^(2-p)` for the offset treatment and `t` for the ratio
//! treatment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance power and dispersion shared by every contract of a portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TweedieFamily {
    p: f64,
    phi: f64,
}

impl TweedieFamily {
    /// Builds a family with `1 < p < 2` and `phi > 0`.
    pub fn new(p: f64, phi: f64) -> Result<Self> {
        if !(p > 1.0 && p < 2.0) {
            return Err(Error::VariancePower(p));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::Dispersion(phi));
        }
        Ok(Self { p, phi })
    }

    /// Family with unit dispersion. The dispersion cancels out of the
    /// coefficient updates, so this is what fitting uses by default.
    pub fn with_unit_dispersion(p: f64) -> Result<Self> {
        Self::new(p, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Same variance power, different dispersion.
    pub fn with_phi(&self, phi: f64) -> Result<Self> {
        Self::new(self.p, phi)
    }

    /// Canonical parameter `mu^(1-p) / (1-p)`.
    pub fn canonical_parameter(&self, mu: f64) -> f64 {
        mu.powf(1.0 - self.p) / (1.0 - self.p)
    }
}

/// How partial-year exposure enters the likelihood of the annualized loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// `log t` as an offset on the raw loss; weight `t^(2-p)` on `z`.
    Offset,
    /// Weighted regression on `z` with weight `t`.
    Ratio,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 2] = [WeightScheme::Offset, WeightScheme::Ratio];

    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Offset => "offset",
            WeightScheme::Ratio => "ratio",
        }
    }

    /// Prior weight of a contract with exposure `t`, without domain checks.
    pub(crate) fn weight_unchecked(&self, t: f64, p: f64) -> f64 {
        match self {
            WeightScheme::Offset => t.powf(2.0 - p),
            WeightScheme::Ratio => t,
        }
    }
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Prior weight of a contract with exposure `t` under `scheme`.
///
/// The offset weight dominates the ratio weight on `(0, 1]`, with equality
/// only at `t = 1`.
pub fn weight(scheme: WeightScheme, t: f64, p: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain {
            what: "exposure",
            detail: format!("t = {t} is outside (0, 1]"),
        });
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::VariancePower(p));
    }
    Ok(scheme.weight_unchecked(t, p))
}

/// Full parameter set `(mu, w, phi, p)` of a single Tweedie variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweedieParams {
    mu: f64,
    w: f64,
    family: TweedieFamily,
}

impl TweedieParams {
    pub fn new(mu: f64, w: f64, family: TweedieFamily) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain {
                what: "mean",
                detail: format!("mu = {mu} must be strictly positive"),
            });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain {
                what: "weight",
                detail: format!("w = {w} must be strictly positive"),
            });
        }
        Ok(Self { mu, w, family })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn family(&self) -> TweedieFamily {
        self.family
    }
}

/// Parameters of `t * Z` when `Z` has parameters `params`:
/// `(t mu, w / t^(2-p), phi, p)`.
///
/// Scaling by `s` and then by `t` is the same as scaling once by `s * t`.
pub fn scale_params(params: TweedieParams, t: f64) -> Result<TweedieParams> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain {
            what: "scale factor",
            detail: format!("t = {t} must be strictly positive"),
        });
    }
    let p = params.family.p();
    TweedieParams::new(params.mu * t, params.w / t.powf(2.0 - p), params.family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn family_rejects_out_of_range() {
        assert!(TweedieFamily::new(1.0, 1.0).is_err());
        assert!(TweedieFamily::new(2.0, 1.0).is_err());
        assert!(TweedieFamily::new(f64::NAN, 1.0).is_err());
        assert!(TweedieFamily::new(1.5, 0.0).is_err());
        assert!(TweedieFamily::new(1.5, -1.0).is_err());
        assert!(TweedieFamily::new(1.5, 2.0).is_ok());
    }

    #[test]
    fn canonical_parameter_matches_definition() {
        let fam = TweedieFamily::new(1.5, 1.0).unwrap();
        // 4^(-0.5) / (-0.5) = -1
        assert_eq!(fam.canonical_parameter(4.0), -1.0);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(WeightScheme::Offset, 1.0, 1.5).unwrap(), 1.0);
        assert_eq!(weight(WeightScheme::Offset, 0.25, 1.5).unwrap(), 0.5);
        assert_eq!(weight(WeightScheme::Ratio, 0.25, 1.5).unwrap(), 0.25);
    }

    #[test]
    fn weight_domain_errors() {
        assert!(weight(WeightScheme::Ratio, 0.0, 1.5).is_err());
        assert!(weight(WeightScheme::Ratio, 1.2, 1.5).is_err());
        assert!(weight(WeightScheme::Offset, 0.5, 2.0).is_err());
    }

    #[test]
    fn weights_converge_near_poisson_limit() {
        for &t in &[0.05, 0.3, 0.9] {
            let off = weight(WeightScheme::Offset, t, 1.0 + 1e-9).unwrap();
            assert!((off - t).abs() < 1e-8);
        }
    }

    #[test]
    fn scale_params_examples() {
        let fam = TweedieFamily::new(1.5, 1.0).unwrap();
        let x = TweedieParams::new(100.0, 1.0, fam).unwrap();
        let same = scale_params(x, 1.0).unwrap();
        assert_eq!(same.mu(), 100.0);
        assert_eq!(same.w(), 1.0);

        let half = scale_params(x, 0.5).unwrap();
        assert_eq!(half.mu(), 50.0);
        assert!((half.w() - std::f64::consts::SQRT_2).abs() < 1e-12);

        let back = scale_params(scale_params(x, 0.3).unwrap(), 1.0 / 0.3).unwrap();
        assert!((back.mu() - 100.0).abs() < 1e-12);
        assert!((back.w() - 1.0).abs() < 1e-12);

        assert!(scale_params(x, 0.0).is_err());
        assert!(scale_params(x, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn offset_weight_dominates(t in 1e-4f64..=1.0, p in 1.001f64..1.999) {
            let o = weight(WeightScheme::Offset, t, p).unwrap();
            let r = weight(WeightScheme::Ratio, t, p).unwrap();
            prop_assert!(o >= r);
            prop_assert!(o <= 1.0 && r > 0.0);
            if t < 1.0 {
                prop_assert!(o > r);
            } else {
                prop_assert_eq!(o, r);
            }
        }

        #[test]
        fn scaling_is_a_group_action(
            mu in 0.01f64..1e4, w in 0.01f64..10.0, p in 1.01f64..1.99,
            s in 0.05f64..20.0, t in 0.05f64..20.0,
        ) {
            let fam = TweedieFamily::new(p, 1.0).unwrap();
            let x = TweedieParams::new(mu, w, fam).unwrap();
            let two_step = scale_params(scale_params(x, s).unwrap(), t).unwrap();
            let one_step = scale_params(x, s * t).unwrap();
            prop_assert!((two_step.mu() - one_step.mu()).abs() <= 1e-12 * one_step.mu());
            prop_assert!((two_step.w() - one_step.w()).abs() <= 1e-12 * one_step.w());
        }
    }
}
