//! Tweedie GLMs for insurance loss costs with partial exposures.
//!
//! A contract observed for a fraction `t` of a year can enter a log-link
//! Tweedie regression in two ways: as an offset `log t` on the raw loss
//! (equivalently, weight `t^(2-p)` on the annualized loss `z = y/t`), or as
//! the annualized loss weighted by `t`. The crate fits both, compares their
//! premium estimators and measures how well each balances observed losses.
//!
//! ```
//! use exposure_glm::{fit, FitConfig, Portfolio, TweedieFamily, WeightScheme};
//!
//! let portfolio = Portfolio::homogeneous(&[0.5, 1.0], &[5.0, 20.0]).unwrap();
//! let family = TweedieFamily::with_unit_dispersion(1.5).unwrap();
//! let ratio = fit(&portfolio, WeightScheme::Ratio, &family, &FitConfig::default()).unwrap();
//! assert!((ratio.beta_hat[0].exp() - 25.0 / 1.5).abs() < 1e-12);
//! ```

pub mod balance;
pub mod claim_count;
pub mod error;
pub mod estimators;
pub mod family;
mod linalg;
pub mod model;
pub mod portfolio;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
pub use family::{scale_params, weight, TweedieFamily, TweedieParams, WeightScheme};
pub use portfolio::{normalize, Observation, Portfolio};
pub use solver::{fit, fit_offset_formulation, homogeneous_mle, FitConfig, FitResult, Init};
