//! Synthetic portfolios: the ranked-exposure gap experiment and a
//! two-group mimic of a book with many mid-term cancellations.

use serde::{Deserialize, Serialize};

use crate::balance::{individual_gaps, portfolio_gap};
use crate::error::{Error, Result};
use crate::family::{TweedieFamily, WeightScheme};
use crate::portfolio::{Observation, Portfolio};
use crate::rng::{streams, SimRng};
use crate::solver::{fit, FitConfig, FitResult};

/// Shortest and longest exposures drawn for the gap experiment.
pub const MIN_EXPOSURE: f64 = 30.0 / 365.0;
pub const MAX_EXPOSURE: f64 = 335.0 / 365.0;

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Loss grows with the exposure rank.
    Increasing,
    /// Loss shrinks with the exposure rank.
    Decreasing,
}

/// Loss formula for the decreasing scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecreasingRule {
    /// `y_i = n - i + 1`, a reversal of the increasing losses.
    #[default]
    Reversed,
    /// `y_i = n - i - 1` as literally stated; yields `-1` for the last
    /// contract, which portfolio validation rejects.
    Literal,
}

/// How the two risk factors of the heterogeneous experiment are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateMode {
    /// Binary factors: Bernoulli(0.75) and Bernoulli(0.15) per contract.
    #[default]
    Bernoulli,
    /// Counts: Binomial(100, 0.75) and Binomial(100, 0.15) per contract.
    BinomialCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub scenario: Scenario,
    pub heterogeneous: bool,
    pub p: f64,
    pub seed: u64,
    pub decreasing_rule: DecreasingRule,
    pub covariate_mode: CovariateMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 100,
            scenario: Scenario::Increasing,
            heterogeneous: false,
            p: 1.42,
            seed: 42,
            decreasing_rule: DecreasingRule::Reversed,
            covariate_mode: CovariateMode::Bernoulli,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain {
                what: "n",
                detail: format!("{} contracts; at least 2 are required", self.n),
            });
        }
        if !(self.p > 1.0 && self.p < 2.0) {
            return Err(Error::VariancePower(self.p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    GapExperiment,
    Mimic,
}

#[derive(Debug, Clone)]
pub struct SyntheticPortfolio {
    pub portfolio: Portfolio,
    pub seed: u64,
    pub kind: SyntheticKind,
    pub scenario: Option<Scenario>,
}

/// `n` exposures drawn uniformly on `[30/365, 335/365]`, sorted ascending.
pub fn gen_exposures(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SimRng::new(seed, streams::EXPOSURES);
    let mut t: Vec<f64> = (0..n).map(|_| rng.uniform(MIN_EXPOSURE, MAX_EXPOSURE)).collect();
    t.sort_by(f64::total_cmp);
    t
}

/// Loss of the contract with exposure rank `i = 1..n`.
pub fn gen_losses(n: usize, scenario: Scenario, rule: DecreasingRule) -> Vec<f64> {
    let n_f = n as f64;
    (1..=n)
        .map(|i| {
            let i = i as f64;
            match (scenario, rule) {
                (Scenario::Increasing, _) => i,
                (Scenario::Decreasing, DecreasingRule::Reversed) => n_f - i + 1.0,
                (Scenario::Decreasing, DecreasingRule::Literal) => n_f - i - 1.0,
            }
        })
        .collect()
}

fn draw_covariates(rng: &mut SimRng, n: usize, mode: CovariateMode) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| match mode {
            CovariateMode::Bernoulli => vec![
                f64::from(u8::from(rng.bernoulli(0.75))),
                f64::from(u8::from(rng.bernoulli(0.15))),
            ],
            CovariateMode::BinomialCount => vec![
                f64::from(rng.binomial(100, 0.75)),
                f64::from(rng.binomial(100, 0.15)),
            ],
        })
        .collect()
}

/// Two risk factors per contract.
pub fn gen_covariates(n: usize, seed: u64, mode: CovariateMode) -> Vec<Vec<f64>> {
    let mut rng = SimRng::new(seed, streams::COVARIATES);
    draw_covariates(&mut rng, n, mode)
}

/// Builds the experiment portfolio. In heterogeneous mode covariate draws
/// that leave the design rank deficient are discarded and redrawn from the
/// same stream.
pub fn build_scenario_portfolio(config: &ScenarioConfig) -> Result<SyntheticPortfolio> {
    config.validate()?;
    let exposures = gen_exposures(config.n, config.seed);
    let losses = gen_losses(config.n, config.scenario, config.decreasing_rule);
    let make = |covs: &[Vec<f64>]| {
        let obs = exposures
            .iter()
            .zip(&losses)
            .zip(covs)
            .enumerate()
            .map(|(i, ((&t, &y), x))| Observation::new(format!("r{:04}", i + 1), t, y, x.clone()))
            .collect();
        Portfolio::new(obs)
    };

    let portfolio = if config.heterogeneous {
        let mut rng = SimRng::new(config.seed, streams::COVARIATES);
        let mut attempt = 0;
        loop {
            let covs = draw_covariates(&mut rng, config.n, config.covariate_mode);
            match make(&covs) {
                Err(Error::RankDeficient { .. }) if attempt < MAX_REDRAWS => attempt += 1,
                other => break other?,
            }
        }
    } else {
        make(&vec![Vec::new(); config.n])?
    };
    Ok(SyntheticPortfolio {
        portfolio,
        seed: config.seed,
        kind: SyntheticKind::GapExperiment,
        scenario: Some(config.scenario),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurveRow {
    pub rank: usize,
    pub exposure: f64,
    pub gap_offset: f64,
    pub gap_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct GapExperiment {
    pub config: ScenarioConfig,
    pub portfolio: Portfolio,
    pub rows: Vec<GapCurveRow>,
    pub total_offset: f64,
    pub total_ratio: f64,
    pub fit_offset: FitResult,
    pub fit_ratio: FitResult,
}

/// Builds the portfolio, fits both schemes and collects the individual gaps
/// by exposure rank.
pub fn run_gap_experiment(config: &ScenarioConfig, fit_config: &FitConfig) -> Result<GapExperiment> {
    let synthetic = build_scenario_portfolio(config)?;
    let portfolio = synthetic.portfolio;
    let family = TweedieFamily::with_unit_dispersion(config.p)?;
    let fit_offset = fit(&portfolio, WeightScheme::Offset, &family, fit_config)?;
    let fit_ratio = fit(&portfolio, WeightScheme::Ratio, &family, fit_config)?;
    let gaps_o = individual_gaps(&portfolio, &fit_offset)?;
    let gaps_r = individual_gaps(&portfolio, &fit_ratio)?;
    let rows = gaps_o
        .iter()
        .zip(&gaps_r)
        .enumerate()
        .map(|(i, (o, r))| GapCurveRow {
            rank: i + 1,
            exposure: o.exposure,
            gap_offset: o.gap,
            gap_ratio: r.gap,
        })
        .collect();
    Ok(GapExperiment {
        config: config.clone(),
        total_offset: portfolio_gap(&gaps_o)?,
        total_ratio: portfolio_gap(&gaps_r)?,
        portfolio,
        rows,
        fit_offset,
        fit_ratio,
    })
}

/// Shape of the mimic portfolio. Losses are compound Poisson sums of
/// gamma(2) severities, so exact zeros are common.
#[derive(Debug, Clone, PartialEq)]
pub struct MimicConfig {
    /// Bernoulli probabilities of the binary risk factors.
    pub factor_probabilities: Vec<f64>,
    /// Log-relativities of the risk factors.
    pub factor_effects: Vec<f64>,
    /// Annual claim frequency of the base class.
    pub base_frequency: f64,
    pub mean_severity: f64,
    /// Annualized intensity multiplier of a mid-term contract with exposure
    /// `t` is `midterm_level * (midterm_pivot - t) / (midterm_pivot - 0.5)`;
    /// it falls as the exposure grows.
    pub midterm_level: f64,
    pub midterm_pivot: f64,
}

impl Default for MimicConfig {
    fn default() -> Self {
        Self {
            factor_probabilities: vec![0.6, 0.3, 0.45],
            factor_effects: vec![0.3, -0.25, 0.15],
            base_frequency: 0.08,
            mean_severity: 2500.0,
            midterm_level: 8.0,
            midterm_pivot: 1.2,
        }
    }
}

/// Mimic with the default shape.
pub fn gen_mimic_portfolio(share_midterm: f64, n: usize, seed: u64) -> Result<SyntheticPortfolio> {
    gen_mimic_portfolio_with(share_midterm, n, seed, &MimicConfig::default())
}

/// `round(share_midterm * n)` mid-term contracts with uniform exposures and
/// the rest at full exposure, ordered by ascending exposure.
pub fn gen_mimic_portfolio_with(share_midterm: f64, n: usize, seed: u64, shape: &MimicConfig) -> Result<SyntheticPortfolio> {
    if !(share_midterm > 0.0 && share_midterm < 1.0) {
        return Err(Error::Domain {
            what: "share_midterm",
            detail: format!("{share_midterm} is outside (0, 1)"),
        });
    }
    if shape.factor_probabilities.len() != shape.factor_effects.len() {
        return Err(Error::Dimension {
            expected: shape.factor_probabilities.len(),
            actual: shape.factor_effects.len(),
            context: "mimic factor effects",
        });
    }
    let n_mid = (share_midterm * n as f64).round() as usize;
    let mut rng = SimRng::new(seed, streams::MIMIC);
    let mut exposures: Vec<f64> = (0..n_mid).map(|_| rng.uniform(MIN_EXPOSURE, MAX_EXPOSURE)).collect();
    exposures.sort_by(f64::total_cmp);
    exposures.resize(n, 1.0);

    let mut attempt = 0;
    loop {
        let obs = exposures
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let x: Vec<f64> = shape
                    .factor_probabilities
                    .iter()
                    .map(|&prob| f64::from(u8::from(rng.bernoulli(prob))))
                    .collect();
                let score: f64 = x.iter().zip(&shape.factor_effects).map(|(a, b)| a * b).sum();
                let group = if t < 1.0 {
                    shape.midterm_level * (shape.midterm_pivot - t) / (shape.midterm_pivot - 0.5)
                } else {
                    1.0
                };
                let claims = rng.poisson(shape.base_frequency * score.exp() * group * t);
                let loss: f64 = (0..claims)
                    .map(|_| rng.exponential(shape.mean_severity / 2.0) + rng.exponential(shape.mean_severity / 2.0))
                    .sum();
                Observation::new(format!("m{:06}", i + 1), t, loss, x)
            })
            .collect();
        match Portfolio::new(obs) {
            Err(Error::RankDeficient { .. }) if attempt < MAX_REDRAWS => attempt += 1,
            other => {
                return Ok(SyntheticPortfolio {
                    portfolio: other?,
                    seed,
                    kind: SyntheticKind::Mimic,
                    scenario: None,
                })
            }
        }
    }
}
