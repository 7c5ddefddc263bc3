use std::path::{Path, PathBuf};

use anyhow::Context;
use exposure_glm::balance::{
    balance_factor, binary_factors, class_comparison, group_summaries, individual_gaps, portfolio_gap, GroupSummary,
    Grouping,
};
use exposure_glm::claim_count::{poisson_fit, zip_nonequivalence_check, PoissonMode, ZipEvidence};
use exposure_glm::simulate::{
    gen_mimic_portfolio, run_gap_experiment, CovariateMode, DecreasingRule, Scenario, ScenarioConfig,
};
use exposure_glm::{fit, FitConfig, FitResult, Portfolio, TweedieFamily, WeightScheme};
use log::{info, warn};
use serde::Serialize;

use crate::ingest::{ingest_counts, ingest_csv};
use crate::output::{num, opt_num, quantile, write_csv, write_json, SCHEMA_VERSION};

pub const PREMIUM_RATIO_PROBS: [f64; 11] = [0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0];

#[derive(Debug, Clone)]
pub struct ModelOptions {
    pub p: f64,
    pub phi: f64,
    pub fit: FitConfig,
}

impl ModelOptions {
    fn family(&self) -> anyhow::Result<TweedieFamily> {
        Ok(TweedieFamily::new(self.p, self.phi)?)
    }
}

fn prepare_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct FitSummary {
    scheme: WeightScheme,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    quasi_loglik: f64,
    coefficients: Vec<Coefficient>,
    covariance: Vec<Vec<f64>>,
}

fn coefficient_names(portfolio: &Portfolio) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(portfolio.covariate_names().iter().cloned())
        .collect()
}

fn summarize(portfolio: &Portfolio, f: &FitResult, scheme: WeightScheme) -> FitSummary {
    let names = coefficient_names(portfolio);
    FitSummary {
        scheme,
        converged: f.converged,
        iterations: f.iterations,
        gradient_norm: f.gradient_norm,
        quasi_loglik: f.objective,
        coefficients: names
            .into_iter()
            .enumerate()
            .map(|(j, name)| Coefficient {
                name,
                estimate: f.beta_hat[j],
                std_error: f.covariance[(j, j)].sqrt(),
            })
            .collect(),
        covariance: f.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    command: &'static str,
    p: f64,
    phi: f64,
    tolerance: f64,
    max_iterations: usize,
    contracts: usize,
    covariates: Vec<String>,
    fits: Vec<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

#[derive(Serialize)]
struct Comparison {
    premium_ratio_share_above_one: f64,
    portfolio_gap_offset: f64,
    portfolio_gap_ratio: f64,
    balance_factor_offset: Option<f64>,
    balance_factor_ratio: Option<f64>,
    groups: Vec<GroupSummary>,
}

fn fit_schemes(
    portfolio: &Portfolio,
    schemes: &[WeightScheme],
    opts: &ModelOptions,
) -> anyhow::Result<Vec<(WeightScheme, FitResult)>> {
    let family = opts.family()?;
    schemes
        .iter()
        .map(|&s| {
            let f = fit(portfolio, s, &family, &opts.fit).with_context(|| format!("fitting the {s} scheme"))?;
            if !f.converged {
                warn!("{s} fit did not converge in {} iterations (|score| = {:e})", f.iterations, f.gradient_norm);
            }
            info!("{s}: beta = {:?}", f.beta_hat.as_slice());
            Ok((s, f))
        })
        .collect()
}

fn report(
    command: &'static str,
    portfolio: &Portfolio,
    opts: &ModelOptions,
    fits: &[(WeightScheme, FitResult)],
    comparison: Option<Comparison>,
) -> FitReport {
    FitReport {
        schema_version: SCHEMA_VERSION,
        command,
        p: opts.p,
        phi: opts.phi,
        tolerance: opts.fit.tolerance,
        max_iterations: opts.fit.max_iterations,
        contracts: portfolio.len(),
        covariates: portfolio.covariate_names().to_vec(),
        fits: fits.iter().map(|(s, f)| summarize(portfolio, f, *s)).collect(),
        comparison,
    }
}

/// `fit`: fits the selected schemes and writes `fit.json`.
pub fn cmd_fit(input: &Path, out: &Path, schemes: &[WeightScheme], opts: &ModelOptions) -> anyhow::Result<()> {
    let portfolio = ingest_csv(input)?;
    prepare_out(out)?;
    let fits = fit_schemes(&portfolio, schemes, opts)?;
    write_json(&out.join("fit.json"), &report("fit", &portfolio, opts, &fits, None))
}

struct BothFits {
    offset: FitResult,
    ratio: FitResult,
}

fn fit_both(portfolio: &Portfolio, opts: &ModelOptions) -> anyhow::Result<(BothFits, Vec<(WeightScheme, FitResult)>)> {
    let fits = fit_schemes(portfolio, &WeightScheme::ALL, opts)?;
    let both = BothFits {
        offset: fits[0].1.clone(),
        ratio: fits[1].1.clone(),
    };
    Ok((both, fits))
}

fn write_gaps(out: &Path, portfolio: &Portfolio, fits: &BothFits) -> anyhow::Result<(f64, f64)> {
    let go = individual_gaps(portfolio, &fits.offset)?;
    let gr = individual_gaps(portfolio, &fits.ratio)?;
    let rows: Vec<Vec<String>> = go
        .iter()
        .zip(&gr)
        .map(|(o, r)| {
            vec![
                o.contract_id.clone(),
                num(o.exposure),
                num(o.observed_z),
                num(o.fitted_zeta),
                num(r.fitted_zeta),
                num(o.gap),
                num(r.gap),
            ]
        })
        .collect();
    write_csv(
        &out.join("gaps.csv"),
        &["contract_id", "exposure", "z", "zeta_offset", "zeta_ratio", "gap_offset", "gap_ratio"],
        &rows,
    )?;
    Ok((portfolio_gap(&go)?, portfolio_gap(&gr)?))
}

fn write_class_balance(out: &Path, portfolio: &Portfolio, fits: &BothFits) -> anyhow::Result<()> {
    let rows: Vec<Vec<String>> = class_comparison(portfolio, &fits.offset, &fits.ratio)?
        .into_iter()
        .map(|r| {
            vec![
                r.factor,
                num(r.level),
                num(r.loss_sum),
                num(r.premium_sum_offset),
                num(r.premium_sum_ratio),
                opt_num(r.ratio_offset),
                opt_num(r.ratio_ratio),
            ]
        })
        .collect();
    if binary_factors(portfolio).is_empty() {
        info!("no binary covariates; class_balance.csv has no rows");
    }
    write_csv(
        &out.join("class_balance.csv"),
        &["factor", "level", "loss_sum", "premium_sum_offset", "premium_sum_ratio", "ratio_offset", "ratio_ratio"],
        &rows,
    )
}

fn comparison(portfolio: &Portfolio, fits: &BothFits, gaps: (f64, f64), share_above_one: f64) -> Comparison {
    Comparison {
        premium_ratio_share_above_one: share_above_one,
        portfolio_gap_offset: gaps.0,
        portfolio_gap_ratio: gaps.1,
        balance_factor_offset: balance_factor(portfolio, &fits.offset).ok(),
        balance_factor_ratio: balance_factor(portfolio, &fits.ratio).ok(),
        groups: group_summaries(portfolio, Grouping::FullExposureVsMidterm),
    }
}

/// `compare`: fits both schemes and writes the fit report, coefficient and
/// premium ratios, gaps and class balance.
pub fn cmd_compare(input: &Path, out: &Path, opts: &ModelOptions) -> anyhow::Result<()> {
    let portfolio = ingest_csv(input)?;
    prepare_out(out)?;
    let (both, fits) = fit_both(&portfolio, opts)?;

    let coeff_rows: Vec<Vec<String>> = coefficient_names(&portfolio)
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let (o, r) = (both.offset.beta_hat[j], both.ratio.beta_hat[j]);
            vec![name, num(o), num(r), num(o / r)]
        })
        .collect();
    write_csv(&out.join("coeff_ratios.csv"), &["covariate", "beta_offset", "beta_ratio", "ratio"], &coeff_rows)?;

    let zo = both.offset.annualized_premiums(portfolio.design());
    let zr = both.ratio.annualized_premiums(portfolio.design());
    let mut ratios: Vec<f64> = zo.iter().zip(&zr).map(|(o, r)| o / r).collect();
    let share_above_one = ratios.iter().filter(|&&r| r > 1.0).count() as f64 / ratios.len() as f64;
    ratios.sort_by(f64::total_cmp);
    let q_rows: Vec<Vec<String>> = PREMIUM_RATIO_PROBS
        .iter()
        .map(|&prob| vec![num(prob), num(quantile(&ratios, prob))])
        .collect();
    write_csv(&out.join("premium_ratios.csv"), &["quantile", "premium_ratio"], &q_rows)?;

    let gaps = write_gaps(out, &portfolio, &both)?;
    write_class_balance(out, &portfolio, &both)?;
    let cmp = comparison(&portfolio, &both, gaps, share_above_one);
    write_json(&out.join("fit.json"), &report("compare", &portfolio, opts, &fits, Some(cmp)))
}

#[derive(Serialize)]
struct BalanceReport {
    schema_version: u32,
    contracts: usize,
    total_loss: f64,
    schemes: Vec<SchemeBalance>,
    groups: Vec<GroupSummary>,
}

#[derive(Serialize)]
struct SchemeBalance {
    scheme: WeightScheme,
    converged: bool,
    portfolio_gap: f64,
    balance_factor: Option<f64>,
}

/// `balance`: gap and class-balance reports for both schemes.
pub fn cmd_balance(input: &Path, out: &Path, opts: &ModelOptions) -> anyhow::Result<()> {
    let portfolio = ingest_csv(input)?;
    prepare_out(out)?;
    let (both, _) = fit_both(&portfolio, opts)?;
    let (gap_o, gap_r) = write_gaps(out, &portfolio, &both)?;
    write_class_balance(out, &portfolio, &both)?;
    let schemes = [(WeightScheme::Offset, &both.offset, gap_o), (WeightScheme::Ratio, &both.ratio, gap_r)]
        .into_iter()
        .map(|(scheme, f, gap)| SchemeBalance {
            scheme,
            converged: f.converged,
            portfolio_gap: gap,
            balance_factor: balance_factor(&portfolio, f).ok(),
        })
        .collect();
    write_json(
        &out.join("balance.json"),
        &BalanceReport {
            schema_version: SCHEMA_VERSION,
            contracts: portfolio.len(),
            total_loss: portfolio.total_loss(),
            schemes,
            groups: group_summaries(&portfolio, Grouping::FullExposureVsMidterm),
        },
    )
}

fn write_portfolio(path: &Path, portfolio: &Portfolio) -> anyhow::Result<()> {
    let mut header = vec!["contract_id", "exposure", "loss_cost"];
    header.extend(portfolio.covariate_names().iter().map(String::as_str));
    let rows: Vec<Vec<String>> = portfolio
        .observations()
        .iter()
        .map(|o| {
            let mut r = vec![o.contract_id.clone(), num(o.exposure), num(o.loss_cost)];
            r.extend(o.covariates.iter().map(|&v| num(v)));
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub out: PathBuf,
    pub scenario: ScenarioConfig,
    pub fit: FitConfig,
    pub mimic_share: Option<f64>,
}

#[derive(Serialize)]
struct SimulationTotals {
    schema_version: u32,
    seed: u64,
    n: usize,
    p: f64,
    scenario: Scenario,
    heterogeneous: bool,
    decreasing_rule: &'static str,
    covariate_mode: &'static str,
    total_gap_offset: f64,
    total_gap_ratio: f64,
    beta_offset: Vec<f64>,
    beta_ratio: Vec<f64>,
    converged_offset: bool,
    converged_ratio: bool,
}

#[derive(Serialize)]
struct MimicSummary {
    schema_version: u32,
    seed: u64,
    n: usize,
    share_midterm: f64,
    groups: Vec<GroupSummary>,
}

/// `simulate`: the ranked-exposure gap experiment, or with a mid-term share
/// the mimic portfolio.
pub fn cmd_simulate(opts: &SimulateOptions) -> anyhow::Result<()> {
    prepare_out(&opts.out)?;
    let cfg = &opts.scenario;
    if let Some(share) = opts.mimic_share {
        let m = gen_mimic_portfolio(share, cfg.n, cfg.seed)?;
        write_portfolio(&opts.out.join("portfolio.csv"), &m.portfolio)?;
        return write_json(
            &opts.out.join("mimic.json"),
            &MimicSummary {
                schema_version: SCHEMA_VERSION,
                seed: cfg.seed,
                n: cfg.n,
                share_midterm: share,
                groups: group_summaries(&m.portfolio, Grouping::FullExposureVsMidterm),
            },
        );
    }

    let exp = run_gap_experiment(cfg, &opts.fit)?;
    let rows: Vec<Vec<String>> = exp
        .rows
        .iter()
        .map(|r| vec![r.rank.to_string(), num(r.exposure), num(r.gap_offset), num(r.gap_ratio)])
        .collect();
    write_csv(&opts.out.join("gap_curve.csv"), &["rank", "exposure", "gap_offset", "gap_ratio"], &rows)?;
    write_portfolio(&opts.out.join("portfolio.csv"), &exp.portfolio)?;
    write_json(
        &opts.out.join("totals.json"),
        &SimulationTotals {
            schema_version: SCHEMA_VERSION,
            seed: cfg.seed,
            n: cfg.n,
            p: cfg.p,
            scenario: cfg.scenario,
            heterogeneous: cfg.heterogeneous,
            decreasing_rule: match cfg.decreasing_rule {
                DecreasingRule::Reversed => "reversed",
                DecreasingRule::Literal => "literal",
            },
            covariate_mode: match cfg.covariate_mode {
                CovariateMode::Bernoulli => "bernoulli",
                CovariateMode::BinomialCount => "binomial_count",
            },
            total_gap_offset: exp.total_offset,
            total_gap_ratio: exp.total_ratio,
            beta_offset: exp.fit_offset.beta_hat.iter().copied().collect(),
            beta_ratio: exp.fit_ratio.beta_hat.iter().copied().collect(),
            converged_offset: exp.fit_offset.converged,
            converged_ratio: exp.fit_ratio.converged,
        },
    )
}

#[derive(Serialize)]
struct PoissonSummary {
    mode: PoissonMode,
    converged: bool,
    iterations: usize,
    beta: Vec<f64>,
}

#[derive(Serialize)]
struct CountsReport {
    schema_version: u32,
    contracts: usize,
    poisson: Vec<PoissonSummary>,
    max_abs_coefficient_difference: f64,
    zip: ZipEvidence,
}

/// `counts`: Poisson fits in both modes and the zero-inflated comparison.
pub fn cmd_counts(input: &Path, out: &Path, zero_inflation: f64, fit_config: &FitConfig) -> anyhow::Result<()> {
    let data = ingest_counts(input)?;
    prepare_out(out)?;
    let fits = PoissonMode::ALL
        .iter()
        .map(|&m| Ok((m, poisson_fit(&data, m, fit_config)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let diff = (&fits[0].1.beta_hat - &fits[1].1.beta_hat).amax();
    let zip = zip_nonequivalence_check(&data, zero_inflation)?;
    write_json(
        &out.join("counts.json"),
        &CountsReport {
            schema_version: SCHEMA_VERSION,
            contracts: data.len(),
            poisson: fits
                .iter()
                .map(|(mode, f)| PoissonSummary {
                    mode: *mode,
                    converged: f.converged,
                    iterations: f.iterations,
                    beta: f.beta_hat.iter().copied().collect(),
                })
                .collect(),
            max_abs_coefficient_difference: diff,
            zip,
        },
    )
}
