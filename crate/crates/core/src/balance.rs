//! Observed-gap diagnostics: individual gaps, portfolio totals, per-class
//! balance ratios and group descriptive statistics.
//!
//! All sums run left to right over the portfolio's stored order.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::portfolio::Portfolio;
use crate::solver::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRecord {
    pub contract_id: String,
    pub exposure: f64,
    pub observed_z: f64,
    pub fitted_zeta: f64,
    /// `exposure * (observed_z - fitted_zeta)`.
    pub gap: f64,
}

fn check_fit(portfolio: &Portfolio, fit: &FitResult) -> Result<()> {
    if fit.beta_hat.len() != portfolio.n_coefficients() {
        return Err(Error::FitMismatch(format!(
            "fit has {} coefficients, portfolio design has {}",
            fit.beta_hat.len(),
            portfolio.n_coefficients()
        )));
    }
    if fit.n_observations != portfolio.len() {
        return Err(Error::FitMismatch(format!(
            "fit was computed on {} contracts, portfolio has {}",
            fit.n_observations,
            portfolio.len()
        )));
    }
    if !fit.converged {
        warn!("gap diagnostics requested for a fit that did not converge");
    }
    Ok(())
}

/// One gap record per contract, in portfolio order.
pub fn individual_gaps(portfolio: &Portfolio, fit: &FitResult) -> Result<Vec<GapRecord>> {
    check_fit(portfolio, fit)?;
    let zeta = fit.annualized_premiums(portfolio.design());
    Ok(portfolio
        .observations()
        .iter()
        .zip(zeta)
        .map(|(obs, fitted_zeta)| {
            let observed_z = obs.loss_cost / obs.exposure;
            GapRecord {
                contract_id: obs.contract_id.clone(),
                exposure: obs.exposure,
                observed_z,
                fitted_zeta,
                gap: obs.exposure * (observed_z - fitted_zeta),
            }
        })
        .collect())
}

/// Sum of the individual gaps.
pub fn portfolio_gap(gaps: &[GapRecord]) -> Result<f64> {
    if gaps.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    Ok(gaps.iter().map(|g| g.gap).sum())
}

/// `sum_i t_i zeta_hat_i / sum_i y_i`.
pub fn balance_factor(portfolio: &Portfolio, fit: &FitResult) -> Result<f64> {
    check_fit(portfolio, fit)?;
    let total_loss = portfolio.total_loss();
    if total_loss <= 0.0 {
        return Err(Error::AllZeroLosses);
    }
    let zeta = fit.annualized_premiums(portfolio.design());
    let premiums: f64 = portfolio
        .observations()
        .iter()
        .zip(zeta)
        .map(|(o, z)| o.exposure * z)
        .sum();
    Ok(premiums / total_loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBalanceRow {
    pub factor_name: String,
    pub level: f64,
    pub contracts: usize,
    pub loss_sum: f64,
    pub premium_sum: f64,
    /// `premium_sum / loss_sum`; `None` when the class has no loss.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub rows: Vec<ClassBalanceRow>,
    /// The factor takes a single value over the portfolio.
    pub single_level: bool,
}

fn factor_name(portfolio: &Portfolio, factor_index: usize) -> Result<String> {
    if factor_index >= portfolio.n_coefficients() {
        return Err(Error::Dimension {
            expected: portfolio.n_coefficients(),
            actual: factor_index,
            context: "factor index (0 is the intercept)",
        });
    }
    Ok(if factor_index == 0 {
        "intercept".to_string()
    } else {
        portfolio.covariate_names()[factor_index - 1].clone()
    })
}

/// Distinct values of a design column, in order of first appearance, with
/// the member rows of each.
fn levels(portfolio: &Portfolio, factor_index: usize) -> Vec<(f64, Vec<usize>)> {
    let column = portfolio.design().column(factor_index);
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &v) in column.iter().enumerate() {
        match out.iter_mut().find(|(level, _)| *level == v) {
            Some((_, rows)) => rows.push(i),
            None => out.push((v, vec![i])),
        }
    }
    out
}

fn class_rows(portfolio: &Portfolio, factor_index: usize, exposure_scaled: &[f64]) -> Result<Vec<ClassBalanceRow>> {
    let name = factor_name(portfolio, factor_index)?;
    let obs = portfolio.observations();
    let mut rows: Vec<ClassBalanceRow> = levels(portfolio, factor_index)
        .into_iter()
        .map(|(level, members)| {
            let loss_sum: f64 = members.iter().map(|&i| obs[i].loss_cost).sum();
            let premium_sum: f64 = members.iter().map(|&i| exposure_scaled[i]).sum();
            ClassBalanceRow {
                factor_name: name.clone(),
                level,
                contracts: members.len(),
                loss_sum,
                premium_sum,
                ratio: (loss_sum > 0.0).then(|| premium_sum / loss_sum),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.loss_sum.total_cmp(&b.loss_sum).then(a.level.total_cmp(&b.level)));
    Ok(rows)
}

fn exposure_scaled_premiums(portfolio: &Portfolio, fit: &FitResult) -> Vec<f64> {
    fit.annualized_premiums(portfolio.design())
        .into_iter()
        .zip(portfolio.observations())
        .map(|(z, o)| o.exposure * z)
        .collect()
}

/// Aggregate losses against aggregate premiums for every level of one
/// design column (`0` is the intercept), ascending by loss.
pub fn class_report(portfolio: &Portfolio, fit: &FitResult, factor_index: usize) -> Result<ClassReport> {
    check_fit(portfolio, fit)?;
    let premiums = exposure_scaled_premiums(portfolio, fit);
    let rows = class_rows(portfolio, factor_index, &premiums)?;
    Ok(ClassReport {
        single_level: rows.len() == 1,
        rows,
    })
}

/// One risk class with both schemes' premium sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassComparisonRow {
    pub factor: String,
    pub level: f64,
    pub loss_sum: f64,
    pub premium_sum_offset: f64,
    pub premium_sum_ratio: f64,
    pub ratio_offset: Option<f64>,
    pub ratio_ratio: Option<f64>,
}

/// Design columns whose values are all 0 or 1 (the intercept excluded).
pub fn binary_factors(portfolio: &Portfolio) -> Vec<usize> {
    (1..portfolio.n_coefficients())
        .filter(|&j| portfolio.design().column(j).iter().all(|&v| v == 0.0 || v == 1.0))
        .collect()
}

/// Risk classes (both levels of every binary covariate) for an offset and a
/// ratio fit, jointly ordered by ascending loss.
pub fn class_comparison(portfolio: &Portfolio, offset: &FitResult, ratio: &FitResult) -> Result<Vec<ClassComparisonRow>> {
    check_fit(portfolio, offset)?;
    check_fit(portfolio, ratio)?;
    let prem_o = exposure_scaled_premiums(portfolio, offset);
    let prem_r = exposure_scaled_premiums(portfolio, ratio);
    let mut out = Vec::new();
    for j in binary_factors(portfolio) {
        let rows_o = class_rows(portfolio, j, &prem_o)?;
        let rows_r = class_rows(portfolio, j, &prem_r)?;
        for (o, r) in rows_o.into_iter().zip(rows_r) {
            out.push(ClassComparisonRow {
                factor: o.factor_name,
                level: o.level,
                loss_sum: o.loss_sum,
                premium_sum_offset: o.premium_sum,
                premium_sum_ratio: r.premium_sum,
                ratio_offset: o.ratio,
                ratio_ratio: r.ratio,
            });
        }
    }
    out.sort_by(|a, b| {
        a.loss_sum
            .total_cmp(&b.loss_sum)
            .then_with(|| a.factor.cmp(&b.factor))
            .then(a.level.total_cmp(&b.level))
    });
    Ok(out)
}

/// How contracts are split for descriptive statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Exposure exactly 1 versus mid-term cancellations.
    FullExposureVsMidterm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub contracts: usize,
    pub contract_share: f64,
    pub mean_exposure: f64,
    /// Group mean loss cost over portfolio mean loss cost.
    pub loss_cost_reference: Option<f64>,
}

/// Shares, mean exposures and loss-cost references of the non-empty groups.
pub fn group_summaries(portfolio: &Portfolio, grouping: Grouping) -> Vec<GroupSummary> {
    let Grouping::FullExposureVsMidterm = grouping;
    let n = portfolio.len() as f64;
    let portfolio_mean = portfolio.total_loss() / n;
    let groups: [(&str, fn(f64) -> bool); 2] = [
        ("full_exposure", |t| t == 1.0),
        ("midterm_cancellation", |t| t < 1.0),
    ];
    groups
        .iter()
        .filter_map(|(label, member)| {
            let obs: Vec<_> = portfolio.observations().iter().filter(|o| member(o.exposure)).collect();
            if obs.is_empty() {
                return None;
            }
            let m = obs.len() as f64;
            let mean_loss = obs.iter().map(|o| o.loss_cost).sum::<f64>() / m;
            Some(GroupSummary {
                label: label.to_string(),
                contracts: obs.len(),
                contract_share: m / n,
                mean_exposure: obs.iter().map(|o| o.exposure).sum::<f64>() / m,
                loss_cost_reference: (portfolio_mean > 0.0).then(|| mean_loss / portfolio_mean),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{TweedieFamily, WeightScheme};
    use crate::portfolio::Observation;
    use crate::solver::{fit, FitConfig};

    fn fam(p: f64) -> TweedieFamily {
        TweedieFamily::with_unit_dispersion(p).unwrap()
    }

    fn toy_fit(scheme: WeightScheme) -> (Portfolio, FitResult) {
        let p = Portfolio::homogeneous(&[0.5, 1.0], &[5.0, 20.0]).unwrap();
        let f = fit(&p, scheme, &fam(1.5), &FitConfig::default()).unwrap();
        (p, f)
    }

    #[test]
    fn toy_portfolio_gaps() {
        let (p, f) = toy_fit(WeightScheme::Ratio);
        let gaps = individual_gaps(&p, &f).unwrap();
        assert_eq!(gaps.len(), 2);
        assert!(portfolio_gap(&gaps).unwrap().abs() < 1e-12);
        assert!((balance_factor(&p, &f).unwrap() - 1.0).abs() < 1e-12);

        let (p, f) = toy_fit(WeightScheme::Offset);
        let total = portfolio_gap(&individual_gaps(&p, &f).unwrap()).unwrap();
        let w = 0.5_f64.sqrt();
        let zeta_o = (w * 10.0 + 20.0) / (w + 1.0);
        assert!((total - (25.0 - 1.5 * zeta_o)).abs() < 1e-10);
        assert!((total - 1.21).abs() < 0.01);
    }

    #[test]
    fn empty_gap_list() {
        assert_eq!(portfolio_gap(&[]).unwrap_err(), Error::EmptyPortfolio);
    }

    #[test]
    fn gap_record_identities() {
        let (p, f) = toy_fit(WeightScheme::Offset);
        let gaps = individual_gaps(&p, &f).unwrap();
        let mut loss = 0.0;
        for g in &gaps {
            assert_eq!(g.gap, g.exposure * (g.observed_z - g.fitted_zeta));
            loss += g.exposure * g.observed_z;
        }
        assert!((loss - p.total_loss()).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_contract_has_zero_gap() {
        let p = Portfolio::homogeneous(&[0.5, 0.25], &[5.0, 2.5]).unwrap();
        let f = fit(&p, WeightScheme::Offset, &fam(1.5), &FitConfig::default()).unwrap();
        for g in individual_gaps(&p, &f).unwrap() {
            assert!(g.gap.abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_fit_rejected() {
        let (_, f) = toy_fit(WeightScheme::Ratio);
        let other = Portfolio::homogeneous(&[0.5, 1.0, 0.3], &[5.0, 20.0, 1.0]).unwrap();
        assert!(matches!(individual_gaps(&other, &f), Err(Error::FitMismatch(_))));
        let wider = Portfolio::new(vec![
            Observation::new("a", 1.0, 1.0, vec![0.0]),
            Observation::new("b", 1.0, 2.0, vec![1.0]),
        ])
        .unwrap();
        assert!(matches!(balance_factor(&wider, &f), Err(Error::FitMismatch(_))));
    }

    fn class_portfolio(full: bool) -> Portfolio {
        let obs = (0..10)
            .map(|i| {
                let t = if full { 1.0 } else { 0.1 + 0.09 * i as f64 };
                let x = vec![(i % 2) as f64, (i / 5) as f64];
                Observation::new(format!("c{i}"), t, (i * 3 % 7) as f64, x)
            })
            .collect();
        Portfolio::new(obs).unwrap()
    }

    #[test]
    fn class_report_rows_sorted_and_intercept_reduces_to_balance_factor() {
        let p = class_portfolio(false);
        let f = fit(&p, WeightScheme::Ratio, &fam(1.42), &FitConfig::default()).unwrap();
        let rep = class_report(&p, &f, 1).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(!rep.single_level);
        assert!(rep.rows[0].loss_sum <= rep.rows[1].loss_sum);

        let whole = class_report(&p, &f, 0).unwrap();
        assert!(whole.single_level);
        let eps = balance_factor(&p, &f).unwrap();
        assert!((whole.rows[0].ratio.unwrap() - eps).abs() < 1e-12);
        assert!(class_report(&p, &f, 3).is_err());
    }

    #[test]
    fn class_ratios_identical_across_schemes_at_full_exposure() {
        let p = class_portfolio(true);
        let fo = fit(&p, WeightScheme::Offset, &fam(1.42), &FitConfig::default()).unwrap();
        let fr = fit(&p, WeightScheme::Ratio, &fam(1.42), &FitConfig::default()).unwrap();
        for row in class_comparison(&p, &fo, &fr).unwrap() {
            assert!((row.ratio_offset.unwrap() - row.ratio_ratio.unwrap()).abs() < 1e-8);
        }
        let go = individual_gaps(&p, &fo).unwrap();
        let gr = individual_gaps(&p, &fr).unwrap();
        for (a, b) in go.iter().zip(&gr) {
            assert!((a.gap - b.gap).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_loss_class_has_undefined_ratio() {
        let obs = vec![
            Observation::new("a", 0.5, 0.0, vec![1.0]),
            Observation::new("b", 0.5, 0.0, vec![1.0]),
            Observation::new("c", 1.0, 4.0, vec![0.0]),
            Observation::new("d", 0.7, 2.0, vec![0.0]),
        ];
        let p = Portfolio::new(obs).unwrap();
        let f = fit(&p, WeightScheme::Ratio, &fam(1.5), &FitConfig::default()).unwrap();
        let rep = class_report(&p, &f, 1).unwrap();
        assert_eq!(rep.rows[0].level, 1.0);
        assert_eq!(rep.rows[0].ratio, None);
        assert!(rep.rows[0].premium_sum > 0.0);
    }

    #[test]
    fn group_summaries_examples() {
        let full = Portfolio::homogeneous(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        let g = group_summaries(&full, Grouping::FullExposureVsMidterm);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].mean_exposure, 1.0);
        assert!((g[0].loss_cost_reference.unwrap() - 1.0).abs() < 1e-15);

        let mixed = Portfolio::homogeneous(&[1.0, 0.5, 1.0, 0.25], &[2.0, 6.0, 0.0, 8.0]).unwrap();
        let g = group_summaries(&mixed, Grouping::FullExposureVsMidterm);
        assert_eq!(g.len(), 2);
        let share: f64 = g.iter().map(|s| s.contract_share).sum();
        assert!((share - 1.0).abs() < 1e-12);
        let recombined: f64 = g.iter().map(|s| s.contract_share * s.loss_cost_reference.unwrap()).sum();
        assert!((recombined - 1.0).abs() < 1e-12);
        assert_eq!(g[1].mean_exposure, 0.375);
    }
}
