//! Offline spinning-reserve computation, Lerner index and economic indicators.
//!
//! Reserve is derived from a finished dispatch: a generator producing more
//! than `eps` counts as online and offers its headroom. Type-I headroom is
//! `p_max − p`; Type-II additionally caps it at one hour of ramp-up.

use serde::{Deserialize, Serialize};

use crate::clearing::BidVector;
use crate::error::{Error, Result};
use crate::model::{DispatchResult, Scenario, SgParams};

/// Maximum possible spinning reserve of one generator (MW).
pub fn reserve_type1(p_sg: f64, params: &SgParams, eps: f64) -> f64 {
    if p_sg <= eps {
        0.0
    } else {
        (params.p_max - p_sg).max(0.0)
    }
}

/// Spinning reserve deliverable within one hour given the ramp-up limit (MW).
pub fn reserve_type2(p_sg: f64, params: &SgParams, eps: f64) -> f64 {
    if p_sg <= eps {
        0.0
    } else {
        (params.p_max - p_sg).max(0.0).min(params.ramp_up)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyReserve {
    pub id: String,
    pub type1: Vec<f64>,
    pub type2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveSeries {
    pub companies: Vec<CompanyReserve>,
    /// System total per period (MW).
    pub total_type1: Vec<f64>,
    pub total_type2: Vec<f64>,
    /// Horizon averages of the system totals, zero periods included (MW).
    pub mean_type1: f64,
    pub mean_type2: f64,
}

pub fn reserve_series(s: &Scenario, d: &DispatchResult) -> Result<ReserveSeries> {
    check_dimensions(s, d)?;
    let eps = s.report.reserve_eps;
    let companies: Vec<CompanyReserve> = s
        .companies
        .iter()
        .zip(&d.companies)
        .map(|(c, cd)| CompanyReserve {
            id: c.id.clone(),
            type1: cd
                .sg_output
                .iter()
                .map(|&p| reserve_type1(p, &c.sg, eps))
                .collect(),
            type2: cd
                .sg_output
                .iter()
                .map(|&p| reserve_type2(p, &c.sg, eps))
                .collect(),
        })
        .collect();
    let total = |f: fn(&CompanyReserve) -> &Vec<f64>| -> Vec<f64> {
        (0..s.horizon)
            .map(|t| companies.iter().map(|c| f(c)[t]).sum())
            .collect()
    };
    let total_type1 = total(|c| &c.type1);
    let total_type2 = total(|c| &c.type2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ReserveSeries {
        mean_type1: mean(&total_type1),
        mean_type2: mean(&total_type2),
        companies,
        total_type1,
        total_type2,
    })
}

/// Per-period Lerner index of a multiplicative bid and its horizon mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LernerSeries {
    pub per_period: Vec<f64>,
    pub mean: f64,
}

/// `L_t = (k_t − 1) / k_t`: the offer markup over true cost as a share of the offer.
pub fn lerner_index(bids: &BidVector) -> LernerSeries {
    let per_period: Vec<f64> = bids.as_slice().iter().map(|k| (k - 1.0) / k).collect();
    let mean = if per_period.is_empty() {
        0.0
    } else {
        per_period.iter().sum::<f64>() / per_period.len() as f64
    };
    LernerSeries { per_period, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyProfit {
    pub id: String,
    /// k¥
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketReport {
    pub strategic_company: Option<String>,
    /// Consumer payment `Σ λ_t·P_D,t` (k¥).
    pub energy_fee: f64,
    pub profits: Vec<CompanyProfit>,
    pub lerner: LernerSeries,
    pub reserve: ReserveSeries,
    pub prices: Vec<f64>,
    pub bids: Option<BidVector>,
    pub dispatch: DispatchResult,
}

impl MarketReport {
    pub fn profit_of(&self, id: &str) -> Option<f64> {
        self.profits.iter().find(|p| p.id == id).map(|p| p.profit)
    }
}

fn check_dimensions(s: &Scenario, d: &DispatchResult) -> Result<()> {
    if d.prices.len() != s.horizon {
        return Err(Error::Dimension(format!(
            "dispatch has {} periods, scenario {}",
            d.prices.len(),
            s.horizon
        )));
    }
    if d.companies.len() != s.companies.len()
        || d.companies
            .iter()
            .zip(&s.companies)
            .any(|(a, b)| a.id != b.id)
    {
        return Err(Error::Dimension(
            "dispatch companies do not match the scenario".into(),
        ));
    }
    for c in &d.companies {
        let lens = [c.sg_output.len(), c.bs_power.len(), c.wt_output.len()];
        if lens.iter().any(|&l| l != s.horizon) {
            return Err(Error::Dimension(format!(
                "dispatch series of `{}` have the wrong length",
                c.id
            )));
        }
    }
    Ok(())
}

/// Profit of company `c` in ¥: generator revenue minus generator and battery
/// costs at true cost, optionally plus wind sales.
pub(crate) fn company_profit(
    s: &Scenario,
    d: &DispatchResult,
    c: usize,
    include_wind_revenue: bool,
) -> f64 {
    let co = &s.companies[c];
    let cd = &d.companies[c];
    let o_bs = co.bs.as_ref().map_or(0.0, |b| b.levelized_cost);
    (0..s.horizon)
        .map(|t| {
            let lambda = d.prices[t];
            let p = cd.sg_output[t];
            let b = cd.bs_power[t];
            let mut v = lambda * p - co.sg.marginal_cost * p - o_bs * b * b;
            if include_wind_revenue {
                v += lambda * cd.wt_output[t];
            }
            v * s.period_hours
        })
        .sum()
}

/// Table of consumer payment, company profits, Lerner series and reserves.
pub fn economic_report(
    s: &Scenario,
    d: &DispatchResult,
    bids: Option<&BidVector>,
) -> Result<MarketReport> {
    check_dimensions(s, d)?;
    if let Some(b) = bids {
        if b.len() != s.horizon {
            return Err(Error::Dimension(format!(
                "{} bids for horizon {}",
                b.len(),
                s.horizon
            )));
        }
    }
    let energy_fee: f64 = d
        .prices
        .iter()
        .zip(&s.demand)
        .map(|(l, dem)| l * dem * s.period_hours)
        .sum();
    let profits = (0..s.companies.len())
        .map(|c| CompanyProfit {
            id: s.companies[c].id.clone(),
            profit: company_profit(s, d, c, s.report.include_wind_revenue) / 1000.0,
        })
        .collect();
    let lerner = match bids {
        Some(b) => lerner_index(b),
        None => lerner_index(&BidVector::ones(s.horizon)),
    };
    Ok(MarketReport {
        strategic_company: s.strategic_company.clone(),
        energy_fee: energy_fee / 1000.0,
        profits,
        lerner,
        reserve: reserve_series(s, d)?,
        prices: d.prices.clone(),
        bids: bids.cloned(),
        dispatch: d.clone(),
    })
}
