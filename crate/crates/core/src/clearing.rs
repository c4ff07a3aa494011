//! Lower-level market clearing: the operator dispatches generators,
//! batteries and wind at minimum offered cost subject to the supply-demand
//! balance, generator limits and ramps, battery power and state-of-charge
//! limits with a cyclic end condition, and available wind.
//!
//! The clearing price of a period is the multiplier of its balance row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompanyDispatch, DispatchResult, Scenario};
use crate::qp::{solve_qp_with, CsrMatrix, QpProblem, QpStatus, SolverSettings};

/// Per-period multipliers on the strategic company's generator offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BidVector(Vec<f64>);

impl BidVector {
    /// Checks length and `1 ≤ k_t ≤ k_max`.
    pub fn new(k: Vec<f64>, horizon: usize, k_max: f64) -> Result<Self> {
        if k.len() != horizon {
            return Err(Error::InvalidBids(format!(
                "{} multipliers for horizon {horizon}",
                k.len()
            )));
        }
        if let Some((t, v)) = k
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 1.0 && **v <= k_max))
        {
            return Err(Error::InvalidBids(format!(
                "k[{t}] = {v} outside [1, {k_max}]"
            )));
        }
        Ok(Self(k))
    }

    /// Truthful bidding.
    pub fn ones(horizon: usize) -> Self {
        Self(vec![1.0; horizon])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Position of each decision variable in the clearing QP.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableIndex {
    horizon: usize,
    block: usize,
    offsets: Vec<usize>,
    has_bs: Vec<bool>,
}

impl VariableIndex {
    fn new(s: &Scenario) -> Self {
        let mut offsets = Vec::with_capacity(s.companies.len());
        let mut has_bs = Vec::with_capacity(s.companies.len());
        let mut block = 0;
        for c in &s.companies {
            offsets.push(block);
            has_bs.push(c.bs.is_some());
            block += if c.bs.is_some() { 4 } else { 2 };
        }
        Self {
            horizon: s.horizon,
            block,
            offsets,
            has_bs,
        }
    }

    pub fn len(&self) -> usize {
        self.block * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sg(&self, c: usize, t: usize) -> usize {
        t * self.block + self.offsets[c]
    }

    pub fn wt(&self, c: usize, t: usize) -> usize {
        t * self.block + self.offsets[c] + 1
    }

    pub fn bs(&self, c: usize, t: usize) -> Option<usize> {
        self.has_bs[c].then(|| t * self.block + self.offsets[c] + 2)
    }

    pub fn soc(&self, c: usize, t: usize) -> Option<usize> {
        self.has_bs[c].then(|| t * self.block + self.offsets[c] + 3)
    }
}

/// The clearing problem in standard QP form. Rows `0..horizon` of `a_eq`
/// are the per-period balance constraints.
#[derive(Debug, Clone)]
pub struct ClearingQp {
    pub qp: QpProblem,
    pub index: VariableIndex,
}

fn check_bids(s: &Scenario, bids: Option<&BidVector>) -> Result<()> {
    match (&s.strategic_company, bids) {
        (Some(_), Some(b)) => BidVector::new(b.0.clone(), s.horizon, s.k_max).map(|_| ()),
        (None, None) => Ok(()),
        (Some(id), None) => Err(Error::InvalidBids(format!(
            "strategic company `{id}` needs a bid vector"
        ))),
        (None, Some(_)) => Err(Error::InvalidBids(
            "bids given but no strategic company designated".into(),
        )),
    }
}

/// Offer price of every company's generator in every period.
fn offers(s: &Scenario, bids: Option<&BidVector>) -> Vec<Vec<f64>> {
    let strategic = s.strategic_company.as_deref();
    s.companies
        .iter()
        .map(|c| {
            let cost = c.sg.marginal_cost;
            match (strategic, bids) {
                (Some(id), Some(b)) if id == c.id => b.0.iter().map(|k| k * cost).collect(),
                _ => vec![cost; s.horizon],
            }
        })
        .collect()
}

pub fn build_clearing_qp(s: &Scenario, bids: Option<&BidVector>) -> Result<ClearingQp> {
    check_bids(s, bids)?;
    Ok(assemble(s, bids))
}

fn assemble(s: &Scenario, bids: Option<&BidVector>) -> ClearingQp {
    let idx = VariableIndex::new(s);
    let n = idx.len();
    let horizon = s.horizon;
    let dt = s.period_hours;
    let offers = offers(s, bids);

    let mut q = vec![0.0; n];
    let mut p_diag = Vec::new();
    let mut eq = Vec::new();
    let mut b_eq = Vec::new();
    let mut ineq = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut bound =
        |ineq: &mut Vec<(usize, usize, f64)>, terms: &[(usize, f64)], l: f64, u: f64| {
            let row = lower.len();
            ineq.extend(terms.iter().map(|&(c, v)| (row, c, v)));
            lower.push(l);
            upper.push(u);
        };

    for t in 0..horizon {
        let row = b_eq.len();
        for c in 0..s.companies.len() {
            eq.push((row, idx.sg(c, t), 1.0));
            eq.push((row, idx.wt(c, t), 1.0));
            if let Some(b) = idx.bs(c, t) {
                eq.push((row, b, 1.0));
            }
        }
        b_eq.push(s.demand[t]);
    }

    for (c, co) in s.companies.iter().enumerate() {
        let sg = &co.sg;
        for t in 0..horizon {
            let g = idx.sg(c, t);
            q[g] = offers[c][t] * dt;
            bound(&mut ineq, &[(g, 1.0)], 0.0, sg.p_max);
            let (ru, rd) = (sg.ramp_up * dt, sg.ramp_down * dt);
            if t == 0 {
                bound(&mut ineq, &[(g, 1.0)], sg.p_initial - rd, sg.p_initial + ru);
            } else {
                bound(&mut ineq, &[(g, 1.0), (idx.sg(c, t - 1), -1.0)], -rd, ru);
            }
            let w = idx.wt(c, t);
            bound(&mut ineq, &[(w, 1.0)], 0.0, co.wind_profile[t]);
        }

        if let Some(bs) = &co.bs {
            for t in 0..horizon {
                let b = idx.bs(c, t).unwrap();
                let soc = idx.soc(c, t).unwrap();
                p_diag.push((b, 2.0 * bs.levelized_cost * dt));
                bound(&mut ineq, &[(b, 1.0)], -bs.p_max, bs.p_max);
                bound(&mut ineq, &[(soc, 1.0)], bs.soc_min, bs.soc_max);

                // soc_t − soc_{t−1} + P_BS,t·Δt/E = 0
                let row = b_eq.len();
                eq.push((row, soc, 1.0));
                eq.push((row, b, dt / bs.e_max));
                if t == 0 {
                    b_eq.push(bs.soc_initial);
                } else {
                    eq.push((row, idx.soc(c, t - 1).unwrap(), -1.0));
                    b_eq.push(0.0);
                }
            }
            let row = b_eq.len();
            eq.push((row, idx.soc(c, horizon - 1).unwrap(), 1.0));
            b_eq.push(bs.soc_initial);
        }
    }

    let qp = QpProblem {
        quadratic_cost: CsrMatrix::from_triplets(
            n,
            n,
            &p_diag.iter().map(|&(i, v)| (i, i, v)).collect::<Vec<_>>(),
        ),
        linear_cost: q,
        a_eq: CsrMatrix::from_triplets(b_eq.len(), n, &eq),
        b_eq,
        a_in: CsrMatrix::from_triplets(lower.len(), n, &ineq),
        lower,
        upper,
    };
    ClearingQp { qp, index: idx }
}

/// First period whose demand lies outside what ramp-limited generators,
/// batteries at full power and available wind could possibly supply.
pub fn first_capability_violation(s: &Scenario) -> Option<(usize, String)> {
    let dt = s.period_hours;
    let mut lo: Vec<f64> = s.companies.iter().map(|c| c.sg.p_initial).collect();
    let mut hi = lo.clone();
    let bs_total: f64 = s
        .companies
        .iter()
        .filter_map(|c| c.bs.as_ref())
        .map(|b| b.p_max)
        .sum();
    for t in 0..s.horizon {
        for (c, co) in s.companies.iter().enumerate() {
            lo[c] = (lo[c] - co.sg.ramp_down * dt).max(0.0);
            hi[c] = (hi[c] + co.sg.ramp_up * dt).min(co.sg.p_max);
        }
        let wind: f64 = s.companies.iter().map(|c| c.wind_profile[t]).sum();
        let max_supply = hi.iter().sum::<f64>() + bs_total + wind;
        let min_supply = lo.iter().sum::<f64>() - bs_total;
        let d = s.demand[t];
        if d > max_supply + 1e-9 {
            return Some((
                t,
                format!("demand {d} MW exceeds maximum supply {max_supply} MW"),
            ));
        }
        if d < min_supply - 1e-9 {
            return Some((
                t,
                format!("demand {d} MW below minimum generation {min_supply} MW"),
            ));
        }
    }
    None
}

/// Clears the market for a validated scenario.
pub fn clear_market(s: &Scenario, bids: Option<&BidVector>) -> Result<DispatchResult> {
    s.validate()?;
    check_bids(s, bids)?;
    clear_prechecked(s, bids)
}

/// [`clear_market`] without re-validating the scenario and bids.
pub(crate) fn clear_prechecked(s: &Scenario, bids: Option<&BidVector>) -> Result<DispatchResult> {
    if let Some((t, detail)) = first_capability_violation(s) {
        return Err(Error::Infeasible {
            period: Some(t),
            detail,
        });
    }
    let ClearingQp { qp, index } = assemble(s, bids);
    let sol = solve_qp_with(&qp, &SolverSettings::default())?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(Error::Infeasible {
                period: None,
                detail: "battery energy or ramp limits cannot meet the demand profile".into(),
            })
        }
        QpStatus::MaxIterations => {
            return Err(Error::Solver(format!(
                "no convergence after {} iterations (residuals {:?})",
                sol.iterations, sol.kkt_residuals
            )))
        }
    }

    let x = &sol.x;
    let companies = s
        .companies
        .iter()
        .enumerate()
        .map(|(c, co)| {
            let series = |f: &dyn Fn(usize) -> Option<usize>| -> Vec<f64> {
                (0..s.horizon).map(|t| f(t).map_or(0.0, |i| x[i])).collect()
            };
            CompanyDispatch {
                id: co.id.clone(),
                sg_output: series(&|t| Some(index.sg(c, t))),
                bs_power: series(&|t| index.bs(c, t)),
                wt_output: series(&|t| Some(index.wt(c, t))),
                soc: if co.bs.is_some() {
                    series(&|t| index.soc(c, t))
                } else {
                    Vec::new()
                },
            }
        })
        .collect();

    Ok(DispatchResult {
        companies,
        prices: sol.eq_duals[..s.horizon]
            .iter()
            .map(|l| l / s.period_hours)
            .collect(),
        objective_value: sol.objective,
    })
}
