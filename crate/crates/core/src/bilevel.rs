//! Upper-level strategic bidding.
//!
//! One company chooses per-period multipliers `k_t ∈ [1, k_max]` on its
//! generator offer to maximize its true-cost profit, anticipating how the
//! market clears. The reaction map is piecewise and discontinuous, so the
//! search is derivative-free: a compass search over coordinates, started from
//! several points and run in parallel. [`brute_force_bilevel`] enumerates a
//! bid grid and serves as a reference on small horizons.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::company_profit;
use crate::clearing::{clear_prechecked, BidVector};
use crate::error::{Error, Result};
use crate::model::{DispatchResult, Scenario, SolverConfig};

/// Largest grid the brute-force oracle will enumerate.
pub const MAX_ORACLE_EVALUATIONS: u128 = 1_000_000;

/// A full pass over all coordinates gaining less than this (¥) counts as stalled.
const STALL_GAIN: f64 = 1e-4;
/// Profits this close (¥) are treated as equal and broken by smaller `Σ k`.
const TIE_TOL: f64 = 1e-7;
/// Finest step, relative to `k_max − 1`.
const MIN_REL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Market clearings performed, memoized repeats excluded.
    pub evaluations: usize,
    pub restarts: usize,
    /// Index of the start that produced the returned bids.
    pub best_restart: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelSolution {
    pub bids: BidVector,
    pub dispatch: DispatchResult,
    /// ¥
    pub strategic_profit: f64,
    pub stats: SolveStats,
}

/// Profit of the strategic company in ¥ at true generator and battery cost.
/// Wind sales are not included.
pub fn strategic_profit(d: &DispatchResult, s: &Scenario) -> Result<f64> {
    let (c, _) = s.strategic()?;
    if d.prices.len() != s.horizon
        || d.companies.len() != s.companies.len()
        || d.companies[c].id != s.companies[c].id
    {
        return Err(Error::Dimension(
            "dispatch does not belong to this scenario".into(),
        ));
    }
    Ok(company_profit(s, d, c, false))
}

#[derive(Debug, Clone, Copy)]
struct Point<'a> {
    k: &'a [f64],
    profit: f64,
}

fn sum(k: &[f64]) -> f64 {
    k.iter().sum()
}

/// Strictly better profit, or an equal profit with a smaller bid total.
fn better(a: Point, b: Point) -> bool {
    if a.profit > b.profit + TIE_TOL {
        return true;
    }
    a.profit >= b.profit - TIE_TOL && sum(a.k) < sum(b.k) - 1e-12
}

fn key(k: &[f64]) -> Vec<u64> {
    k.iter().map(|v| v.to_bits()).collect()
}

struct Evaluator<'a> {
    scenario: &'a Scenario,
    strategic: usize,
    cache: HashMap<Vec<u64>, f64>,
    evaluations: usize,
}

impl<'a> Evaluator<'a> {
    fn new(scenario: &'a Scenario, strategic: usize) -> Self {
        Self {
            scenario,
            strategic,
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    /// Profit at `k`; clearings the solver cannot finish rank last.
    fn profit(&mut self, k: &[f64]) -> f64 {
        if let Some(&p) = self.cache.get(&key(k)) {
            return p;
        }
        self.evaluations += 1;
        let bids = BidVector::new(k.to_vec(), self.scenario.horizon, self.scenario.k_max)
            .expect("search stays inside the bid box");
        let p = match clear_prechecked(self.scenario, Some(&bids)) {
            Ok(d) => company_profit(self.scenario, &d, self.strategic, false),
            Err(_) => f64::NEG_INFINITY,
        };
        self.cache.insert(key(k), p);
        p
    }
}

struct RunResult {
    k: Vec<f64>,
    profit: f64,
    evaluations: usize,
}

fn pattern_search(s: &Scenario, strategic: usize, start: Vec<f64>, budget: usize) -> RunResult {
    let mut ev = Evaluator::new(s, strategic);
    let span = s.k_max - 1.0;
    let mut best = start;
    let mut best_profit = ev.profit(&best);
    let mut step = span / 2.0;
    let min_step = span * MIN_REL_STEP;
    let mut cand = best.clone();

    if span > 0.0 {
        'outer: loop {
            let mut gain = 0.0;
            for t in 0..s.horizon {
                for dir in [1.0, -1.0] {
                    if ev.evaluations >= budget {
                        break 'outer;
                    }
                    let v = (best[t] + dir * step).clamp(1.0, s.k_max);
                    if v == best[t] {
                        continue;
                    }
                    cand.copy_from_slice(&best);
                    cand[t] = v;
                    let p = ev.profit(&cand);
                    let (c, b) = (
                        Point {
                            k: &cand,
                            profit: p,
                        },
                        Point {
                            k: &best,
                            profit: best_profit,
                        },
                    );
                    if better(c, b) {
                        gain += (p - best_profit).max(0.0);
                        best_profit = p;
                        best.copy_from_slice(&cand);
                        break;
                    }
                }
            }
            if gain < STALL_GAIN {
                if step <= min_step * (1.0 + 1e-9) {
                    break;
                }
                step = (step / 2.0).max(min_step);
            }
        }
    }
    RunResult {
        k: best,
        profit: best_profit,
        evaluations: ev.evaluations,
    }
}

fn start_points(s: &Scenario, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let n = cfg.restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![vec![1.0; s.horizon]];
    if n > 1 {
        starts.push(vec![s.k_max; s.horizon]);
    }
    while starts.len() < n {
        let p = (0..s.horizon)
            .map(|_| {
                if s.k_max > 1.0 {
                    rng.random_range(1.0..=s.k_max)
                } else {
                    1.0
                }
            })
            .collect();
        starts.push(p);
    }
    starts
}

fn finish(
    s: &Scenario,
    k: Vec<f64>,
    evaluations: usize,
    restarts: usize,
    best_restart: usize,
    started: Instant,
) -> Result<BilevelSolution> {
    let bids = BidVector::new(k, s.horizon, s.k_max)?;
    let dispatch = clear_prechecked(s, Some(&bids))?;
    let strategic_profit = strategic_profit(&dispatch, s)?;
    Ok(BilevelSolution {
        bids,
        dispatch,
        strategic_profit,
        stats: SolveStats {
            evaluations,
            restarts,
            best_restart,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

/// Multi-start compass search for the strategic company's bids.
///
/// `eval_budget` is shared evenly across the starts. Start 0 is truthful
/// bidding, so the returned profit is never below the truthful profit.
pub fn solve_bilevel(s: &Scenario, cfg: &SolverConfig) -> Result<BilevelSolution> {
    s.validate()?;
    let (strategic, _) = s.strategic()?;
    let started = Instant::now();
    // Surfaces infeasibility and solver failures before searching.
    clear_prechecked(s, Some(&BidVector::ones(s.horizon)))?;

    let starts = start_points(s, cfg);
    let n = starts.len();
    let per_run = (cfg.eval_budget / n).max(1);
    let runs: Vec<RunResult> = starts
        .into_par_iter()
        .map(|k0| pattern_search(s, strategic, k0, per_run))
        .collect();

    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let a = Point {
            k: &r.k,
            profit: r.profit,
        };
        let b = Point {
            k: &runs[best].k,
            profit: runs[best].profit,
        };
        if better(a, b) {
            best = i;
        }
    }
    let evaluations = runs.iter().map(|r| r.evaluations).sum::<usize>() + 2;
    let k = runs[best].k.clone();
    finish(s, k, evaluations, n, best, started)
}

/// Grid values `1, 1 + h, …` up to `k_max`, with `k_max` always included.
pub fn bid_grid(k_max: f64, grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidBids(format!(
            "grid step {grid_step} must be positive"
        )));
    }
    let span = k_max - 1.0;
    let steps = (span / grid_step + 1e-9).floor();
    if steps > 1e7 {
        return Err(Error::GridTooLarge(u128::MAX));
    }
    let mut g: Vec<f64> = (0..=steps as usize)
        .map(|i| (1.0 + i as f64 * grid_step).min(k_max))
        .collect();
    if *g.last().unwrap() < k_max - 1e-12 {
        g.push(k_max);
    } else {
        *g.last_mut().unwrap() = k_max;
    }
    Ok(g)
}

/// Exhaustive search over the bid grid `{1, 1 + h, …, k_max}^T`.
///
/// Refuses grids with more than [`MAX_ORACLE_EVALUATIONS`] points.
pub fn brute_force_bilevel(s: &Scenario, grid_step: f64) -> Result<BilevelSolution> {
    s.validate()?;
    let (strategic, _) = s.strategic()?;
    let started = Instant::now();
    let grid = bid_grid(s.k_max, grid_step)?;
    let m = grid.len() as u128;
    let total = (0..s.horizon).try_fold(1u128, |acc, _| acc.checked_mul(m));
    let total = match total {
        Some(n) if n <= MAX_ORACLE_EVALUATIONS => n as usize,
        Some(n) => return Err(Error::GridTooLarge(n)),
        None => return Err(Error::GridTooLarge(u128::MAX)),
    };
    clear_prechecked(s, Some(&BidVector::ones(s.horizon)))?;

    let point = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        let mut k = vec![0.0; s.horizon];
        for slot in k.iter_mut().rev() {
            *slot = grid[rem % grid.len()];
            rem /= grid.len();
        }
        k
    };
    let profits: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let k = point(idx);
            let bids = BidVector::new(k, s.horizon, s.k_max).expect("grid inside the bid box");
            match clear_prechecked(s, Some(&bids)) {
                Ok(d) => company_profit(s, &d, strategic, false),
                Err(_) => f64::NEG_INFINITY,
            }
        })
        .collect();

    let mut best = 0;
    let mut best_k = point(0);
    for (idx, &p) in profits.iter().enumerate().skip(1) {
        let k = point(idx);
        if better(
            Point { k: &k, profit: p },
            Point {
                k: &best_k,
                profit: profits[best],
            },
        ) {
            best = idx;
            best_k = k;
        }
    }
    finish(s, best_k, total, 1, 0, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CompanyAssets, SgParams};
    use approx::assert_abs_diff_eq;

    fn company(id: &str, p_max: f64, cost: f64, horizon: usize) -> CompanyAssets {
        CompanyAssets {
            id: id.into(),
            sg: SgParams {
                p_max,
                ramp_up: p_max,
                ramp_down: p_max,
                p_initial: 0.0,
                marginal_cost: cost,
            },
            bs: None,
            wind_profile: vec![0.0; horizon],
        }
    }

    fn monopoly(demand: f64) -> Scenario {
        Scenario {
            horizon: 1,
            period_hours: 1.0,
            demand: vec![demand],
            companies: vec![company("M", 6.0, 500.0, 1)],
            strategic_company: Some("M".into()),
            k_max: 2.0,
            solver: SolverConfig::default(),
            report: Default::default(),
        }
    }

    #[test]
    fn monopoly_bids_the_cap() {
        let s = monopoly(3.0);
        let sol = solve_bilevel(&s, &s.solver).unwrap();
        assert_eq!(sol.bids.as_slice(), &[2.0]);
        assert_abs_diff_eq!(sol.strategic_profit, 1500.0, epsilon = 1e-6);
        let bf = brute_force_bilevel(&s, 0.01).unwrap();
        assert_eq!(bf.bids.as_slice(), &[2.0]);
        assert_abs_diff_eq!(bf.strategic_profit, 1500.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_demand_prefers_truthful() {
        let s = monopoly(0.0);
        let sol = solve_bilevel(&s, &s.solver).unwrap();
        assert_abs_diff_eq!(sol.strategic_profit, 0.0, epsilon = 1e-9);
        assert_eq!(sol.bids.as_slice(), &[1.0]);
        let bf = brute_force_bilevel(&s, 0.25).unwrap();
        assert_eq!(bf.bids.as_slice(), &[1.0]);
    }

    #[test]
    fn k_max_one_is_truthful() {
        let mut s = monopoly(3.0);
        s.k_max = 1.0;
        let sol = solve_bilevel(&s, &s.solver).unwrap();
        assert_eq!(sol.bids.as_slice(), &[1.0]);
        assert_abs_diff_eq!(sol.strategic_profit, 0.0, epsilon = 1e-6);
        assert_eq!(brute_force_bilevel(&s, 0.01).unwrap().stats.evaluations, 1);
    }

    #[test]
    fn duopoly_undercuts_rival() {
        // Rival offers 600 for up to 5 MW; the strategic 500-cost unit can
        // raise its offer until it meets the rival's.
        let mut s = monopoly(3.0);
        s.companies.push(company("R", 5.0, 600.0, 1));
        s.k_max = 2.0;
        let sol = solve_bilevel(&s, &s.solver).unwrap();
        let bf = brute_force_bilevel(&s, 0.01).unwrap();
        assert_abs_diff_eq!(bf.bids.as_slice()[0], 1.19, epsilon = 1e-12);
        assert!(sol.strategic_profit >= bf.strategic_profit - 1e-6);
        assert!(sol.strategic_profit <= 300.0 + 1e-6);
        assert!(sol.bids.as_slice()[0] < 1.2 + 1e-9);
    }

    #[test]
    fn oracle_grid_guard() {
        let mut s = monopoly(3.0);
        s.horizon = 4;
        s.demand = vec![3.0; 4];
        s.companies[0].wind_profile = vec![0.0; 4];
        assert!(matches!(
            brute_force_bilevel(&s, 0.01),
            Err(Error::GridTooLarge(n)) if n == 101u128.pow(4)
        ));
    }

    #[test]
    fn grid_includes_cap() {
        assert_eq!(bid_grid(2.0, 0.5).unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(bid_grid(2.0, 0.3).unwrap().last(), Some(&2.0));
        assert_eq!(bid_grid(1.0, 0.1).unwrap(), vec![1.0]);
        assert_eq!(bid_grid(2.0, 0.01).unwrap().len(), 101);
        assert!(bid_grid(2.0, 0.0).is_err());
    }

    #[test]
    fn requires_strategic_company() {
        let mut s = monopoly(3.0);
        s.strategic_company = None;
        assert!(matches!(
            solve_bilevel(&s, &s.solver),
            Err(Error::NoStrategicCompany)
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let mut s = monopoly(3.0);
        s.horizon = 2;
        s.demand = vec![3.0, 7.0];
        s.companies[0].wind_profile = vec![0.0; 2];
        s.companies.push(company("R", 5.0, 600.0, 2));
        let a = solve_bilevel(&s, &s.solver).unwrap();
        let b = solve_bilevel(&s, &s.solver).unwrap();
        assert_eq!(a.bids, b.bids);
        assert_eq!(a.strategic_profit, b.strategic_profit);
    }
}
