#![allow(dead_code)]

pub mod qp;

use bidreserve::model::{BsParams, CompanyAssets, ReportConfig, Scenario, SgParams, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid resolution of the dispatch oracle (MW).
pub const GRID: f64 = 0.01;

fn units(v: f64) -> i64 {
    (v / GRID).round() as i64
}

fn grid_val(u: i64) -> f64 {
    u as f64 * GRID
}

pub fn scenario(
    horizon: usize,
    period_hours: f64,
    demand: Vec<f64>,
    companies: Vec<CompanyAssets>,
) -> Scenario {
    Scenario {
        horizon,
        period_hours,
        demand,
        companies,
        strategic_company: None,
        k_max: 2.0,
        solver: SolverConfig::default(),
        report: ReportConfig::default(),
    }
}

/// Small instance whose data all lie on the 0.01 MW grid, with `Δt = 1` and
/// `E_max = 1` so that battery energy moves in grid steps too. Units are
/// around 1 MW so one grid step is small against the objective; at most one
/// company owns a battery. Demand is the total of a random feasible
/// trajectory, so the instance is always feasible.
pub fn grid_instance(r: &mut ChaCha8Rng, with_bs: bool, ramp_slack: bool) -> Scenario {
    let horizon = r.random_range(1..=3usize);
    let n = r.random_range(1..=2usize);
    let mut companies = Vec::new();
    let mut supply = vec![0i64; horizon];
    let battery_owner = (with_bs && r.random_bool(0.75)).then(|| r.random_range(0..n));
    for c in 0..n {
        let p_max = r.random_range(30..=100i64);
        let (ru, rd) = if ramp_slack {
            (p_max, p_max)
        } else {
            (r.random_range(10..=p_max), r.random_range(10..=p_max))
        };
        let p0 = r.random_range(0..=p_max);
        let cost = r.random_range(100..=1000) as f64 + r.random_range(0..100) as f64 * 0.01;
        let wind: Vec<i64> = (0..horizon).map(|_| r.random_range(0..=50)).collect();

        let mut prev = p0;
        for s in supply.iter_mut() {
            let lo = (prev - rd).max(0);
            let hi = (prev + ru).min(p_max);
            prev = r.random_range(lo..=hi);
            *s += prev;
        }
        for (s, w) in supply.iter_mut().zip(&wind) {
            *s += r.random_range(0..=*w);
        }

        let bs = if battery_owner == Some(c) {
            let bp = r.random_range(2..=10i64);
            let soc0 = r.random_range(30..=70i64);
            let below = r.random_range(2..=15i64);
            let above = r.random_range(2..=15i64);
            // cyclic battery trajectory inside the SoC window
            let mut cd = 0i64;
            for t in 0..horizon {
                let b = if t + 1 == horizon {
                    -cd
                } else {
                    // stay within reach of the start so the last period can close the cycle
                    let rem = (horizon - t - 1) as i64;
                    let lo = (-bp).max(-above - cd).max(-bp * rem - cd);
                    let hi = bp.min(below - cd).min(bp * rem - cd);
                    r.random_range(lo..=hi)
                };
                cd += b;
                supply[t] += b;
            }
            Some(BsParams {
                p_max: grid_val(bp),
                e_max: 1.0,
                soc_initial: grid_val(soc0),
                soc_min: grid_val(soc0 - below),
                soc_max: grid_val(soc0 + above),
                levelized_cost: r.random_range(5..=200) as f64,
            })
        } else {
            None
        };
        companies.push(CompanyAssets {
            id: format!("G{c}"),
            sg: SgParams {
                p_max: grid_val(p_max),
                ramp_up: grid_val(ru),
                ramp_down: grid_val(rd),
                p_initial: grid_val(p0),
                marginal_cost: cost,
            },
            bs,
            wind_profile: wind.into_iter().map(grid_val).collect(),
        });
    }
    let demand = supply.into_iter().map(|s| grid_val(s.max(0))).collect();
    scenario(horizon, 1.0, demand, companies)
}

struct Axis {
    size: usize,
    offset: i64,
}

/// Exact minimum clearing cost over dispatches on the 0.01 MW grid, by
/// dynamic programming over periods. Requires `Δt = 1`, `E_max = 1` and all
/// data on the grid (see [`grid_instance`]); `offers` are the per-company,
/// per-period generator offers. `None` when no grid dispatch is feasible.
pub fn grid_dispatch_oracle(s: &Scenario, offers: &[Vec<f64>]) -> Option<f64> {
    assert_eq!(s.period_hours, 1.0);
    let n = s.companies.len();
    // axes: one SG axis per company, then one cumulative-discharge axis per battery
    let mut axes = Vec::new();
    let mut sg_axis = Vec::new();
    let mut cd_axis = vec![None; n];
    for c in &s.companies {
        sg_axis.push(axes.len());
        axes.push(Axis {
            size: units(c.sg.p_max) as usize + 1,
            offset: 0,
        });
    }
    for (i, c) in s.companies.iter().enumerate() {
        if let Some(b) = &c.bs {
            assert_eq!(b.e_max, 1.0);
            // soc = soc0 − cd·GRID within [soc_min, soc_max]
            let lo = units(b.soc_initial - b.soc_max);
            let hi = units(b.soc_initial - b.soc_min);
            cd_axis[i] = Some(axes.len());
            axes.push(Axis {
                size: (hi - lo + 1) as usize,
                offset: lo,
            });
        }
    }
    let mut strides = vec![1usize; axes.len()];
    for a in (0..axes.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * axes[a + 1].size;
    }
    let total: usize = axes.iter().map(|a| a.size).product();
    let decode = |mut idx: usize, out: &mut [i64]| {
        for (a, ax) in axes.iter().enumerate() {
            out[a] = (idx / strides[a]) as i64 + ax.offset;
            idx %= strides[a];
        }
    };
    let encode = |coords: &[i64]| -> Option<usize> {
        let mut idx = 0;
        for (a, ax) in axes.iter().enumerate() {
            let v = coords[a] - ax.offset;
            if v < 0 || v >= ax.size as i64 {
                return None;
            }
            idx += v as usize * strides[a];
        }
        Some(idx)
    };

    let mut v = vec![f64::INFINITY; total];
    let mut start = vec![0i64; axes.len()];
    for (c, co) in s.companies.iter().enumerate() {
        start[sg_axis[c]] = units(co.sg.p_initial);
    }
    v[encode(&start)?] = 0.0;

    let batteries: Vec<usize> = (0..n).filter(|&c| cd_axis[c].is_some()).collect();
    let bmax: Vec<i64> = batteries
        .iter()
        .map(|&c| units(s.companies[c].bs.as_ref().unwrap().p_max))
        .collect();
    let mut coords = vec![0i64; axes.len()];
    let mut prev = vec![0i64; axes.len()];

    for t in 0..s.horizon {
        // stage A: generator ramp windows, one axis at a time
        let mut w = v.clone();
        for (c, co) in s.companies.iter().enumerate() {
            let a = sg_axis[c];
            let (ru, rd) = (units(co.sg.ramp_up), units(co.sg.ramp_down));
            let src = w.clone();
            for idx in 0..total {
                decode(idx, &mut coords);
                let x = coords[a];
                let mut best = f64::INFINITY;
                for y in (x - ru).max(0)..=(x + rd).min(axes[a].size as i64 - 1) {
                    let j = (idx as i64 + (y - x) * strides[a] as i64) as usize;
                    best = best.min(src[j]);
                }
                w[idx] = best;
            }
        }
        // stage B: battery moves, balance band and period cost
        let d = units(s.demand[t]);
        let wind: i64 = s.companies.iter().map(|c| units(c.wind_profile[t])).sum();
        let mut next = vec![f64::INFINITY; total];
        let combos: usize = bmax.iter().map(|b| (2 * b + 1) as usize).product();
        for idx in 0..total {
            decode(idx, &mut coords);
            let gen: i64 = (0..n).map(|c| coords[sg_axis[c]]).sum();
            let gen_cost: f64 = (0..n)
                .map(|c| offers[c][t] * grid_val(coords[sg_axis[c]]))
                .sum();
            let mut best = f64::INFINITY;
            for k in 0..combos {
                let mut rem = k;
                prev.copy_from_slice(&coords);
                let mut supply = gen;
                let mut cost = gen_cost;
                for (bi, &c) in batteries.iter().enumerate() {
                    let span = (2 * bmax[bi] + 1) as usize;
                    let b = (rem % span) as i64 - bmax[bi];
                    rem /= span;
                    supply += b;
                    cost +=
                        s.companies[c].bs.as_ref().unwrap().levelized_cost * grid_val(b).powi(2);
                    prev[cd_axis[c].unwrap()] -= b;
                }
                if supply > d || supply + wind < d {
                    continue;
                }
                if let Some(j) = encode(&prev) {
                    best = best.min(cost + w[j]);
                }
            }
            next[idx] = best;
        }
        v = next;
    }

    // cyclic end condition
    let mut best = f64::INFINITY;
    for (idx, val) in v.iter().enumerate() {
        decode(idx, &mut coords);
        if batteries.iter().all(|&c| coords[cd_axis[c].unwrap()] == 0) {
            best = best.min(*val);
        }
    }
    best.is_finite().then_some(best)
}

/// Merit-order price for a battery-free instance with slack ramps: the offer
/// of the unit covering the residual demand after free wind. `None` when the
/// residual sits on a block boundary and the price is not unique.
pub fn merit_order_prices(s: &Scenario, offers: &[Vec<f64>]) -> Vec<Option<f64>> {
    (0..s.horizon)
        .map(|t| {
            let wind: f64 = s.companies.iter().map(|c| c.wind_profile[t]).sum();
            let residual = s.demand[t] - wind;
            if residual.abs() < 1e-9 {
                return None;
            }
            if residual < 0.0 {
                return Some(0.0);
            }
            let mut order: Vec<usize> = (0..s.companies.len()).collect();
            order.sort_by(|&a, &b| offers[a][t].total_cmp(&offers[b][t]));
            let mut filled = 0.0;
            for c in order {
                let top = filled + s.companies[c].sg.p_max;
                if (residual - top).abs() < 1e-9 || (residual - filled).abs() < 1e-9 && filled > 0.0
                {
                    return None;
                }
                if residual < top {
                    return Some(offers[c][t]);
                }
                filled = top;
            }
            None
        })
        .collect()
}

pub fn truthful_offers(s: &Scenario) -> Vec<Vec<f64>> {
    s.companies
        .iter()
        .map(|c| vec![c.sg.marginal_cost; s.horizon])
        .collect()
}

/// Feasible-by-construction scenario of moderate size with arbitrary
/// `period_hours`, used for structural invariants.
pub fn random_scenario(r: &mut ChaCha8Rng) -> Scenario {
    let horizon = r.random_range(1..=8usize);
    let n = r.random_range(1..=3usize);
    let dt: f64 = [0.5, 1.0, 2.0][r.random_range(0..3)];
    let mut supply = vec![0.0; horizon];
    let mut companies = Vec::new();
    for c in 0..n {
        let p_max: f64 = r.random_range(1.0..8.0);
        let ru = r.random_range(0.2..p_max);
        let rd = r.random_range(0.2..p_max);
        let p0 = r.random_range(0.0..p_max);
        let mut prev = p0;
        for s in supply.iter_mut() {
            let lo = (prev - rd * dt).max(0.0);
            let hi = (prev + ru * dt).min(p_max);
            prev = r.random_range(0.0..=1.0) * (hi - lo) + lo;
            *s += prev;
        }
        let wind: Vec<f64> = (0..horizon).map(|_| r.random_range(0.0..3.0)).collect();
        for (s, w) in supply.iter_mut().zip(&wind) {
            *s += r.random_range(0.0..=1.0) * w;
        }
        let bs = if r.random_bool(0.5) {
            let bp: f64 = r.random_range(0.2..2.0);
            let e_max = r.random_range(1.0..4.0);
            let soc0 = r.random_range(0.3..0.7);
            // charge in the first half, discharge the same energy later
            let m = horizon / 2;
            let room = supply[..m].iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let step =
                r.random_range(0.0..=1.0) * bp.min(0.2 * e_max / (dt * m.max(1) as f64)).min(room);
            if m > 0 {
                for t in 0..m {
                    supply[t] -= step;
                    supply[m + t] += step;
                }
            }
            Some(BsParams {
                p_max: bp,
                e_max,
                soc_initial: soc0,
                soc_min: soc0 - 0.25,
                soc_max: soc0 + 0.25,
                levelized_cost: r.random_range(1.0..100.0),
            })
        } else {
            None
        };
        companies.push(CompanyAssets {
            id: format!("C{c}"),
            sg: SgParams {
                p_max,
                ramp_up: ru,
                ramp_down: rd,
                p_initial: p0,
                marginal_cost: r.random_range(100.0..1500.0),
            },
            bs,
            wind_profile: wind,
        });
    }
    let demand = supply.into_iter().map(|v: f64| v.max(0.0)).collect();
    scenario(horizon, dt, demand, companies)
}

/// Largest violation of any clearing constraint (MW or SoC fraction).
pub struct ConstraintReport {
    pub balance: f64,
    pub soc_recursion: f64,
    pub box_and_ramp: f64,
}

pub fn check_dispatch(s: &Scenario, d: &bidreserve::model::DispatchResult) -> ConstraintReport {
    let dt = s.period_hours;
    let balance = d
        .balance_residuals(&s.demand)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut soc_recursion = 0.0f64;
    let mut box_and_ramp = 0.0f64;
    let mut viol = |v: f64| box_and_ramp = box_and_ramp.max(v);
    for (co, cd) in s.companies.iter().zip(&d.companies) {
        let mut prev = co.sg.p_initial;
        for t in 0..s.horizon {
            let p = cd.sg_output[t];
            viol(-p);
            viol(p - co.sg.p_max);
            viol(p - prev - co.sg.ramp_up * dt);
            viol(prev - p - co.sg.ramp_down * dt);
            prev = p;
            viol(-cd.wt_output[t]);
            viol(cd.wt_output[t] - co.wind_profile[t]);
        }
        match &co.bs {
            Some(b) => {
                let mut soc = b.soc_initial;
                for t in 0..s.horizon {
                    viol(cd.bs_power[t].abs() - b.p_max);
                    soc -= cd.bs_power[t] * dt / b.e_max;
                    soc_recursion = soc_recursion.max((soc - cd.soc[t]).abs());
                    viol(b.soc_min - cd.soc[t]);
                    viol(cd.soc[t] - b.soc_max);
                }
                soc_recursion = soc_recursion.max((cd.soc[s.horizon - 1] - b.soc_initial).abs());
            }
            None => {
                for t in 0..s.horizon {
                    viol(cd.bs_power[t].abs());
                }
            }
        }
    }
    ConstraintReport {
        balance,
        soc_recursion,
        box_and_ramp,
    }
}

/// Objective tolerance against the grid oracle: 0.1 % relative, floored by
/// one grid step of battery quadratic cost per period, which the grid cannot
/// resolve.
pub fn grid_tolerance(s: &Scenario, objective: f64) -> f64 {
    let floor: f64 = s
        .companies
        .iter()
        .filter_map(|c| c.bs.as_ref())
        .map(|b| b.levelized_cost * GRID * GRID * s.horizon as f64)
        .sum();
    (1e-3 * objective.abs()).max(floor).max(1e-9)
}
