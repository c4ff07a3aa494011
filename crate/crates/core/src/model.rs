//! Market participants, time series and scenario configuration.
//!
//! Units follow the hourly market convention: power in MW, energy in MWh,
//! prices in ¥/MWh. Battery state of charge is a fraction of `e_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Synchronous generator of one company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgParams {
    /// Rated output (MW).
    pub p_max: f64,
    /// Maximum increase between consecutive periods (MW per period).
    pub ramp_up: f64,
    /// Maximum decrease between consecutive periods (MW per period).
    pub ramp_down: f64,
    /// Output in the period preceding the horizon (MW).
    pub p_initial: f64,
    /// True marginal generation cost (¥/MWh).
    pub marginal_cost: f64,
}

/// Battery storage of one company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsParams {
    /// Charge/discharge power limit (MW).
    pub p_max: f64,
    /// Energy capacity (MWh).
    pub e_max: f64,
    pub soc_initial: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Quadratic cost coefficient on charge/discharge power (¥/MW²·h).
    pub levelized_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanyAssets {
    pub id: String,
    pub sg: SgParams,
    /// `None` models a company without storage.
    #[serde(default)]
    pub bs: Option<BsParams>,
    /// Available wind power per period (MW).
    pub wind_profile: Vec<f64>,
}

/// Outer-search and oracle settings for strategic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of pattern-search starts, including the all-ones and all-`k_max` starts.
    pub restarts: usize,
    pub seed: u64,
    /// Total number of market clearings the outer search may spend.
    pub eval_budget: usize,
    /// Bid grid spacing used by the brute-force oracle.
    pub grid_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 42,
            eval_budget: 5000,
            grid_step: 0.01,
        }
    }
}

/// Settings for report generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Output at or below which a generator counts as offline (MW).
    pub reserve_eps: f64,
    /// Add wind sales `λ_t·P_WT,t` to company profits.
    pub include_wind_revenue: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            reserve_eps: 1e-4,
            include_wind_revenue: false,
        }
    }
}

/// A complete market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: usize,
    pub period_hours: f64,
    pub demand: Vec<f64>,
    pub companies: Vec<CompanyAssets>,
    #[serde(default)]
    pub strategic_company: Option<String>,
    pub k_max: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

/// Dispatch of one company over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyDispatch {
    pub id: String,
    pub sg_output: Vec<f64>,
    /// Positive values discharge into the grid.
    pub bs_power: Vec<f64>,
    pub wt_output: Vec<f64>,
    /// End-of-period state of charge; empty when the company has no battery.
    pub soc: Vec<f64>,
}

/// Outcome of one market clearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub companies: Vec<CompanyDispatch>,
    /// Clearing price per period (¥/MWh).
    pub prices: Vec<f64>,
    /// Value of the clearing objective at the optimum, using submitted offers (¥).
    pub objective_value: f64,
}

impl DispatchResult {
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn company(&self, id: &str) -> Option<&CompanyDispatch> {
        self.companies.iter().find(|c| c.id == id)
    }

    /// Supply minus demand in every period.
    pub fn balance_residuals(&self, demand: &[f64]) -> Vec<f64> {
        demand
            .iter()
            .enumerate()
            .map(|(t, d)| {
                let supply: f64 = self
                    .companies
                    .iter()
                    .map(|c| c.sg_output[t] + c.bs_power[t] + c.wt_output[t])
                    .sum();
                supply - d
            })
            .collect()
    }
}

impl Scenario {
    pub fn company(&self, id: &str) -> Option<&CompanyAssets> {
        self.companies.iter().find(|c| c.id == id)
    }

    pub fn company_index(&self, id: &str) -> Option<usize> {
        self.companies.iter().position(|c| c.id == id)
    }

    /// The designated strategic company, if any.
    pub fn strategic(&self) -> Result<(usize, &CompanyAssets)> {
        let id = self
            .strategic_company
            .as_deref()
            .ok_or(Error::NoStrategicCompany)?;
        let idx = self
            .company_index(id)
            .ok_or_else(|| Error::UnknownCompany(id.to_string()))?;
        Ok((idx, &self.companies[idx]))
    }

    /// Copy of this scenario with a different strategic designation.
    pub fn with_strategic(&self, id: Option<&str>) -> Self {
        Self {
            strategic_company: id.map(str::to_string),
            ..self.clone()
        }
    }

    /// Every broken invariant, in field order. Empty when the scenario is valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                out.push(Violation::new(field, msg));
            }
        };

        check(self.horizon >= 1, "horizon", "horizon must be at least 1");
        check(
            self.period_hours.is_finite() && self.period_hours > 0.0,
            "period_hours",
            "period_hours must be positive",
        );
        check(
            self.demand.len() == self.horizon,
            "demand",
            &format!(
                "dimension mismatch: {} entries for horizon {}",
                self.demand.len(),
                self.horizon
            ),
        );
        check(
            self.demand.iter().all(|d| d.is_finite() && *d >= 0.0),
            "demand",
            "entries must be finite and non-negative",
        );
        check(self.k_max.is_finite(), "k_max", "k_max must be finite");
        check(!(self.k_max < 1.0), "k_max", "k_max below 1");
        check(
            !self.companies.is_empty(),
            "companies",
            "at least one company required",
        );

        for (i, c) in self.companies.iter().enumerate() {
            let p = |f: &str| format!("companies[{i}].{f}");
            check(!c.id.is_empty(), &p("id"), "id must not be empty");
            check(
                self.companies[..i].iter().all(|o| o.id != c.id),
                &p("id"),
                &format!("duplicate company id `{}`", c.id),
            );

            let sg = &c.sg;
            let pos = |x: f64| x.is_finite() && x > 0.0;
            check(pos(sg.p_max), &p("sg.p_max"), "must be positive");
            check(pos(sg.ramp_up), &p("sg.ramp_up"), "must be positive");
            check(pos(sg.ramp_down), &p("sg.ramp_down"), "must be positive");
            check(
                sg.p_initial.is_finite() && sg.p_initial >= 0.0 && sg.p_initial <= sg.p_max,
                &p("sg.p_initial"),
                "must lie in [0, p_max]",
            );
            check(
                sg.marginal_cost.is_finite() && sg.marginal_cost >= 0.0,
                &p("sg.marginal_cost"),
                "must be non-negative",
            );

            if let Some(bs) = &c.bs {
                check(pos(bs.p_max), &p("bs.p_max"), "must be positive");
                check(pos(bs.e_max), &p("bs.e_max"), "must be positive");
                check(
                    bs.levelized_cost.is_finite() && bs.levelized_cost >= 0.0,
                    &p("bs.levelized_cost"),
                    "must be non-negative",
                );
                let socs = [bs.soc_min, bs.soc_initial, bs.soc_max];
                check(
                    socs.iter().all(|x| x.is_finite()),
                    &p("bs.soc"),
                    "state-of-charge bounds must be finite",
                );
                check(bs.soc_min >= 0.0, &p("bs.soc_min"), "soc_min below 0");
                check(bs.soc_max <= 1.0, &p("bs.soc_max"), "soc_max above 1");
                check(
                    bs.soc_min <= bs.soc_max,
                    &p("bs.soc_min"),
                    "soc_min > soc_max",
                );
                check(
                    bs.soc_min <= bs.soc_initial && bs.soc_initial <= bs.soc_max,
                    &p("bs.soc_initial"),
                    "soc_initial outside [soc_min, soc_max]",
                );
            }

            check(
                c.wind_profile.len() == self.horizon,
                &p("wind_profile"),
                &format!(
                    "dimension mismatch: {} entries for horizon {}",
                    c.wind_profile.len(),
                    self.horizon
                ),
            );
            check(
                c.wind_profile.iter().all(|w| w.is_finite() && *w >= 0.0),
                &p("wind_profile"),
                "entries must be finite and non-negative",
            );
        }

        if let Some(id) = &self.strategic_company {
            check(
                self.company(id).is_some(),
                "strategic_company",
                &format!("`{id}` does not name a company"),
            );
        }

        let sv = &self.solver;
        check(sv.restarts >= 1, "solver.restarts", "must be at least 1");
        check(
            sv.eval_budget >= 1,
            "solver.eval_budget",
            "must be at least 1",
        );
        check(
            sv.grid_step.is_finite() && sv.grid_step > 0.0,
            "solver.grid_step",
            "must be positive",
        );
        check(
            self.report.reserve_eps.is_finite() && self.report.reserve_eps >= 0.0,
            "report.reserve_eps",
            "must be non-negative",
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Returns the scenario unchanged iff every invariant holds.
pub fn validate_scenario(s: Scenario) -> Result<Scenario> {
    s.validate()?;
    Ok(s)
}

#[derive(Deserialize)]
struct BundledProfiles {
    demand: Vec<f64>,
    wind: std::collections::BTreeMap<String, Vec<f64>>,
}

const BUNDLED_PROFILES: &str = include_str!("../data/three_company_profiles.json");

/// The three-company case study with the bundled synthetic load and wind profiles.
///
/// Wind covers demand until hour 10. Demand peaks at hour 18 just below the
/// combined generator rating plus wind plus full battery discharge, so every
/// generator must run at rated power in that hour whatever it bids.
pub fn three_company_scenario() -> Scenario {
    let profiles: BundledProfiles =
        serde_json::from_str(BUNDLED_PROFILES).expect("bundled profiles are valid JSON");

    let company = |id: &str, sg: [f64; 5], bs_p: f64, e_max: f64| CompanyAssets {
        id: id.to_string(),
        sg: SgParams {
            p_max: sg[0],
            ramp_up: sg[1],
            ramp_down: sg[2],
            p_initial: sg[3],
            marginal_cost: sg[4],
        },
        bs: Some(BsParams {
            p_max: bs_p,
            e_max,
            soc_initial: 0.4,
            soc_min: 0.2,
            soc_max: 0.9,
            levelized_cost: 50.0,
        }),
        wind_profile: profiles.wind[id].clone(),
    };

    Scenario {
        horizon: profiles.demand.len(),
        period_hours: 1.0,
        demand: profiles.demand.clone(),
        companies: vec![
            company("CO-1", [4.0, 2.0, 2.0, 2.0, 900.0], 0.6, 1.0),
            company("CO-2", [5.0, 2.5, 2.5, 3.0, 600.0], 0.6, 1.0),
            company("CO-3", [6.0, 3.0, 3.0, 4.0, 500.0], 1.2, 2.0),
        ],
        strategic_company: None,
        k_max: 2.0,
        solver: SolverConfig::default(),
        report: ReportConfig::default(),
    }
}
