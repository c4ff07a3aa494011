//! End-to-end simulation: truthful clearing and strategic cases for one
//! scenario, with per-case CSVs, a cross-case summary and figures.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! <case>/dispatch.csv    one row per period
//! <case>/report.json     full report including dispatch and bids
//! summary.json           headline numbers per case
//! summary.csv            metric × case table
//! lerner.svg prices.svg reserve_type1.svg reserve_type2.svg
//! PARTIAL_RESULTS.txt    only when some case failed
//! ```

mod figures;
mod manifest;
mod output;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use figures::{render_svg, Chart};
pub use manifest::{CaseSpec, RunManifest, SolverOverrides};
pub use output::{fmt_num, summary_table, CaseSummary};

use crate::analytics::{economic_report, MarketReport};
use crate::bilevel::{solve_bilevel, BilevelSolution};
use crate::clearing::clear_market;
use crate::error::{Error, Result};
use crate::model::Scenario;

/// Truthful clearing of `s` (any strategic designation is ignored).
pub fn run_pcm(s: &Scenario) -> Result<MarketReport> {
    let s = s.with_strategic(None);
    let d = clear_market(&s, None)?;
    economic_report(&s, &d, None)
}

/// Strategic case with `strategic` optimizing its offer multipliers.
pub fn run_icm(s: &Scenario, strategic: &str) -> Result<(MarketReport, BilevelSolution)> {
    if s.company(strategic).is_none() {
        return Err(Error::UnknownCompany(strategic.to_string()));
    }
    let s = s.with_strategic(Some(strategic));
    let sol = solve_bilevel(&s, &s.solver)?;
    let report = economic_report(&s, &sol.dispatch, Some(&sol.bids))?;
    Ok((report, sol))
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case: CaseSpec,
    pub report: MarketReport,
    pub solution: Option<BilevelSolution>,
}

pub fn run_case(s: &Scenario, case: &CaseSpec) -> Result<CaseOutcome> {
    match case {
        CaseSpec::Pcm => Ok(CaseOutcome {
            case: case.clone(),
            report: run_pcm(s)?,
            solution: None,
        }),
        CaseSpec::Icm(id) => {
            let (report, sol) = run_icm(s, id)?;
            Ok(CaseOutcome {
                case: case.clone(),
                report,
                solution: Some(sol),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub output_dir: PathBuf,
    pub cases: Vec<CaseOutcome>,
}

impl SuiteOutcome {
    pub fn summaries(&self) -> Vec<CaseSummary> {
        self.cases.iter().map(CaseSummary::new).collect()
    }
}

/// Creates `dir` and proves it accepts files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn case_dirs(cases: &[CaseSpec]) -> Vec<String> {
    let mut seen = HashSet::new();
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut slug = c.slug();
            if !seen.insert(slug.clone()) {
                slug = format!("{slug}-{i}");
                seen.insert(slug.clone());
            }
            slug
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    scenario: String,
    cases: &'a [CaseSummary],
    failed: Vec<String>,
}

/// Runs every case of `s`, writing results to `out`.
///
/// Company names are checked and `out` is probed for writability before any
/// solving starts. Cases run in parallel. When a case fails, the remaining
/// outputs are still written together with `PARTIAL_RESULTS.txt` and the
/// first failure (in case order) is returned.
pub fn run_cases(
    s: &Scenario,
    cases: &[CaseSpec],
    out: &Path,
    label: &str,
) -> Result<SuiteOutcome> {
    s.validate()?;
    if cases.is_empty() {
        return Err(Error::Validation(vec![crate::error::Violation::new(
            "cases",
            "at least one case is required",
        )]));
    }
    for c in cases {
        if let CaseSpec::Icm(id) = c {
            if s.company(id).is_none() {
                return Err(Error::UnknownCompany(id.clone()));
            }
        }
    }
    ensure_writable(out)?;

    let results: Vec<Result<CaseOutcome>> = cases.par_iter().map(|c| run_case(s, c)).collect();

    let dirs = case_dirs(cases);
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for ((case, dir), res) in cases.iter().zip(&dirs).zip(results) {
        match res {
            Ok(o) => {
                let d = out.join(dir);
                fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
                output::write_dispatch_csv(&d.join("dispatch.csv"), s, &o.report)?;
                output::write_json(&d.join("report.json"), &o.report)?;
                done.push(o);
            }
            Err(e) => failed.push((case.clone(), e)),
        }
    }

    let summaries: Vec<CaseSummary> = done.iter().map(CaseSummary::new).collect();
    output::write_json(
        &out.join("summary.json"),
        &SummaryFile {
            scenario: label.to_string(),
            cases: &summaries,
            failed: failed.iter().map(|(c, _)| c.to_string()).collect(),
        },
    )?;
    output::write_summary_csv(&out.join("summary.csv"), &summaries)?;
    if !done.is_empty() {
        write_figures(out, &done)?;
    }

    let partial = out.join("PARTIAL_RESULTS.txt");
    if let Some((case, err)) = failed.into_iter().next() {
        let note = partial_note(&case, &err, &done);
        fs::write(&partial, note).map_err(|e| Error::io(&partial, e))?;
        return Err(Error::CaseFailed {
            case: case.to_string(),
            source: Box::new(err),
        });
    }
    if partial.exists() {
        fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    Ok(SuiteOutcome {
        output_dir: out.to_path_buf(),
        cases: done,
    })
}

fn partial_note(case: &CaseSpec, err: &Error, done: &[CaseOutcome]) -> String {
    let mut note = String::from("Partial results: at least one case failed.\n");
    note.push_str(&format!("first failure: {case} ({err})\n"));
    note.push_str("completed:");
    for o in done {
        note.push(' ');
        note.push_str(&o.case.to_string());
    }
    note.push('\n');
    note
}

/// Loads the manifest's scenario, applies solver overrides and runs the suite.
pub fn run_suite(m: &RunManifest) -> Result<SuiteOutcome> {
    m.validate()?;
    let mut s = Scenario::load(&m.scenario)?;
    m.solver.apply(&mut s.solver);
    let label = m.scenario.display().to_string();
    run_cases(&s, &m.cases, &m.output_dir, &label)
}

fn write_figures(out: &Path, done: &[CaseOutcome]) -> Result<()> {
    let series = |f: &dyn Fn(&MarketReport) -> Vec<f64>| -> Vec<(String, Vec<f64>)> {
        done.iter()
            .map(|o| (o.case.to_string(), f(&o.report)))
            .collect()
    };
    let charts = [
        (
            "lerner.svg",
            Chart {
                title: "Lerner index by period",
                y_label: "Lerner index",
                series: series(&|r| r.lerner.per_period.clone()),
            },
        ),
        (
            "prices.svg",
            Chart {
                title: "Clearing price by period",
                y_label: "price (CNY/MWh)",
                series: series(&|r| r.prices.clone()),
            },
        ),
        (
            "reserve_type1.svg",
            Chart {
                title: "Type-I spinning reserve by period",
                y_label: "reserve (MW)",
                series: series(&|r| r.reserve.total_type1.clone()),
            },
        ),
        (
            "reserve_type2.svg",
            Chart {
                title: "Type-II spinning reserve by period",
                y_label: "reserve (MW)",
                series: series(&|r| r.reserve.total_type2.clone()),
            },
        ),
    ];
    for (name, chart) in &charts {
        figures::write_svg(&out.join(name), chart)?;
    }
    Ok(())
}
