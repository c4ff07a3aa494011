use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::{CompanyProfit, MarketReport};
use crate::bilevel::SolveStats;
use crate::error::{Error, Result};
use crate::model::Scenario;

use super::CaseOutcome;

/// Fixed six-decimal rendering; negative zero prints as zero.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Headline numbers of one case: money, market power and reserve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub strategic_company: Option<String>,
    pub energy_fee_kcny: f64,
    pub profits_kcny: Vec<CompanyProfit>,
    pub lerner_mean: f64,
    pub mean_reserve_type1_mw: f64,
    pub mean_reserve_type2_mw: f64,
    pub search: Option<SolveStats>,
}

impl CaseSummary {
    pub fn new(o: &CaseOutcome) -> Self {
        let r = &o.report;
        Self {
            case: o.case.to_string(),
            strategic_company: r.strategic_company.clone(),
            energy_fee_kcny: r.energy_fee,
            profits_kcny: r.profits.clone(),
            lerner_mean: r.lerner.mean,
            mean_reserve_type1_mw: r.reserve.mean_type1,
            mean_reserve_type2_mw: r.reserve.mean_type2,
            search: o.solution.as_ref().map(|s| s.stats.clone()),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// One row per period: price, bid and Lerner index, then per-company
/// dispatch and reserves. SoC cells are empty for companies without storage.
pub fn write_dispatch_csv(path: &Path, s: &Scenario, r: &MarketReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec![
        "period".to_string(),
        "price".to_string(),
        "bid_k".to_string(),
        "lerner".to_string(),
    ];
    for c in &s.companies {
        for col in [
            "p_sg",
            "p_bs",
            "p_wt",
            "soc",
            "reserve_type1",
            "reserve_type2",
        ] {
            header.push(format!("{}_{col}", c.id));
        }
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for t in 0..s.horizon {
        let k = r.bids.as_ref().map_or(1.0, |b| b.as_slice()[t]);
        let mut row = vec![
            t.to_string(),
            fmt_num(r.prices[t]),
            fmt_num(k),
            fmt_num(r.lerner.per_period[t]),
        ];
        for (cd, res) in r.dispatch.companies.iter().zip(&r.reserve.companies) {
            row.push(fmt_num(cd.sg_output[t]));
            row.push(fmt_num(cd.bs_power[t]));
            row.push(fmt_num(cd.wt_output[t]));
            row.push(cd.soc.get(t).map(|v| fmt_num(*v)).unwrap_or_default());
            row.push(fmt_num(res.type1[t]));
            row.push(fmt_num(res.type2[t]));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn metric_rows(cases: &[CaseSummary]) -> Vec<(String, Vec<f64>)> {
    let mut rows = vec![(
        "energy_fee_kcny".to_string(),
        cases.iter().map(|c| c.energy_fee_kcny).collect(),
    )];
    if let Some(first) = cases.first() {
        for (i, p) in first.profits_kcny.iter().enumerate() {
            rows.push((
                format!("profit_kcny:{}", p.id),
                cases.iter().map(|c| c.profits_kcny[i].profit).collect(),
            ));
        }
    }
    rows.push((
        "lerner_mean".into(),
        cases.iter().map(|c| c.lerner_mean).collect(),
    ));
    rows.push((
        "mean_reserve_type1_mw".into(),
        cases.iter().map(|c| c.mean_reserve_type1_mw).collect(),
    ));
    rows.push((
        "mean_reserve_type2_mw".into(),
        cases.iter().map(|c| c.mean_reserve_type2_mw).collect(),
    ));
    rows
}

/// Cross-case table with one column per case.
pub fn write_summary_csv(path: &Path, cases: &[CaseSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["metric".to_string()];
    header.extend(cases.iter().map(|c| c.case.clone()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (name, vals) in metric_rows(cases) {
        let mut row = vec![name];
        row.extend(vals.into_iter().map(fmt_num));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text rendering of the cross-case table.
pub fn summary_table(cases: &[CaseSummary]) -> String {
    let rows = metric_rows(cases);
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, v)| v.iter().map(|x| format!("{x:.4}")).collect())
        .collect();
    let col_w: Vec<usize> = cases
        .iter()
        .enumerate()
        .map(|(j, c)| {
            cells
                .iter()
                .map(|r| r[j].len())
                .chain([c.case.len()])
                .max()
                .unwrap()
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "metric");
    for (c, w) in cases.iter().zip(&col_w) {
        let _ = write!(out, "  {:>w$}", c.case);
    }
    out.push('\n');
    for ((name, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{name:<name_w$}");
        for (v, w) in row.iter().zip(&col_w) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
