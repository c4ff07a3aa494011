use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result, Violation};
use crate::model::SolverConfig;

/// One simulation case: truthful clearing, or one company bidding strategically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CaseSpec {
    Pcm,
    Icm(String),
}

impl CaseSpec {
    /// Directory-safe name, e.g. `pcm` or `icm-CO-1`.
    pub fn slug(&self) -> String {
        match self {
            CaseSpec::Pcm => "pcm".into(),
            CaseSpec::Icm(id) => {
                let clean: String = id
                    .chars()
                    .map(|c| {
                        if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                            c
                        } else {
                            '_'
                        }
                    })
                    .collect();
                format!("icm-{clean}")
            }
        }
    }
}

impl fmt::Display for CaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseSpec::Pcm => f.write_str("pcm"),
            CaseSpec::Icm(id) => write!(f, "icm:{id}"),
        }
    }
}

impl FromStr for CaseSpec {
    type Err = Error;

    /// Accepts `pcm` or `icm:<company id>`; the keyword is case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("pcm") {
            return Ok(CaseSpec::Pcm);
        }
        match s.split_once(':') {
            Some((kw, id)) if kw.eq_ignore_ascii_case("icm") => {
                let id = id.trim();
                if id.is_empty() {
                    Err(Error::Parse(format!("case `{s}` has an empty company id")))
                } else {
                    Ok(CaseSpec::Icm(id.to_string()))
                }
            }
            _ => Err(Error::Parse(format!(
                "case `{s}` is neither `pcm` nor `icm:<company>`"
            ))),
        }
    }
}

impl Serialize for CaseSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-run replacements for the scenario's search settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub eval_budget: Option<usize>,
    pub grid_step: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eval_budget {
            cfg.eval_budget = v;
        }
        if let Some(v) = self.grid_step {
            cfg.grid_step = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: PathBuf,
    pub cases: Vec<CaseSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl RunManifest {
    /// Parses and checks a manifest; paths are kept as written.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// Reads a manifest file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if m.scenario.is_relative() {
            m.scenario = base.join(&m.scenario);
        }
        if m.output_dir.is_relative() {
            m.output_dir = base.join(&m.output_dir);
        }
        Ok(m)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.cases.is_empty() {
            v.push(Violation::new("cases", "at least one case is required"));
        }
        for (i, c) in self.cases.iter().enumerate() {
            if self.cases[..i].contains(c) {
                v.push(Violation::new(
                    format!("cases[{i}]"),
                    format!("duplicate case `{c}`"),
                ));
            }
        }
        let o = &self.solver;
        if o.restarts == Some(0) {
            v.push(Violation::new("solver.restarts", "must be at least 1"));
        }
        if o.eval_budget == Some(0) {
            v.push(Violation::new("solver.eval_budget", "must be at least 1"));
        }
        if let Some(h) = o.grid_step {
            if !(h > 0.0 && h.is_finite()) {
                v.push(Violation::new("solver.grid_step", "must be positive"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_cases() {
        assert_eq!("pcm".parse::<CaseSpec>().unwrap(), CaseSpec::Pcm);
        assert_eq!(" PCM ".parse::<CaseSpec>().unwrap(), CaseSpec::Pcm);
        assert_eq!(
            "icm:CO-1".parse::<CaseSpec>().unwrap(),
            CaseSpec::Icm("CO-1".into())
        );
        assert_eq!(
            "ICM:a:b".parse::<CaseSpec>().unwrap(),
            CaseSpec::Icm("a:b".into())
        );
        for bad in ["", "icm", "icm:", "icm:  ", "foo:CO-1", "pcm:x"] {
            assert!(bad.parse::<CaseSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn case_round_trip_and_slug() {
        for c in [CaseSpec::Pcm, CaseSpec::Icm("CO 3/x".into())] {
            assert_eq!(c.to_string().parse::<CaseSpec>().unwrap(), c);
        }
        assert_eq!(CaseSpec::Icm("CO 3/x".into()).slug(), "icm-CO_3_x");
    }

    #[test]
    fn manifest_checks() {
        let ok = r#"{"scenario":"s.json","cases":["pcm","icm:CO-1"],"output_dir":"out"}"#;
        let m = RunManifest::from_json_str(ok).unwrap();
        assert_eq!(m.cases.len(), 2);
        assert_eq!(m.solver, SolverOverrides::default());

        let empty = r#"{"scenario":"s.json","cases":[],"output_dir":"out"}"#;
        assert!(matches!(
            RunManifest::from_json_str(empty),
            Err(Error::Validation(_))
        ));
        let dup = r#"{"scenario":"s.json","cases":["pcm","PCM"],"output_dir":"out"}"#;
        assert!(matches!(
            RunManifest::from_json_str(dup),
            Err(Error::Validation(_))
        ));
        let bad = r#"{"scenario":"s.json","cases":["xcm"],"output_dir":"out"}"#;
        assert!(matches!(
            RunManifest::from_json_str(bad),
            Err(Error::Parse(_))
        ));
        let extra = r#"{"scenario":"s.json","cases":["pcm"],"output_dir":"o","x":1}"#;
        assert!(RunManifest::from_json_str(extra).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = SolverConfig::default();
        SolverOverrides {
            seed: Some(7),
            eval_budget: Some(100),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!((cfg.seed, cfg.eval_budget, cfg.restarts), (7, 100, 8));
    }
}
