//! Assertions, the deterministic JSON summary and the markdown report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::Result;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

impl Relation {
    fn holds(self, measured: f64, tol: f64) -> bool {
        match self {
            Self::Le => measured <= tol,
            Self::Ge => measured >= tol,
            Self::Eq => measured == tol,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Le => "<=",
            Self::Ge => ">=",
            Self::Eq => "==",
        }
    }
}

/// Non-finite values serialize as strings so the summary stays lossless JSON.
fn lossless<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    /// The identity or bound being checked.
    pub anchor: String,
    #[serde(serialize_with = "lossless")]
    pub measured: f64,
    pub relation: Relation,
    #[serde(serialize_with = "lossless")]
    pub tolerance: f64,
    pub pass: bool,
}

/// Assertions, metrics and data files produced by one pipeline.
#[derive(Debug)]
pub struct Run {
    dir: PathBuf,
    pub assertions: Vec<Assertion>,
    pub metrics: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
}

impl Run {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), assertions: Vec::new(), metrics: BTreeMap::new(), outputs: Vec::new() }
    }

    pub fn check(&mut self, name: impl Into<String>, anchor: &str, measured: f64, relation: Relation, tolerance: f64) {
        self.assertions.push(Assertion {
            name: name.into(),
            anchor: anchor.to_string(),
            measured,
            relation,
            tolerance,
            pass: relation.holds(measured, tolerance),
        });
    }

    pub fn metric(&mut self, key: impl Into<String>, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.into(), v);
    }

    /// Path for a data file in the scenario directory, recorded in the summary.
    pub fn output(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.dir.join(file)
    }

    pub fn csv(&mut self, file: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.output(file))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub scenario: &'a str,
    pub kind: &'a str,
    pub seed: u64,
    pub params: &'a crate::scenario::Params,
    pub verdict: &'static str,
    pub assertions: &'a [Assertion],
    pub metrics: &'a BTreeMap<String, Value>,
    pub outputs: &'a [String],
}

pub fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn summary<'a>(sc: &'a Scenario, run: &'a Run) -> Summary<'a> {
    Summary {
        scenario: &sc.name,
        kind: sc.kind.as_str(),
        seed: sc.seed,
        params: &sc.params,
        verdict: verdict(run.passed()),
        assertions: &run.assertions,
        metrics: &run.metrics,
        outputs: &run.outputs,
    }
}

pub fn fmt_value(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        v.to_string()
    } else if (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.3e}")
    }
}

/// The markdown table for one scenario.
pub fn markdown_section(sc: &Scenario, run: &Run) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "## {}\n", sc.name);
    let _ = writeln!(s, "kind `{}`, seed {}, verdict **{}**\n", sc.kind.as_str(), sc.seed, verdict(run.passed()).to_uppercase());
    let _ = writeln!(s, "| assertion | anchor | measured | tolerance | verdict |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    if run.assertions.is_empty() {
        let _ = writeln!(s, "| no assertions | - | - | - | FLAGGED |");
    }
    for a in &run.assertions {
        let _ = writeln!(
            s,
            "| {} | `{}` | {} | {} {} | {} |",
            a.name,
            a.anchor,
            fmt_value(a.measured),
            a.relation.symbol(),
            fmt_value(a.tolerance),
            if a.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Kind, Overrides};

    #[test]
    fn empty_assertion_list_is_flagged() {
        let sc = Scenario::default_for(Kind::Verify, Overrides::default()).unwrap();
        let run = Run::new(Path::new("."));
        assert!(run.passed());
        assert!(markdown_section(&sc, &run).contains("| no assertions | - | - | - | FLAGGED |"));
    }

    #[test]
    fn relations_and_verdicts() {
        let mut run = Run::new(Path::new("."));
        run.check("a", "x = x", 0.0, Relation::Eq, 0.0);
        run.check("b", "x <= 1", 0.5, Relation::Le, 1.0);
        assert!(run.passed());
        run.check("c", "gap", f64::NAN, Relation::Ge, 1.0);
        assert!(!run.passed());
        let json = serde_json::to_string(&run.assertions[2]).unwrap();
        assert!(json.contains(r#""measured":"NaN""#));
    }
}
