use std::io::Write;
use std::path::PathBuf;

use pod_core::simnet::properties::{Check, PropertyReport};
use serde::Serialize;

use crate::bench::BenchRow;
use crate::{EXIT_OK, EXIT_VIOLATION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyLine {
    pub name: String,
    pub passed: bool,
    pub checked: u64,
    pub violations: u64,
    /// Seed that reproduces the first violation.
    pub counterexample_seed: Option<u64>,
    pub example: Option<String>,
}

impl PropertyLine {
    pub fn from_check(name: &str, check: &Check, seed: u64) -> Self {
        PropertyLine {
            name: name.to_owned(),
            passed: check.ok(),
            checked: check.checked,
            violations: check.violations,
            counterexample_seed: (!check.ok()).then_some(seed),
            example: check
                .examples
                .first()
                .map(|v| format!("round {}: {}", v.round, v.detail)),
        }
    }

    /// A single yes/no check.
    pub fn flag(name: &str, passed: bool, seed: u64, detail: Option<String>) -> Self {
        PropertyLine {
            name: name.to_owned(),
            passed,
            checked: 1,
            violations: u64::from(!passed),
            counterexample_seed: (!passed).then_some(seed),
            example: if passed { None } else { detail },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub properties: Vec<PropertyLine>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub latency: Vec<BenchRow>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl RunReport {
    pub fn new(command: &'static str, config: impl Serialize) -> Self {
        RunReport {
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            properties: Vec::new(),
            latency: Vec::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn add_properties(&mut self, report: &PropertyReport, seed: u64) {
        for (name, check) in report.checks() {
            self.properties.push(PropertyLine::from_check(name, check, seed));
        }
    }

    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Prints the JSON report and one status line per property; returns the exit code.
    pub fn emit(&self, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
        let _ = writeln!(out, "{}", self.to_json());
        for p in &self.properties {
            let _ = match (p.passed, p.counterexample_seed) {
                (true, _) => writeln!(err, "PASS {} ({} checked)", p.name, p.checked),
                (false, Some(s)) => writeln!(err, "FAIL {} ({} of {}, seed {s})", p.name, p.violations, p.checked),
                (false, None) => writeln!(err, "FAIL {} ({} of {})", p.name, p.violations, p.checked),
            };
        }
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    }
}
