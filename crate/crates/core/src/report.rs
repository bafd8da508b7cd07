//! Certificate reports and their serialized forms.
//!
//! Serialization is byte-stable: struct fields serialize in declaration
//! order, maps are `BTreeMap` (sorted keys), and no timestamps or other
//! environment-dependent data enter the output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Outcome of one certificate run.
///
/// Cap semantics are uniform: for every key present in `caps`, the
/// same-named entry of `measured` must satisfy `measured <= cap` (and be
/// finite). Slack-style checks store their worst violation as a
/// non-negative number so the convention applies unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub name: String,
    pub inputs_digest: String,
    pub measured: BTreeMap<String, f64>,
    pub caps: BTreeMap<String, f64>,
    pub pass: bool,
    /// True when the certificate was vacuous (0/0 ratios, empty data) and
    /// passes by convention.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
}

impl CertificateReport {
    pub fn new(name: impl Into<String>, inputs_digest: String) -> Self {
        CertificateReport {
            name: name.into(),
            inputs_digest,
            measured: BTreeMap::new(),
            caps: BTreeMap::new(),
            pass: false,
            degenerate: false,
            witness: None,
        }
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }

    pub fn cap(&mut self, key: &str, cap: f64) {
        self.caps.insert(key.to_string(), cap);
    }

    /// Evaluates the pass flag from the recorded caps.
    pub fn finish(&mut self) {
        self.pass = self.caps.iter().all(|(k, cap)| {
            self.measured.get(k).map(|v| v.is_finite() && *v <= *cap).unwrap_or(false)
        });
    }

    pub fn mark_degenerate(&mut self) {
        self.degenerate = true;
        self.pass = true;
    }

    /// Headline row for summary.csv: the lexicographically first capped key.
    pub fn headline(&self) -> Option<(&str, f64, f64)> {
        self.caps.iter().next().map(|(k, cap)| {
            (k.as_str(), self.measured.get(k).copied().unwrap_or(f64::NAN), *cap)
        })
    }
}

/// Digest helper: short stable hex id for certificate inputs.
pub fn digest_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let out = h.finalize();
    hex_prefix(&out, 16)
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_prefix(&h.finalize(), 16)
}

fn hex_prefix(bytes: &[u8], len: usize) -> String {
    let mut s = String::with_capacity(len);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{:02x}", b);
        if s.len() >= len {
            break;
        }
    }
    s.truncate(len);
    s
}

/// Solver summary attached to scenario reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Full per-scenario report (report.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    pub certificates: Vec<CertificateReport>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.pass)
    }

    pub fn to_json_bytes(&self) -> crate::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("name,value,cap,pass\n");
        for c in &self.certificates {
            let (value, cap) = match c.headline() {
                Some((_, v, cap)) => (v, cap),
                None => (f64::NAN, f64::NAN),
            };
            out.push_str(&format!("{},{},{},{}\n", c.name, fmt_f64(value), fmt_f64(cap), c.pass));
        }
        out
    }
}

/// Merge of several run reports (report-merge subcommand).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergedReport {
    pub runs: Vec<RunReport>,
}

impl MergedReport {
    pub fn to_json_bytes(&self) -> crate::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scenario,name,value,cap,pass\n");
        for run in &self.runs {
            for c in &run.certificates {
                let (value, cap) = match c.headline() {
                    Some((_, v, cap)) => (v, cap),
                    None => (f64::NAN, f64::NAN),
                };
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    run.scenario,
                    c.name,
                    fmt_f64(value),
                    fmt_f64(cap),
                    c.pass
                ));
            }
        }
        out
    }
}

/// Stable float formatting for CSV output (shortest round-trip form).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{}", v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_drive_pass_flag() {
        let mut r = CertificateReport::new("demo", digest_of(&["a"]));
        r.record("max_violation", 1e-14);
        r.cap("max_violation", 1e-12);
        r.finish();
        assert!(r.pass);
        r.record("max_violation", 1e-3);
        r.finish();
        assert!(!r.pass);
    }

    #[test]
    fn missing_measured_value_fails() {
        let mut r = CertificateReport::new("demo", digest_of(&["a"]));
        r.cap("ratio", 1.0);
        r.finish();
        assert!(!r.pass);
    }

    #[test]
    fn digest_is_stable_and_short() {
        let a = digest_of(&["grid", "0.5"]);
        let b = digest_of(&["grid", "0.5"]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_ne!(a, digest_of(&["grid", "0.51"]));
    }

    #[test]
    fn summary_rows_use_first_capped_key() {
        let mut r = CertificateReport::new("c1", digest_of(&["x"]));
        r.record("b_second", 2.0);
        r.record("a_first", 1.0);
        r.cap("b_second", 3.0);
        r.cap("a_first", 1.5);
        r.finish();
        let report = RunReport {
            scenario: "s".into(),
            seed: 7,
            config_digest: digest_of(&["cfg"]),
            solver: None,
            certificates: vec![r],
        };
        let csv = report.summary_csv();
        assert!(csv.contains("c1,1,1.5,true"));
    }
}
