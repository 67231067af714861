//! Verification reports and content digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// Hard inequality lhs ≤ bound·(1 + tolerance) row by row.
    Inequality,
    /// Fitted constant or sweep statistic with a stated acceptance rule.
    Fitted,
}

/// One checked inequality or sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub kind: ReportKind,
    pub lhs: Vec<f64>,
    pub bound: Vec<f64>,
    pub constant_fit: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    /// Named sweep columns (parameter values, ratios, components).
    pub sweep: BTreeMap<String, Vec<f64>>,
    pub diagnostics: BTreeMap<String, Value>,
    pub provenance: BTreeMap<String, String>,
}

impl EstimateReport {
    /// Hard inequality; passes iff every row satisfies lhs ≤ bound·(1+tol).
    pub fn inequality(name: &str, lhs: Vec<f64>, bound: Vec<f64>, tolerance: f64) -> Self {
        assert_eq!(lhs.len(), bound.len(), "lhs/bound rows");
        let pass = lhs
            .iter()
            .zip(&bound)
            .all(|(l, b)| l.is_finite() && *l <= b * (1.0 + tolerance) + f64::MIN_POSITIVE);
        EstimateReport {
            name: name.into(),
            kind: ReportKind::Inequality,
            lhs,
            bound,
            constant_fit: None,
            tolerance,
            pass,
            sweep: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            provenance: BTreeMap::new(),
        }
    }

    /// Fitted-constant report with an externally decided verdict.
    pub fn fitted(
        name: &str,
        lhs: Vec<f64>,
        bound: Vec<f64>,
        constant: Option<f64>,
        pass: bool,
    ) -> Self {
        EstimateReport {
            name: name.into(),
            kind: ReportKind::Fitted,
            lhs,
            bound,
            constant_fit: constant,
            tolerance: 0.0,
            pass,
            sweep: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn with_sweep(mut self, key: &str, values: Vec<f64>) -> Self {
        self.sweep.insert(key.into(), values);
        self
    }

    pub fn with_diag<V: Serialize>(mut self, key: &str, value: V) -> Self {
        self.diagnostics.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<String>) -> Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    /// max lhs/bound over rows (0/0 counts as 0).
    pub fn max_ratio(&self) -> f64 {
        self.lhs
            .iter()
            .zip(&self.bound)
            .map(|(l, b)| if *l == 0.0 { 0.0 } else { l / b })
            .fold(0.0, f64::max)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<40} {:<4} max_ratio={:.6e} C={}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.max_ratio(),
            self.constant_fit.map_or("-".into(), |c| format!("{c:.6e}"))
        );
        for (l, b) in self.lhs.iter().zip(&self.bound) {
            let _ = writeln!(s, "    {l:>24.16e} <= {b:>24.16e}");
        }
        s
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of the canonical JSON serialization.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    hex_digest(&serde_json::to_vec(value).expect("serializable"))
}

/// Least-squares log-log slope of y against x over positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    crate::quad::ls_slope(&lx, &ly)
}

/// max/min of a positive sequence.
pub fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}
