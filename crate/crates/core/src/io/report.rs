use serde::{Deserialize, Serialize};

use crate::eval::EvalReport;

/// JSON form of an evaluation: `{"cmc": [..], "mAP": x, "valid_queries": n, "config": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    #[serde(flatten)]
    pub report: EvalReport,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ReportDocument {
    pub fn new(report: EvalReport, config: serde_json::Value) -> Self {
        Self { report, config }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
