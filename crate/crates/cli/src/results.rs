//! The structured results file written by `run-tcav` and read by `report`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tcav_core::io::write_atomic;
use tcav_core::tcav::TcavResult;
use tcav_core::{Error, Result};

pub const FORMAT_NAME: &str = "tcav-results";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub format: String,
    pub version: u32,
    /// False while a run is in progress or after it failed part way.
    pub complete: bool,
    pub class_names: Vec<String>,
    pub results: Vec<TcavResult>,
    pub warnings: Vec<String>,
}

impl ResultsDocument {
    pub fn new(class_names: Vec<String>) -> Self {
        Self {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            complete: false,
            class_names,
            results: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn class_label(&self, class_k: usize) -> String {
        self.class_names
            .get(class_k)
            .cloned()
            .unwrap_or_else(|| class_k.to_string())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes =
            serde_json::to_vec_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_json()?)
    }

    /// Parses a results file, naming the offending record on failure.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            format: "results",
            reason,
        };
        let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let field = |name: &str| {
            value
                .get(name)
                .ok_or_else(|| bad(format!("missing field `{name}`")))
        };
        let format = field("format")?.as_str().unwrap_or_default();
        if format != FORMAT_NAME {
            return Err(bad(format!("unexpected format `{format}`")));
        }
        let version = field("version")?.as_u64().unwrap_or_default();
        if version != u64::from(FORMAT_VERSION) {
            return Err(bad(format!("unsupported version {version}")));
        }
        let complete = field("complete")?
            .as_bool()
            .ok_or_else(|| bad("`complete` must be a boolean".into()))?;
        let strings = |name: &str| -> Result<Vec<String>> {
            serde_json::from_value(field(name)?.clone()).map_err(|e| bad(format!("`{name}`: {e}")))
        };
        let class_names = strings("class_names")?;
        let warnings = strings("warnings")?;
        let records = field("results")?
            .as_array()
            .ok_or_else(|| bad("`results` must be an array".into()))?;
        let results = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let name = r.get("concept_name").and_then(Value::as_str).unwrap_or("?");
                let parsed: TcavResult = serde_json::from_value(r.clone())
                    .map_err(|e| bad(format!("record {i} (`{name}`): {e}")))?;
                check_record(&parsed)
                    .map_err(|reason| bad(format!("record {i} (`{name}`): {reason}")))?;
                Ok(parsed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format: format.into(),
            version: FORMAT_VERSION,
            complete,
            class_names,
            results,
            warnings,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn check_record(r: &TcavResult) -> std::result::Result<(), String> {
    let in_unit = |x: &f64| (0.0..=1.0).contains(x);
    if !r.concept_scores.iter().chain(&r.random_scores).all(in_unit) {
        return Err("score outside [0, 1]".into());
    }
    if !in_unit(&r.p_value) {
        return Err(format!("p_value {} outside [0, 1]", r.p_value));
    }
    if r.m == 0 {
        return Err("m must be positive".into());
    }
    Ok(())
}
