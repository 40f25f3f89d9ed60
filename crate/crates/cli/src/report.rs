//! Run reports, per-replica summaries and merging.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sbmlab_core::stats::Moments;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Censoring rate above which a report is marked degraded.
pub const DEGRADED_CENSORING: f64 = 0.05;

/// JSON has no NaN or infinities; they travel as the strings
/// "nan", "inf" and "-inf".
pub mod float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(E::custom(format!("bad float `{s}`"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|r| r.iter().map(|&x| to_repr(x)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            Vec::<Vec<Repr>>::deserialize(d)?
                .into_iter()
                .map(|r| r.into_iter().map(from_repr).collect())
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub index: u64,
    /// The replica hit a resource cap; its values are empty.
    pub censored: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(with = "float::vec")]
    pub values: Vec<f64>,
}

/// Mean and standard error of one summary column over finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub name: String,
    pub count: u64,
    #[serde(with = "float")]
    pub mean: f64,
    #[serde(with = "float")]
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub name: String,
    #[serde(with = "float")]
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Plot-ready numeric table, written as CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "float::rows")]
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub stats: Vec<Stat>,
    pub derived: Vec<Derived>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    /// Extra text artifacts as (file name, contents).
    pub texts: Vec<(String, String)>,
}

impl Analysis {
    pub fn derive(&mut self, name: impl Into<String>, value: f64) {
        self.derived.push(Derived {
            name: name.into(),
            value,
        });
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn derived_value(&self, name: &str) -> Option<f64> {
        self.derived.iter().find(|d| d.name == name).map(|d| d.value)
    }

    pub fn stat(&self, name: &str) -> Option<&Stat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Degraded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub status: Status,
    #[serde(with = "float")]
    pub censoring_rate: f64,
    pub columns: Vec<String>,
    pub replicas: Vec<ReplicaSummary>,
    pub analysis: Analysis,
    #[serde(with = "float")]
    pub wall_clock_s: f64,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn all_checks_pass(&self) -> bool {
        self.analysis.checks.iter().all(|c| c.passed)
    }
}

/// Per-column statistics over the uncensored replicas, in replica order.
pub fn column_stats(columns: &[String], replicas: &[ReplicaSummary]) -> Vec<Stat> {
    columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut m = Moments::new();
            for r in replicas.iter().filter(|r| !r.censored) {
                let v = r.values[j];
                if v.is_finite() {
                    m.push(v);
                }
            }
            Stat {
                name: name.clone(),
                count: m.count(),
                mean: if m.count() == 0 { f64::NAN } else { m.mean() },
                se: m.se(),
            }
        })
        .collect()
}

pub fn censoring_rate(replicas: &[ReplicaSummary]) -> f64 {
    if replicas.is_empty() {
        return 0.0;
    }
    replicas.iter().filter(|r| r.censored).count() as f64 / replicas.len() as f64
}

pub fn status_for(rate: f64) -> Status {
    if rate > DEGRADED_CENSORING {
        Status::Degraded
    } else {
        Status::Ok
    }
}

pub fn read_report(path: &Path) -> anyhow::Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let r: RunReport = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("bad report {}: {e}", path.display()))?;
    if r.schema != SCHEMA_VERSION {
        anyhow::bail!("{}: schema {} (expected {SCHEMA_VERSION})", path.display(), r.schema);
    }
    Ok(r)
}
