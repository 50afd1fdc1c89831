use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CalibrationReport, DriftReport, ExperimentConfig, OodReport};
use crate::error::{Error, Result};
use crate::metrics::{MetricWithError, ReliabilityBin};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Aleatoric(CalibrationReport),
    Drift(DriftReport),
    Ood(OodReport),
}

impl Report {
    pub fn experiment(&self) -> &'static str {
        match self {
            Report::Aleatoric(_) => "aleatoric",
            Report::Drift(_) => "drift",
            Report::Ood(_) => "ood",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    pub metrics: BTreeMap<String, MetricWithError>,
    pub reliability: Vec<ReliabilityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanPair {
    pub in_sample: Option<f64>,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    /// `"macest_vs_<baseline>"` to KS statistic on noise confidences.
    pub ks: BTreeMap<String, f64>,
    /// Method name to confidence-vs-trust correlations.
    pub spearman: BTreeMap<String, SpearmanPair>,
}

/// The JSON report written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub experiment: String,
    pub config_echo: ExperimentConfig,
    pub methods: Vec<MethodEntry>,
    pub tables: Tables,
    pub details: Report,
}

impl ReportDocument {
    pub fn new(report: &Report, cfg: &ExperimentConfig) -> ReportDocument {
        let mut tables = Tables::default();
        let methods = match report {
            Report::Aleatoric(r) => r
                .methods
                .iter()
                .map(|m| MethodEntry {
                    name: m.method.to_string(),
                    metrics: m.metrics.clone(),
                    reliability: m.reliability.clone(),
                })
                .collect(),
            Report::Drift(r) => r
                .methods
                .iter()
                .map(|m| MethodEntry {
                    name: m.to_string(),
                    metrics: BTreeMap::new(),
                    reliability: Vec::new(),
                })
                .collect(),
            Report::Ood(r) => {
                for k in &r.ks {
                    tables.ks.insert(format!("macest_vs_{}", k.baseline), k.statistic);
                }
                for m in &r.methods {
                    tables.spearman.insert(
                        m.method.to_string(),
                        SpearmanPair {
                            in_sample: m.spearman_in_sample,
                            noise: m.spearman_noise,
                        },
                    );
                }
                r.methods
                    .iter()
                    .map(|m| MethodEntry {
                        name: m.method.to_string(),
                        metrics: BTreeMap::new(),
                        reliability: Vec::new(),
                    })
                    .collect()
            }
        };
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            experiment: report.experiment().to_string(),
            config_echo: cfg.clone(),
            methods,
            tables,
            details: report.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<ReportDocument> {
        Ok(serde_json::from_str(text)?)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `report.json` and the experiment's CSV tables into `dir`, creating
/// it if needed. Returns the written paths.
pub fn emit_report(report: &Report, cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    fs::write(&json, ReportDocument::new(report, cfg).to_json()?).map_err(|e| Error::io(&json, e))?;
    written.push(json);

    let mut table = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let p = dir.join(name);
        write_csv(&p, header, rows)?;
        written.push(p);
        Ok(())
    };
    match report {
        Report::Aleatoric(r) => {
            let mut rows = Vec::new();
            for m in &r.methods {
                for (metric, v) in &m.metrics {
                    rows.push(vec![
                        m.method.to_string(),
                        metric.clone(),
                        v.mean.to_string(),
                        v.half_width.to_string(),
                    ]);
                }
            }
            table("metrics.csv", &["method", "metric", "mean", "half_width"], rows)?;
            let mut rows = Vec::new();
            for m in &r.methods {
                for (i, b) in m.reliability.iter().enumerate() {
                    rows.push(vec![
                        m.method.to_string(),
                        i.to_string(),
                        b.conf.to_string(),
                        b.acc.to_string(),
                        b.count.to_string(),
                    ]);
                }
            }
            table("reliability.csv", &["method", "bin", "conf", "acc", "count"], rows)?;
        }
        Report::Drift(r) => {
            let names: Vec<String> = r.methods.iter().map(|m| m.to_string()).collect();
            let mut header = vec!["sd", "accuracy"];
            header.extend(names.iter().map(String::as_str));
            let rows = r
                .levels
                .iter()
                .map(|l| {
                    let mut row = vec![l.sd.to_string(), l.accuracy.to_string()];
                    row.extend(l.mean_confidence.iter().map(|v| v.to_string()));
                    row
                })
                .collect();
            table("drift.csv", &header, rows)?;
        }
        Report::Ood(r) => {
            let mut rows = Vec::new();
            let mut push = |name: String, set: &str, s: &super::Summary| {
                rows.push(vec![
                    name,
                    set.to_string(),
                    s.mean.to_string(),
                    s.sd.to_string(),
                    s.min.to_string(),
                    s.q25.to_string(),
                    s.median.to_string(),
                    s.q75.to_string(),
                    s.max.to_string(),
                ]);
            };
            for m in &r.methods {
                push(m.method.to_string(), "in_sample", &m.in_sample);
                push(m.method.to_string(), "noise", &m.noise);
            }
            push("trust".into(), "in_sample", &r.trust_in_sample);
            push("trust".into(), "noise", &r.trust_noise);
            table(
                "ood_summary.csv",
                &["method", "set", "mean", "sd", "min", "q25", "median", "q75", "max"],
                rows,
            )?;
            let rows = r
                .methods
                .iter()
                .map(|m| vec![m.method.to_string(), opt(m.spearman_in_sample), opt(m.spearman_noise)])
                .collect();
            table("spearman.csv", &["method", "in_sample", "noise"], rows)?;
            let rows =
                r.ks.iter()
                    .map(|k| vec!["macest".to_string(), k.baseline.to_string(), k.statistic.to_string()])
                    .collect();
            table("ks.csv", &["method", "baseline", "statistic"], rows)?;
            if let Some(a) = &r.anomaly {
                let row = vec![
                    a.percentile.to_string(),
                    a.threshold.to_string(),
                    a.test_flagged.to_string(),
                    a.noise_flagged.to_string(),
                    a.far_noise_flagged.to_string(),
                ];
                table(
                    "anomaly.csv",
                    &[
                        "percentile",
                        "threshold",
                        "test_flagged",
                        "noise_flagged",
                        "far_noise_flagged",
                    ],
                    vec![row],
                )?;
            }
        }
    }
    Ok(written)
}
