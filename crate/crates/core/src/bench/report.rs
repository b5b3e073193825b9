use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EvaluationRun;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidParameter(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub probabilistic: bool,
    pub internal_saliency: Option<String>,
    pub ll: Option<f64>,
    pub ig: Option<f64>,
    pub auc: Option<f64>,
    pub nss: Option<f64>,
    pub notes: String,
}

impl ReportRow {
    fn cells(&self) -> [String; 7] {
        let f = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        [
            self.label.clone(),
            f(self.ll),
            f(self.ig),
            self.auc.map(format_auc).unwrap_or_default(),
            f(self.nss),
            self.internal_saliency.clone().unwrap_or_default(),
            self.notes.clone(),
        ]
    }
}

const HEADER: [&str; 7] = ["Model", "LL", "IG", "AUC", "NSS", "Internal saliency", "Notes"];

/// Caveats attached to a model kind in reports.
pub fn model_notes(model: &str) -> &'static str {
    match model.parse::<ModelKind>() {
        Ok(ModelKind::Scenewalk) => "approximate SceneWalk dynamics",
        Ok(ModelKind::Centerbias | ModelKind::FixnumCenterbias) => "center bias with 0.01 uniform floor",
        Ok(ModelKind::GoldstandardLoso | ModelKind::GoldstandardJoint) => {
            "center-bias component has a 0.01 uniform floor"
        }
        _ => "",
    }
}

/// Four decimals, with negative zero printed as zero.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// AUC as a percentage with one decimal.
pub fn format_auc(v: f64) -> String {
    let s = format!("{:.1}", v * 100.0);
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

fn desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    key(b).total_cmp(&key(a))
}

/// Probabilistic models by LL, then the rest by AUC; ties by label.
pub fn report_rows(runs: &[EvaluationRun]) -> Result<Vec<ReportRow>> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("report needs at least one run".into()));
    }
    let mut rows: Vec<ReportRow> = runs
        .iter()
        .map(|r| {
            let get = |m: Metric| r.aggregate.get(&m).copied();
            ReportRow {
                label: r.label().to_string(),
                probabilistic: r.probabilistic,
                internal_saliency: r.internal_saliency.clone(),
                ll: get(Metric::LogLikelihood).filter(|_| r.probabilistic),
                ig: get(Metric::InformationGain).filter(|_| r.probabilistic),
                auc: get(Metric::Auc),
                nss: get(Metric::Nss),
                notes: model_notes(&r.config.model).to_string(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.probabilistic
            .cmp(&a.probabilistic)
            .then_with(|| {
                if a.probabilistic {
                    desc(a.ll, b.ll)
                } else {
                    desc(a.auc, b.auc)
                }
            })
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(rows)
}

pub fn render_report(runs: &[EvaluationRun], format: ReportFormat) -> Result<String> {
    let rows = report_rows(runs)?;
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADER)?;
            for row in &rows {
                w.write_record(row.cells())?;
            }
            let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            let mut out = line(&HEADER.map(String::from));
            out += &line(&["---", "---:", "---:", "---:", "---:", "---", "---"].map(String::from));
            let mut separated = false;
            for row in &rows {
                if !row.probabilistic && !separated {
                    if rows.iter().any(|r| r.probabilistic) {
                        let mut sep: [String; 7] = Default::default();
                        sep[0] = "*not probabilistic*".into();
                        out += &line(&sep);
                    }
                    separated = true;
                }
                let cells = row.cells().map(|c| c.replace('|', "\\|"));
                out += &line(&cells);
            }
            Ok(out)
        }
    }
}
