//! Evaluation reports: one JSON document per run, or one CSV per curve.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{evaluate, CurveSeries, MetricSummary};
use crate::protocol::{LabeledRun, ProtocolConfig, RunCounts};
use crate::types::{MethodConfig, Prediction};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// Single pretty-printed JSON file.
    Structured,
    /// Directory with `<curve>.csv` files, header `x,y`.
    CsvCurves,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    pub queries_per_second: f64,
}

impl Timing {
    pub fn new(elapsed: Duration, queries: usize) -> Self {
        let secs = elapsed.as_secs_f64();
        let qps = if secs > 0.0 { queries as f64 / secs } else { 0.0 };
        Self { wall_clock_seconds: secs, queries_per_second: qps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub version: u32,
    pub method: MethodConfig,
    pub protocol: ProtocolConfig,
    /// Labels of the input sets, in the order given on the command line.
    pub inputs: Vec<String>,
    pub counts: RunCounts,
    pub top_k: usize,
    pub metrics: MetricSummary,
    pub curves: Vec<CurveSeries>,
    pub skipped: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub timing: Timing,
}

impl ReportDocument {
    pub fn new(
        method: MethodConfig,
        protocol: ProtocolConfig,
        inputs: Vec<String>,
        run: &LabeledRun,
        timing: Timing,
    ) -> Self {
        let evaluation = evaluate(run);
        Self {
            version: REPORT_VERSION,
            method,
            protocol,
            inputs,
            counts: run.counts,
            top_k: run.top_k,
            metrics: evaluation.summary,
            curves: evaluation.curves,
            skipped: run.skipped.clone(),
            predictions: run.predictions.clone(),
            timing,
        }
    }

    pub fn labeled_run(&self) -> LabeledRun {
        LabeledRun {
            predictions: self.predictions.clone(),
            skipped: self.skipped.clone(),
            counts: self.counts,
            top_k: self.top_k,
        }
    }

    /// Same report for another run, keeping configuration and inputs.
    pub fn with_run(&self, run: &LabeledRun) -> Self {
        Self::new(self.method, self.protocol, self.inputs.clone(), run, self.timing.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_curve_csv(curve: &CurveSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["x", "y"])?;
    for (x, y) in &curve.points {
        wtr.write_record([x.to_string(), y.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<(f64, f64)>().map(|r| r.map_err(Into::into)).collect()
}

/// Writes `report` and returns the paths created. For [`ReportFormat::CsvCurves`]
/// `path` is a directory, created if missing.
pub fn write_report(
    report: &ReportDocument,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    match format {
        ReportFormat::Structured => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, report.to_json()? + "\n")?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::CsvCurves => {
            fs::create_dir_all(path)?;
            report
                .curves
                .iter()
                .map(|curve| {
                    let file = path.join(format!("{}.csv", curve.kind.file_stem()));
                    write_curve_csv(curve, &file).map(|_| file)
                })
                .collect()
        }
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{trapezoid, CurveKind};
    use crate::types::{ErrorType, LabeledCandidate};

    fn sample_run() -> LabeledRun {
        let spec = [
            (0.1, ErrorType::None),
            (0.7, ErrorType::IncorrectMatch),
            (0.2, ErrorType::None),
            (0.9, ErrorType::NoMatch),
            (0.4, ErrorType::None),
            (0.3, ErrorType::IncorrectMatch),
        ];
        let predictions = spec
            .iter()
            .enumerate()
            .map(|(q, &(u, e))| Prediction {
                query_index: q,
                predicted_index: Some(q),
                score: -u,
                score_variance: 0.0,
                uncertainty: u,
                correct: e == ErrorType::None,
                error_type: e,
                has_match: e != ErrorType::NoMatch,
                candidates: vec![
                    LabeledCandidate { index: q, score: -u, hit: e == ErrorType::None },
                    LabeledCandidate { index: q + 1, score: -u - 0.1, hit: e == ErrorType::IncorrectMatch },
                ],
            })
            .collect();
        LabeledRun::from_predictions(predictions, vec![6], 2)
    }

    fn sample_report() -> ReportDocument {
        ReportDocument::new(
            MethodConfig::new(crate::types::Method::Standard, 2),
            ProtocolConfig::batch(),
            vec!["q".into(), "db".into()],
            &sample_run(),
            Timing::new(Duration::from_millis(20), 6),
        )
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/report.json");
        let report = sample_report();
        write_report(&report, &path, ReportFormat::Structured).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.labeled_run(), sample_run());
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(json["metrics"]["auroc_accepted_share"].is_number());
        assert!(json["timing"]["wall_clock_seconds"].is_number());
        assert_eq!(json["skipped"], serde_json::json!([6]));
    }

    #[test]
    fn auer_recomputed_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let files = write_report(&report, dir.path(), ReportFormat::CsvCurves).unwrap();
        assert_eq!(files.len(), report.curves.len());
        let er = dir.path().join(format!("{}.csv", CurveKind::ErrorRejection.file_stem()));
        let header = fs::read_to_string(&er).unwrap();
        assert!(header.starts_with("x,y\n"));
        let area = trapezoid(&read_curve_csv(&er).unwrap());
        assert!((area - report.metrics.auer.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn undefined_metrics_are_null() {
        let mut run = sample_run();
        run.predictions.retain(|p| p.correct);
        let run = LabeledRun::from_predictions(run.predictions, vec![], 2);
        let report = ReportDocument::new(
            MethodConfig::new(crate::types::Method::Standard, 2),
            ProtocolConfig::batch(),
            vec![],
            &run,
            Timing::default(),
        );
        let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert!(json["metrics"]["auroc"].is_null());
        assert!(json["metrics"]["recall_at_1"].is_number());
    }
}
