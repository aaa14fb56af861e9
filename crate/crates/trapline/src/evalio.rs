//! Evaluation-report file IO: JSON reports and CSV exports of curve points.

use std::path::Path;

use trapline_core::metrics::EvalReport;

#[derive(Debug, thiserror::Error)]
pub enum EvalIoError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

fn write(path: &Path, text: &str) -> Result<(), EvalIoError> {
    std::fs::write(path, text).map_err(|source| EvalIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<(), EvalIoError> {
    let json = serde_json::to_string_pretty(report).expect("eval report serializes");
    write(path, &(json + "\n"))
}

pub fn load_report(path: &Path) -> Result<EvalReport, EvalIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| EvalIoError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// `pr_curves.csv`: one row per PR point, `class,confidence,recall,precision`.
pub fn export_pr_csv(report: &EvalReport, path: &Path) -> Result<(), EvalIoError> {
    let mut csv = String::from("class,confidence,recall,precision\n");
    if let Some(detection) = &report.detection {
        for (class, curve) in &detection.pr_curves {
            for point in &curve.points {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    class, point.confidence, point.recall, point.precision
                ));
            }
        }
    }
    write(path, &csv)
}

/// `f1_sweep.csv`: one row per grid threshold, `threshold,f1`.
pub fn export_sweep_csv(report: &EvalReport, path: &Path) -> Result<(), EvalIoError> {
    let mut csv = String::from("threshold,f1\n");
    if let Some(detection) = &report.detection {
        for point in &detection.f1_sweep.points {
            csv.push_str(&format!("{},{}\n", point.threshold, point.f1));
        }
    }
    write(path, &csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trapline_core::domain::{BoundingBox, ClassKind, Detection, TaxonomyClass};
    use trapline_core::metrics::{evaluate_detection, LabeledBox, Scene};

    fn sample_report() -> EvalReport {
        let class = TaxonomyClass {
            scientific_name: "Equus quagga".into(),
            common_name: "Plains zebra".into(),
            kind: ClassKind::Animal,
        };
        let scene = Scene {
            predictions: vec![Detection::new(
                class,
                0.9,
                BoundingBox::new(0.0, 0.0, 10.0, 10.0),
            )],
            ground_truth: vec![LabeledBox {
                class: "Equus quagga".into(),
                bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0),
            }],
        };
        let detection = evaluate_detection(&[scene], 0.5, &[0.0, 0.5, 1.0]).unwrap();
        EvalReport::new(Some(detection), None, None)
    }

    #[test]
    fn report_round_trips_and_keeps_interpolation_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.json");
        let report = sample_report();
        save_report(&report, &path).unwrap();
        let loaded = load_report(&path).unwrap();
        assert_eq!(loaded, report);
        assert_eq!(loaded.interpolation, "all-point");
    }

    #[test]
    fn csv_exports_contain_points() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let pr = dir.path().join("pr_curves.csv");
        let sweep = dir.path().join("f1_sweep.csv");
        export_pr_csv(&report, &pr).unwrap();
        export_sweep_csv(&report, &sweep).unwrap();

        let pr_text = std::fs::read_to_string(&pr).unwrap();
        assert!(pr_text.starts_with("class,confidence,recall,precision\n"));
        assert!(pr_text.contains("Equus quagga,0.9,1,1"));

        let sweep_text = std::fs::read_to_string(&sweep).unwrap();
        assert!(sweep_text.lines().count() >= 4);
    }
}
