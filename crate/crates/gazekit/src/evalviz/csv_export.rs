//! Per-frame result export as RFC-4180 CSV.

use super::EvalError;

const HEADER: [&str; 8] = [
    "frame_key",
    "truth_x_cm",
    "truth_y_cm",
    "base_pred_x_cm",
    "base_pred_y_cm",
    "personalized_x_cm",
    "personalized_y_cm",
    "error_cm",
];

/// One exported frame. `error_cm` is the Euclidean error of the final
/// prediction (personalized when present, base otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub frame_key: String,
    pub truth: [f64; 2],
    pub base_pred: [f64; 2],
    pub personalized: Option<[f64; 2]>,
    pub error_cm: f64,
}

/// Serializes rows with a fixed header; numbers carry six decimals,
/// personalized columns are blank when absent.
pub fn export_csv(rows: &[CsvRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(HEADER).expect("header writes");
    for row in rows {
        let (px, py) = match row.personalized {
            Some(p) => (format!("{:.6}", p[0]), format!("{:.6}", p[1])),
            None => (String::new(), String::new()),
        };
        writer
            .write_record([
                row.frame_key.as_str(),
                &format!("{:.6}", row.truth[0]),
                &format!("{:.6}", row.truth[1]),
                &format!("{:.6}", row.base_pred[0]),
                &format!("{:.6}", row.base_pred[1]),
                &px,
                &py,
                &format!("{:.6}", row.error_cm),
            ])
            .expect("row writes");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf8")
}

/// Reparses an exported file; used as the round-trip oracle.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let record = result.map_err(|e| EvalError::MalformedCsv {
            line: i + 2,
            detail: e.to_string(),
        })?;
        let field = |j: usize| -> Result<f64, EvalError> {
            record[j].parse().map_err(|_| EvalError::MalformedCsv {
                line: i + 2,
                detail: format!("field {} is not a number: {:?}", HEADER[j], &record[j]),
            })
        };
        let personalized = if record[5].is_empty() && record[6].is_empty() {
            None
        } else {
            Some([field(5)?, field(6)?])
        };
        rows.push(CsvRow {
            frame_key: record[0].to_string(),
            truth: [field(1)?, field(2)?],
            base_pred: [field(3)?, field(4)?],
            personalized,
            error_cm: field(7)?,
        });
    }
    Ok(rows)
}
