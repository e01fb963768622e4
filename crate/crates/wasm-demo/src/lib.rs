//! Browser bindings: mock tables, a SMOTE round trip scored by the metric
//! suite, and a two-sample distance calculator.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use workload_forge::ingest::split_train_test;
use workload_forge::metrics::{category_counts, evaluate, jsd, wasserstein_1d, EvalConfig};
use workload_forge::mock::{generate_mock_table, MockProfile};
use workload_forge::preprocess::{EncoderOptions, TableEncoder};
use workload_forge::smote::SmoteModel;

const MAX_ROWS: u32 = 20_000;

fn check_rows(n: u32) -> Result<usize, String> {
    if n == 0 || n > MAX_ROWS {
        return Err(format!("row count must be in 1..={MAX_ROWS}, got {n}"));
    }
    Ok(n as usize)
}

pub fn mock_csv_text(n: u32, seed: u32) -> Result<String, String> {
    let table = generate_mock_table(&MockProfile::default(), check_rows(n)?, seed as u64).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

/// Mock `n` rows, split 80/20, fit SMOTE on the training part, sample as
/// many rows as it holds and return the metrics report as JSON.
pub fn smote_report_json(n: u32, k: u32, seed: u32) -> Result<String, String> {
    let n = check_rows(n)?;
    let table = generate_mock_table(&MockProfile::default(), n, seed as u64).map_err(|e| e.to_string())?;
    let (train, test) = split_train_test(&table, 0.8, seed as u64).map_err(|e| e.to_string())?;
    let enc = TableEncoder::fit_table(&train, EncoderOptions::default()).map_err(|e| e.to_string())?;
    let model = SmoteModel::fit(&enc.encode_table(&train).map_err(|e| e.to_string())?, k as usize).map_err(|e| e.to_string())?;
    let synth = enc.decode_table(&model.sample(train.len(), seed as u64 + 1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let report = evaluate(&train, &synth, &test, &EvalConfig::default()).map_err(|e| e.to_string())?;
    report.to_json().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Comparison {
    jsd: f64,
    /// Only when both samples parse as numbers.
    wd: Option<f64>,
    real: usize,
    synth: usize,
}

fn tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect()
}

pub fn compare_json(real: &str, synth: &str) -> Result<String, String> {
    let (r, s) = (tokens(real), tokens(synth));
    let d = jsd(&category_counts(&r), &category_counts(&s)).map_err(|e| e.to_string())?;
    let numbers = |v: &[&str]| v.iter().map(|t| t.parse::<f64>()).collect::<Result<Vec<f64>, _>>().ok();
    let wd = match (numbers(&r), numbers(&s)) {
        (Some(a), Some(b)) => Some(wasserstein_1d(&a, &b).map_err(|e| e.to_string())?),
        _ => None,
    };
    serde_json::to_string(&Comparison { jsd: d, wd, real: r.len(), synth: s.len() }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn mock_csv(n: u32, seed: u32) -> Result<String, JsError> {
    mock_csv_text(n, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn smote_report(n: u32, k: u32, seed: u32) -> Result<String, JsError> {
    smote_report_json(n, k, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(real: &str, synth: &str) -> Result<String, JsError> {
    compare_json(real, synth).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_text_has_header_and_rows() {
        let csv = mock_csv_text(12, 3).unwrap();
        assert_eq!(csv.lines().count(), 13);
        assert!(mock_csv_text(0, 3).is_err());
    }

    #[test]
    fn comparison_handles_numbers_and_labels() {
        let v: serde_json::Value = serde_json::from_str(&compare_json("0 1 2 3", "0,1,2,3").unwrap()).unwrap();
        assert_eq!(v["jsd"], 0.0);
        assert_eq!(v["wd"], 0.0);
        let v: serde_json::Value = serde_json::from_str(&compare_json("a a b", "c").unwrap()).unwrap();
        assert_eq!(v["jsd"], 1.0);
        assert!(v["wd"].is_null());
    }

    #[test]
    fn smote_report_parses() {
        let v: serde_json::Value = serde_json::from_str(&smote_report_json(600, 5, 1).unwrap()).unwrap();
        assert!(v["dcr"].as_f64().unwrap() >= 0.0);
        assert!(v["histograms"]["workload"].is_object());
    }
}
