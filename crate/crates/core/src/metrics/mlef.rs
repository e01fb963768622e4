use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtConfig};
use crate::preprocess::{EncoderOptions, TableEncoder};
use crate::table::{JobTable, JOB_SCHEMA, TARGET_FEATURE};

/// Test-set MSE of a regressor predicting `ln(workload)` plus the row
/// accounting behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlefOutcome {
    pub mse: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Rows dropped because `ln(workload)` is undefined.
    pub excluded_train: usize,
    pub excluded_test: usize,
    /// Test cells whose category never appeared in the fitting table.
    pub unseen_test_categories: usize,
}

fn positive_workload(table: &JobTable) -> (JobTable, usize) {
    let kept: Vec<_> = table.records.iter().filter(|r| r.workload > 0.0).cloned().collect();
    let dropped = table.len() - kept.len();
    (JobTable::new(kept), dropped)
}

/// Fits encoders and the boosted-tree regressor on `train` (every feature
/// except workload as input, `ln(workload)` as target) and scores it on
/// `test`.
pub fn mlef(train: &JobTable, test: &JobTable, cfg: &GbdtConfig) -> Result<MlefOutcome> {
    let (train, excluded_train) = positive_workload(train);
    let (test, excluded_test) = positive_workload(test);
    if train.len() < 2 || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "machine-learning efficacy needs at least 2 training rows and 1 test row with positive workload (got {} and {})",
            train.len(),
            test.len()
        )));
    }
    let inputs: Vec<&str> = JOB_SCHEMA.iter().map(|s| s.name).filter(|n| *n != TARGET_FEATURE).collect();
    let train_frame = train.to_frame().select(&inputs)?;
    let test_frame = test.to_frame().select(&inputs)?;
    let encoder = TableEncoder::fit(&train_frame, EncoderOptions::default())?;
    let x_train = encoder.encode(&train_frame)?;
    let (x_test, unseen) = encoder.encode_lenient(&test_frame)?;
    let y_train: Vec<f64> = train.records.iter().map(|r| r.workload.ln()).collect();
    let y_test: Vec<f64> = test.records.iter().map(|r| r.workload.ln()).collect();
    let model = gbdt::fit(&x_train.data, &y_train, cfg)?;
    let pred = model.predict(&x_test.data)?;
    Ok(MlefOutcome {
        mse: gbdt::mse(&pred, &y_test),
        train_rows: train.len(),
        test_rows: test.len(),
        excluded_train,
        excluded_test,
        unseen_test_categories: unseen.total(),
    })
}
