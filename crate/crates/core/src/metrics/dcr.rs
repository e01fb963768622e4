use ndarray::Array2;

use crate::error::{Error, Result};
use crate::neighbors::KdTree;
use crate::par;

/// Distance from each synthetic row to its closest training row,
/// Euclidean in the encoded space and divided by `√d`.
pub fn closest_record_distances(train: &Array2<f64>, synth: &Array2<f64>) -> Result<Vec<f64>> {
    if train.nrows() == 0 || synth.nrows() == 0 {
        return Err(Error::InvalidArgument("distance to closest record needs non-empty matrices".into()));
    }
    if train.ncols() != synth.ncols() {
        return Err(Error::Schema(format!("train has {} columns, synthetic {}", train.ncols(), synth.ncols())));
    }
    let train = train.as_standard_layout().into_owned();
    let synth = synth.as_standard_layout();
    let tree = KdTree::build(&train);
    let scale = (train.ncols() as f64).sqrt();
    Ok(par::map_indexed(synth.nrows(), |i| {
        let row = synth.row(i);
        let q = row.as_slice().expect("standard layout");
        tree.nearest(&train, q).expect("non-empty tree").distance() / scale
    }))
}

/// Mean distance to closest record.
pub fn dcr(train: &Array2<f64>, synth: &Array2<f64>) -> Result<f64> {
    let d = closest_record_distances(train, synth)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}
