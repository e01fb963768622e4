use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, Frame};

/// An association value; `degenerate` marks the convention used when an
/// input column is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub value: f64,
    pub degenerate: bool,
}

impl Association {
    fn ok(value: f64) -> Self {
        Self { value, degenerate: false }
    }

    fn flagged(value: f64) -> Self {
        Self { value, degenerate: true }
    }
}

/// Sample Pearson correlation; 0 (flagged) if either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Association> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs two equal-length samples of size >= 2".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Association::flagged(0.0));
    }
    Ok(Association::ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Dense codes for labels in first-seen order.
fn codes<S: AsRef<str>>(labels: &[S]) -> (Vec<usize>, usize) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = index.len();
            *index.entry(l.as_ref()).or_insert(next)
        })
        .collect();
    (out, index.len())
}

/// `η = √(SS_between / SS_total)`; 0 (flagged) for constant values.
pub fn correlation_ratio<S: AsRef<str>>(categories: &[S], values: &[f64]) -> Result<Association> {
    if categories.len() != values.len() || values.is_empty() {
        return Err(Error::InvalidArgument("correlation ratio needs equal-length non-empty inputs".into()));
    }
    let (codes, k) = codes(categories);
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&c, &v) in codes.iter().zip(values) {
        sums[c] += v;
        counts[c] += 1;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss_total: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_total == 0.0 {
        return Ok(Association::flagged(0.0));
    }
    let ss_between: f64 = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let g = s / c as f64 - mean;
            c as f64 * g * g
        })
        .sum();
    Ok(Association::ok((ss_between / ss_total).sqrt().clamp(0.0, 1.0)))
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Uncertainty coefficient `U(x | y) = (H(x) − H(x|y)) / H(x)` with natural
/// logs; 1 (flagged) when `x` is constant.
pub fn theils_u<S: AsRef<str>, T: AsRef<str>>(x: &[S], y: &[T]) -> Result<Association> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidArgument("theil's U needs equal-length non-empty inputs".into()));
    }
    let n = x.len() as f64;
    let (cx, kx) = codes(x);
    let (cy, ky) = codes(y);
    let mut nx = vec![0usize; kx];
    let mut ny = vec![0usize; ky];
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in cx.iter().zip(&cy) {
        nx[a] += 1;
        ny[b] += 1;
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    let hx = entropy(nx.iter().copied(), n);
    if hx == 0.0 {
        return Ok(Association::flagged(1.0));
    }
    let mut cells: Vec<((usize, usize), usize)> = joint.into_iter().collect();
    cells.sort_unstable();
    let h_x_given_y: f64 = cells
        .iter()
        .map(|&((_, b), c)| {
            let pxy = c as f64 / n;
            pxy * (ny[b] as f64 / c as f64).ln()
        })
        .sum();
    Ok(Association::ok(((hx - h_x_given_y) / hx).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pearson,
    CorrelationRatio,
    TheilsU,
}

/// Pairwise associations over all features of a frame. Cell `(i, j)` is
/// Pearson for two numeric features, the correlation ratio for a mixed pair,
/// and `U(feature_i | feature_j)` for two categorical features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    pub methods: Vec<Vec<Method>>,
    pub values: Vec<Vec<f64>>,
    /// `(row, column)` of cells that fell back to a degenerate convention.
    pub degenerate: Vec<(usize, usize)>,
}

pub fn correlation_matrix(frame: &Frame) -> Result<CorrelationMatrix> {
    if frame.nrows() == 0 {
        return Err(Error::InvalidArgument("correlation matrix of an empty table".into()));
    }
    let p = frame.ncols();
    let cells: Vec<Result<(Method, Association)>> = crate::par::map_indexed(p * p, |c| {
        let (i, j) = (c / p, c % p);
        match (&frame.columns[i], &frame.columns[j]) {
            (Column::Numeric(a), Column::Numeric(b)) => pearson(a, b).map(|r| (Method::Pearson, r)),
            (Column::Numeric(v), Column::Categorical(l)) | (Column::Categorical(l), Column::Numeric(v)) => {
                correlation_ratio(l, v).map(|r| (Method::CorrelationRatio, r))
            }
            (Column::Categorical(a), Column::Categorical(b)) => theils_u(a, b).map(|r| (Method::TheilsU, r)),
        }
    });
    let mut methods = vec![vec![Method::Pearson; p]; p];
    let mut values = vec![vec![0.0; p]; p];
    let mut degenerate = Vec::new();
    for (c, cell) in cells.into_iter().enumerate() {
        let (i, j) = (c / p, c % p);
        let (m, a) = cell?;
        methods[i][j] = m;
        values[i][j] = a.value;
        if a.degenerate {
            degenerate.push((i, j));
        }
    }
    Ok(CorrelationMatrix { features: frame.names.clone(), methods, values, degenerate })
}

/// Root-mean-square difference over off-diagonal cells.
pub fn diff_corr(real: &CorrelationMatrix, synth: &CorrelationMatrix) -> Result<f64> {
    if real.features != synth.features || real.methods != synth.methods {
        return Err(Error::Schema("correlation matrices have different layouts".into()));
    }
    let p = real.features.len();
    if p < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let d = real.values[i][j] - synth.values[i][j];
                sum += d * d;
            }
        }
    }
    Ok((sum / (p * (p - 1)) as f64).sqrt())
}
