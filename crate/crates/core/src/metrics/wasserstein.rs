use crate::error::{Error, Result};

/// First Wasserstein distance between two samples after min-max
/// normalization by the real sample's range.
///
/// Computed exactly as `∫ |F_real(x) − F_synth(x)| dx` over the merged
/// sorted support, which equals the quantile-function form.
pub fn wasserstein_1d(real: &[f64], synth: &[f64]) -> Result<f64> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::InvalidArgument("wasserstein distance needs two non-empty samples".into()));
    }
    if real.iter().chain(synth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein input".into()));
    }
    let lo = real.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::DegenerateFeature("real sample".into()));
    }
    let scale = hi - lo;
    let norm = |v: &[f64]| {
        let mut out: Vec<f64> = v.iter().map(|x| (x - lo) / scale).collect();
        out.sort_by(f64::total_cmp);
        out
    };
    Ok(sorted_distance(&norm(real), &norm(synth)))
}

/// `∫ |F_a − F_b|` for already sorted samples.
pub(crate) fn sorted_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (x - prev);
        prev = x;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    total
}
